use hybeam::framework::{default_solver, run_algorithm, run_scenario, FrameworkOptions, ScenarioOptions};
use hybeam::harness::trial_channel;
use hybeam::linalg::max_modulus_error;
use hybeam::{Algorithm, SystemConfig};

fn small() -> SystemConfig {
    let mut cfg = SystemConfig::new(8, 3, 4, 2);
    cfg.seed = 5;
    cfg
}

#[test]
fn designs_are_feasible_and_traces_monotone() {
    let cfg = small();
    let h = trial_channel(&cfg, 0).unwrap();
    let solver = default_solver();
    let opts = FrameworkOptions::default();
    for alg in Algorithm::ALL {
        let run = run_algorithm(alg, &h, &cfg, &opts, &solver, 0).unwrap();
        let f = run.analog_matrix();
        assert!(run.digital.max_power_error(&f) < 1e-8, "{alg} violates the power constraint");
        if let Some(a) = &run.analog {
            assert!(max_modulus_error(a.unit_modulus().iter()) < 1e-12);
        }
        assert!(run.trace.windows(2).all(|p| p[1] >= p[0] - 1e-9), "{alg} trace decreases");
    }
}

#[test]
fn alternating_designs_improve_on_their_start() {
    let cfg = small();
    let report = run_scenario(&cfg, &Algorithm::ALL, 4, &ScenarioOptions::default(), &default_solver()).unwrap();
    assert!(report.failures().is_empty());
    for t in &report.trials {
        let cmdd = t.get(Algorithm::Cmdd).unwrap().metrics.weighted_sum_rate;
        for alg in [Algorithm::Aohb, Algorithm::Laohb] {
            let rate = t.get(alg).unwrap().metrics.weighted_sum_rate;
            assert!(rate >= cmdd - 1e-9, "{alg} fell below its CMDD start on trial {}", t.trial);
        }
    }
}

#[test]
fn scenarios_are_reproducible() {
    let cfg = small();
    let opts = ScenarioOptions::default();
    let a = run_scenario(&cfg, &[Algorithm::Aohb], 3, &opts, &default_solver()).unwrap();
    let b = run_scenario(&cfg, &[Algorithm::Aohb], 3, &opts, &default_solver()).unwrap();
    for alg in [Algorithm::Aohb] {
        assert_eq!(a.mean_weighted_sum_rate(alg), b.mean_weighted_sum_rate(alg));
    }
}
