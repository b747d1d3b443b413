use laakso_core::instance::{build_instance, Params};
use laakso_core::lab::{stress_minimize_detailed, OptimizerConfig};
use laakso_core::metric::distortion;

fn best_of_five(k: usize, d: usize) -> f64 {
    let a = build_instance(&Params::new(4.0, 1.0 / 16.0, k).unwrap()).unwrap();
    (0..5)
        .map(|seed| {
            let cfg = OptimizerConfig {
                seed,
                restarts: 1,
                ..Default::default()
            };
            stress_minimize_detailed(&a, d, &cfg).unwrap().report.distortion
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn the_line_is_harder_than_three_dimensions() {
    let line = best_of_five(2, 1);
    let space = best_of_five(2, 3);
    assert!(line > space, "d=1: {line}, d=3: {space}");
}

#[test]
fn reported_distortion_reproduces_on_reevaluation() {
    let a = build_instance(&Params::new(3.0, 1.0 / 32.0, 3).unwrap()).unwrap();
    for d in 1..=3 {
        let cfg = OptimizerConfig {
            restarts: 2,
            iterations: 50,
            seed: d as u64,
            ..Default::default()
        };
        let run = stress_minimize_detailed(&a, d, &cfg).unwrap();
        let again = distortion(&a, &run.embedding).unwrap();
        assert!((again.distortion - run.report.distortion).abs() <= 1e-9 * run.report.distortion);
        assert!((again.max_expansion - 1.0).abs() <= 1e-9);
        let initial = run.restarts.iter().map(|r| r.initial_distortion).fold(f64::INFINITY, f64::min);
        assert!(run.report.distortion <= initial * (1.0 + 1e-9));
    }
}
