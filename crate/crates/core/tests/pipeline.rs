mod common;

use common::{scenario, scenario_path};
use rps_core::pipeline::{self, correlation_grid, doubles_from_events, doubles_from_regression, source_events};
use rps_core::scenario::parse_scenario;

#[test]
fn shipped_scenarios_parse() {
    let dir = scenario_path("");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let sc = parse_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(sc.digest.len(), 64);
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn trajectory_doubles_match_the_intensity_correlation() {
    // same-source pairs under leakage, counted in trajectories and from
    // the regression-theorem intensity correlation
    let sc = scenario("fig4.json");
    let model = sc.model().unwrap();
    let run = model.simulate_sequence(sc.simulation.dt).unwrap();
    let grid = correlation_grid(&sc);
    let g = model.two_time_correlation(&run, grid, true).unwrap();
    let want: f64 = doubles_from_regression(&g).unwrap().iter().sum::<f64>() * grid.step;
    let n = 200_000u64;
    let events = source_events(&sc, &model, &run, n, 31).unwrap();
    let got: f64 = doubles_from_events(&events, grid, n).iter().sum::<f64>() * grid.step;
    let pairs = got * n as f64;
    assert!(pairs > 100.0, "only {pairs} pairs");
    let sigma = pairs.sqrt() / n as f64;
    assert!((got - want).abs() < 5.0 * sigma + 0.02 * want, "trajectories {got:e} vs regression {want:e}");
}

#[test]
fn hbt_reruns_are_identical() {
    let sc = scenario("fig3a.json");
    let a = pipeline::hbt(&sc, 4).unwrap();
    let b = pipeline::hbt(&sc, 4).unwrap();
    assert_eq!(a.streams, b.streams);
    assert_eq!(a.histogram.counts, b.histogram.counts);
    assert_eq!(a.central_expected, b.central_expected);
}
