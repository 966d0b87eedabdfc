use std::path::Path;

use rcp_core::harness::{load_scenario, run_check, Overrides, Scenario};
use rcp_core::sim::simulate;
use rcp_core::Error;

fn shipped(name: &str) -> Scenario {
    load_scenario(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

#[test]
fn shipped_single_link_scenarios_are_certified_and_converge() {
    for name in ["case_a.json", "case_b.json"] {
        let s = shipped(name);
        let report = run_check(&s).unwrap();
        assert!(report.report().unwrap().theorem_verdict, "{name}");
        let trace = simulate(&s.network, &s.sim).unwrap();
        assert!(
            trace.classification.is_converged(),
            "{name}: {:?}",
            trace.classification
        );
    }
}

#[test]
fn shipped_tandem_converges_to_capacities() {
    let s = shipped("two_links.json");
    let trace = simulate(&s.network, &s.sim).unwrap();
    assert!(trace.classification.is_converged(), "{:?}", trace.classification);
    let y = trace.final_aggregates();
    assert!((y[0] - 3.0).abs() < 1e-3 * 3.0 && (y[1] - 1.0).abs() < 1e-3);
}

#[test]
fn overrides_revalidate() {
    let s = shipped("case_b.json");
    let err = s
        .with_overrides(&Overrides {
            horizon: Some(1.0),
            ..Default::default()
        })
        .unwrap_err();
    assert!(
        matches!(err, Error::Validation { ref path, .. } if path == "sim.horizon"),
        "{err}"
    );
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(
        load_scenario("/definitely/missing.json"),
        Err(Error::Io { .. })
    ));
}
