use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rcp.h")).unwrap()
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for name in [
        "rcp_last_error",
        "rcp_string_free",
        "rcp_scenario_from_json",
        "rcp_scenario_from_path",
        "rcp_scenario_free",
        "rcp_check",
        "rcp_report_values",
        "rcp_report_render",
        "rcp_report_free",
        "rcp_simulate",
        "rcp_trace_free",
        "rcp_trace_dims",
        "rcp_trace_series",
        "rcp_trace_classification",
        "rcp_trace_write_csv",
        "rcp_case_a_equilibrium",
        "rcp_case_a_alpha_prime",
        "rcp_case_a_global_bound",
        "rcp_sweep_csv",
    ] {
        assert!(
            h.contains(&format!(" {name}(")) || h.contains(&format!("*{name}(")),
            "missing {name}"
        );
    }
    for opaque in ["RcpScenario", "RcpReport", "RcpTrace"] {
        assert!(
            h.contains(&format!("typedef struct {opaque} {opaque};")),
            "{opaque} is not opaque"
        );
    }
    assert!(h.contains("RCP_STATUS_OK = 0"));
    assert!(h.contains("RCP_STATUS_INTERNAL = 8"));
}

/// Directory holding the static library built alongside this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "rcp.h"

int main(void) {
    double amax = 0.0;
    if (rcp_case_a_global_bound(2.0, 1.0, &amax) != RCP_STATUS_OK) return 1;
    if (fabs(amax - 1.0 / 11.0) > 1e-12) return 2;
    RcpScenario *s = NULL;
    if (rcp_scenario_from_json("{", &s) != RCP_STATUS_PARSE) return 3;
    if (rcp_last_error() == NULL) return 4;
    const char *json = "{\"label\": \"c\", \"links\": [{\"id\": \"l0\", \"capacity\": 1, \"a\": 0.4, \"b\": 0, \"sigma2\": 1}],"
        "\"routes\": [{\"id\": \"r0\", \"hops\": [{\"link\": \"l0\", \"forward_delay\": 1, \"return_delay\": 0}]}],"
        "\"sim\": {\"tol\": 0.001, \"tbar_mode\": \"time-varying\", \"history\": {\"kind\": \"constant\", \"values\": {\"l0\": 0.5}}},"
        "\"seed\": 0}";
    if (rcp_scenario_from_json(json, &s) != RCP_STATUS_OK) return 5;
    RcpReport *r = NULL;
    RcpReportValues v;
    if (rcp_check(s, &r) != RCP_STATUS_OK || rcp_report_values(r, &v) != RCP_STATUS_OK) return 6;
    if (!v.theorem_ok || fabs(v.theorem_lhs - 0.16 / 0.36) > 1e-12) return 7;
    RcpTrace *t = NULL;
    RcpClassification c;
    if (rcp_simulate(s, &t) != RCP_STATUS_OK || rcp_trace_classification(t, &c) != RCP_STATUS_OK) return 8;
    if (c.kind != RCP_CLASS_KIND_CONVERGED) return 9;
    rcp_trace_free(t);
    rcp_report_free(r);
    rcp_scenario_free(s);
    printf("ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let lib = artifact_dir().join("librcp_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "compiling the C program failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
