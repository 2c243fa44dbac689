//! Compiles a C client against the generated header and, when the static
//! library is present next to the test binary, links and runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

use netslice::estimator::EstimatorModel;

const CLIENT: &str = r#"
#include <stdio.h>
#include <string.h>
#include "netslice.h"

int main(int argc, char **argv) {
    NsEstimator *h = NULL;
    if (ns_estimator_load(argv[1], &h) != NS_STATUS_OK) {
        fprintf(stderr, "%s\n", ns_last_error_message());
        return 1;
    }
    size_t hl = 0;
    ns_estimator_history_len(h, &hl);
    size_t row = 2 * hl + 2;
    double obs[3 * 6];
    for (size_t i = 0; i < 3 * row; i++) obs[i] = 1.0 + (double)(i % 5);
    double f = -1.0, g = 0.0;
    if (ns_estimator_forward(h, 0.3, obs, row, &f) != NS_STATUS_OK) return 2;
    if (ns_estimator_gradient(h, 0.3, obs, row, &g) != NS_STATUS_OK) return 3;
    NsSolverParams p = ns_solver_params_default();
    p.seed = 4;
    double x[3], u = 0.0;
    if (ns_solve_cell(h, obs, 3, row, NULL, &p, x, &u) != NS_STATUS_OK) return 4;
    if (x[0] + x[1] + x[2] > 1.0 + 1e-9) return 5;
    if (ns_estimator_forward(NULL, 0.3, obs, row, &f) != NS_STATUS_NULL_POINTER) return 6;
    if (strcmp(ns_status_name(NS_STATUS_DIMENSION), "dimension") != 0) return 7;
    ns_estimator_free(h);
    printf("%.6f %.6f %.6f %s\n", x[0], x[1], x[2], ns_version());
    return 0;
}
"#;

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn cc() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, CLIENT).unwrap();
    let status = Command::new(cc())
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(include_dir())
        .arg(&src)
        .status()
        .expect("C compiler");
    assert!(status.success());
}

#[test]
fn header_compiles_as_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.cpp");
    std::fs::write(&src, "#include \"netslice.h\"\nint main() { return ns_version() == nullptr; }\n").unwrap();
    let status = Command::new("c++")
        .args(["-std=c++17", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(include_dir())
        .arg(&src)
        .status()
        .expect("C++ compiler");
    assert!(status.success());
}

#[test]
fn c_client_links_and_runs() {
    // target/<profile>/deps/c_header-* -> target/<profile>/libnetslice_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libnetslice_ffi.a");
    if !lib.exists() {
        eprintln!("skipping link test: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    let model = dir.path().join("model.json");
    std::fs::write(&src, CLIENT).unwrap();
    EstimatorModel::new(2, &[6, 4], 3).unwrap().save(&model).unwrap();
    let status = Command::new(cc())
        .args(["-std=c99", "-I"])
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.trim_end().ends_with(env!("CARGO_PKG_VERSION")), "{text}");
}
