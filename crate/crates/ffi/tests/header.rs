use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "ovalflow.h"

int main(void) {
    OvalflowBryant *h = NULL;
    OvalflowAsymptotics s;
    char msg[128];
    if (ovalflow_bryant_solve(4, 100.0, 1e-10, &h) != OVALFLOW_OK) return 1;
    if (ovalflow_bryant_summary(h, 50.0, &s) != OVALFLOW_OK) return 2;
    ovalflow_bryant_free(h);
    if (ovalflow_bryant_solve(2, 100.0, 1e-10, &h) != OVALFLOW_ERR_PARAM) return 3;
    if (ovalflow_last_error(msg, sizeof msg) <= 0) return 4;
    printf("%.6f\n", s.r2_phi_large);
    return 0;
}
"#;

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

/// `cargo test` builds only the rlib, so the static library comes from a
/// separate build in the test scratch directory.
fn static_library() -> PathBuf {
    let target = Path::new(env!("CARGO_TARGET_TMPDIR")).join("ffi-link");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let o = Command::new(cargo)
        .args(["build", "--offline", "-p", "ovalflow-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    target.join("debug").join("libovalflow_ffi.a")
}

#[test]
fn header_is_valid_c_and_cpp() {
    let h = include_dir().join("ovalflow.h");
    assert!(h.is_file());
    for (cc, std) in [("cc", "-std=c99"), ("c++", "-std=c++11")] {
        let lang = if cc == "cc" { "c" } else { "c++" };
        let o = Command::new(cc).args([std, "-Wall", "-Werror", "-fsyntax-only", "-x", lang]).arg(&h).output().unwrap();
        assert!(o.status.success(), "{cc}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = static_library();
    assert!(lib.is_file(), "missing {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = tmp.path().join("main");
    let o = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = Command::new(&exe).output().unwrap();
    assert!(r.status.success(), "exit {:?}", r.status);
    let v: f64 = String::from_utf8_lossy(&r.stdout).trim().parse().unwrap();
    assert!((v / 4.0 - 1.0).abs() < 0.01);
}
