use korteweg_ffi::*;
use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kw_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn pressure_law_roundtrip() {
    let mut law = ptr::null_mut();
    let st = unsafe { kw_pressure_law_new(KwLawKind::Polytropic, 1.0, 2.0, 0.0, 0.0, 0.0, 0.5, 10.0, &mut law) };
    assert_eq!(st, KwStatus::Ok);
    assert!(last_error().is_empty());
    let (mut p, mut dp, mut d2p, mut bp) = (0.0, 0.0, 0.0, 0.0);
    assert_eq!(unsafe { kw_pressure_eval(law, 3.0, &mut p, &mut dp, &mut d2p, &mut bp) }, KwStatus::Ok);
    assert_eq!((p, dp, d2p, bp), (9.0, 6.0, 2.0, 9.0));
    // null outputs are skipped
    assert_eq!(unsafe { kw_pressure_eval(law, 1.0, ptr::null_mut(), &mut dp, ptr::null_mut(), ptr::null_mut()) }, KwStatus::Ok);
    assert_eq!(dp, 2.0);
    assert_eq!(unsafe { kw_pressure_eval(law, 11.0, &mut p, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, KwStatus::Range);
    assert!(last_error().contains("outside"));
    unsafe { kw_pressure_law_free(law) };
}

#[test]
fn admissibility_through_the_abi() {
    let mut law = ptr::null_mut();
    unsafe {
        assert_eq!(kw_pressure_law_new(KwLawKind::Polytropic, 1.0, 1.0, 0.0, 0.0, 1.0, 0.5, 100.0, &mut law), KwStatus::Ok);
        let (mut ok, mut alpha) = (false, 0.0);
        assert_eq!(kw_pressure_check(law, 100.0, 1000, &mut ok, &mut alpha), KwStatus::Ok);
        assert!(ok);
        assert!((alpha - 1.0).abs() < 1e-12);
        assert_eq!(kw_pressure_check(law, 100.0, 1000, ptr::null_mut(), &mut alpha), KwStatus::NullPointer);
        assert_eq!(kw_pressure_check(law, 100.0, 3, &mut ok, &mut alpha), KwStatus::Config);
        kw_pressure_law_free(law);
    }
}

#[test]
fn bad_arguments_map_to_codes() {
    let mut law = ptr::null_mut();
    let st = unsafe { kw_pressure_law_new(KwLawKind::Cubic, 0.8, 0.5, 0.5, 0.0, -1.0, 0.5, 5.0, &mut law) };
    assert_eq!(st, KwStatus::Config);
    assert!(law.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { kw_pressure_law_new(KwLawKind::Cubic, 0.8, 0.5, 0.5, 0.0, 20.0, 0.5, 5.0, ptr::null_mut()) }, KwStatus::NullPointer);
    let mut cell = ptr::null_mut();
    assert_eq!(unsafe { kw_unit_cell_disc(0.6, 16, &mut cell) }, KwStatus::Geometry);
    assert!(cell.is_null());
    let mut theta = 0.0;
    assert_eq!(unsafe { kw_unit_cell_porosity(ptr::null(), &mut theta) }, KwStatus::NullPointer);
    unsafe {
        kw_pressure_law_free(ptr::null_mut());
        kw_unit_cell_free(ptr::null_mut());
    }
}

#[test]
fn permeability_is_isotropic_and_methods_agree() {
    let mut cell = ptr::null_mut();
    unsafe {
        assert_eq!(kw_unit_cell_disc(0.25, 32, &mut cell), KwStatus::Ok);
        let mut theta = 0.0;
        assert_eq!(kw_unit_cell_porosity(cell, &mut theta), KwStatus::Ok);
        assert!(theta > 0.75 && theta < 0.85);
        let mut a = [0.0; 4];
        let mut b = [0.0; 4];
        assert_eq!(kw_permeability(cell, KwCellMethod::Uzawa, 0.0, a.as_mut_ptr()), KwStatus::Ok);
        assert_eq!(kw_permeability(cell, KwCellMethod::Direct, 0.0, b.as_mut_ptr()), KwStatus::Ok);
        assert!(a[0] > 0.0);
        assert!(a[1].abs() <= 1e-6 * a[0] && (a[0] - a[3]).abs() <= 1e-6 * a[0]);
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= 1e-8);
        }
        assert_eq!(kw_permeability(cell, KwCellMethod::Uzawa, 0.0, ptr::null_mut()), KwStatus::NullPointer);
        kw_unit_cell_free(cell);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(kw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> Option<PathBuf> {
    // tests/.. -> crate dir; the archive sits next to the test binary's deps dir
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libkorteweg_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_compiles_and_links_against_header() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/korteweg.h");
    assert!(header.exists(), "build script must emit the header");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["kw_pressure_law_new", "kw_permeability", "kw_last_error", "KW_STATUS_NULL_POINTER"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping the link check");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "korteweg.h"
int main(void) {
    KwPressureLaw *law = NULL;
    if (kw_pressure_law_new(KW_LAW_KIND_POLYTROPIC, 1.0, 2.0, 0, 0, 0.0, 0.5, 10.0, &law) != KW_STATUS_OK) return 1;
    double p = 0;
    if (kw_pressure_eval(law, 2.0, &p, NULL, NULL, NULL) != KW_STATUS_OK || p != 4.0) return 2;
    kw_pressure_law_free(law);
    KwUnitCell *cell = NULL;
    if (kw_unit_cell_disc(0.7, 16, &cell) != KW_STATUS_GEOMETRY) return 3;
    if (kw_last_error()[0] == '\0') return 4;
    printf("ok %s\n", kw_version());
    return 0;
}
"#,
    )
    .unwrap();
    let inc = format!("-I{}", dir.join("include").display());
    let st = Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", &inc]).arg(&src).status().unwrap();
    assert!(st.success(), "header does not compile as C99");
    let Some(lib) = static_lib() else {
        eprintln!("static library not found, skipping the link step");
        return;
    };
    let bin = tmp.path().join("main");
    let st = Command::new("cc")
        .arg(&src)
        .arg(&inc)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "link against {} failed", lib.display());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
