use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dwell_consensus_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = dc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn riccati_closed_form() {
    let mut p = [0.0; 4];
    assert_eq!(
        unsafe { dc_solve_riccati(2, 0.5, 1.0, p.as_mut_ptr(), 4) },
        DcStatus::Ok
    );
    let r3 = 3f64.sqrt();
    for (a, b) in p.iter().zip([r3, 1.0, 1.0, r3]) {
        assert!((a - b).abs() < 1e-8);
    }
    assert_eq!(
        unsafe { dc_solve_riccati(2, 0.5, 1.0, p.as_mut_ptr(), 3) },
        DcStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { dc_solve_riccati(2, -1.0, 1.0, p.as_mut_ptr(), 4) },
        DcStatus::InvalidArgument
    );
    assert!(last_error().contains("mu"));
}

#[test]
fn topology_queries() {
    let (mut conn, mut mult) = (false, 0usize);
    // 2 <- 1 <- 0 chain.
    let chain = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    assert_eq!(
        unsafe { dc_topology_connected(3, chain.as_ptr(), &mut conn, &mut mult) },
        DcStatus::Ok
    );
    assert!(conn);
    assert_eq!(mult, 1);
    let empty = [0.0; 9];
    assert_eq!(
        unsafe { dc_topology_connected(3, empty.as_ptr(), &mut conn, &mut mult) },
        DcStatus::Ok
    );
    assert!(!conn);
    assert_eq!(mult, 3);
    assert_eq!(
        unsafe { dc_topology_connected(3, ptr::null(), &mut conn, &mut mult) },
        DcStatus::NullPointer
    );
}

#[test]
fn adt_queries() {
    let d = [2.0, 0.0, 3.0];
    let (mut ok, mut tight) = (false, 0.0);
    assert_eq!(unsafe { dc_tightest_adt(d.as_ptr(), 3, 1, &mut tight) }, DcStatus::Ok);
    assert_eq!(unsafe { dc_check_adt(d.as_ptr(), 3, tight, 1, &mut ok) }, DcStatus::Ok);
    assert!(ok);
    assert_eq!(
        unsafe { dc_check_adt(d.as_ptr(), 3, tight * 1.01, 1, &mut ok) },
        DcStatus::Ok
    );
    assert!(!ok);
    assert_eq!(unsafe { dc_check_adt(ptr::null(), 0, 5.0, 1, &mut ok) }, DcStatus::Ok);
    assert!(ok);
}

#[test]
fn scenario_round_trip() {
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(
            dc_scenario_load(scenario_path("ring3_admissible.toml").as_ptr(), &mut sc),
            DcStatus::Ok
        );
        let (mut n, mut d) = (0usize, 0usize);
        assert_eq!(dc_scenario_shape(sc, &mut n, &mut d), DcStatus::Ok);
        assert_eq!((n, d), (3, 2));

        let mut run = ptr::null_mut();
        assert_eq!(dc_scenario_run(sc, 0.0, &mut run), DcStatus::Ok);
        let mut code = -1;
        assert_eq!(dc_run_exit_code(run, &mut code), DcStatus::Ok);
        assert_eq!(code, 0);
        let mut err = 1.0;
        dc_run_final_error(run, &mut err);
        assert!(err < 1e-6);

        let mut count = 0usize;
        dc_run_sample_count(run, &mut count);
        assert!(count > 0);
        let (mut t, mut y) = (0.0, [0.0; 3]);
        assert_eq!(dc_run_sample(run, 0, &mut t, y.as_mut_ptr(), 3), DcStatus::Ok);
        assert_eq!(t, 0.0);
        assert_eq!(y, [1.0, -1.0, 0.3]);
        assert_eq!(
            dc_run_sample(run, 0, &mut t, y.as_mut_ptr(), 2),
            DcStatus::BufferTooSmall
        );
        assert_eq!(
            dc_run_sample(run, count, &mut t, y.as_mut_ptr(), 3),
            DcStatus::InvalidArgument
        );

        let mut json = ptr::null_mut();
        assert_eq!(dc_run_certificate_json(run, &mut json), DcStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        dc_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["verdict"], "certified");

        let dir = tempfile::TempDir::new().unwrap();
        let cdir = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(dc_run_write_artifacts(run, cdir.as_ptr()), DcStatus::Ok);
        assert!(dir.path().join("summary.json").is_file());

        dc_run_free(run);
        dc_scenario_free(sc);
        dc_run_free(ptr::null_mut());
        dc_scenario_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut sc = ptr::null_mut();
        let bad = CString::new("name = 1").unwrap();
        assert_eq!(dc_scenario_from_str(bad.as_ptr(), &mut sc), DcStatus::Parse);
        assert!(sc.is_null());
        let missing = CString::new("/nonexistent.toml").unwrap();
        assert_eq!(dc_scenario_load(missing.as_ptr(), &mut sc), DcStatus::Io);
        assert_eq!(dc_scenario_load(ptr::null(), &mut sc), DcStatus::NullPointer);
        assert!(last_error().contains("null"));

        let text = std::fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/ring3_admissible.toml"),
        )
        .unwrap()
        .replace("g = 10.0", "g = 0.5");
        let c = CString::new(text).unwrap();
        assert_eq!(dc_scenario_from_str(c.as_ptr(), &mut sc), DcStatus::Validation);
        assert!(last_error().contains("gain.g"));
    }
}

#[test]
fn header_declares_the_api() {
    let h =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/dwell_consensus.h")).unwrap();
    for name in [
        "typedef struct DcScenario DcScenario",
        "typedef struct DcRun DcRun",
        "DC_STATUS_OK = 0",
        "dc_last_error",
        "dc_scenario_load",
        "dc_scenario_run",
        "dc_run_certificate_json",
        "dc_string_free",
        "dc_solve_riccati",
        "dc_topology_connected",
        "dc_check_adt",
        "dc_tightest_adt",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Compiles a C program against the header and the shared library.
#[test]
fn c_smoke_program() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/capi-xxxx -> target/<profile>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join(format!(
        "{}dwell_consensus_ffi{}",
        std::env::consts::DLL_PREFIX,
        std::env::consts::DLL_SUFFIX
    ));
    assert!(lib.is_file(), "shared library not built at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let tmp = tempfile::TempDir::new().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&profile_dir)
        .arg("-ldwell_consensus_ffi")
        .arg("-lm")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe)
        .arg(scenario_path("ring3_admissible.toml").to_str().unwrap())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("certified=1 converged=1"));
}
