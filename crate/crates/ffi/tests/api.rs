use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nncert_ffi::*;

fn fig2() -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/fig2.json");
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(nncert_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn learn_and_verify_through_handles() {
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(
            nncert_problem_from_json(fig2().as_ptr(), &mut problem),
            NncertStatus::Ok
        );
        assert_eq!(nncert_problem_pair_count(problem), 2);

        let mut report = ptr::null_mut();
        assert_eq!(nncert_learn(problem, &mut report), NncertStatus::Ok);
        assert_eq!(nncert_report_outcome(report), NncertOutcome::Feasible);
        assert!(nncert_report_margin(report) >= 1e-6);
        assert_eq!(nncert_report_violations(report), 0);

        let mut net = ptr::null_mut();
        assert_eq!(nncert_report_network(report, &mut net), NncertStatus::Ok);
        assert!(!net.is_null());
        assert_eq!(nncert_network_input_dim(net), 2);

        let mut json = ptr::null_mut();
        assert_eq!(nncert_network_to_json(net, &mut json), NncertStatus::Ok);
        let mut copy = ptr::null_mut();
        assert_eq!(nncert_network_from_json(json, &mut copy), NncertStatus::Ok);
        nncert_string_free(json);

        let x = [-1.0, 0.0];
        let (mut y1, mut y2) = ([0.0; 2], [0.0; 2]);
        assert_eq!(
            nncert_network_forward(net, x.as_ptr(), 2, y1.as_mut_ptr(), 2),
            NncertStatus::Ok
        );
        assert_eq!(
            nncert_network_forward(copy, x.as_ptr(), 2, y2.as_mut_ptr(), 2),
            NncertStatus::Ok
        );
        assert_eq!(y1, y2);

        let mut verified = ptr::null_mut();
        assert_eq!(nncert_verify(copy, problem, &mut verified), NncertStatus::Ok);
        assert_eq!(nncert_report_outcome(verified), NncertOutcome::Certified);

        let mut text = ptr::null_mut();
        assert_eq!(nncert_report_to_json(verified, &mut text), NncertStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(text).to_str().unwrap()).unwrap();
        assert_eq!(v["outcome"], "certified");
        nncert_string_free(text);

        let mut counts = [usize::MAX; 2];
        assert_eq!(
            nncert_monte_carlo(net, problem, 5000, 3, counts.as_mut_ptr(), 2),
            NncertStatus::Ok
        );
        assert_eq!(counts, [0, 0]);

        nncert_report_free(verified);
        nncert_network_free(copy);
        nncert_network_free(net);
        nncert_report_free(report);
        nncert_problem_free(problem);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(
            nncert_problem_from_json(ptr::null(), &mut problem),
            NncertStatus::NullPointer
        );
        let garbage = CString::new("{not json").unwrap();
        assert_eq!(
            nncert_problem_from_json(garbage.as_ptr(), &mut problem),
            NncertStatus::Parse
        );
        assert!(!last_error().is_empty());
        assert!(problem.is_null());

        let mismatch = CString::new(
            r#"{"shape":{"nx":3,"n1":2,"ny":2},"activation":"tanh",
               "pairs":[{"input":{"A":[[1,0],[0,1]],"b":[0,0]},"output":{"C":[[1,0],[0,1]],"d":[0,0]}}]}"#,
        )
        .unwrap();
        assert_eq!(
            nncert_problem_from_json(mismatch.as_ptr(), &mut problem),
            NncertStatus::Dimension
        );
        assert!(last_error().contains("pair 0"));

        let bad_utf8 = [0xffu8, 0xfe, 0];
        let mut net = ptr::null_mut();
        assert_eq!(
            nncert_network_from_json(bad_utf8.as_ptr().cast(), &mut net),
            NncertStatus::InvalidUtf8
        );
        let mut out = ptr::null_mut();
        assert_eq!(nncert_network_to_json(ptr::null(), &mut out), NncertStatus::NullPointer);
        assert!(nncert_report_margin(ptr::null()).is_nan());

        nncert_problem_free(ptr::null_mut());
        nncert_network_free(ptr::null_mut());
        nncert_report_free(ptr::null_mut());
        nncert_string_free(ptr::null_mut());
    }
}

#[test]
fn budget_exhausted_report_has_no_network() {
    let json = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/fig2.json"))
        .unwrap()
        .replace("\"residual\"", "\"strict\"");
    let json = CString::new(json).unwrap();
    unsafe {
        let mut problem = ptr::null_mut();
        assert_eq!(nncert_problem_from_json(json.as_ptr(), &mut problem), NncertStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(nncert_learn(problem, &mut report), NncertStatus::Ok);
        assert_eq!(nncert_report_outcome(report), NncertOutcome::BudgetExhausted);
        let mut net = ptr::dangling_mut::<NncertNetwork>();
        assert_eq!(nncert_report_network(report, &mut net), NncertStatus::Ok);
        assert!(net.is_null());
        nncert_report_free(report);
        nncert_problem_free(problem);
    }
}

/// Compile the C smoke program against the generated header and the static
/// library. Skipped when no C compiler or static library is available.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = target_dir.join("libnncert_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let out_dir = smoke_dir();
    let bin = out_dir.join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "smoke exited with {:?}: {}",
        run.status,
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}

fn smoke_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nncert-ffi-smoke-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
