use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pnrstat_ffi::*;

fn matrix(channels: usize, eta: f64, cutoff: usize) -> *mut PnrResponseMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { pnr_response_matrix_new(channels, eta, cutoff, &mut m) },
        PnrStatus::Ok
    );
    m
}

fn last_error() -> String {
    let p = pnr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn matrix_handle_round_trip() {
    let m = matrix(10, 0.5, 50);
    unsafe {
        assert_eq!(pnr_response_matrix_rows(m), 11);
        assert_eq!(pnr_response_matrix_cols(m), 51);
        let mut buf = vec![0.0; 11 * 51];
        assert_eq!(
            pnr_response_matrix_copy(m, buf.as_mut_ptr(), buf.len()),
            PnrStatus::Ok
        );
        for n in 0..51 {
            let col: f64 = (0..11).map(|r| buf[r * 51 + n]).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
        let mut short = vec![0.0; 10];
        assert_eq!(
            pnr_response_matrix_copy(m, short.as_mut_ptr(), short.len()),
            PnrStatus::BufferTooSmall
        );
        pnr_response_matrix_free(m);
        pnr_response_matrix_free(ptr::null_mut());
        assert_eq!(pnr_response_matrix_rows(ptr::null()), 0);
    }
}

#[test]
fn invalid_parameters_map_to_status_codes() {
    let mut m = ptr::null_mut();
    let status = unsafe { pnr_response_matrix_new(0, 0.5, 50, &mut m) };
    assert_eq!(status, PnrStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(last_error().contains("channels"));
    let status = unsafe { pnr_response_matrix_new(10, 0.5, 50, ptr::null_mut()) };
    assert_eq!(status, PnrStatus::NullPointer);

    let spec = CString::new("laser:3").unwrap();
    let mut out = vec![0.0; 51];
    let status = unsafe { pnr_source_distribution(spec.as_ptr(), 50, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, PnrStatus::UnknownVariant);
}

#[test]
fn forward_then_retrieve() {
    let m = matrix(10, 0.5, 50);
    let spec = CString::new("coherent:4").unwrap();
    let mut p = vec![0.0; 51];
    let mut c = vec![0.0; 11];
    unsafe {
        assert_eq!(
            pnr_source_distribution(spec.as_ptr(), 50, p.as_mut_ptr(), p.len()),
            PnrStatus::Ok
        );
        assert_eq!(
            pnr_forward(m, p.as_ptr(), p.len(), c.as_mut_ptr(), c.len()),
            PnrStatus::Ok
        );

        let mut report = ptr::null_mut();
        assert_eq!(
            pnr_retrieve(m, c.as_ptr(), c.len(), ptr::null(), &mut report),
            PnrStatus::Ok
        );
        assert!(pnr_report_converged(report));
        assert!(pnr_report_iterations(report) > 0);
        let mut est = vec![0.0; pnr_report_len(report)];
        assert_eq!(
            pnr_report_estimate(report, est.as_mut_ptr(), est.len()),
            PnrStatus::Ok
        );
        pnr_report_free(report);

        let (mut f, mut d) = (0.0, 0.0);
        assert_eq!(
            pnr_compare(est.as_ptr(), est.len(), p.as_ptr(), p.len(), &mut f, &mut d),
            PnrStatus::Ok
        );
        assert!(f > 0.999 && d < 0.02, "F = {f}, Δ = {d}");

        let mut settings = pnr_settings_default();
        settings.algorithm = 7;
        let mut report = ptr::null_mut();
        assert_eq!(
            pnr_retrieve(m, c.as_ptr(), c.len(), &settings, &mut report),
            PnrStatus::UnknownVariant
        );
        settings.algorithm = PnrAlgorithm::DirectInverse as i32;
        assert_eq!(
            pnr_retrieve(m, c.as_ptr(), c.len(), &settings, &mut report),
            PnrStatus::InvalidParameter
        );
        assert_eq!(
            pnr_retrieve(m, c.as_ptr(), 5, ptr::null(), &mut report),
            PnrStatus::DimensionMismatch
        );
        pnr_response_matrix_free(m);
    }
}

#[test]
fn direct_inverse_square_system() {
    let m = matrix(4, 0.8, 4);
    let p = [0.1, 0.2, 0.3, 0.25, 0.15];
    let mut c = [0.0; 5];
    let mut x = [0.0; 5];
    unsafe {
        assert_eq!(
            pnr_forward(m, p.as_ptr(), 5, c.as_mut_ptr(), 5),
            PnrStatus::Ok
        );
        assert_eq!(
            pnr_direct_inverse(m, c.as_ptr(), 5, x.as_mut_ptr(), 5),
            PnrStatus::Ok
        );
        pnr_response_matrix_free(m);
    }
    for (a, b) in x.iter().zip(&p) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn diagnostics_of_single_photon() {
    let p = [0.0, 1.0, 0.0];
    let mut d = PnrDiagnostics {
        mean: 0.0,
        variance: 0.0,
        g2: 0.0,
        mandel_q: 0.0,
        parity: 0.0,
        wigner_origin: 0.0,
    };
    assert_eq!(
        unsafe { pnr_diagnostics(p.as_ptr(), 3, &mut d) },
        PnrStatus::Ok
    );
    assert_eq!((d.mean, d.g2, d.mandel_q, d.parity), (1.0, 0.0, -1.0, -1.0));
    let vac = [1.0, 0.0];
    assert_eq!(
        unsafe { pnr_diagnostics(vac.as_ptr(), 2, &mut d) },
        PnrStatus::Ok
    );
    assert!(d.g2.is_nan());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "pnrstat.h"

int main(void) {
    PnrResponseMatrix *m = NULL;
    if (pnr_response_matrix_new(10, 0.5, 50, &m) != PNR_STATUS_OK) return 1;
    double p[51], c[11];
    if (pnr_source_distribution("thermal:2", 50, p, 51) != PNR_STATUS_OK) return 2;
    if (pnr_forward(m, p, 51, c, 11) != PNR_STATUS_OK) return 3;
    PnrReport *r = NULL;
    PnrSettings s = pnr_settings_default();
    if (pnr_retrieve(m, c, 11, &s, &r) != PNR_STATUS_OK) return 4;
    double est[51];
    pnr_report_estimate(r, est, 51);
    double f = 0, d = 0;
    pnr_compare(est, 51, p, 51, &f, &d);
    pnr_report_free(r);
    if (pnr_response_matrix_new(0, 0.5, 50, &m) != PNR_STATUS_INVALID_PARAMETER) return 5;
    if (pnr_last_error_message() == NULL) return 6;
    pnr_response_matrix_free(m);
    printf("%.6f\n", f);
    return f > 0.999 ? 0 : 7;
}
"#;

/// Compiles and runs a C client against the generated header and the static library.
#[test]
fn c_client_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    assert!(include.join("pnrstat.h").exists());
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libpnrstat_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.join("client");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status);
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
        {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_abi");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
