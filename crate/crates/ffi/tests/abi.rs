use std::ffi::{CStr, CString};
use std::ptr;

use ici_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ici_last_error()) }.to_string_lossy().into_owned()
}

/// Two tight clusters of `dim`-dimensional points with some spread.
fn training_data(n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect()
}

unsafe fn trained(n: usize, dim: usize) -> *mut IciSvddModel {
    let data = training_data(n, dim);
    let mut m = ptr::null_mut();
    assert_eq!(ici_svdd_train(data.as_ptr(), n, dim, 3, 0.95, &mut m), IciStatus::Ok, "{}", last_error());
    m
}

#[test]
fn train_score_and_json_round_trip() {
    unsafe {
        let m = trained(30, 6);
        let mut dim = 0;
        assert_eq!(ici_svdd_input_dim(m, &mut dim), IciStatus::Ok);
        assert_eq!(dim, 6);
        let mut theta = -1.0;
        assert_eq!(ici_svdd_threshold(m, &mut theta), IciStatus::Ok);
        assert!(theta >= 0.0);

        let x = [0.5, -1.0, 2.0, 0.0, 1.0, -0.5];
        let mut score = -1.0;
        assert_eq!(ici_svdd_score(m, x.as_ptr(), 6, &mut score), IciStatus::Ok);
        assert!(score >= 0.0);
        let mut flag = false;
        assert_eq!(ici_svdd_is_anomalous(m, x.as_ptr(), 6, &mut flag), IciStatus::Ok);
        assert_eq!(flag, score > theta);

        let mut needed = 0;
        assert_eq!(ici_svdd_to_json(m, ptr::null_mut(), 0, &mut needed), IciStatus::Ok);
        let mut small = vec![0 as std::ffi::c_char; 4];
        assert_eq!(ici_svdd_to_json(m, small.as_mut_ptr(), small.len(), &mut needed), IciStatus::BufferTooSmall);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(ici_svdd_to_json(m, buf.as_mut_ptr(), buf.len(), &mut needed), IciStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(ici_svdd_from_json(buf.as_ptr(), &mut back), IciStatus::Ok);
        let mut score2 = -1.0;
        assert_eq!(ici_svdd_score(back, x.as_ptr(), 6, &mut score2), IciStatus::Ok);
        assert_eq!(score.to_bits(), score2.to_bits());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, CStr::from_ptr(buf.as_ptr()).to_bytes()).unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(ici_svdd_load(cpath.as_ptr(), &mut loaded), IciStatus::Ok);

        ici_svdd_free(m);
        ici_svdd_free(back);
        ici_svdd_free(loaded);
        ici_svdd_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let m = trained(20, 4);
        let x = [1.0, 2.0, 3.0];
        let mut s = 0.0;
        assert_eq!(ici_svdd_score(m, x.as_ptr(), 3, &mut s), IciStatus::DimensionMismatch);
        assert!(last_error().contains("expected 4"));
        assert_eq!(ici_svdd_score(m, ptr::null(), 4, &mut s), IciStatus::NullPointer);
        assert_eq!(ici_svdd_score(ptr::null(), x.as_ptr(), 3, &mut s), IciStatus::NullPointer);
        assert_eq!(ici_svdd_score(m, [2.0; 4].as_ptr(), 4, &mut s), IciStatus::ConstantData);
        ici_svdd_free(m);

        let constant = vec![5.0; 40];
        let mut out = ptr::null_mut();
        assert_eq!(ici_svdd_train(constant.as_ptr(), 10, 4, 0, 0.95, &mut out), IciStatus::ConstantData);
        assert!(out.is_null());

        let bad = CString::new("{not json").unwrap();
        assert_eq!(ici_svdd_from_json(bad.as_ptr(), &mut out), IciStatus::Parse);
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(ici_svdd_load(missing.as_ptr(), &mut out), IciStatus::Io);
        assert!(last_error().contains("/nonexistent/model.json"));
    }
}

#[test]
fn whitening_filter_whitens() {
    let r = [
        IciComplex { re: 4.0, im: 0.0 },
        IciComplex { re: 1.0, im: 1.0 },
        IciComplex { re: 1.0, im: -1.0 },
        IciComplex { re: 3.0, im: 0.0 },
    ];
    let mut w = [IciComplex { re: 0.0, im: 0.0 }; 4];
    assert_eq!(unsafe { ici_whitening_filter(r.as_ptr(), 2, w.as_mut_ptr()) }, IciStatus::Ok);
    let c = |z: IciComplex| num_complex::Complex64::new(z.re, z.im);
    for i in 0..2 {
        for j in 0..2 {
            // (W R W^H)_{ij}
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    acc += c(w[i * 2 + k]) * c(r[k * 2 + l]) * c(w[j * 2 + l]).conj();
                }
            }
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((acc.re - want).abs() < 1e-12 && acc.im.abs() < 1e-12);
        }
    }
    let indefinite = [IciComplex { re: 1.0, im: 0.0 }, IciComplex { re: 2.0, im: 0.0 }, IciComplex { re: 2.0, im: 0.0 }, IciComplex { re: 1.0, im: 0.0 }];
    assert_eq!(unsafe { ici_whitening_filter(indefinite.as_ptr(), 2, w.as_mut_ptr()) }, IciStatus::NotPositiveDefinite);
}

#[test]
fn bound_and_metrics_match_core() {
    let g = [IciComplex { re: 0.5, im: 0.0 }; 4];
    let mut b = 0.0;
    assert_eq!(unsafe { ici_bernstein_lower_bound(2.0, 256, 1.0, g.as_ptr(), 4, &mut b) }, IciStatus::Ok);
    let core = ici_core::whitening::bernstein_lower_bound(
        &ici_core::whitening::BernsteinParams::new(2.0, 256, 1.0, vec![num_complex::Complex64::new(0.5, 0.0); 4]).unwrap(),
    );
    assert_eq!(b, core);
    assert_eq!(unsafe { ici_bernstein_lower_bound(-1.0, 256, 1.0, g.as_ptr(), 4, &mut b) }, IciStatus::InvalidArgument);

    let mut m = IciMetrics { sensitivity: 0.0, precision: 0.0, f1: 0.0, sensitivity_defined: false, precision_defined: false, f1_defined: false };
    assert_eq!(unsafe { ici_classification_metrics(1, 1, 0, 5, &mut m) }, IciStatus::Ok);
    assert_eq!((m.sensitivity, m.precision, m.f1), (1.0, 0.5, 2.0 / 3.0));
    assert!(m.f1_defined);
    assert_eq!(unsafe { ici_classification_metrics(0, 0, 0, 5, &mut m) }, IciStatus::Ok);
    assert!(!m.sensitivity_defined && !m.precision_defined && !m.f1_defined);
}
