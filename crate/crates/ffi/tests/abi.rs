use std::ffi::{CStr, CString};
use std::ptr;

use fedsim::nn::head::FcHead;
use fedsim::nn::{Dims, ParamSet};
use fedsim::rng::{stream_rng, Stream};
use fedsim_ffi::*;

const SMALL: &str = r#"{
    "dataset": {"synthetic": {"kind": "random-walk", "points_each": 100}},
    "clients": 6, "rounds": 5, "clients_per_round": 2, "hidden": 6,
    "seq_len": 4, "batch_size": 8, "learning_rate": 0.5, "variant": "FedCAB"
}"#;

fn last_error() -> String {
    let p = fedsim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn config(json: &str) -> *mut FedsimConfig {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(fedsim_config_from_json(text.as_ptr(), &mut cfg), FedsimStatus::Ok, "{}", {
        let p = fedsim_last_error();
        if p.is_null() {
            String::new()
        } else {
            CStr::from_ptr(p).to_string_lossy().into_owned()
        }
    });
    cfg
}

#[test]
fn run_through_handles() {
    unsafe {
        let cfg = config(SMALL);
        assert_eq!(fedsim_config_set_seed(cfg, 7), FedsimStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(fedsim_run(cfg, &mut run), FedsimStatus::Ok);
        assert!(fedsim_last_error().is_null());
        assert_eq!(fedsim_run_rounds(run), 5);
        assert!(!fedsim_run_aborted(run));
        let mut rmse = 0.0;
        assert_eq!(fedsim_run_round_rmse(run, 4, &mut rmse), FedsimStatus::Ok);
        assert!(rmse.is_finite() && rmse > 0.0);
        assert_eq!(fedsim_run_round_rmse(run, 5, &mut rmse), FedsimStatus::OutOfRange);
        assert!(last_error().contains("out of 5"));

        let mut total = 0;
        for c in 0..6 {
            let mut u = 0;
            assert_eq!(fedsim_run_uploads(run, c, &mut u), FedsimStatus::Ok);
            total += u;
        }
        assert_eq!(total, 10);

        let mut csv = ptr::null_mut();
        assert_eq!(fedsim_run_rounds_csv(run, &mut csv), FedsimStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        fedsim_string_free(csv);
        assert!(text.starts_with("variant,round,alpha,global_rmse"));
        assert_eq!(text.lines().count(), 6);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
        assert_eq!(fedsim_run_write_reports(run, path.as_ptr()), FedsimStatus::Ok);
        assert_eq!(std::fs::read_to_string(dir.path().join("out/rounds.csv")).unwrap(), text);

        fedsim_run_free(run);
        fedsim_config_free(cfg);
    }
}

#[test]
fn config_errors_map_to_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(fedsim_config_from_json(ptr::null(), &mut cfg), FedsimStatus::NullPointer);
        let bad = CString::new(r#"{"clients": 1}"#).unwrap();
        assert_eq!(fedsim_config_from_json(bad.as_ptr(), &mut cfg), FedsimStatus::InvalidConfig);
        assert!(last_error().contains("clients"));
        let junk = CString::new("{not json").unwrap();
        assert_eq!(fedsim_config_from_json(junk.as_ptr(), &mut cfg), FedsimStatus::Parse);
        assert!(cfg.is_null());

        assert_eq!(fedsim_config_default(&mut cfg), FedsimStatus::Ok);
        let name = CString::new("fedprox:0.1").unwrap();
        assert_eq!(fedsim_config_set_variant(cfg, name.as_ptr()), FedsimStatus::Ok);
        let nope = CString::new("fedsgd").unwrap();
        assert_ne!(fedsim_config_set_variant(cfg, nope.as_ptr()), FedsimStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(fedsim_config_to_json(cfg, &mut json), FedsimStatus::Ok);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("0.1"));
        fedsim_string_free(json);
        fedsim_config_free(cfg);

        let mut run = ptr::null_mut();
        assert_eq!(fedsim_run(ptr::null(), &mut run), FedsimStatus::NullPointer);
        assert_eq!(fedsim_run_rounds(ptr::null()), 0);
        fedsim_run_free(ptr::null_mut());
        fedsim_config_free(ptr::null_mut());
        fedsim_string_free(ptr::null_mut());
    }
}

#[test]
fn math_entry_points() {
    unsafe {
        let x = [0.5, -1.5, 0.0, 2.0];
        let mut q = [0.0; 4];
        assert_eq!(fedsim_param_distribution(x.as_ptr(), 4, q.as_mut_ptr()), FedsimStatus::Ok);
        let total = 4.0 + 4.0 * 1e-8;
        for (qi, xi) in q.iter().zip(x) {
            assert!((qi - (xi.abs() + 1e-8) / total).abs() < 1e-15);
        }
        let p = [0.25; 4];
        let mut kl = -1.0;
        assert_eq!(fedsim_kl_divergence(p.as_ptr(), p.as_ptr(), 4, &mut kl), FedsimStatus::Ok);
        assert_eq!(kl, 0.0);
        let r = [0.5, 0.25, 0.125, 0.125];
        assert_eq!(fedsim_kl_divergence(r.as_ptr(), p.as_ptr(), 4, &mut kl), FedsimStatus::Ok);
        let expected = 0.5 * 2f64.ln() + 0.25 * 0.0 + 2.0 * 0.125 * 0.5f64.ln();
        assert!((kl - expected).abs() < 1e-15);
        let zero = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(fedsim_kl_divergence(zero.as_ptr(), p.as_ptr(), 4, &mut kl), FedsimStatus::InvalidInput);

        let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
        assert_eq!(fedsim_solve_quadratic(3.0, 4, &mut b0, &mut b1, &mut b2), FedsimStatus::Ok);
        assert_eq!((b0, b1, b2), (0.125, -1.0, 3.0));
        assert_eq!(fedsim_solve_quadratic(3.0, 0, &mut b0, &mut b1, &mut b2), FedsimStatus::InvalidInput);

        assert_eq!(fedsim_fc_len(128, 5), 645);
    }
}

#[test]
fn head_decoding() {
    let model = ParamSet::random_uniform(Dims::new(2, 128, 5).unwrap(), 0.1, &mut stream_rng(1, Stream::GlobalInit));
    let bytes = FcHead::from_model(&model).encode();
    let (mut h, mut o, mut n) = (0, 0, 0);
    unsafe {
        let st = fedsim_fc_head_decode(bytes.as_ptr(), bytes.len(), &mut h, &mut o, ptr::null_mut(), 0, &mut n);
        assert_eq!(st, FedsimStatus::OutOfRange);
        assert_eq!((h, o, n), (128, 5, 645));
        let mut values = vec![0.0; n];
        let st = fedsim_fc_head_decode(bytes.as_ptr(), bytes.len(), &mut h, &mut o, values.as_mut_ptr(), n, &mut n);
        assert_eq!(st, FedsimStatus::Ok);
        assert_eq!(values, model.fc_extract());
        let st = fedsim_fc_head_decode(bytes.as_ptr(), bytes.len() - 8, &mut h, &mut o, values.as_mut_ptr(), n, &mut n);
        assert_eq!(st, FedsimStatus::Dimension);
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut out = 0.0;
        assert_ne!(fedsim_kl_divergence(ptr::null(), ptr::null(), 3, &mut out), FedsimStatus::Ok);
    }
    assert!(!fedsim_last_error().is_null());
    std::thread::spawn(|| assert!(fedsim_last_error().is_null())).join().unwrap();
}
