//! Exercises the C ABI end to end from Rust: build, train, evaluate,
//! checkpoint round-trip, single-sample prediction, gradient check, and
//! error reporting.

use std::ffi::{CStr, CString};

use convattn::data::{generate_synthetic, write_dataset, SynthSpec, SynthStream};
use convattn::model::Modality;
use convattn_ffi::*;

fn synth_dir(dir: &std::path::Path) {
    let ds = generate_synthetic(&SynthSpec {
        name: "ffi_synth".into(),
        num_classes: 4,
        samples_per_class: 10,
        streams: vec![
            SynthStream {
                name: "audio".into(),
                modality: Modality::Audio,
                dim: 5,
                separation: 5.0,
                sigma: 0.1,
            },
            SynthStream {
                name: "visual".into(),
                modality: Modality::Visual,
                dim: 4,
                separation: 5.0,
                sigma: 0.1,
            },
        ],
        seed: 11,
    })
    .unwrap();
    write_dataset(&ds, dir).unwrap();
}

fn fusion_json() -> CString {
    CString::new(
        serde_json::json!({
            "streams": [
                {"name": "audio", "modality": "audio", "input_dim": 5},
                {"name": "visual", "modality": "visual", "input_dim": 4},
            ],
            "d_common": 6,
            "n_conv_blocks": 1,
            "conv_kernel": 3,
            "use_batchnorm": true,
            "activation": "swish",
            "head": "conv_attention",
            "num_classes": 4,
            "attn_softmax": false,
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn full_lifecycle_through_the_c_abi() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    synth_dir(&data_dir);

    unsafe {
        let model = caf_model_new(fusion_json().as_ptr(), 3);
        assert!(!model.is_null());
        assert!(caf_model_param_count(model) > 0);

        let data_c = CString::new(data_dir.to_str().unwrap()).unwrap();
        let ds = caf_dataset_load(data_c.as_ptr());
        assert!(!ds.is_null());
        assert_eq!(caf_dataset_len(ds), 40);

        let tcfg = CString::new(
            serde_json::json!({
                "learning_rate": 1e-3,
                "epochs": 60,
                "batch_size": 16,
                "seed": 3,
                "optimizer": "adam",
                "beta1": 0.9,
                "beta2": 0.999,
                "adam_epsilon": 1e-8,
                "shuffle": true,
                "patience": null,
            })
            .to_string(),
        )
        .unwrap();
        let mut train_waf = f64::NAN;
        assert_eq!(caf_train(model, ds, tcfg.as_ptr(), &mut train_waf), CAF_OK);
        assert!(train_waf > 0.9, "train waf {train_waf}");

        let (mut waf, mut acc) = (f64::NAN, f64::NAN);
        assert_eq!(caf_evaluate(model, ds, &mut waf, &mut acc), CAF_OK);
        assert!(waf > 0.9 && acc > 0.9);

        // checkpoint round-trip preserves behavior
        let ckpt = tmp.path().join("model.bin");
        let ckpt_c = CString::new(ckpt.to_str().unwrap()).unwrap();
        assert_eq!(caf_model_save(model, ckpt_c.as_ptr()), CAF_OK);
        let reloaded = caf_model_load(ckpt_c.as_ptr());
        assert!(!reloaded.is_null());
        let (mut waf2, mut acc2) = (f64::NAN, f64::NAN);
        assert_eq!(caf_evaluate(reloaded, ds, &mut waf2, &mut acc2), CAF_OK);
        assert_eq!(waf, waf2);
        assert_eq!(acc, acc2);

        // single-sample prediction with the right and wrong buffer sizes
        let features = vec![0.5f64; 9];
        let mut class = usize::MAX;
        assert_eq!(
            caf_predict(model, features.as_ptr(), features.len(), &mut class),
            CAF_OK
        );
        assert!(class < 4);
        assert_eq!(
            caf_predict(model, features.as_ptr(), 3, &mut class),
            CAF_ERR_CONFIG
        );
        let msg = CStr::from_ptr(caf_last_error_message());
        assert!(msg.to_str().unwrap().contains("expected 9 features"));

        caf_model_free(reloaded);
        caf_model_free(model);
        caf_dataset_free(ds);
    }
}

#[test]
fn gradcheck_and_error_paths() {
    unsafe {
        let mut err = f64::NAN;
        assert_eq!(caf_gradcheck(fusion_json().as_ptr(), 7, &mut err), CAF_OK);
        assert!(err <= 1e-5);

        let bad = CString::new("{not json").unwrap();
        assert_eq!(caf_gradcheck(bad.as_ptr(), 7, std::ptr::null_mut()), CAF_ERR_CONFIG);

        let missing = CString::new("/nonexistent/ckpt.bin").unwrap();
        assert!(caf_model_load(missing.as_ptr()).is_null());
        let msg = CStr::from_ptr(caf_last_error_message());
        assert!(!msg.to_bytes().is_empty());

        let missing_dir = CString::new("/nonexistent/dataset").unwrap();
        assert!(caf_dataset_load(missing_dir.as_ptr()).is_null());
    }
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/convattn.h"),
    )
    .unwrap();
    for symbol in [
        "caf_last_error_message",
        "caf_model_new",
        "caf_model_load",
        "caf_model_save",
        "caf_model_free",
        "caf_model_param_count",
        "caf_dataset_load",
        "caf_dataset_free",
        "caf_dataset_len",
        "caf_train",
        "caf_evaluate",
        "caf_predict",
        "caf_gradcheck",
        "CafModel",
        "CafDataset",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
