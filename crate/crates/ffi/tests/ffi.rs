use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fsl_ffi::*;

fn last_error() -> String {
    let p = fsl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset() -> *mut FslDataset {
    let mut ds = ptr::null_mut();
    let status = unsafe { fsl_dataset_synthetic(6, 2, 4, 8, 10, 4.0, 0.5, 3, &mut ds) };
    assert_eq!(status, FslStatus::Ok);
    ds
}

#[test]
fn handles_round_trip() {
    let ds = dataset();
    let (mut classes, mut items, mut dim) = (0, 0, 0);
    assert_eq!(unsafe { fsl_dataset_split_info(ds, FslSplit::Novel, &mut classes, &mut items, &mut dim) }, FslStatus::Ok);
    assert_eq!((classes, items, dim), (4, 40, 8));

    let mut enc = ptr::null_mut();
    assert_eq!(unsafe { fsl_encoder_new_mlp(8, 16, 4, 1, &mut enc) }, FslStatus::Ok);
    let (mut input_dim, mut embed_dim) = (0, 0);
    assert_eq!(unsafe { fsl_encoder_dims(enc, &mut input_dim, &mut embed_dim) }, FslStatus::Ok);
    assert_eq!((input_dim, embed_dim), (8, 4));

    let x: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
    let mut emb = vec![0.0; 8];
    assert_eq!(unsafe { fsl_encoder_encode(enc, x.as_ptr(), 2, 8, emb.as_mut_ptr(), emb.len()) }, FslStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("enc.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fsl_encoder_save(enc, file.as_ptr()) }, FslStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { fsl_encoder_load(file.as_ptr(), &mut loaded) }, FslStatus::Ok);
    let mut emb2 = vec![0.0; 8];
    assert_eq!(unsafe { fsl_encoder_encode(loaded, x.as_ptr(), 2, 8, emb2.as_mut_ptr(), emb2.len()) }, FslStatus::Ok);
    assert_eq!(emb, emb2);

    let (mut acc, mut ci) = (0.0, 0.0);
    let status = unsafe { fsl_evaluate(loaded, ds, FslSplit::Novel, 3, 1, 2, 50, 9, &mut acc, &mut ci) };
    assert_eq!(status, FslStatus::Ok);
    let (mut acc2, mut ci2) = (0.0, 0.0);
    unsafe { fsl_evaluate(enc, ds, FslSplit::Novel, 3, 1, 2, 50, 9, &mut acc2, &mut ci2) };
    assert_eq!((acc, ci), (acc2, ci2));
    assert!((0.0..=1.0).contains(&acc) && ci >= 0.0);

    unsafe {
        fsl_encoder_free(enc);
        fsl_encoder_free(loaded);
        fsl_dataset_free(ds);
        fsl_dataset_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut enc = ptr::null_mut();
    assert_eq!(unsafe { fsl_encoder_new_mlp(8, 16, 1, 1, &mut enc) }, FslStatus::InvalidArgument);
    assert!(enc.is_null());
    assert!(last_error().contains("embed"), "{}", last_error());

    let missing = CString::new("/nonexistent/enc.json").unwrap();
    assert_eq!(unsafe { fsl_encoder_load(missing.as_ptr(), &mut enc) }, FslStatus::Io);
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { fsl_encoder_new_mlp(8, 16, 4, 1, ptr::null_mut()) }, FslStatus::NullPointer);

    let ds = dataset();
    let mut e = ptr::null_mut();
    unsafe { fsl_encoder_new_mlp(8, 16, 4, 1, &mut e) };
    let (mut acc, mut ci) = (0.0, 0.0);
    let status = unsafe { fsl_evaluate(e, ds, FslSplit::Val, 5, 1, 2, 10, 0, &mut acc, &mut ci) };
    assert_eq!(status, FslStatus::Data);
    let mut small = [0.0; 3];
    let x = [0.0; 8];
    assert_eq!(unsafe { fsl_encoder_encode(e, x.as_ptr(), 1, 8, small.as_mut_ptr(), small.len()) }, FslStatus::Shape);
    unsafe {
        fsl_encoder_free(e);
        fsl_dataset_free(ds);
    }

    let mut out = 0.0;
    assert_eq!(unsafe { fsl_intra_class_loss(x.as_ptr(), [5u32].as_ptr(), 1, x.as_ptr(), 2, 4, 0.1, &mut out) }, FslStatus::InvalidArgument);
}

#[test]
fn loss_entry_points_match_closed_forms() {
    let eye = [1.0, 0.0, 0.0, 1.0];
    let mut v = 0.0;
    assert_eq!(unsafe { fsl_inter_class_loss(eye.as_ptr(), eye.as_ptr(), 2, 2, 1.0, false, &mut v) }, FslStatus::Ok);
    assert!((v - 2.0 * (2f64.ln() - 1.0)).abs() < 1e-12);

    let same = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
    let q = [0.3, -1.0];
    assert_eq!(unsafe { fsl_intra_class_loss(q.as_ptr(), [2u32].as_ptr(), 1, same.as_ptr(), 3, 2, 0.1, &mut v) }, FslStatus::Ok);
    assert!((v - 3f64.ln()).abs() < 1e-12);
    assert_eq!(unsafe { fsl_episode_ce_loss(q.as_ptr(), [1u32].as_ptr(), 1, same.as_ptr(), 3, 2, &mut v) }, FslStatus::Ok);
    assert!((v - 3f64.ln()).abs() < 1e-12);

    let queries = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
    let mut a = [0.0; 4];
    let status = unsafe { fsl_prediction_matrix(queries.as_ptr(), [0u32, 1, 0, 1].as_ptr(), 4, same.as_ptr(), 2, 2, a.as_mut_ptr(), 4) };
    assert_eq!(status, FslStatus::Ok);
    assert!(a.iter().all(|&p| (p - 0.5).abs() < 1e-12));

    let uniform = [0.4; 8];
    assert_eq!(unsafe { fsl_forget_loss(uniform.as_ptr(), uniform.as_ptr(), 4, 2, 0.1, 1e-6, &mut v) }, FslStatus::Ok);
    assert!((v - (4f64.ln() / 4.0 + 0.1)).abs() < 1e-12);

    let support = [1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
    let mut protos = [0.0; 4];
    let status = unsafe { fsl_class_prototypes(support.as_ptr(), [0u32, 1, 0, 1].as_ptr(), 4, 2, 2, 2, protos.as_mut_ptr(), 4) };
    assert_eq!(status, FslStatus::Ok);
    assert_eq!(protos, [5.5, 11.0, 16.5, 22.0]);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fsl.h")
}

#[test]
fn header_declares_the_exported_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "fsl_last_error", "fsl_version", "fsl_dataset_synthetic", "fsl_dataset_load", "fsl_dataset_free",
        "fsl_dataset_split_info", "fsl_encoder_new_mlp", "fsl_encoder_load", "fsl_encoder_save", "fsl_encoder_free",
        "fsl_encoder_dims", "fsl_encoder_encode", "fsl_evaluate", "fsl_class_prototypes", "fsl_inter_class_loss",
        "fsl_intra_class_loss", "fsl_episode_ce_loss", "fsl_prediction_matrix", "fsl_forget_loss",
        "typedef struct FslDataset FslDataset", "typedef struct FslEncoder FslEncoder", "FSL_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a small C program against the header and static library.
#[test]
fn c_program_links_and_runs() {
    // The test binary lives in `<profile>/deps`, next to the library built for it.
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps, deps.parent().unwrap()]
        .iter()
        .map(|d| d.join("libfsl_ffi.a"))
        .find(|p| p.exists())
        .unwrap_or_else(|| panic!("libfsl_ffi.a not found near {}", deps.display()));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "fsl.h"

int main(void) {
    FslDataset *ds = NULL;
    FslEncoder *enc = NULL;
    double acc = -1.0, ci = -1.0, loss = 0.0;
    double eye[4] = {1.0, 0.0, 0.0, 1.0};
    if (fsl_dataset_synthetic(6, 2, 4, 8, 10, 4.0, 0.5, 3, &ds) != FSL_STATUS_OK) return 1;
    if (fsl_encoder_new_mlp(8, 16, 4, 1, &enc) != FSL_STATUS_OK) return 2;
    if (fsl_evaluate(enc, ds, FSL_SPLIT_NOVEL, 3, 1, 2, 20, 0, &acc, &ci) != FSL_STATUS_OK) return 3;
    if (fsl_inter_class_loss(eye, eye, 2, 2, 1.0, false, &loss) != FSL_STATUS_OK) return 4;
    if (fabs(loss - 2.0 * (log(2.0) - 1.0)) > 1e-12) return 5;
    if (fsl_encoder_new_mlp(8, 16, 1, 1, &enc) != FSL_STATUS_INVALID_ARGUMENT || fsl_last_error() == NULL) return 6;
    printf("%s %.4f %.4f\n", fsl_version(), acc, ci);
    fsl_encoder_free(enc);
    fsl_dataset_free(ds);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success(), "compiling the C smoke test failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
