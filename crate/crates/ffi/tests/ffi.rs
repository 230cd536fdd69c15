use std::ffi::{CStr, CString};
use std::ptr;

use kspace_refine_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kr_last_error()) }.to_string_lossy().into_owned()
}

fn cpath(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn pipeline_through_handles() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(kr_phantom(32, 32, 0, 0, &mut img), KrStatus::Ok);
        let mut omega = ptr::null_mut();
        assert_eq!(kr_mask_lines(32, 32, 4, 4, 0, 3, &mut omega), KrStatus::Ok);
        let mut kept = 0;
        assert_eq!(kr_mask_kept_count(omega, &mut kept), KrStatus::Ok);
        assert_eq!(kept, 8 * 32);

        let mut lambda = ptr::null_mut();
        assert_eq!(kr_mask_lambda(omega, 0.5, 1, 9, &mut lambda), KrStatus::Ok);
        let mut lambda_kept = 0;
        kr_mask_kept_count(lambda, &mut lambda_kept);
        assert_eq!(lambda_kept, 4 * 32);

        let mut y = ptr::null_mut();
        assert_eq!(kr_simulate(img, omega, 0.0, 0, &mut y), KrStatus::Ok);
        let mut zf = ptr::null_mut();
        assert_eq!(kr_zero_filled(y, omega, &mut zf), KrStatus::Ok);
        let mut ista = ptr::null_mut();
        assert_eq!(kr_ista(y, omega, 1e-2, 20, 2, 1.0, &mut ista), KrStatus::Ok);
        let mut params = ptr::null_mut();
        assert_eq!(kr_params_uniform(3, 1.0, 0.01, &mut params), KrStatus::Ok);
        let mut unrolled = ptr::null_mut();
        assert_eq!(kr_unrolled(y, omega, params, 2, &mut unrolled), KrStatus::Ok);

        let (mut p_zf, mut p_ista, mut s_self) = (0.0, 0.0, 0.0);
        assert_eq!(kr_psnr(img, zf, &mut p_zf), KrStatus::Ok);
        assert_eq!(kr_psnr(img, ista, &mut p_ista), KrStatus::Ok);
        assert!(p_zf.is_finite() && p_ista.is_finite());
        assert_eq!(kr_ssim(img, img, &mut s_self), KrStatus::Ok);
        assert_eq!(s_self, 1.0);

        let (mut h, mut w) = (0, 0);
        assert_eq!(kr_image_shape(unrolled, &mut h, &mut w), KrStatus::Ok);
        assert_eq!((h, w), (32, 32));

        kr_image_free(unrolled);
        kr_params_free(params);
        kr_image_free(ista);
        kr_image_free(zf);
        kr_kspace_free(y);
        kr_mask_free(lambda);
        kr_mask_free(omega);
        kr_image_free(img);
    }
}

#[test]
fn fft_round_trip_and_buffers() {
    unsafe {
        let data: Vec<f64> = (0..2 * 16 * 8).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut img = ptr::null_mut();
        assert_eq!(kr_image_new(16, 8, data.as_ptr(), &mut img), KrStatus::Ok);
        let mut k = ptr::null_mut();
        assert_eq!(kr_fft2c(img, &mut k), KrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(kr_ifft2c(k, &mut back), KrStatus::Ok);
        let mut out = vec![0.0; data.len()];
        assert_eq!(kr_image_data(back, out.as_mut_ptr(), out.len()), KrStatus::Ok);
        for (a, b) in data.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(kr_image_data(back, out.as_mut_ptr(), 3), KrStatus::InvalidArgument);
        assert!(last_error().contains("need"));
        kr_image_free(back);
        kr_kspace_free(k);
        kr_image_free(img);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let rho = [1.0, 1.5];
        let theta = [0.01, 0.02];
        let mut params = ptr::null_mut();
        assert_eq!(kr_params_new(2, rho.as_ptr(), theta.as_ptr(), &mut params), KrStatus::Ok);
        let path = cpath(&dir.path().join("p.krfp"));
        assert_eq!(kr_params_save(params, path.as_ptr()), KrStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(kr_params_load(path.as_ptr(), &mut loaded), KrStatus::Ok);
        let (mut n, mut r, mut t) = (0, 0.0, 0.0);
        kr_params_len(loaded, &mut n);
        assert_eq!(n, 2);
        assert_eq!(kr_params_get(loaded, 1, &mut r, &mut t), KrStatus::Ok);
        assert_eq!((r, t), (1.5, 0.02));
        assert_eq!(kr_params_get(loaded, 2, &mut r, &mut t), KrStatus::InvalidArgument);

        let bits = [1u8, 0, 0, 1];
        let mut mask = ptr::null_mut();
        assert_eq!(kr_mask_new(2, 2, bits.as_ptr(), &mut mask), KrStatus::Ok);
        let mpath = cpath(&dir.path().join("m.krt"));
        assert_eq!(kr_mask_write(mask, mpath.as_ptr()), KrStatus::Ok);
        let mut mask2 = ptr::null_mut();
        assert_eq!(kr_mask_read(mpath.as_ptr(), &mut mask2), KrStatus::Ok);
        let mut out = [9u8; 4];
        assert_eq!(kr_mask_data(mask2, out.as_mut_ptr(), 4), KrStatus::Ok);
        assert_eq!(out, bits);

        // A mask file is not an image.
        let mut img = ptr::null_mut();
        assert_ne!(kr_image_read(mpath.as_ptr(), &mut img), KrStatus::Ok);
        assert!(img.is_null());

        let missing = cpath(&dir.path().join("missing.krt"));
        assert_eq!(kr_kspace_read(missing.as_ptr(), &mut ptr::null_mut()), KrStatus::Io);
        std::fs::write(dir.path().join("junk.krt"), b"NOPE").unwrap();
        let junk = cpath(&dir.path().join("junk.krt"));
        assert_eq!(kr_kspace_read(junk.as_ptr(), &mut ptr::null_mut()), KrStatus::Format);

        kr_mask_free(mask2);
        kr_mask_free(mask);
        kr_params_free(loaded);
        kr_params_free(params);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(kr_image_new(2, 2, ptr::null(), &mut img), KrStatus::InvalidArgument);
        assert!(img.is_null());
        assert!(last_error().contains("null"));

        let mut omega = ptr::null_mut();
        assert_eq!(kr_mask_lines(16, 16, 4, 4, 7, 0, &mut omega), KrStatus::InvalidArgument);
        assert_eq!(kr_mask_lines(16, 16, 4, 4, 0, 0, &mut omega), KrStatus::Ok);
        assert!(last_error().is_empty());

        let mut lambda = ptr::null_mut();
        assert_eq!(kr_mask_lambda(omega, 0.5, 8, 0, &mut lambda), KrStatus::Infeasible);

        let mut big = ptr::null_mut();
        kr_phantom(32, 32, 0, 0, &mut big);
        let mut y = ptr::null_mut();
        assert_eq!(kr_simulate(big, omega, 0.0, 0, &mut y), KrStatus::Dimension);

        let mut p = ptr::null_mut();
        assert_eq!(kr_params_uniform(2, 1.0, -1.0, &mut p), KrStatus::InvalidArgument);

        kr_image_free(big);
        kr_mask_free(omega);
        // Freeing null is a no-op.
        kr_image_free(ptr::null_mut());
        kr_kspace_free(ptr::null_mut());
        kr_mask_free(ptr::null_mut());
        kr_params_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_api_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kspace_refine.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "kr_last_error",
        "kr_image_new",
        "kr_mask_lines",
        "kr_mask_lambda",
        "kr_simulate",
        "kr_ista",
        "kr_unrolled",
        "kr_params_load",
        "kr_psnr",
        "kr_ssim",
        "typedef struct KrImage KrImage",
        "KR_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success(), "header does not compile as C99");
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test-binary>
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|d| d.parent()).unwrap().join("libkspace_refine_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let Ok(status) = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success(), "C smoke program failed to build");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status, String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("acceleration"));
}
