use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pfan_ffi::*;

fn last_error() -> String {
    let p = pfan_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tensor(h: usize, w: usize, c: usize) -> *mut PfanTensor {
    let data: Vec<f32> = (0..h * w * c).map(|i| ((i * 37) % 101) as f32 / 10.0 - 5.0).collect();
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { pfan_tensor_new(h, w, c, data.as_ptr(), &mut t) },
        PfanStatus::Ok
    );
    t
}

#[test]
fn levenshtein_and_errors() {
    let a = CString::new("kitten").unwrap();
    let b = CString::new("sitting").unwrap();
    let mut d = 0;
    assert_eq!(
        unsafe { pfan_levenshtein(a.as_ptr(), b.as_ptr(), &mut d) },
        PfanStatus::Ok
    );
    assert_eq!(d, 3);
    assert!(pfan_last_error().is_null());

    assert_eq!(
        unsafe { pfan_levenshtein(ptr::null(), b.as_ptr(), &mut d) },
        PfanStatus::Usage
    );
    assert!(last_error().contains("null"));
}

#[test]
fn cra_hand_cases() {
    let text = |s: &str| CString::new(s).unwrap();
    let (abc, abd, xyz) = (text("ABC123"), text("ABC12"), text("ZZZZZZ"));
    let plate = |t: &CString| PfanPlate {
        x: 10,
        y: 10,
        w: 40,
        h: 12,
        text: t.as_ptr(),
        readable: true,
    };
    let mut cra = f64::NAN;
    let gt = [plate(&abc)];
    for (pred, want) in [(plate(&abc), 100.0), (plate(&abd), 83.33), (plate(&xyz), 0.0)] {
        let status = unsafe { pfan_cra(gt.as_ptr(), 1, &pred, 1, &mut cra) };
        assert_eq!(status, PfanStatus::Ok);
        assert!((cra - want).abs() < 0.005, "{cra} vs {want}");
    }
    // nothing read at all
    assert_eq!(
        unsafe { pfan_cra(gt.as_ptr(), 1, ptr::null(), 0, &mut cra) },
        PfanStatus::Ok
    );
    assert_eq!(cra, 0.0);
}

#[test]
fn lagrangian_and_partition() {
    assert!((pfan_lagrangian(2.0, 0.1, 0.2, 10.0) - (-1.0)).abs() < 1e-12);
    assert_eq!(pfan_lagrangian(1.5, 0.0, 0.0, 10.0), 1.5);
    let l = [0.5, -1.0, 3.0, -1.0, 0.0];
    let mut base = [usize::MAX; 2];
    let mut enh = [usize::MAX; 3];
    let s = unsafe { pfan_partition(l.as_ptr(), l.len(), 2, base.as_mut_ptr(), enh.as_mut_ptr()) };
    assert_eq!(s, PfanStatus::Ok);
    assert_eq!(base, [1, 3]);
    assert_eq!(enh, [0, 2, 4]);

    let s = unsafe { pfan_partition(l.as_ptr(), l.len(), 6, base.as_mut_ptr(), enh.as_mut_ptr()) };
    assert_ne!(s, PfanStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn encode_decode_round_trip() {
    let t = tensor(8, 12, 5);
    let base = [0usize, 3];
    let enh = [1usize, 2, 4];
    let mut bs = ptr::null_mut();
    let s = unsafe { pfan_encode(t, base.as_ptr(), 2, enh.as_ptr(), 3, 4, 4, &mut bs) };
    assert_eq!(s, PfanStatus::Ok);

    let (mut p, mut n) = (ptr::null(), 0);
    assert_eq!(unsafe { pfan_bitstream_bytes(bs, &mut p, &mut n) }, PfanStatus::Ok);
    let bytes = unsafe { std::slice::from_raw_parts(p, n) }.to_vec();
    let mut copy = ptr::null_mut();
    assert_eq!(
        unsafe { pfan_bitstream_from_bytes(bytes.as_ptr(), n, &mut copy) },
        PfanStatus::Ok
    );

    let mut back = ptr::null_mut();
    assert_eq!(unsafe { pfan_decode(copy, &mut back) }, PfanStatus::Ok);
    let (mut h, mut w, mut c) = (0, 0, 0);
    assert_eq!(
        unsafe { pfan_tensor_shape(back, &mut h, &mut w, &mut c) },
        PfanStatus::Ok
    );
    assert_eq!((h, w, c), (8, 12, 5));

    // 8-bit quantization of a 10-wide range, lossless codec step
    let orig = unsafe { std::slice::from_raw_parts(pfan_tensor_data(t), h * w * c) };
    let got = unsafe { std::slice::from_raw_parts(pfan_tensor_data(back), h * w * c) };
    let worst = orig.iter().zip(got).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(worst <= 10.0 / 510.0 + 1e-5, "{worst}");

    unsafe {
        pfan_tensor_free(back);
        pfan_bitstream_free(copy);
        pfan_bitstream_free(bs);
        pfan_tensor_free(t);
        pfan_tensor_free(ptr::null_mut());
    }
}

#[test]
fn rejects_bad_inputs() {
    let t = tensor(4, 4, 3);
    let mut bs = ptr::null_mut();
    let dup = [0usize, 0];
    let one = [2usize];
    let s = unsafe { pfan_encode(t, dup.as_ptr(), 2, one.as_ptr(), 1, 20, 20, &mut bs) };
    assert_ne!(s, PfanStatus::Ok);
    assert!(bs.is_null());

    let junk = [1u8, 2, 3, 4];
    assert_eq!(
        unsafe { pfan_bitstream_from_bytes(junk.as_ptr(), 4, &mut bs) },
        PfanStatus::Data
    );
    assert!(last_error().contains("magic"));
    assert_eq!(
        unsafe { pfan_tensor_from_bytes(junk.as_ptr(), 4, &mut ptr::null_mut()) },
        PfanStatus::Data
    );
    unsafe { pfan_tensor_free(t) };
}

/// Compiles a small C program against the generated header and the static
/// library.
#[test]
fn c_program_links_against_header() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = root.join("../../target/debug");
    let lib = target.join("libpfan_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = std::env::temp_dir().join(format!("pfan-ffi-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "pfan.h"
int main(void) {
    size_t d = 0;
    if (pfan_levenshtein("abc", "acb", &d) != PFAN_STATUS_OK || d != 2) return 1;
    float data[2 * 2 * 2] = {0, 1, 2, 3, 4, 5, 6, 7};
    PfanTensor *t = NULL;
    if (pfan_tensor_new(2, 2, 2, data, &t) != PFAN_STATUS_OK) return 2;
    size_t base[1] = {0}, enh[1] = {1};
    PfanBitstream *bs = NULL;
    if (pfan_encode(t, base, 1, enh, 1, 4, 4, &bs) != PFAN_STATUS_OK) return 3;
    PfanTensor *back = NULL;
    if (pfan_decode(bs, &back) != PFAN_STATUS_OK) return 4;
    const float *v = pfan_tensor_data(back);
    if (v[7] < 6.99f || v[7] > 7.01f) return 5;
    if (pfan_decode(NULL, &back) != PFAN_STATUS_USAGE || pfan_last_error() == NULL) return 6;
    pfan_tensor_free(back);
    pfan_bitstream_free(bs);
    pfan_tensor_free(t);
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
    let _ = std::fs::remove_dir_all(&dir);
}
