use std::ffi::{CStr, CString};
use std::ptr;

use cogcode::model::{Model, ModelConfig, Variant};
use cogcode_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hcc_last_error()) }.to_string_lossy().into_owned()
}

fn ramp(frames: usize, dims: usize) -> Vec<f32> {
    (0..frames * dims).map(|i| ((i / dims) as f32 * 0.1 + (i % dims) as f32).sin()).collect()
}

#[test]
fn encode_serialize_parse_decode() {
    let (t, d) = (40, 6);
    let x = ramp(t, d);
    unsafe {
        let mut table = ptr::null_mut();
        assert_eq!(hcc_step_table_calibrate(x.as_ptr(), t, d, &mut table), HccStatus::Ok);
        let mut bs = ptr::null_mut();
        assert_eq!(hcc_dm_encode(table, x.as_ptr(), t, d, &mut bs), HccStatus::Ok);

        let mut needed = 0;
        assert_eq!(hcc_bitstream_to_bytes(bs, ptr::null_mut(), 0, &mut needed), HccStatus::BufferTooSmall);
        let mut bytes = vec![0u8; needed];
        let mut written = 0;
        assert_eq!(hcc_bitstream_to_bytes(bs, bytes.as_mut_ptr(), bytes.len(), &mut written), HccStatus::Ok);
        assert_eq!(written, needed);

        let mut parsed = ptr::null_mut();
        assert_eq!(hcc_bitstream_from_bytes(bytes.as_ptr(), bytes.len(), &mut parsed), HccStatus::Ok);
        let (mut frames, mut dims) = (0, 0);
        assert_eq!(hcc_bitstream_shape(parsed, &mut frames, &mut dims), HccStatus::Ok);
        assert_eq!((frames, dims), (t, d));

        let mut a = vec![0f32; t * d];
        let mut b = vec![0f32; t * d];
        let mut n = 0;
        assert_eq!(hcc_dm_decode(bs, a.as_mut_ptr(), a.len(), &mut n), HccStatus::Ok);
        assert_eq!(hcc_dm_decode(parsed, b.as_mut_ptr(), b.len(), &mut n), HccStatus::Ok);
        assert_eq!(n, t * d);
        assert_eq!(a, b);

        hcc_bitstream_free(parsed);
        hcc_bitstream_free(bs);
        hcc_step_table_free(table);
    }
}

#[test]
fn corrupted_bytes_report_checksum() {
    let (t, d) = (12, 3);
    let x = ramp(t, d);
    unsafe {
        let mut table = ptr::null_mut();
        hcc_step_table_calibrate(x.as_ptr(), t, d, &mut table);
        let mut bs = ptr::null_mut();
        hcc_dm_encode(table, x.as_ptr(), t, d, &mut bs);
        let mut bytes = vec![0u8; 4096];
        let mut len = 0;
        assert_eq!(hcc_bitstream_to_bytes(bs, bytes.as_mut_ptr(), bytes.len(), &mut len), HccStatus::Ok);
        bytes.truncate(len);
        let last = len - 5;
        bytes[last] ^= 0x10;
        let mut parsed = ptr::null_mut();
        assert_eq!(hcc_bitstream_from_bytes(bytes.as_ptr(), bytes.len(), &mut parsed), HccStatus::Checksum);
        assert!(parsed.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(hcc_bitstream_from_bytes(bytes.as_ptr(), 3, &mut parsed), HccStatus::Format);
        hcc_bitstream_free(bs);
        hcc_step_table_free(table);
    }
}

#[test]
fn null_and_shape_errors() {
    unsafe {
        let mut table = ptr::null_mut();
        assert_eq!(hcc_step_table_calibrate(ptr::null(), 4, 2, &mut table), HccStatus::NullPointer);
        assert!(last_error().contains("features"));
        assert_eq!(hcc_bitstream_shape(ptr::null(), ptr::null_mut(), ptr::null_mut()), HccStatus::NullPointer);
        let mut out = 0.0;
        assert_eq!(hcc_bitrate(0, 0.08, 0, &mut out), HccStatus::InvalidArgument);
        let path = CString::new("/nonexistent/model.hcck").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(hcc_model_load(path.as_ptr(), &mut model), HccStatus::Io);
        hcc_model_free(ptr::null_mut());
    }
}

#[test]
fn bitrate_matches_payload_arithmetic() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(hcc_bitrate(8, 0.08, 0, &mut out), HccStatus::Ok);
    }
    assert_eq!(out, 100.0);
}

#[test]
fn model_contexts_match_library() {
    let cfg = ModelConfig { window_len: 2560, enc_channels: 6, context_dim: 3, pred_steps: 2, variant: Variant::Cognitive, ..ModelConfig::default() };
    let model = Model::<f32>::new(cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hcck");
    model.save(&path).unwrap();
    let samples: Vec<f32> = (0..2560).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
    let expected = cogcode::model::window_features(
        &model,
        &cogcode::dataset::AudioWindow { samples: samples.clone(), sample_rate: 16000 },
    )
    .unwrap();
    unsafe {
        let p = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle = ptr::null_mut();
        assert_eq!(hcc_model_load(p.as_ptr(), &mut handle), HccStatus::Ok);
        let mut info = HccModelInfo::default();
        assert_eq!(hcc_model_info(handle, &mut info), HccStatus::Ok);
        assert_eq!((info.short_frames, info.long_frames, info.context_dim), (16, 2, 3));
        let mut c_s = vec![0f32; info.short_frames * info.context_dim];
        let mut c_l = vec![0f32; info.long_frames * info.context_dim];
        let (mut ns, mut nl) = (0, 0);
        let status = hcc_model_contexts(
            handle,
            samples.as_ptr(),
            samples.len(),
            c_s.as_mut_ptr(),
            c_s.len(),
            &mut ns,
            c_l.as_mut_ptr(),
            c_l.len(),
            &mut nl,
        );
        assert_eq!(status, HccStatus::Ok, "{}", last_error());
        assert_eq!(c_s, expected.c_s.frames.data());
        assert_eq!(c_l, expected.c_l.unwrap().frames.data());

        let status = hcc_model_contexts(handle, samples.as_ptr(), 100, c_s.as_mut_ptr(), c_s.len(), &mut ns, ptr::null_mut(), 0, ptr::null_mut());
        assert_ne!(status, HccStatus::Ok);
        hcc_model_free(handle);
    }
}
