use std::f32::consts::PI;

use ww_wasm_demo::{decompose_json, ladder_json, TankModel};

#[test]
fn ladder_spans_three_octaves_across_all_channels() {
    let v = ladder_json(120.0).unwrap();
    let rungs = v["rungs"].as_array().unwrap();
    assert_eq!(rungs.len(), 6);
    assert!((rungs[0]["freq_hz"].as_f64().unwrap() - 120.0).abs() < 1e-9);
    assert!((rungs[5]["freq_hz"].as_f64().unwrap() - 960.0).abs() < 1e-9);
    let mut channels: Vec<u64> = rungs.iter().map(|r| r["channel"].as_u64().unwrap()).collect();
    channels.sort();
    assert_eq!(channels, [1, 2, 3, 4, 5, 6]);
    for r in rungs {
        let (lo, hi, target) =
            (r["band_lo_hz"].as_f64().unwrap(), r["band_hi_hz"].as_f64().unwrap(), r["target_freq_hz"].as_f64().unwrap());
        assert!(lo <= target && target <= hi, "{r}");
    }
}

#[test]
fn ladder_rejects_out_of_range_f0() {
    assert!(ladder_json(f64::NAN).is_err());
    assert!(ladder_json(-5.0).is_err());
}

#[test]
fn decompose_reports_pitch_of_a_voice_like_tone() {
    let rate = 16_000;
    let samples: Vec<f32> = (0..rate)
        .map(|j| {
            let t = j as f32 / rate as f32;
            (1..=5).map(|h| (2.0 * PI * 140.0 * h as f32 * t).sin() / h as f32).sum::<f32>() * 0.3
        })
        .collect();
    let v = decompose_json(&samples, rate as u32).unwrap();
    let f0 = v["f0_hz"].as_f64().unwrap();
    assert!((f0 - 140.0).abs() < 2.0, "{v}");
    assert_eq!(v["components"].as_array().unwrap().len(), 6);
}

#[test]
fn decompose_rejects_silence() {
    assert!(decompose_json(&[0.0; 16_000], 16_000).is_err());
}

#[test]
fn tank_rises_when_driven_and_settles_after_release() {
    let mut tank = TankModel::new(256, 43, "sad", 0.5).unwrap();
    assert!((20.0..=40.0).contains(&tank.freq_hz()));
    assert_eq!(tank.pixels().len(), 256 * 43);
    let mut driven = 0f64;
    for _ in 0..120 {
        tank.advance(0.025, true).unwrap();
        driven = driven.max(tank.rms());
    }
    assert!(driven > 1e-6);
    // The release ramp must not kick the surface above its driven level.
    let mut released = 0f64;
    for _ in 0..40 {
        tank.advance(0.1, false).unwrap();
        released = released.max(tank.rms());
    }
    assert!(released < driven, "{released:e} vs {driven:e}");
    assert!(tank.rms() < 0.05 * driven);
    assert!((tank.time() - 7.0).abs() < 0.01);
}

#[test]
fn tank_rejects_unknown_label() {
    assert!(TankModel::new(64, 11, "bored", 0.5).is_err());
}
