//! Synthetic four-class corpus with known motion and audio content.
//!
//! | class | video                          | audio           |
//! |-------|--------------------------------|-----------------|
//! | 0     | texture translating rightwards | 440 Hz tone     |
//! | 1     | texture translating leftwards  | 880 Hz tone     |
//! | 2     | radial zoom into the texture   | white noise     |
//! | 3     | static texture                 | silence         |
//!
//! Each segment draws its own texture, speed and tone phase from the seed.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::write_wav;
use crate::data::{load_manifest, DatasetManifest};
use crate::error::{Error, Result};
use crate::frame::{gaussian_blur, write_pgm, Frame};

pub const CLASS_NAMES: [&str; 4] = ["right", "left", "zoom", "static"];
pub const SEGMENTS_PER_CLASS: usize = 12;
pub const FRAMES: usize = 45;
pub const WIDTH: usize = 160;
pub const HEIGHT: usize = 120;
pub const FRAME_RATE: f64 = 30.0;
pub const AUDIO_RATE: u32 = 16_000;
pub const AUDIO_SECONDS: f64 = 1.5;
pub const MANIFEST_FILE: &str = "manifest.tsv";

const MAX_SPEED: f64 = 2.5;
const MARGIN: usize = (MAX_SPEED * FRAMES as f64) as usize + 4;

/// Smooth random texture spanning the full 0..255 range.
fn texture(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Frame {
    let noise = Frame::from_fn(width, height, |_, _| rng.random_range(0.0..255.0));
    let smooth = gaussian_blur(&noise, 2.5);
    let (lo, hi) = smooth.data.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-9);
    Frame::from_fn(width, height, |x, y| 20.0 + 215.0 * (smooth.at(x, y) - lo) / span)
}

fn video(class: usize, rng: &mut ChaCha8Rng) -> Vec<Frame> {
    let tex = texture(WIDTH + 2 * MARGIN, HEIGHT + 2 * MARGIN, rng);
    let speed = rng.random_range(1.5..MAX_SPEED);
    let rate: f64 = rng.random_range(0.008..0.012);
    let (ox, oy) = (MARGIN as f64, MARGIN as f64);
    let (cx, cy) = (WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0);
    (0..FRAMES)
        .map(|t| {
            let t = t as f64;
            Frame::from_fn(WIDTH, HEIGHT, |x, y| {
                let (x, y) = (x as f64, y as f64);
                let (sx, sy) = match class {
                    // content at x came from x − s·t, so it moves towards +x
                    0 => (ox + x - speed * t, oy + y),
                    1 => (ox + x + speed * t, oy + y),
                    2 => {
                        let z = (1.0 + rate).powf(t);
                        (ox + cx + (x - cx) / z, oy + cy + (y - cy) / z)
                    }
                    _ => (ox + x, oy + y),
                };
                tex.bilinear(sx, sy).round()
            })
        })
        .collect()
}

fn audio(class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (AUDIO_RATE as f64 * AUDIO_SECONDS) as usize;
    let amp = rng.random_range(0.3..0.6);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let tone = |f: f64, i: usize| amp * (std::f64::consts::TAU * f * i as f64 / AUDIO_RATE as f64 + phase).sin();
    (0..n)
        .map(|i| match class {
            0 => tone(440.0, i),
            1 => tone(880.0, i),
            2 => amp * rng.random_range(-1.0..1.0),
            _ => 0.0,
        })
        .collect()
}

/// Writes frames, audio and `manifest.tsv` under `out_dir`.
pub fn synth_dataset(seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut text = format!("#classes\t{}\n", CLASS_NAMES.join(","));
    for class in 0..CLASS_NAMES.len() {
        for k in 0..SEGMENTS_PER_CLASS {
            let id = format!("{}{:02}", CLASS_NAMES[class], k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((class * SEGMENTS_PER_CLASS + k) as u64);
            let dir = out_dir.join(&id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (t, f) in video(class, &mut rng).iter().enumerate() {
                write_pgm(&dir.join(format!("frame_{t:04}.pgm")), f)?;
            }
            let wav = format!("{id}.wav");
            write_wav(&out_dir.join(&wav), &audio(class, &mut rng), AUDIO_RATE)?;
            text.push_str(&format!("{id}\t{class}\t{id}\t{FRAME_RATE}\t{wav}\n"));
        }
    }
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    load_manifest(&path)
}
