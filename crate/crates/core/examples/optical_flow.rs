//! Dense flow between two frames of a translating texture.
//!
//! `cargo run --release --example optical_flow`

use egofuse::flow::{farneback_flow, FlowParams};
use egofuse::frame::{gaussian_blur, Frame};

fn main() -> anyhow::Result<()> {
    let base = gaussian_blur(&Frame::from_fn(96, 80, |x, y| ((x * 7919 + y * 104_729) % 251) as f64), 2.0);
    let shift = 2.0;
    let next = Frame::from_fn(96, 80, |x, y| base.bilinear(x as f64 - shift, y as f64));
    let flow = farneback_flow(&base, &next, &FlowParams::default())?;

    // average over the interior, away from the replicated border
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
    for y in 16..64 {
        for x in 16..80 {
            let (u, v) = flow.at(x, y);
            su += u;
            sv += v;
            n += 1.0;
        }
    }
    println!("true motion: ({shift:.2}, 0.00) px/frame");
    println!("mean flow:   ({:.2}, {:.2}) px/frame", su / n, sv / n);
    Ok(())
}
