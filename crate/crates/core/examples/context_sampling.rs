//! Fixed-size sampling of a proposal and its context window.
//!
//! cargo run --example context_sampling

use ndarray::Array2;
use tcn::anchors::Proposal;
use tcn::interval::TemporalInterval;
use tcn::sampling::{build_context_pair, context_interval, sample_frame, FeatureSequence};

fn main() -> tcn::error::Result<()> {
    // 40 frames, 2 channels: channel 0 is the frame index, channel 1 is constant
    let fs = FeatureSequence::new("demo", Array2::from_shape_fn((40, 2), |(t, c)| if c == 0 { t as f64 } else { 1.0 }))?;
    let interval = TemporalInterval::new(30, 38)?;
    let outer = context_interval(&interval, 2.0)?;
    println!("proposal {interval}, context window {outer}");

    let frames: Vec<i64> = (0..8).map(|j| sample_frame(&outer, j, 8)).collect();
    println!("context frames sampled: {frames:?}");

    let p = Proposal { interval, position: 0, scale: 1, score: None };
    let pair = build_context_pair(&fs, &p, 8, 2.0)?;
    println!("inner sample (frame index column): {:?}", pair.inner.values.column(0).to_vec());
    println!("outer sample (frame index column): {:?}", pair.outer.values.column(0).to_vec());
    println!("outer constant column (0 = zero padding past the end): {:?}", pair.outer.values.column(1).to_vec());
    Ok(())
}
