//! Multi-scale anchor pyramid for one video and how much ground truth it can
//! cover as levels are added.
//!
//! cargo run --example anchors

use tcn::anchors::{generate_anchors, pyramid_coverage_recall, AnchorConfig};
use tcn::data_io::synth::{generate_synthetic, SynthConfig};

fn main() -> tcn::error::Result<()> {
    let cfg = AnchorConfig::new(16, 3)?;
    let anchors = generate_anchors(&cfg, 64)?;
    println!("L=16, K=3, T=64: {} anchors (stride {})", anchors.len(), cfg.stride());
    for p in anchors.iter().take(6) {
        println!("  position {:>2} scale {} -> {}", p.position, p.scale, p.interval);
    }

    let ds = generate_synthetic(&SynthConfig { num_videos: 100, ..Default::default() })?;
    let gts = ds.manifest.ground_truth()?;
    println!("\ncoverage of {} synthetic activities (best achievable recall)", gts.iter().map(|g| g.intervals.len()).sum::<usize>());
    println!("  K    IoU>=0.5  IoU>=0.7  IoU>=0.9");
    for k in 1..=5 {
        let cfg = AnchorConfig::new(16, k)?;
        let row: Vec<String> = [0.5, 0.7, 0.9]
            .iter()
            .map(|&thr| {
                let (mut hit, mut n) = (0.0, 0.0);
                for g in &gts {
                    let a = generate_anchors(&cfg, g.num_frames).expect("valid config");
                    hit += pyramid_coverage_recall(&a, g, thr) * g.intervals.len() as f64;
                    n += g.intervals.len() as f64;
                }
                format!("{:>8.3}", hit / n)
            })
            .collect();
        println!("  {k}  {}", row.join("  "));
    }
    Ok(())
}
