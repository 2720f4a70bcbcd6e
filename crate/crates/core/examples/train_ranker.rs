//! Trains the context ranker on a small synthetic corpus, saves and reloads
//! the checkpoint, and prints the best proposals of one held-out video.
//!
//! cargo run --release --example train_ranker

use tcn::anchors::AnchorConfig;
use tcn::data_io::synth::{generate_synthetic, SynthConfig};
use tcn::detect::propose;
use tcn::nn::Parameterized;
use tcn::pipeline::{ranker_dataset, Corpus};
use tcn::ranker::{dataset_accuracy, train_ranker, RankLabel, Ranker, RankerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = Corpus::try_from(generate_synthetic(&SynthConfig { num_videos: 80, seed: 1, ..Default::default() })?)?;
    let anchors = AnchorConfig::default();
    let cfg = RankerConfig { conv_channels: 16, hidden: 64, ..RankerConfig::with_feature_dim(train.feature_dim()) };

    let ds = ranker_dataset(&train, &anchors, &cfg)?;
    println!(
        "{} labeled pairs: {} positive, {} negative",
        ds.len(),
        ds.count(RankLabel::Positive),
        ds.count(RankLabel::Negative)
    );
    let (model, report) = train_ranker(&ds, &cfg, 200, 42)?;
    for (i, (l, a)) in report.losses.iter().zip(&report.accuracies).enumerate().step_by(40) {
        println!("iter {i:>3}: loss {l:.4}, batch accuracy {a:.3}");
    }
    println!("training-set accuracy {:.3}", dataset_accuracy(&model, &ds)?);

    let dir = tempfile_dir();
    let path = dir.join("ranker.tcnw");
    model.save(&path)?;
    let reloaded = Ranker::load(&path)?;
    let same = model.params().iter().zip(reloaded.params()).all(|(a, b)| a.value == b.value);
    println!("checkpoint {} bytes, weights identical after reload: {same}", std::fs::metadata(&path)?.len());

    let test = generate_synthetic(&SynthConfig { num_videos: 1, seed: 99, id_prefix: "test".into(), ..Default::default() })?;
    let gt = test.manifest.ground_truth()?;
    println!("\nheld-out video, ground truth: {:?}", gt[0].intervals.iter().map(|l| l.interval.to_string()).collect::<Vec<_>>());
    for p in propose(&test.features[0], &anchors, &reloaded, 5, 0.45)? {
        println!("  {} score {:.3} best IoU {:.2}", p.interval, p.score_or_zero(), gt[0].max_iou(&p.interval));
    }
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("tcn-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
