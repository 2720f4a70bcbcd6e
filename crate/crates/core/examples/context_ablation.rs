//! Trains two rankers that differ only in the context scale factor (1 = no
//! context, 2 = context) on a synthetic corpus with boundary transients, then
//! compares proposal average recall at top-5 and detection mAP@0.5.
//!
//! cargo run --release --example context_ablation [-- <train_videos> <iterations>]

use std::time::Instant;

use tcn::anchors::AnchorConfig;
use tcn::classifier::{train_classifier, ClassifierConfig};
use tcn::data_io::synth::{generate_synthetic, SynthConfig};
use tcn::detect::{DetectConfig, DetectionModels, ScoreCombination};
use tcn::metrics::{average_recall, default_iou_grid, mean_average_precision};
use tcn::pipeline::{classifier_dataset, detect_corpus, propose_corpus, ranker_dataset, Corpus};
use tcn::ranker::{train_ranker, RankerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let train_videos = args.first().copied().unwrap_or(200);
    let iterations = args.get(1).copied().unwrap_or(300);

    let synth = SynthConfig { num_videos: train_videos, seed: 1, ..Default::default() };
    let train = Corpus::try_from(generate_synthetic(&synth)?)?;
    let test = Corpus::try_from(generate_synthetic(&SynthConfig {
        num_videos: 100,
        seed: 2,
        id_prefix: "test".into(),
        ..synth.clone()
    })?)?;
    let anchors = AnchorConfig::default();
    let d = train.feature_dim();

    let ccfg = ClassifierConfig::new(d, synth.num_classes);
    let cds = classifier_dataset(&train, &anchors, &ccfg)?;
    let (classifier, _) = train_classifier(&cds, &ccfg, 3000, 7)?;

    for scale_factor in [1.0, 2.0] {
        let t0 = Instant::now();
        let rcfg = RankerConfig { scale_factor, conv_channels: 16, hidden: 64, ..RankerConfig::with_feature_dim(d) };
        let rds = ranker_dataset(&train, &anchors, &rcfg)?;
        let (ranker, report) = train_ranker(&rds, &rcfg, iterations, 11)?;
        let proposals = propose_corpus(&test, &anchors, &ranker, 5, 0.45)?;
        let ar5 = average_recall(&proposals, &test.ground_truth, 5, &default_iou_grid())?;
        let models = DetectionModels { anchors, ranker, classifier: classifier.clone() };
        let dcfg = DetectConfig { score_combination: ScoreCombination::Product, ..Default::default() };
        let dets = detect_corpus(&test, &models, &dcfg)?;
        let map = mean_average_precision(&dets, &test.ground_truth, 0.5)?.map_value;
        println!(
            "scale_factor {scale_factor}: train loss {:.4} -> {:.4}, AR@5 {:.2}, mAP@0.5 {:.2}  ({:.1?})",
            report.losses[0],
            report.losses.last().unwrap(),
            100.0 * ar5,
            100.0 * map,
            t0.elapsed()
        );
    }
    Ok(())
}
