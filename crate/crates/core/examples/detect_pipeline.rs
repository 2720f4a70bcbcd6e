//! End to end: synthetic corpus, both models, detection on held-out videos,
//! evaluation, and a JSON-lines detection file.
//!
//! cargo run --release --example detect_pipeline

use tcn::anchors::AnchorConfig;
use tcn::classifier::{train_classifier, ClassifierConfig};
use tcn::data_io::synth::{generate_synthetic, SynthConfig};
use tcn::detect::{write_detections, DetectConfig, DetectionModels, ScoreCombination};
use tcn::metrics::summarize;
use tcn::pipeline::{classifier_dataset, detect_corpus, propose_corpus, ranker_dataset, with_jobs, Corpus};
use tcn::ranker::{train_ranker, RankerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig { num_videos: 120, seed: 10, ..Default::default() };
    let train = Corpus::try_from(generate_synthetic(&synth)?)?;
    let test = Corpus::try_from(generate_synthetic(&SynthConfig { num_videos: 40, seed: 11, id_prefix: "test".into(), ..synth.clone() })?)?;
    let anchors = AnchorConfig::default();
    let d = train.feature_dim();

    let rcfg = RankerConfig { conv_channels: 16, hidden: 64, ..RankerConfig::with_feature_dim(d) };
    let (ranker, _) = train_ranker(&ranker_dataset(&train, &anchors, &rcfg)?, &rcfg, 300, 1)?;
    let ccfg = ClassifierConfig::new(d, synth.num_classes);
    let (classifier, _) = train_classifier(&classifier_dataset(&train, &anchors, &ccfg)?, &ccfg, 3000, 2)?;

    let models = DetectionModels { anchors, ranker, classifier };
    let dcfg = DetectConfig { score_combination: ScoreCombination::Product, ..Default::default() };
    // two workers; output order does not depend on the count
    let (props, dets) = with_jobs(2, || -> tcn::error::Result<_> {
        Ok((propose_corpus(&test, &anchors, &models.ranker, 500, 0.45)?, detect_corpus(&test, &models, &dcfg)?))
    })??;

    print!("{}", summarize(Some(&props), Some(&dets), &test.ground_truth)?.table());
    println!("\nfirst detections:");
    write_detections(std::io::stdout().lock(), &dets[..dets.len().min(4)], |c| test.class_name(c))?;
    Ok(())
}
