//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use tcn::anchors::{generate_anchors, pyramid_coverage_recall, AnchorConfig};
use tcn::classifier::{
    argmax, bilinear_pool, dataset_accuracy as classifier_accuracy, make_classifier_batch, signed_sqrt_l2, train_classifier, Classifier,
    ClassifierConfig, ClassifierDataset,
};
use tcn::data_io::features::{decode_features, encode_features, quantize};
use tcn::data_io::synth::{class_coded_segments, generate_synthetic, separable_ranker_set, SynthConfig};
use tcn::detect::{nms, DetectConfig, DetectionModels, ScoreCombination};
use tcn::error::Error;
use tcn::interval::{Detection, GroundTruthAnnotation, LabeledInterval};
use tcn::metrics::{average_recall, default_iou_grid, mean_average_precision, recall_at_k};
use tcn::nn::gradcheck::{max_relative_error, numeric_gradient};
use tcn::nn::{softmax_xent_batch, AvgPool, Checkpoint, Linear, Relu, SeqBatch, TemporalConv};
use tcn::pipeline::{classifier_dataset, detect_corpus, propose_corpus, ranker_dataset, Corpus};
use tcn::ranker::{dataset_accuracy as ranker_accuracy, make_batch, train_ranker, RankLabel, Ranker, RankerConfig};
use tcn::sampling::FeatureSequence;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

const GRAD_TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn check(name: &str, analytic: &Array2<f64>, numeric: &Array2<f64>, worst: &mut f64) -> Result<(), String> {
    let e = max_relative_error(analytic, numeric);
    *worst = worst.max(e);
    ensure!(e < GRAD_TOL, "{name}: relative error {e:.2e}");
    Ok(())
}

fn gradient_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    let shapes = 12;
    for seed in 0..shapes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, len) = (rng.random_range(1..=3), rng.random_range(5..=14));
        let (c_in, c_out) = (rng.random_range(1..=4), rng.random_range(1..=4));

        // temporal conv with a random linear readout
        let x = SeqBatch::new(uniform(&mut rng, (b * len, c_in)), len).unwrap();
        let mut conv = TemporalConv::new(c_in, c_out, &mut rng);
        let probe = conv.forward(&x).unwrap();
        let r = uniform(&mut rng, probe.data.dim());
        conv.forward_train(&x).unwrap();
        let dx = conv.backward(&SeqBatch::new(r.clone(), probe.len).unwrap()).unwrap();
        let conv_loss = |c: &TemporalConv, input: &Array2<f64>| (&c.forward(&SeqBatch::new(input.clone(), len).unwrap()).unwrap().data * &r).sum();
        let nw = numeric_gradient(&conv.weight.value, EPS, |w| {
            let mut c = conv.clone();
            c.weight.value.assign(w);
            conv_loss(&c, &x.data)
        });
        check("conv weight", &conv.weight.grad, &nw, &mut worst)?;
        let nb = numeric_gradient(&conv.bias.value, EPS, |v| {
            let mut c = conv.clone();
            c.bias.value.assign(v);
            conv_loss(&c, &x.data)
        });
        check("conv bias", &conv.bias.grad, &nb, &mut worst)?;
        check("conv input", &dx.data, &numeric_gradient(&x.data, EPS, |i| conv_loss(&conv, i)), &mut worst)?;

        // average pooling
        let mut pool = AvgPool::new();
        let px = SeqBatch::new(uniform(&mut rng, (b * len, c_in)), len).unwrap();
        let pout = pool.forward_train(&px).unwrap();
        let pr = uniform(&mut rng, pout.data.dim());
        let pdx = pool.backward(&SeqBatch::new(pr.clone(), pout.len).unwrap()).unwrap();
        let npool = numeric_gradient(&px.data, EPS, |i| {
            (&AvgPool::new().forward(&SeqBatch::new(i.clone(), len).unwrap()).unwrap().data * &pr).sum()
        });
        check("avg pool input", &pdx.data, &npool, &mut worst)?;

        // fully connected followed by ReLU
        let (n_in, n_out) = (rng.random_range(1..=8), rng.random_range(1..=6));
        let mut fc = Linear::new(n_in, n_out, &mut rng);
        let mut relu = Relu::new();
        let fx = uniform(&mut rng, (b + 1, n_in));
        let fr = uniform(&mut rng, (b + 1, n_out));
        let h = fc.forward_train(&fx).unwrap();
        relu.forward_train(&h);
        let fdx = fc.backward(&relu.backward(&fr).unwrap()).unwrap();
        let fc_loss = |l: &Linear, i: &Array2<f64>| (&Relu::new().forward(&l.forward(i).unwrap()) * &fr).sum();
        let nw = numeric_gradient(&fc.weight.value, EPS, |w| {
            let mut l = fc.clone();
            l.weight.value.assign(w);
            fc_loss(&l, &fx)
        });
        check("fc weight", &fc.weight.grad, &nw, &mut worst)?;
        let nb = numeric_gradient(&fc.bias.value, EPS, |v| {
            let mut l = fc.clone();
            l.bias.value.assign(v);
            fc_loss(&l, &fx)
        });
        check("fc bias", &fc.bias.grad, &nb, &mut worst)?;
        check("fc input", &fdx, &numeric_gradient(&fx, EPS, |i| fc_loss(&fc, i)), &mut worst)?;

        // softmax cross-entropy
        let classes = rng.random_range(2..=6);
        let logits = uniform(&mut rng, (b + 2, classes)) * 3.0;
        let labels: Vec<usize> = (0..b + 2).map(|_| rng.random_range(0..classes)).collect();
        let (_, _, dl) = softmax_xent_batch(logits.view(), &labels).unwrap();
        let nl = numeric_gradient(&logits, EPS, |l| softmax_xent_batch(l.view(), &labels).unwrap().0);
        check("softmax xent", &dl, &nl, &mut worst)?;
    }
    Ok(format!("{shapes} random shapes per layer, worst relative error {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let fixtures = 100;
    let grid = default_iou_grid();
    for seed in 0..fixtures {
        let f = random_fixture(seed, 20);
        for thr in [0.3, 0.45, 0.7] {
            ensure!(nms(&f.ranked, thr) == nms_oracle(&f.ranked, thr), "nms differs on fixture {seed}");
        }
        for k in [1, 3, 10] {
            ensure!(
                recall_at_k(&f.proposals, &f.gt, k, 0.5).unwrap() == recall_oracle(&f.proposals, &f.gt, k, 0.5),
                "recall differs on fixture {seed}"
            );
            ensure!(
                average_recall(&f.proposals, &f.gt, k, &grid).unwrap() == average_recall_oracle(&f.proposals, &f.gt, k, &grid),
                "average recall differs on fixture {seed}"
            );
        }
        for tiou in [0.5, 0.75, 0.95] {
            let got = mean_average_precision(&f.detections, &f.gt, tiou).unwrap();
            let (per_class, map) = map_oracle(&f.detections, &f.gt, tiou);
            ensure!(got.per_class_ap == per_class && got.map_value == map, "mAP differs on fixture {seed} at {tiou}");
        }
    }
    let gt = vec![GroundTruthAnnotation::new("a", 100, vec![LabeledInterval { interval: iv(10, 20), class_id: 1 }]).unwrap()];
    let dets = vec![
        Detection { video_id: "a".into(), interval: iv(10, 20), class_id: 1, score: 0.9 },
        Detection { video_id: "a".into(), interval: iv(60, 80), class_id: 1, score: 0.8 },
    ];
    let ap = mean_average_precision(&dets, &gt, 0.5).unwrap().map_value;
    ensure!(ap == 1.0, "hand fixture AP {ap}");
    Ok(format!("{fixtures} fixtures exact, hand fixture AP = {ap}"))
}

fn bilinear_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (l, d) = (rng.random_range(1..20), rng.random_range(1..8));
        let z = uniform(&mut rng, (l, d)) * 4.0;
        let b = bilinear_pool(z.view()).unwrap();
        let m = b.as_matrix();
        for i in 0..d {
            ensure!(m[[i, i]] >= 0.0, "negative diagonal");
            for j in 0..d {
                ensure!(m[[i, j]] == m[[j, i]], "asymmetric bilinear matrix");
            }
        }
        let v = Array1::from_shape_simple_fn(rng.random_range(1..50), || rng.random_range(-100.0..100.0));
        let y = signed_sqrt_l2(&v);
        ensure!((y.dot(&y).sqrt() - 1.0).abs() < 1e-12, "norm {}", y.dot(&y).sqrt());
    }
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let model = Classifier::new(ClassifierConfig::new(6, 4), &mut rng).unwrap();
        let values = uniform(&mut rng, (80, 6));
        let p = generate_anchors(&AnchorConfig::default(), 80).unwrap()[rng.random_range(0..40)];
        let base = model.classify(&FeatureSequence::new("v", values.clone()).unwrap(), &p).unwrap();
        for c in [1e-3, 0.25, 3.0, 1e3] {
            let scaled = model.classify(&FeatureSequence::new("v", &values * c).unwrap(), &p).unwrap();
            worst = worst.max((&scaled - &base).mapv(f64::abs).fold(0.0, |a, &b| a.max(b)));
        }
    }
    ensure!(worst < 1e-9, "scale changes classifier output by {worst:.2e}");
    Ok(format!("200 random inputs; worst scale drift {worst:.1e}"))
}

fn anchor_law() -> Outcome {
    let mut checked = 0;
    for l in [2u32, 4, 8, 16, 32] {
        for k in 1..=5 {
            for t in (1..=400).step_by(7) {
                let cfg = AnchorConfig::new(l, k).unwrap();
                let m = (t - 1) / (l as usize / 2) + 1;
                let n = generate_anchors(&cfg, t).unwrap().len();
                ensure!(n == m * k as usize, "L={l} K={k} T={t}: {n} anchors, expected {}", m * k as usize);
                checked += 1;
            }
        }
    }
    let ds = generate_synthetic(&SynthConfig { num_videos: 100, seed: 5, ..Default::default() }).unwrap();
    let gts = ds.manifest.ground_truth().unwrap();
    let mut curve = Vec::new();
    for thr in [0.3, 0.5, 0.7, 0.9] {
        let mut prev = -1.0;
        for k in 1..=5 {
            let cfg = AnchorConfig::new(16, k).unwrap();
            let mut covered = 0.0;
            let mut total = 0.0;
            for g in &gts {
                let anchors = generate_anchors(&cfg, g.num_frames).unwrap();
                covered += pyramid_coverage_recall(&anchors, g, thr) * g.intervals.len() as f64;
                total += g.intervals.len() as f64;
            }
            let r = covered / total;
            ensure!(r >= prev, "coverage fell from {prev} to {r} at K={k}, threshold {thr}");
            prev = r;
            if thr == 0.7 {
                curve.push(format!("{r:.2}"));
            }
        }
    }
    Ok(format!("{checked} (L,K,T) cases; coverage@0.7 for K=1..5: {}", curve.join(" ")))
}

fn context_ablation() -> Outcome {
    let synth = SynthConfig { num_videos: 200, seed: 1, ..Default::default() };
    let train = Corpus::try_from(generate_synthetic(&synth).unwrap()).unwrap();
    let test = Corpus::try_from(
        generate_synthetic(&SynthConfig { num_videos: 100, seed: 2, id_prefix: "test".into(), ..synth.clone() }).unwrap(),
    )
    .unwrap();
    let anchors = AnchorConfig::default();
    let d = train.feature_dim();
    let ccfg = ClassifierConfig::new(d, synth.num_classes);
    let (classifier, _) = train_classifier(&classifier_dataset(&train, &anchors, &ccfg).unwrap(), &ccfg, 3000, 7).unwrap();
    let mut results = Vec::new();
    for scale_factor in [1.0, 2.0] {
        let rcfg = RankerConfig { scale_factor, conv_channels: 16, hidden: 64, ..RankerConfig::with_feature_dim(d) };
        let rds = ranker_dataset(&train, &anchors, &rcfg).unwrap();
        let (ranker, _) = train_ranker(&rds, &rcfg, 300, 11).unwrap();
        let props = propose_corpus(&test, &anchors, &ranker, 5, 0.45).unwrap();
        let ar5 = 100.0 * average_recall(&props, &test.ground_truth, 5, &default_iou_grid()).unwrap();
        let models = DetectionModels { anchors, ranker, classifier: classifier.clone() };
        let dcfg = DetectConfig { score_combination: ScoreCombination::Product, ..Default::default() };
        let dets = detect_corpus(&test, &models, &dcfg).unwrap();
        let map = 100.0 * mean_average_precision(&dets, &test.ground_truth, 0.5).unwrap().map_value;
        results.push((ar5, map));
    }
    let [(ar1, map1), (ar2, map2)] = results[..] else { unreachable!() };
    let detail = format!("AR@5 {ar1:.2} -> {ar2:.2}, mAP@0.5 {map1:.2} -> {map2:.2} (no context -> context)");
    ensure!(ar2 - ar1 >= 10.0 && map2 - map1 >= 10.0, "{detail}");
    Ok(detail)
}

fn learnability() -> Outcome {
    let rds = separable_ranker_set(2048, 16, 8, 4);
    let rcfg = RankerConfig { conv_channels: 16, hidden: 64, ..RankerConfig::with_feature_dim(8) };
    let (ranker, _) = train_ranker(&rds, &rcfg, 200, 1).unwrap();
    let racc = ranker_accuracy(&ranker, &rds).unwrap();
    ensure!(racc >= 0.95, "ranker training accuracy {racc:.3}");

    let segments = class_coded_segments(200, 4, 8, 2.0, 6).unwrap();
    let cds = ClassifierDataset::from_segments(&segments).unwrap();
    let ccfg = ClassifierConfig::new(8, 4);
    let (classifier, _) = train_classifier(&cds, &ccfg, 3000, 2).unwrap();
    // accuracy on the class-coded segments; background (label 0) is reported separately
    let (mut hit, mut n, mut bg_hit, mut bg_n) = (0, 0, 0, 0);
    for (desc, &label) in cds.descriptors.iter().zip(&cds.labels) {
        let correct = argmax(classifier.predict_descriptor(desc).unwrap().iter().copied()) == label as usize;
        if label == 0 {
            bg_n += 1;
            bg_hit += usize::from(correct);
        } else {
            n += 1;
            hit += usize::from(correct);
        }
    }
    let cacc = hit as f64 / n as f64;
    let overall = classifier_accuracy(&classifier, &cds).unwrap();
    ensure!(cacc >= 0.90, "classifier accuracy on class-coded segments {cacc:.3}");
    Ok(format!(
        "ranker {:.1}% after 200 iterations; classifier {:.1}% on class-coded segments ({:.1}% on noise-only, {:.1}% overall)",
        100.0 * racc,
        100.0 * cacc,
        100.0 * bg_hit as f64 / bg_n as f64,
        100.0 * overall
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\nranker_iterations = 30\nclassifier_iterations = 200\n\n[synth]\nnum_videos = 24\n\n[ranker]\nconv_channels = 8\nhidden = 32\n",
    )
    .unwrap();
    let run = |root: &std::path::Path| -> Result<(Vec<u8>, Vec<u8>, Vec<u8>, String), String> {
        let s = |p: &str| root.join(p).to_string_lossy().into_owned();
        let c = cfg.to_string_lossy().into_owned();
        let data = ["--manifest".to_string(), s("data/manifest.json"), "--features".into(), s("data/features")];
        let steps: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--out-dir".into(), s("data")],
            [vec!["train-ranker".into()], data.to_vec(), vec!["--out-dir".into(), s("models")]].concat(),
            [vec!["train-classifier".into()], data.to_vec(), vec!["--out-dir".into(), s("models")]].concat(),
            [vec!["rank".into()], data.to_vec(), vec!["--ranker".into(), s("models/ranker.tcnw"), "--out-dir".into(), s("out")]].concat(),
            [
                vec!["detect".into()],
                data.to_vec(),
                vec![
                    "--ranker".into(),
                    s("models/ranker.tcnw"),
                    "--classifier".into(),
                    s("models/classifier.tcnw"),
                    "--out-dir".into(),
                    s("out"),
                ],
            ]
            .concat(),
            vec![
                "eval".into(),
                "--manifest".into(),
                s("data/manifest.json"),
                "--proposals".into(),
                s("out/proposals.jsonl"),
                "--detections".into(),
                s("out/detections.jsonl"),
            ],
        ];
        let mut printed = String::new();
        for step in steps {
            let o = Command::new(env!("CARGO_BIN_EXE_tcn")).arg("--config").arg(&c).args(&step).output().unwrap();
            if !o.status.success() {
                return Err(format!("{} failed: {}", step[0], String::from_utf8_lossy(&o.stderr)));
            }
            printed = String::from_utf8_lossy(&o.stdout).into_owned();
        }
        let read = |p: &str| std::fs::read(root.join(p)).unwrap();
        Ok((read("models/ranker.tcnw"), read("models/classifier.tcnw"), read("out/detections.jsonl"), printed))
    };
    let a = run(&dir.path().join("a"))?;
    let b = run(&dir.path().join("b"))?;
    ensure!(a.0 == b.0, "ranker checkpoints differ");
    ensure!(a.1 == b.1, "classifier checkpoints differ");
    ensure!(a.2 == b.2, "detections differ");
    ensure!(a.3 == b.3, "printed metrics differ");
    let map = a.3.lines().find(|l| l.starts_with("mAP@0.5 ")).unwrap_or_default().split_whitespace().last().unwrap_or("?").to_string();
    Ok(format!("two CLI runs identical ({} + {} checkpoint bytes, mAP@0.5 {map})", a.0.len(), a.1.len()))
}

fn batch_contracts() -> Outcome {
    let corpus = Corpus::try_from(generate_synthetic(&SynthConfig { num_videos: 60, seed: 9, ..Default::default() }).unwrap()).unwrap();
    let anchors = AnchorConfig::default();
    let rcfg = RankerConfig::with_feature_dim(corpus.feature_dim());
    let rds = ranker_dataset(&corpus, &anchors, &rcfg).unwrap();
    for seed in 0..50 {
        let batch = make_batch(&rds.labels, &rcfg, seed).unwrap();
        let pos = batch.indices.iter().filter(|&&i| rds.labels[i] == RankLabel::Positive).count();
        let neg = batch.indices.iter().filter(|&&i| rds.labels[i] == RankLabel::Negative).count();
        ensure!(pos == 512 && neg == 512, "ranker batch {seed}: {pos}/{neg}");
        ensure!(batch.count_target(1) == 512, "ranker targets disagree with labels");
    }
    let ccfg = ClassifierConfig::new(corpus.feature_dim(), corpus.manifest.num_classes());
    let cds = classifier_dataset(&corpus, &anchors, &ccfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..50 {
        let (idx, targets) = make_classifier_batch(&cds.labels, &ccfg, &mut rng).unwrap();
        let bg = idx.iter().filter(|&&i| cds.labels[i] == 0).count();
        ensure!(idx.len() == 1024 && bg == 64, "classifier batch {seed}: {bg} background of {}", idx.len());
        ensure!(targets.iter().filter(|&&t| t == 0).count() == 64, "classifier targets disagree with labels");
    }
    Ok(format!(
        "50 ranker batches 512/512 from {} pairs, 50 classifier batches 64/960 from {} segments",
        rds.len(),
        cds.len()
    ))
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (t, d) in [(7, 3), (1, 1), (300, 16)] {
        let mut v = uniform(&mut rng, (t, d)) * 50.0;
        quantize(&mut v);
        let fs = FeatureSequence::new("x", v).unwrap();
        let bytes = encode_features(&fs).unwrap();
        let back = decode_features(&bytes, "x").unwrap();
        ensure!(back == fs && encode_features(&back).unwrap() == bytes, "feature round trip {t}x{d}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        ensure!(matches!(decode_features(&bad, "x"), Err(Error::BadMagic { .. })), "feature magic");
        bad = bytes.clone();
        bad[4] = 9;
        ensure!(matches!(decode_features(&bad, "x"), Err(Error::UnsupportedVersion(9))), "feature version");
        ensure!(matches!(decode_features(&bytes[..bytes.len() - 1], "x"), Err(Error::TruncatedFile(_))), "feature truncation");
    }
    let ranker = Ranker::with_seed(RankerConfig { conv_channels: 8, hidden: 16, ..RankerConfig::with_feature_dim(5) }, 3).unwrap();
    let classifier = Classifier::with_seed(ClassifierConfig::new(5, 3), 3).unwrap();
    for ck in [ranker.to_checkpoint().unwrap(), classifier.to_checkpoint().unwrap()] {
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        ensure!(back == ck && back.to_bytes().unwrap() == bytes, "checkpoint round trip");
        let mut bad = bytes.clone();
        bad[1] = b'?';
        ensure!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })), "checkpoint magic");
        bad = bytes.clone();
        bad[4] = 2;
        ensure!(matches!(Checkpoint::from_bytes(&bad), Err(Error::UnsupportedVersion(2))), "checkpoint version");
        ensure!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::TruncatedFile(_))), "checkpoint truncation");
    }
    ensure!(Ranker::from_checkpoint(&ranker.to_checkpoint().unwrap()).unwrap() == ranker, "ranker reload");
    ensure!(Classifier::from_checkpoint(&classifier.to_checkpoint().unwrap()).unwrap() == classifier, "classifier reload");
    Ok("features and both checkpoint kinds bit-exact; magic, version and truncation detected".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("oracle equivalence", oracle_equivalence),
        ("bilinear invariants", bilinear_invariants),
        ("anchor law", anchor_law),
        ("context vs no context", context_ablation),
        ("learnability", learnability),
        ("determinism", determinism),
        ("batch contracts", batch_contracts),
        ("format round trips", format_round_trips),
    ];
    // `cargo test -- <filter>` passes extra args; run everything regardless
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
