//! Brute-force reference implementations and random fixtures shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcn::anchors::Proposal;
use tcn::interval::{ClassId, Detection, GroundTruthAnnotation, LabeledInterval, TemporalInterval};
use tcn::metrics::ProposalMap;
use tcn::ranker::ranking_order;

pub fn iv(b: i64, e: i64) -> TemporalInterval {
    TemporalInterval::new(b, e).unwrap()
}

/// IoU from explicit frame sets.
pub fn iou_by_frames(a: &TemporalInterval, b: &TemporalInterval) -> f64 {
    let inter = (a.begin()..a.end()).filter(|f| (b.begin()..b.end()).contains(f)).count();
    let union = (a.length() + b.length()) as usize - inter;
    inter as f64 / union as f64
}

/// NMS by repeated selection: take the best remaining, delete everything it
/// suppresses, repeat.
pub fn nms_oracle(proposals: &[Proposal], thr: f64) -> Vec<Proposal> {
    let mut remaining: Vec<Proposal> = proposals.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let best_idx = (0..remaining.len())
            .min_by(|&a, &b| ranking_order(&remaining[a], &remaining[b]).then(a.cmp(&b)))
            .unwrap();
        let best = remaining.remove(best_idx);
        remaining.retain(|p| iou_by_frames(&p.interval, &best.interval) <= thr);
        kept.push(best);
    }
    kept
}

pub fn recall_oracle(props: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize, thr: f64) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for g in gt {
        for li in &g.intervals {
            total += 1;
            let mut matched = false;
            if let Some(ps) = props.get(&g.video_id) {
                for (rank, p) in ps.iter().enumerate() {
                    if rank < k && iou_by_frames(p, &li.interval) >= thr {
                        matched = true;
                    }
                }
            }
            hit += usize::from(matched);
        }
    }
    hit as f64 / total as f64
}

pub fn average_recall_oracle(props: &ProposalMap, gt: &[GroundTruthAnnotation], k: usize, grid: &[f64]) -> f64 {
    grid.iter().map(|&t| recall_oracle(props, gt, k, t)).sum::<f64>() / grid.len() as f64
}

/// Exhaustive matching: for each detection in descending score order (input
/// order on ties), scan every GT of its class and video, pick the unmatched
/// one with the largest IoU, earliest begin on ties.
pub fn map_oracle(dets: &[Detection], gt: &[GroundTruthAnnotation], tiou: f64) -> (BTreeMap<ClassId, f64>, f64) {
    let mut classes: Vec<ClassId> = gt.iter().flat_map(|g| g.intervals.iter().map(|l| l.class_id)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut per_class = BTreeMap::new();
    for &c in &classes {
        let gts: Vec<(String, TemporalInterval)> = gt
            .iter()
            .flat_map(|g| g.intervals.iter().filter(|l| l.class_id == c).map(|l| (g.video_id.clone(), l.interval)))
            .collect();
        let mut ds: Vec<(usize, &Detection)> = dets.iter().filter(|d| d.class_id == c).enumerate().collect();
        ds.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
        let mut matched = vec![false; gts.len()];
        let mut tp = Vec::new();
        for (_, d) in &ds {
            let mut cands: Vec<(f64, i64, usize)> = gts
                .iter()
                .enumerate()
                .filter(|(j, (v, _))| !matched[*j] && *v == d.video_id)
                .map(|(j, (_, g))| (iou_by_frames(&d.interval, g), g.begin(), j))
                .collect();
            cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            match cands.first() {
                Some(&(o, _, j)) if o >= tiou => {
                    matched[j] = true;
                    tp.push(true);
                }
                _ => tp.push(false),
            }
        }
        // precision at every rank, then for each TP the best precision at or after it
        let precision: Vec<f64> = (0..tp.len())
            .map(|i| tp[..=i].iter().filter(|&&t| t).count() as f64 / (i + 1) as f64)
            .collect();
        let mut area = 0.0;
        for i in 0..tp.len() {
            if tp[i] {
                area += precision[i..].iter().cloned().fold(f64::MIN, f64::max);
            }
        }
        per_class.insert(c, area / gts.len() as f64);
    }
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    (per_class, map)
}

/// Random videos with up to `max_intervals` GT intervals in total, plus
/// proposals and detections around them.
pub struct Fixture {
    pub gt: Vec<GroundTruthAnnotation>,
    pub proposals: ProposalMap,
    pub ranked: Vec<Proposal>,
    pub detections: Vec<Detection>,
}

pub fn random_fixture(seed: u64, max_intervals: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos = rng.random_range(1..=4);
    let num_classes = rng.random_range(1..=3);
    let mut budget = max_intervals;
    let mut gt = Vec::new();
    let mut proposals = ProposalMap::new();
    let mut detections = Vec::new();
    let mut ranked = Vec::new();
    let random_interval = |rng: &mut ChaCha8Rng| {
        let b = rng.random_range(0..80);
        iv(b, b + rng.random_range(1..25))
    };
    for v in 0..videos {
        let vid = format!("v{v}");
        let n_gt = rng.random_range(1..=budget.min(4).max(1));
        budget = budget.saturating_sub(n_gt).max(1);
        let intervals: Vec<LabeledInterval> = (0..n_gt)
            .map(|_| LabeledInterval { interval: random_interval(&mut rng), class_id: rng.random_range(1..=num_classes) })
            .collect();
        let mut props = Vec::new();
        for _ in 0..rng.random_range(0..6) {
            let iv = if rng.random_bool(0.5) {
                let g = intervals[rng.random_range(0..intervals.len())].interval;
                let b = g.begin() + rng.random_range(-3..=3);
                iv(b, (g.end() + rng.random_range(-3..=3)).max(b + 1))
            } else {
                random_interval(&mut rng)
            };
            props.push(iv);
            // coarse scores make ties common
            let score = f64::from(rng.random_range(0..5u8)) / 4.0;
            detections.push(Detection { video_id: vid.clone(), interval: iv, class_id: rng.random_range(1..=num_classes), score });
            ranked.push(Proposal { interval: iv, position: ranked.len() as u32, scale: rng.random_range(1..=3), score: Some(score) });
        }
        proposals.insert(vid.clone(), props);
        gt.push(GroundTruthAnnotation::new(vid, 200, intervals).unwrap());
    }
    ranked.sort_by(ranking_order);
    Fixture { gt, proposals, ranked, detections }
}
