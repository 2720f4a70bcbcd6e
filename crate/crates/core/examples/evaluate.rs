//! Recall, average recall and mAP on a small hand-made example, plus the
//! plot-data files `eval` writes.
//!
//! cargo run --example evaluate

use tcn::interval::{Detection, GroundTruthAnnotation, LabeledInterval, TemporalInterval};
use tcn::metrics::{average_recall, default_iou_grid, mean_average_precision, recall_at_k, recall_vs_iou_curve, write_xy, ProposalMap};

fn iv(b: i64, e: i64) -> TemporalInterval {
    TemporalInterval::new(b, e).expect("non-empty")
}

fn main() -> tcn::error::Result<()> {
    let gt = vec![
        GroundTruthAnnotation::new(
            "a",
            200,
            vec![LabeledInterval { interval: iv(10, 50), class_id: 1 }, LabeledInterval { interval: iv(120, 160), class_id: 2 }],
        )?,
        GroundTruthAnnotation::new("b", 100, vec![LabeledInterval { interval: iv(30, 70), class_id: 1 }])?,
    ];
    let mut props = ProposalMap::new();
    props.insert("a".into(), vec![iv(12, 50), iv(60, 90), iv(118, 150)]);
    props.insert("b".into(), vec![iv(0, 20), iv(30, 66)]);

    for k in [1, 2, 3] {
        println!("recall@{k} (tIoU 0.5) = {:.3}", recall_at_k(&props, &gt, k, 0.5)?);
    }
    println!("AR@3 over 0.5:0.05:0.95 = {:.3}", average_recall(&props, &gt, 3, &default_iou_grid())?);

    let det = |vid: &str, b, e, class_id, score| Detection { video_id: vid.into(), interval: iv(b, e), class_id, score };
    let dets = vec![
        det("a", 12, 50, 1, 0.95),
        det("b", 0, 20, 1, 0.9),
        det("b", 30, 66, 1, 0.7),
        det("a", 118, 150, 2, 0.6),
        det("a", 12, 50, 1, 0.5),
    ];
    for tiou in [0.5, 0.75, 0.95] {
        let r = mean_average_precision(&dets, &gt, tiou)?;
        println!("mAP@{tiou} = {:.3}  per class {:?}", r.map_value, r.per_class_ap);
    }

    let path = std::env::temp_dir().join("tcn_recall_vs_iou.txt");
    write_xy(&path, "tiou", "recall", &recall_vs_iou_curve(&props, &gt, 3, &default_iou_grid())?.points())?;
    println!("\n{}:\n{}", path.display(), std::fs::read_to_string(&path).map_err(|e| tcn::error::Error::Io { path: path.clone(), source: e })?);
    Ok(())
}
