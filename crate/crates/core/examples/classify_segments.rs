//! Bilinear pooling with signed square root and l2 normalization, then a
//! trained softmax classifier over class-coded segments.
//!
//! cargo run --release --example classify_segments

use ndarray::array;
use tcn::classifier::{argmax, bilinear_pool, signed_sqrt_l2, train_classifier, ClassifierConfig, ClassifierDataset};
use tcn::data_io::synth::class_coded_segments;

fn main() -> tcn::error::Result<()> {
    let z = array![[1.0, 2.0], [0.0, -1.0]];
    let b = bilinear_pool(z.view())?;
    println!("Z^T Z = {:?}", b.as_matrix().rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    println!("normalized: {:?}", signed_sqrt_l2(&b.values).to_vec());

    let (classes, dim) = (4, 8);
    let train = ClassifierDataset::from_segments(&class_coded_segments(150, classes, dim, 2.0, 1)?)?;
    let test = ClassifierDataset::from_segments(&class_coded_segments(50, classes, dim, 2.0, 2)?)?;
    let cfg = ClassifierConfig::new(dim, classes);
    let (model, report) = train_classifier(&train, &cfg, 3000, 3)?;
    println!("\nloss {:.4} -> {:.4} over {} iterations", report.losses[0], report.losses.last().unwrap(), report.losses.len());

    let mut confusion = vec![vec![0usize; classes + 1]; classes + 1];
    for (d, &l) in test.descriptors.iter().zip(&test.labels) {
        confusion[l as usize][argmax(model.predict_descriptor(d)?.iter().copied())] += 1;
    }
    println!("held-out confusion (rows: true class, 0 = background):");
    for (c, row) in confusion.iter().enumerate() {
        println!("  {c}: {row:?}");
    }
    Ok(())
}
