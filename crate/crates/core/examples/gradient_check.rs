//! Finite-difference check of the full ranker network on a random batch.
//!
//! cargo run --example gradient_check

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcn::nn::gradcheck::{max_relative_error, numeric_gradient};
use tcn::nn::{Parameterized, SeqBatch};
use tcn::ranker::{Ranker, RankerConfig};

fn main() -> tcn::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for share_conv in [false, true] {
        let cfg = RankerConfig { conv_channels: 3, hidden: 5, share_conv, ..RankerConfig::with_feature_dim(2) };
        let mut model = Ranker::new(cfg.clone(), &mut rng)?;
        let batch = 3;
        let mut sample = || SeqBatch::new(Array2::from_shape_simple_fn((batch * cfg.samples, 2), || rng.random_range(-1.0..1.0)), cfg.samples);
        let (inner, outer) = (sample()?, sample()?);
        let targets = vec![1, 0, 1];
        model.accumulate_gradients(&inner, &outer, &targets)?;

        println!("share_conv = {share_conv}");
        for i in 0..model.params().len() {
            let base = model.clone();
            let numeric = numeric_gradient(&base.params()[i].value, 1e-5, |v| {
                let mut m = base.clone();
                m.params_mut()[i].value.assign(v);
                m.loss(&inner, &outer, &targets).expect("shapes fixed")
            });
            let err = max_relative_error(&model.params()[i].grad, &numeric);
            println!("  tensor {i} {:?}: max relative error {err:.2e}", numeric.dim());
        }
    }
    Ok(())
}
