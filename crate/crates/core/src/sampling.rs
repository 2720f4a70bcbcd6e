//! Fixed-size feature sampling for proposals.
//!
//! A proposal is represented by `n` feature rows picked at the centers of `n`
//! equal bins over its interval, whatever its length. Rows whose frame falls
//! outside the video are zero. The ranker additionally looks at a context
//! interval sharing the proposal's center; with a scale factor of 2 that is
//! exactly the next pyramid level.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::anchors::Proposal;
use crate::error::{Error, Result};
use crate::interval::TemporalInterval;

/// Per-frame features of one video, `num_frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    values: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        let video_id = video_id.into();
        let (t, d) = values.dim();
        if t == 0 || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "feature sequence {video_id} has shape {t}x{d}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "feature sequence {video_id} has a non-finite value at flat index {pos}"
            )));
        }
        Ok(Self { video_id, values })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Feature row at `frame`, or `None` outside the video.
    pub fn frame(&self, frame: i64) -> Option<ArrayView1<'_, f64>> {
        if frame < 0 || frame >= self.num_frames() as i64 {
            None
        } else {
            Some(self.values.row(frame as usize))
        }
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// `n x dim` samples taken from one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFeatures {
    pub values: Array2<f64>,
}

impl SampledFeatures {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextPair {
    pub inner: SampledFeatures,
    pub outer: SampledFeatures,
}

/// Frame index of sample `j` out of `n`: `floor(begin + (j + 0.5) * len / n)`.
#[inline]
pub fn sample_frame(interval: &TemporalInterval, j: usize, n: usize) -> i64 {
    let num = (2 * j as i64 + 1) * interval.length();
    interval.begin() + num.div_euclid(2 * n as i64)
}

pub fn sample_uniform(
    fs: &FeatureSequence,
    interval: &TemporalInterval,
    n: usize,
) -> Result<SampledFeatures> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let mut values = Array2::zeros((n, fs.dim()));
    for (j, mut row) in values.rows_mut().into_iter().enumerate() {
        if let Some(src) = fs.frame(sample_frame(interval, j, n)) {
            row.assign(&src);
        }
    }
    Ok(SampledFeatures { values })
}

/// Same-center interval with length `round(scale_factor * len)`.
pub fn context_interval(interval: &TemporalInterval, scale_factor: f64) -> Result<TemporalInterval> {
    if !(scale_factor >= 1.0 && scale_factor.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "context scale factor must be >= 1, got {scale_factor}"
        )));
    }
    let len = (scale_factor * interval.length() as f64).round() as i64;
    let begin = (interval.center() - len as f64 / 2.0).round() as i64;
    TemporalInterval::new(begin, begin + len)
}

pub fn build_context_pair(
    fs: &FeatureSequence,
    proposal: &Proposal,
    n: usize,
    scale_factor: f64,
) -> Result<ContextPair> {
    let inner = sample_uniform(fs, &proposal.interval, n)?;
    let outer = sample_uniform(fs, &context_interval(&proposal.interval, scale_factor)?, n)?;
    Ok(ContextPair { inner, outer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(b: i64, e: i64) -> TemporalInterval {
        TemporalInterval::new(b, e).unwrap()
    }

    /// Row `t` holds `t + 1` in every column, so a sampled row identifies its frame.
    fn ramp(t: usize, d: usize) -> FeatureSequence {
        let values = Array2::from_shape_fn((t, d), |(r, _)| (r + 1) as f64);
        FeatureSequence::new("ramp", values).unwrap()
    }

    fn frames_of(s: &SampledFeatures) -> Vec<i64> {
        s.values.column(0).iter().map(|&v| v as i64 - 1).collect()
    }

    #[test]
    fn uniform_sampling_examples() {
        let fs = ramp(20, 3);
        assert_eq!(frames_of(&sample_uniform(&fs, &iv(0, 8), 4).unwrap()), vec![1, 3, 5, 7]);
        let padded = sample_uniform(&fs, &iv(-8, 0), 2).unwrap();
        assert!(padded.values.iter().all(|&v| v == 0.0));
        assert_eq!(frames_of(&sample_uniform(&fs, &iv(0, 20), 1).unwrap()), vec![10]);
        let odd = ramp(7, 1);
        assert_eq!(frames_of(&sample_uniform(&odd, &iv(0, 7), 1).unwrap()), vec![3]);
    }

    #[test]
    fn context_examples() {
        assert_eq!(context_interval(&iv(10, 20), 2.0).unwrap(), iv(5, 25));
        assert_eq!(context_interval(&iv(10, 20), 1.0).unwrap(), iv(10, 20));
        assert_eq!(context_interval(&iv(0, 16), 1.5).unwrap(), iv(-4, 20));
        assert!(context_interval(&iv(0, 16), 0.5).is_err());
    }

    #[test]
    fn context_pair_examples() {
        let fs = ramp(8, 4);
        let p = Proposal { interval: iv(0, 8), position: 0, scale: 1, score: None };
        let same = build_context_pair(&fs, &p, 8, 1.0).unwrap();
        assert_eq!(same.inner, same.outer);
        assert_eq!(same.inner.values.dim(), (8, 4));

        // outer = [-4, 12): frames -4..=11 sampled every 2 frames starting at -3
        let pair = build_context_pair(&fs, &p, 8, 2.0).unwrap();
        assert_eq!(frames_of(&pair.outer), vec![-1, -1, 1, 3, 5, 7, -1, -1]);
    }

    #[test]
    fn rejects_malformed_sequences() {
        assert!(FeatureSequence::new("x", Array2::zeros((0, 3))).is_err());
        let mut v = Array2::zeros((2, 2));
        v[[1, 1]] = f64::NAN;
        assert!(FeatureSequence::new("x", v).is_err());
    }

    proptest! {
        #[test]
        fn sampling_shape_order_padding(b in -200i64..200, len in 1i64..400, n in 1usize..32, t in 1usize..120) {
            let fs = ramp(t, 2);
            let a = iv(b, b + len);
            let s = sample_uniform(&fs, &a, n).unwrap();
            prop_assert_eq!(s.values.dim(), (n, 2));
            let idx: Vec<i64> = (0..n).map(|j| sample_frame(&a, j, n)).collect();
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            for (j, &f) in idx.iter().enumerate() {
                prop_assert!(f >= a.begin() && f < a.end());
                let zero = s.values.row(j).iter().all(|&v| v == 0.0);
                prop_assert_eq!(zero, f < 0 || f >= t as i64);
            }
        }

        #[test]
        fn context_preserves_center(b in -200i64..200, len in 1i64..400, f in 1.0f64..4.0) {
            let a = iv(b, b + len);
            let c = context_interval(&a, f).unwrap();
            prop_assert!((c.center() - a.center()).abs() <= 0.5 + 1e-12);
        }
    }
}
