//! Fixed-binning histograms used as summary statistics.
//!
//! Each data dimension is histogrammed separately with one underflow and one
//! overflow bin around the regular bins. Histograms are normalized so that
//! every dimension sums to one, and the per-dimension vectors are
//! concatenated.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    /// One bin per integer in `lo..=hi`.
    Integer { lo: i64, hi: i64 },
    /// `bins` equal-width bins on `[lo, hi]`.
    Uniform { lo: f64, hi: f64, bins: usize },
}

impl Binning {
    pub fn num_bins(&self) -> usize {
        match *self {
            Binning::Integer { lo, hi } => (hi - lo + 1).max(0) as usize,
            Binning::Uniform { bins, .. } => bins,
        }
    }

    /// Slot in `[under, bins.., over]`.
    fn slot(&self, v: f64) -> usize {
        let n = self.num_bins();
        if v.is_nan() {
            return n + 1;
        }
        match *self {
            Binning::Integer { lo, hi } => {
                let r = v.round();
                if r < lo as f64 {
                    0
                } else if r > hi as f64 {
                    n + 1
                } else {
                    (r as i64 - lo) as usize + 1
                }
            }
            Binning::Uniform { lo, hi, bins } => {
                if v < lo {
                    0
                } else if v > hi {
                    n + 1
                } else {
                    let k = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
                    k.min(bins - 1) + 1
                }
            }
        }
    }

    /// `(low, high)` edges of the regular bins.
    pub fn edges(&self) -> Vec<(f64, f64)> {
        match *self {
            Binning::Integer { lo, hi } => (lo..=hi).map(|k| (k as f64 - 0.5, k as f64 + 0.5)).collect(),
            Binning::Uniform { lo, hi, bins } => {
                let w = (hi - lo) / bins as f64;
                (0..bins).map(|k| (lo + k as f64 * w, lo + (k + 1) as f64 * w)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub dims: Vec<Binning>,
}

impl HistogramSpec {
    pub fn new(dims: Vec<Binning>) -> Self {
        Self { dims }
    }

    /// `bins` uniform bins per dimension spanning the observed min/max.
    pub fn from_range<X: AsRef<[f64]>>(observed: &[X], bins: usize) -> Self {
        let dim = observed.first().map_or(0, |x| x.as_ref().len());
        let dims = (0..dim)
            .map(|j| {
                let (lo, hi) = observed.iter().map(|x| x.as_ref()[j]).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), v| (lo.min(v), hi.max(v)),
                );
                let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
                Binning::Uniform { lo, hi, bins }
            })
            .collect();
        Self { dims }
    }

    /// Total length of a histogram vector, including overflow slots.
    pub fn len(&self) -> usize {
        self.dims.iter().map(|b| b.num_bins() + 2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Normalized histogram of `data`; an empty data set gives all zeros.
    pub fn histogram<X: AsRef<[f64]>>(&self, data: &[X]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        if data.is_empty() {
            return out;
        }
        let inc = 1.0 / data.len() as f64;
        for x in data {
            let x = x.as_ref();
            let mut off = 0;
            for (j, b) in self.dims.iter().enumerate() {
                out[off + b.slot(x[j])] += inc;
                off += b.num_bins() + 2;
            }
        }
        out
    }
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_bins_with_overflow() {
        let spec = HistogramSpec::new(vec![Binning::Integer { lo: 0, hi: 3 }]);
        let h = spec.histogram(&[[0.0], [1.0], [1.0], [3.0], [7.0], [-1.0]]);
        assert_eq!(spec.len(), 6);
        let n = 6.0;
        assert_eq!(h, vec![1.0 / n, 1.0 / n, 2.0 / n, 0.0, 1.0 / n, 1.0 / n]);
    }

    #[test]
    fn uniform_bins_include_upper_edge() {
        let b = Binning::Uniform { lo: -1.0, hi: 1.0, bins: 4 };
        assert_eq!(b.slot(-1.0), 1);
        assert_eq!(b.slot(1.0), 4);
        assert_eq!(b.slot(0.0), 3);
        assert_eq!(b.slot(1.5), 5);
        assert_eq!(b.slot(f64::NAN), 5);
    }

    #[test]
    fn per_dimension_normalization() {
        let data = vec![vec![0.1, 5.0], vec![0.9, 6.0], vec![0.5, 5.5]];
        let spec = HistogramSpec::from_range(&data, 5);
        let h = spec.histogram(&data);
        assert_eq!(h.len(), 14);
        assert!((h[..7].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h[7..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let data = vec![vec![1.0], vec![2.0], vec![2.0]];
        let spec = HistogramSpec::new(vec![Binning::Integer { lo: 0, hi: 60 }]);
        let a = spec.histogram(&data);
        assert_eq!(l2_distance(&a, &spec.histogram(&data)), 0.0);
    }
}
