//! Scalar abstraction for the numeric core.
//!
//! Influence estimation, margins and ranking only need field arithmetic and
//! an ordering, so they are written against [`Scalar`] and work for `f32`,
//! `f64` and exact rationals alike. Rank correlation needs square roots and
//! is written against [`Real`].

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Float, Num, NumAssign};

/// Ordered field element usable by the influence and ranking code.
pub trait Scalar: Num + NumAssign + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// Exact (or nearest) representation of a non-negative count.
    fn from_count(n: usize) -> Self;

    /// Lossy conversion used for reporting and plotting.
    fn to_f64_lossy(self) -> f64;
}

/// Floating-point scalar.
pub trait Real: Scalar + Float {}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Scalar for Rational64 {
    fn from_count(n: usize) -> Self {
        Rational64::from_integer(n as i64)
    }

    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Real for f32 {}
impl Real for f64 {}

const PAIRWISE_LEAF: usize = 8;

/// Pairwise (tree) summation with a shape fixed by the slice length.
///
/// The result depends only on the values and their order, never on how the
/// caller scheduled the work, which keeps reductions bit-reproducible.
pub fn pairwise_sum<F: Scalar>(values: &[F]) -> F {
    if values.len() <= PAIRWISE_LEAF {
        let mut acc = F::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]. `None` for an empty slice.
pub fn mean<F: Scalar>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / F::from_count(values.len()))
    }
}

/// Population standard deviation. A single value has deviation 0.
pub fn population_std<F: Real>(values: &[F]) -> Option<F> {
    let m = mean(values)?;
    let sq: Vec<F> = values.iter().map(|&v| (v - m) * (v - m)).collect();
    Some((pairwise_sum(&sq) / F::from_count(values.len())).sqrt())
}

/// Linear-interpolation quantile (`q` in `[0, 1]`) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}
