//! CMMD: scaled squared maximum mean discrepancy between two embedding sets
//! under a Gaussian RBF kernel `k(x, y) = exp(-|x - y|^2 / (2 sigma^2))`.
//!
//! Kernel means are accumulated tile by tile (`block x block` pairs at a
//! time) with compensated summation, so the `n x n` kernel matrices are
//! never materialized. Tiles may be evaluated in parallel but are always
//! reduced in a fixed order, which keeps results bit-reproducible.
//!
//! Callers are expected to pass unit-normalized rows (see
//! [`EmbeddingMatrix::normalize_rows`]); the defaults below assume it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::hash::ContentHasher;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CmmdError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error(
        "{estimator} estimator needs at least {needed} samples per set, got {n_ref} and {n_gen}"
    )]
    InsufficientSamples {
        estimator: Estimator,
        needed: usize,
        n_ref: usize,
        n_gen: usize,
    },

    #[error("invalid CMMD config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Includes the diagonal kernel terms; never negative in exact arithmetic.
    #[default]
    BiasedVStatistic,
    /// Excludes the diagonal of the within-set kernel matrices.
    UnbiasedUStatistic,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::BiasedVStatistic => "biased_v_statistic",
            Estimator::UnbiasedUStatistic => "unbiased_u_statistic",
        }
    }

    fn min_samples(&self) -> usize {
        match self {
            Estimator::BiasedVStatistic => 1,
            Estimator::UnbiasedUStatistic => 2,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = CmmdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "biased" | "biased_v_statistic" => Ok(Estimator::BiasedVStatistic),
            "unbiased" | "unbiased_u_statistic" => Ok(Estimator::UnbiasedUStatistic),
            other => Err(CmmdError::InvalidConfig(format!(
                "unknown estimator {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmmdConfig {
    pub sigma: f64,
    pub scale: f64,
    pub estimator: Estimator,
    pub block: usize,
}

impl Default for CmmdConfig {
    /// `sigma = 10`, `scale = 1000`, biased estimator: the settings of the
    /// reference CMMD implementation.
    fn default() -> Self {
        Self {
            sigma: 10.0,
            scale: 1000.0,
            estimator: Estimator::BiasedVStatistic,
            block: 1024,
        }
    }
}

impl CmmdConfig {
    pub fn validate(&self) -> Result<(), CmmdError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(CmmdError::InvalidConfig(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CmmdError::InvalidConfig(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        if self.block == 0 {
            return Err(CmmdError::InvalidConfig("block must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub mmd_sq: f64,
    /// `config.scale * mmd_sq`.
    pub cmmd: f64,
    pub n_ref: usize,
    pub n_gen: usize,
    pub config: CmmdConfig,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn squared_distance(x: &[f32], y: &[f32]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum()
}

/// Gaussian RBF kernel between two vectors.
pub fn rbf_kernel(x: &[f32], y: &[f32], sigma: f64) -> Result<f64, CmmdError> {
    if x.len() != y.len() {
        return Err(CmmdError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(CmmdError::InvalidConfig(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    Ok(kernel_value(x, y, gamma(sigma)))
}

fn gamma(sigma: f64) -> f64 {
    1.0 / (2.0 * sigma * sigma)
}

#[inline]
fn kernel_value(x: &[f32], y: &[f32], gamma: f64) -> f64 {
    (-squared_distance(x, y) * gamma).exp()
}

/// Sum of `k(a_i, b_j)` over all pairs, optionally skipping `i == j`.
fn tiled_kernel_sum(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    gamma: f64,
    block: usize,
    skip_diagonal: bool,
) -> f64 {
    let tiles: Vec<(usize, usize)> = (0..a.len())
        .step_by(block)
        .flat_map(|i| (0..b.len()).step_by(block).map(move |j| (i, j)))
        .collect();
    let partials: Vec<CompensatedSum> = tiles
        .par_iter()
        .map(|&(i0, j0)| {
            let mut acc = CompensatedSum::default();
            for i in i0..(i0 + block).min(a.len()) {
                let x = a.row(i);
                for j in j0..(j0 + block).min(b.len()) {
                    if skip_diagonal && i == j {
                        continue;
                    }
                    acc.add(kernel_value(x, b.row(j), gamma));
                }
            }
            acc
        })
        .collect();
    let mut total = CompensatedSum::default();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}

/// Kernel means within and across the two sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMeans {
    pub mean_rr: f64,
    pub mean_gg: f64,
    pub mean_rg: f64,
}

fn check_inputs(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    config: &CmmdConfig,
) -> Result<(), CmmdError> {
    config.validate()?;
    if reference.dims() != generated.dims() {
        return Err(CmmdError::DimensionMismatch {
            left: reference.dims(),
            right: generated.dims(),
        });
    }
    let needed = config.estimator.min_samples();
    if reference.len() < needed || generated.len() < needed {
        return Err(CmmdError::InsufficientSamples {
            estimator: config.estimator,
            needed,
            n_ref: reference.len(),
            n_gen: generated.len(),
        });
    }
    Ok(())
}

fn fingerprint(m: &EmbeddingMatrix) -> [u8; 32] {
    let mut h = ContentHasher::new();
    h.update(&(m.len() as u64).to_le_bytes())
        .update(&(m.dims() as u64).to_le_bytes());
    for v in m.data() {
        h.update(&v.to_le_bytes());
    }
    h.finish_bytes()
}

/// Orders the pair by content digest so both argument orders sum identically.
fn canonical<'a>(
    x: &'a EmbeddingMatrix,
    y: &'a EmbeddingMatrix,
) -> (&'a EmbeddingMatrix, &'a EmbeddingMatrix, bool) {
    if fingerprint(x) <= fingerprint(y) {
        (x, y, false)
    } else {
        (y, x, true)
    }
}

fn within_mean(m: &EmbeddingMatrix, gamma: f64, config: &CmmdConfig) -> f64 {
    let n = m.len() as f64;
    match config.estimator {
        Estimator::BiasedVStatistic => tiled_kernel_sum(m, m, gamma, config.block, false) / (n * n),
        Estimator::UnbiasedUStatistic => {
            tiled_kernel_sum(m, m, gamma, config.block, true) / (n * (n - 1.0))
        }
    }
}

/// Canonical-order means `(first, second, cross)` plus whether the inputs were swapped.
fn canonical_means(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    config: &CmmdConfig,
) -> (f64, f64, f64, bool) {
    let (a, b, swapped) = canonical(reference, generated);
    let gamma = gamma(config.sigma);
    let mean_aa = within_mean(a, gamma, config);
    let mean_bb = within_mean(b, gamma, config);
    let n = (a.len() * b.len()) as f64;
    let mean_ab = tiled_kernel_sum(a, b, gamma, config.block, false) / n;
    (mean_aa, mean_bb, mean_ab, swapped)
}

pub fn kernel_block_means(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    config: &CmmdConfig,
) -> Result<KernelMeans, CmmdError> {
    check_inputs(reference, generated, config)?;
    let (aa, bb, ab, swapped) = canonical_means(reference, generated, config);
    let (mean_rr, mean_gg) = if swapped { (bb, aa) } else { (aa, bb) };
    Ok(KernelMeans {
        mean_rr,
        mean_gg,
        mean_rg: ab,
    })
}

/// Squared MMD between `reference` and `generated`.
pub fn mmd_sq(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    config: &CmmdConfig,
) -> Result<MmdReport, CmmdError> {
    check_inputs(reference, generated, config)?;
    let (aa, bb, ab, _) = canonical_means(reference, generated, config);
    let mmd_sq = aa + bb - 2.0 * ab;
    Ok(MmdReport {
        mmd_sq,
        cmmd: config.scale * mmd_sq,
        n_ref: reference.len(),
        n_gen: generated.len(),
        config: *config,
    })
}

/// Same computation as [`mmd_sq`]; named for the scaled value it headlines.
pub fn cmmd(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    config: &CmmdConfig,
) -> Result<MmdReport, CmmdError> {
    mmd_sq(reference, generated, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn kernel_of_identical_vectors_is_one() {
        assert_eq!(rbf_kernel(&[0.3, -0.2], &[0.3, -0.2], 10.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_of_orthonormal_vectors() {
        // |x - y|^2 = 2, so k = exp(-2 / 200)
        let k = rbf_kernel(&[1.0, 0.0], &[0.0, 1.0], 10.0).unwrap();
        assert_relative_eq!(k, (-0.01f64).exp(), max_relative = 1e-15);
        assert!((k - 0.990050).abs() < 1e-6);
    }

    #[test]
    fn kernel_with_huge_bandwidth_tends_to_one() {
        let k = rbf_kernel(&[1.0, 2.0, 3.0], &[-4.0, 0.5, 9.0], 1e9).unwrap();
        assert!((1.0 - k).abs() < 1e-9);
    }

    #[test]
    fn kernel_errors() {
        assert!(matches!(
            rbf_kernel(&[1.0], &[1.0, 2.0], 1.0),
            Err(CmmdError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn singleton_orthonormal_closed_form() {
        let r = mmd_sq(
            &m(&[&[1.0, 0.0]]),
            &m(&[&[0.0, 1.0]]),
            &CmmdConfig::default(),
        )
        .unwrap();
        let expected = 2.0 - 2.0 * (-0.01f64).exp();
        assert_relative_eq!(r.mmd_sq, expected, max_relative = 1e-14);
        // 2 - 2 exp(-0.01) = 0.019900332501...
        assert!((r.mmd_sq - 0.019_900_332_5).abs() < 1e-10);
        assert!((r.cmmd - 19.900_332_5).abs() < 1e-4);
        assert_eq!(r.cmmd, 1000.0 * r.mmd_sq);
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = m(&[&[1.0, 0.0], &[0.6, 0.8], &[0.0, -1.0]]);
        let r = mmd_sq(&a, &a.clone(), &CmmdConfig::default()).unwrap();
        assert!(r.mmd_sq.abs() < 1e-9);
        assert!(r.cmmd.abs() < 1e-6);
    }

    #[test]
    fn single_row_within_mean_is_one() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[0.0, 1.0], &[0.6, 0.8]]);
        let means = kernel_block_means(&a, &b, &CmmdConfig::default()).unwrap();
        assert_eq!(means.mean_rr, 1.0);
        let swapped = kernel_block_means(&b, &a, &CmmdConfig::default()).unwrap();
        assert_eq!(swapped.mean_rg, means.mean_rg);
        assert_eq!(swapped.mean_gg, means.mean_rr);
    }

    #[test]
    fn unbiased_needs_two_samples() {
        let cfg = CmmdConfig {
            estimator: Estimator::UnbiasedUStatistic,
            ..CmmdConfig::default()
        };
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[0.0, 1.0], &[0.6, 0.8]]);
        assert!(matches!(
            mmd_sq(&a, &b, &cfg),
            Err(CmmdError::InsufficientSamples { needed: 2, .. })
        ));
    }

    #[test]
    fn unbiased_can_go_negative() {
        // Two identical sets of distinct points: the U-statistic drops the
        // within-set diagonal but keeps the cross diagonal.
        let cfg = CmmdConfig {
            estimator: Estimator::UnbiasedUStatistic,
            ..CmmdConfig::default()
        };
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = mmd_sq(&a, &a.clone(), &cfg).unwrap();
        let k = (-0.01f64).exp();
        // mean_rr = mean_gg = k; mean_rg = (2 + 2k) / 4
        let expected = 2.0 * k - 2.0 * (2.0 + 2.0 * k) / 4.0;
        assert_relative_eq!(r.mmd_sq, expected, max_relative = 1e-12);
        assert!(r.mmd_sq < 0.0);
    }

    #[test]
    fn dimension_mismatch_between_sets() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            mmd_sq(&a, &b, &CmmdConfig::default()),
            Err(CmmdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let a = m(&[&[1.0, 0.0]]);
        for bad in [
            CmmdConfig {
                sigma: 0.0,
                ..CmmdConfig::default()
            },
            CmmdConfig {
                scale: -1.0,
                ..CmmdConfig::default()
            },
            CmmdConfig {
                block: 0,
                ..CmmdConfig::default()
            },
        ] {
            assert!(matches!(
                mmd_sq(&a, &a, &bad),
                Err(CmmdError::InvalidConfig(_))
            ));
        }
        assert_eq!(
            "biased".parse::<Estimator>().unwrap(),
            Estimator::BiasedVStatistic
        );
        assert!("median".parse::<Estimator>().is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::default();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        assert_relative_eq!(acc.value(), 1.0 + 1e-12, max_relative = 1e-15);
    }
}
