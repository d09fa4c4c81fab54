//! File popularity: Zipf law and the cache-hit mass, including the
//! continuous relaxation used for fractional cache sizes.

use crate::error::{Error, Result};

/// Tolerance on the normalization of a popularity vector.
const SUM_TOLERANCE: f64 = 1e-12;

/// A descending file-popularity distribution with precomputed prefix sums.
#[derive(Debug, Clone)]
pub struct Popularity {
    p: Vec<f64>,
    /// prefix[k] = p_1 + ... + p_k, with prefix[0] = 0.
    prefix: Vec<f64>,
}

impl Popularity {
    /// Zipf distribution p_n proportional to n^(-gamma), n = 1..=n_files.
    pub fn zipf(n_files: usize, gamma: f64) -> Result<Self> {
        if n_files == 0 {
            return Err(Error::Domain("zipf requires at least one file".into()));
        }
        if !(gamma >= 0.0) {
            return Err(Error::Domain(format!(
                "zipf exponent must be >= 0, got {gamma}"
            )));
        }
        let mut p: Vec<f64> = (1..=n_files).map(|n| (n as f64).powf(-gamma)).collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        Self::from_probabilities(p)
    }

    /// Build from an explicit probability vector. Probabilities must be
    /// non-increasing and sum to 1 within 1e-12.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Validation("popularity vector is empty".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "popularity must sum to 1 within {SUM_TOLERANCE}, got {sum}"
            )));
        }
        for (i, w) in p.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(Error::Validation(format!(
                    "popularity must be non-increasing, entries {} and {} are {} < {}",
                    i + 1,
                    i + 2,
                    w[0],
                    w[1]
                )));
            }
        }
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Validation(
                "popularity entries must lie in [0, 1]".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(p.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &v in &p {
            acc += v;
            prefix.push(acc);
        }
        Ok(Self { p, prefix })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Total popularity of the `cache_size` most popular files, linearly
    /// interpolated at fractional sizes. Continuous, piecewise linear,
    /// non-decreasing and concave on [0, N].
    pub fn hit_mass(&self, cache_size: f64) -> Result<f64> {
        let n = self.p.len() as f64;
        if !(0.0..=n).contains(&cache_size) {
            return Err(Error::Domain(format!(
                "cache size {cache_size} outside [0, {n}]"
            )));
        }
        let whole = cache_size.floor();
        let idx = whole as usize;
        let mut mass = self.prefix[idx];
        if cache_size > whole {
            mass += (cache_size - whole) * self.p[idx];
        }
        Ok(mass)
    }

    /// Popularity of the marginally cached file: p at 1-based index
    /// ceil(cache_size), valid only on the open interval (0, N).
    /// At integer sizes the ceiling is the size itself.
    pub fn marginal(&self, cache_size: f64) -> Result<f64> {
        let n = self.p.len() as f64;
        if !(cache_size > 0.0 && cache_size < n) {
            return Err(Error::Domain(format!(
                "marginal popularity is defined on (0, {n}), got {cache_size}"
            )));
        }
        let idx = cache_size.ceil() as usize;
        Ok(self.p[idx - 1])
    }
}
