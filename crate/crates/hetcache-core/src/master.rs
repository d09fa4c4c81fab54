//! Master solve: pick the pico-time budget minimizing the total active time
//! and assemble the per-pico cache/association solutions at that budget.
//!
//! The total time is convex piecewise linear in the budget with slope
//! 1 - sum of per-pico thresholds, so the optimum sits where the threshold
//! sum crosses 1. Bisection brackets the crossing; the exact kink inside the
//! bracket is then taken from the curves' cumulative loads and confirmed by
//! value comparison.

use crate::error::{Error, Result};
use crate::popularity::Popularity;
use crate::sampling::{tau_zero, PointCloud};
use crate::subproblem::{build_load_curve, solve_with_curve, LoadCurve, SubproblemSolution};

/// Relative budget tolerance of the bisection.
const BISECTION_TOLERANCE: f64 = 1e-12;
/// Relative slack allowed on the per-pico feasibility check.
const FEASIBILITY_TOLERANCE: f64 = 1e-9;
/// Largest relative spread of per-pico curve summaries accepted by the
/// homogeneous closed form.
pub const HOMOGENEITY_TOLERANCE: f64 = 0.05;

/// Which side of the budget range the optimum landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Muting the macro is never worth it; no pico time is scheduled.
    NoPico,
    /// The optimum balances macro and pico time.
    Interior,
    /// Every profitable item of every pico is served.
    AllPico,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NoPico => "no_pico",
            Regime::Interior => "interior",
            Regime::AllPico => "all_pico",
        }
    }
}

/// Joint solution: the optimal budget, total time and per-pico solutions.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub f_star: f64,
    pub tau_star: f64,
    pub regime: Regime,
    /// Macro time spent on macro-only locations.
    pub tau_zero: f64,
    pub per_pico: Vec<SubproblemSolution>,
}

impl MasterSolution {
    /// Per-pico macro times, in pico order.
    pub fn tau_components(&self) -> Vec<f64> {
        self.per_pico.iter().map(|s| s.tau).collect()
    }
}

/// Prebuilt solve state: one load curve per pico at fixed bandwidth and
/// cache sizes, shared by every budget query.
pub struct MasterContext<'a> {
    pub cloud: &'a PointCloud,
    pub bandwidth_hz: f64,
    pub cache_sizes: Vec<f64>,
    pub curves: Vec<LoadCurve>,
    pub tau_zero: f64,
    /// Largest full load over the picos; budgets beyond it are never useful.
    pub f_bar: f64,
}

impl<'a> MasterContext<'a> {
    pub fn new(
        cloud: &'a PointCloud,
        popularity: &Popularity,
        bandwidth_hz: f64,
        cache_sizes: Vec<f64>,
    ) -> Result<Self> {
        if cache_sizes.len() != cloud.pico_count() {
            return Err(Error::Validation(format!(
                "{} cache sizes for {} picos",
                cache_sizes.len(),
                cloud.pico_count()
            )));
        }
        let mut curves = Vec::with_capacity(cloud.pico_count());
        for (l, &c) in cache_sizes.iter().enumerate() {
            let hit = popularity.hit_mass(c)?;
            curves.push(build_load_curve(cloud, l, bandwidth_hz, hit)?);
        }
        let f_bar = curves.iter().map(|c| c.full_load).fold(0.0, f64::max);
        Ok(Self {
            cloud,
            bandwidth_hz,
            cache_sizes,
            curves,
            tau_zero: tau_zero(cloud, bandwidth_hz),
            f_bar,
        })
    }

    /// Total active time at budget `f`: the budget itself, the macro-only
    /// time and each cell's macro time.
    pub fn total_time(&self, f: f64) -> f64 {
        f + self.tau_zero + self.curves.iter().map(|c| c.macro_time(f)).sum::<f64>()
    }

    /// Sum of per-pico thresholds at budget `f`.
    pub fn threshold_sum(&self, f: f64) -> f64 {
        self.curves.iter().map(|c| c.threshold(f)).sum()
    }

    /// Solve for the optimal budget.
    pub fn solve(&self) -> Result<MasterSolution> {
        if self.curves.is_empty() {
            return Ok(MasterSolution {
                f_star: 0.0,
                tau_star: self.tau_zero,
                regime: Regime::NoPico,
                tau_zero: self.tau_zero,
                per_pico: Vec::new(),
            });
        }
        let max_sum: f64 = self.curves.iter().map(|c| c.max_rho()).sum();
        if max_sum <= 1.0 {
            return self.assemble(0.0, Regime::NoPico);
        }
        let left_at_end: f64 = self
            .curves
            .iter()
            .map(|c| c.threshold_left_limit(self.f_bar))
            .sum();
        if left_at_end > 1.0 {
            return self.assemble(self.f_bar, Regime::AllPico);
        }

        // bracket the crossing of the threshold sum through 1
        let tol = BISECTION_TOLERANCE * self.f_bar;
        let (mut lo, mut hi) = (0.0, self.f_bar);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.threshold_sum(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        // the optimum is a kink: a cumulative load of some pico inside the
        // bracket; pick the candidate with the smallest total time, ties to
        // the smallest budget
        let mut candidates = vec![hi];
        for curve in &self.curves {
            for &c in curve.cumulative_loads_in(lo - tol, hi + tol) {
                candidates.push(c);
            }
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut f_star = candidates[0];
        let mut best = self.total_time(f_star);
        for &f in &candidates[1..] {
            let tau = self.total_time(f);
            if tau < best {
                best = tau;
                f_star = f;
            }
        }
        self.assemble(f_star, Regime::Interior)
    }

    /// Closed form for near-identical pico cells: the optimal threshold is
    /// 1/L for every pico, so each cell's budget is its own load at that
    /// threshold and the shared budget is the largest of them. Falls back
    /// with an error when the cells differ too much.
    pub fn solve_homogeneous(&self) -> Result<MasterSolution> {
        let l_count = self.curves.len();
        if l_count == 0 {
            return Err(Error::Validation(
                "the homogeneous closed form needs at least one pico".into(),
            ));
        }
        self.check_homogeneity()?;

        let inv_l = 1.0 / l_count as f64;
        let max_sum: f64 = self.curves.iter().map(|c| c.max_rho()).sum();
        if max_sum <= 1.0 {
            return self.assemble(0.0, Regime::NoPico);
        }
        let min_sum: f64 = self.curves.iter().map(|c| c.min_rho()).sum();
        if min_sum > 1.0 {
            return self.assemble(self.f_bar, Regime::AllPico);
        }

        let loads: Vec<f64> = self.curves.iter().map(|c| c.load_at(inv_l)).collect();
        let f_star = loads.iter().cloned().fold(0.0, f64::max);
        let per_pico: Vec<SubproblemSolution> = self
            .curves
            .iter()
            .zip(&loads)
            .zip(&self.cache_sizes)
            .map(|((curve, &f_l), &c)| solve_with_curve(self.cloud, curve, c, f_l))
            .collect();
        let tau_star =
            f_star + self.tau_zero + per_pico.iter().map(|s| s.tau).sum::<f64>();
        Ok(MasterSolution {
            f_star,
            tau_star,
            regime: Regime::Interior,
            tau_zero: self.tau_zero,
            per_pico,
        })
    }

    fn check_homogeneity(&self) -> Result<()> {
        let spread = |label: &str, values: Vec<f64>| -> Result<()> {
            let max = values.iter().cloned().fold(f64::MIN, f64::max);
            let min = values.iter().cloned().fold(f64::MAX, f64::min);
            let rel = if max > 0.0 { (max - min) / max } else { 0.0 };
            if rel > HOMOGENEITY_TOLERANCE {
                return Err(Error::Heterogeneous(format!(
                    "{label} differ by {rel:.3} (> {HOMOGENEITY_TOLERANCE}); use the general solver"
                )));
            }
            Ok(())
        };
        if self
            .cache_sizes
            .windows(2)
            .any(|w| w[0] != w[1])
        {
            return Err(Error::Heterogeneous(
                "cache sizes differ across picos; use the general solver".into(),
            ));
        }
        spread(
            "full loads",
            self.curves.iter().map(|c| c.full_load).collect(),
        )?;
        spread(
            "peak thresholds",
            self.curves.iter().map(|c| c.max_rho()).collect(),
        )?;
        spread(
            "backhaul rates",
            self.cloud.backhaul_rates.clone(),
        )?;
        Ok(())
    }

    /// Build the full solution at a given budget and verify feasibility.
    pub fn assemble(&self, f_star: f64, regime: Regime) -> Result<MasterSolution> {
        let per_pico: Vec<SubproblemSolution> = self
            .curves
            .iter()
            .zip(&self.cache_sizes)
            .map(|(curve, &c)| solve_with_curve(self.cloud, curve, c, f_star))
            .collect();
        for s in &per_pico {
            if s.pico_time_used > f_star + FEASIBILITY_TOLERANCE * f_star.max(1.0) {
                return Err(Error::Internal(format!(
                    "pico {} uses {} s of pico time against a budget of {} s",
                    s.pico, s.pico_time_used, f_star
                )));
            }
        }
        let tau_star = f_star + self.tau_zero + per_pico.iter().map(|s| s.tau).sum::<f64>();
        Ok(MasterSolution {
            f_star,
            tau_star,
            regime,
            tau_zero: self.tau_zero,
            per_pico,
        })
    }
}

impl LoadCurve {
    /// Cumulative loads inside the open-ended interval (lo, hi].
    fn cumulative_loads_in(&self, lo: f64, hi: f64) -> &[f64] {
        let cum = self.cumulative_loads();
        let start = cum.partition_point(|&c| c <= lo);
        let end = cum.partition_point(|&c| c <= hi);
        &cum[start..end]
    }
}
