//! Per-pico solver: for a given pico-time budget, decide which locations the
//! pico serves so that the macro time spent on the cell is minimal.
//!
//! Every sample point splits into two independent demand streams: a cached
//! stream carrying the cache-hit mass and an uncached one that must first
//! cross the backhaul. Each stream is a continuous-knapsack item whose
//! saving-per-pico-time ratio is the point's benefit ratio, so the optimum
//! is a single threshold on that ratio. The load curve below is the merged,
//! ratio-sorted item list with prefix sums; inverting it answers every query
//! in O(log M).

use crate::error::{Error, Result};
use crate::popularity::Popularity;
use crate::sampling::PointCloud;

/// Which demand stream a breakpoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Cached,
    Uncached,
}

/// One knapsack item of a pico's load curve.
#[derive(Debug, Clone, Copy)]
pub struct Breakpoint {
    /// Macro time saved per unit of pico time spent on this item.
    pub rho: f64,
    /// Pico time needed to serve the item completely, seconds.
    pub pico_time: f64,
    /// Macro time saved by serving the item completely, seconds.
    pub macro_saving: f64,
    pub stream: Stream,
    /// Index of the sample point in the cloud.
    pub point: usize,
}

/// The monotone serving structure of one pico at fixed bandwidth and cache
/// hit mass. Breakpoints are sorted by descending ratio; items with a
/// non-positive ratio are excluded because serving them can never reduce
/// macro time.
#[derive(Debug, Clone)]
pub struct LoadCurve {
    pub pico: usize,
    pub bandwidth_hz: f64,
    /// Cache-hit mass the curve was built for.
    pub hit_mass: f64,
    pub breakpoints: Vec<Breakpoint>,
    cum_time: Vec<f64>,
    cum_saving: Vec<f64>,
    /// Macro time to serve the whole cell directly, seconds.
    pub macro_cost: f64,
    /// Backhaul integral of the cell: sum of w/(W*B) over members.
    pub backhaul_integral: f64,
    /// Macro time left when every profitable item is served.
    pub saturation_cost: f64,
    /// Pico time to serve the whole cell, seconds (the classical full load).
    pub full_load: f64,
}

/// Build the load curve of pico `l` for hit mass `hit_mass` at bandwidth
/// `bandwidth_hz`. The cached stream carries factor `hit_mass`, the uncached
/// stream factor `1 - hit_mass`; a stream with zero factor contributes no
/// breakpoints.
pub fn build_load_curve(
    cloud: &PointCloud,
    l: usize,
    bandwidth_hz: f64,
    hit_mass: f64,
) -> Result<LoadCurve> {
    if !(0.0..=1.0).contains(&hit_mass) {
        return Err(Error::Domain(format!(
            "hit mass must lie in [0, 1], got {hit_mass}"
        )));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::Domain(format!(
            "bandwidth must be positive, got {bandwidth_hz}"
        )));
    }
    let index = cloud
        .per_pico
        .get(l)
        .ok_or_else(|| Error::Domain(format!("pico index {l} out of range")))?;
    if index.members.is_empty() {
        return Err(Error::Validation(format!(
            "pico {l} has no sample points; the scenario is degenerate"
        )));
    }
    let w = bandwidth_hz;
    let backhaul = cloud.backhaul_rates[l];

    // cell totals in member order, independent of the sort below
    let mut macro_cost = 0.0;
    let mut backhaul_integral = 0.0;
    let mut full_load = 0.0;
    let mut saturation_cost = 0.0;
    for &i in &index.members {
        let p = &cloud.points[i];
        let link = p.pico.as_ref().unwrap();
        macro_cost += p.weight / (w * p.rate_macro);
        backhaul_integral += p.weight / (w * backhaul);
        full_load += p.weight / (w * link.rate_pico);
        // macro time that remains once all profitable items are served:
        // uncached mass goes over the backhaul where that helps, else stays
        // on the macro link
        saturation_cost += if link.rho_uncached > 0.0 {
            (1.0 - hit_mass) * p.weight / (w * backhaul)
        } else {
            (1.0 - hit_mass) * p.weight / (w * p.rate_macro)
        };
    }

    let cached_iter = index.by_rho_cached.iter().filter_map(|&i| {
        if hit_mass == 0.0 {
            return None;
        }
        let p = &cloud.points[i];
        let link = p.pico.as_ref().unwrap();
        Some(Breakpoint {
            rho: link.rho_cached,
            pico_time: hit_mass * p.weight / (w * link.rate_pico),
            macro_saving: hit_mass * p.weight / (w * p.rate_macro),
            stream: Stream::Cached,
            point: i,
        })
    });
    let uncached_iter = index.by_rho_uncached.iter().filter_map(|&i| {
        if hit_mass == 1.0 {
            return None;
        }
        let p = &cloud.points[i];
        let link = p.pico.as_ref().unwrap();
        if link.rho_uncached <= 0.0 {
            return None;
        }
        Some(Breakpoint {
            rho: link.rho_uncached,
            pico_time: (1.0 - hit_mass) * p.weight / (w * link.rate_pico),
            macro_saving: (1.0 - hit_mass)
                * p.weight
                * (1.0 / (w * p.rate_macro) - 1.0 / (w * backhaul)),
            stream: Stream::Uncached,
            point: i,
        })
    });
    let breakpoints = merge_descending(cached_iter, uncached_iter);

    let mut cum_time = Vec::with_capacity(breakpoints.len());
    let mut cum_saving = Vec::with_capacity(breakpoints.len());
    let (mut t, mut s) = (0.0, 0.0);
    for bp in &breakpoints {
        t += bp.pico_time;
        s += bp.macro_saving;
        cum_time.push(t);
        cum_saving.push(s);
    }

    Ok(LoadCurve {
        pico: l,
        bandwidth_hz,
        hit_mass,
        breakpoints,
        cum_time,
        cum_saving,
        macro_cost,
        backhaul_integral,
        saturation_cost,
        full_load,
    })
}

/// Merge two ratio-descending streams, breaking ties by larger saving, then
/// point index, then cached before uncached.
fn merge_descending(
    a: impl Iterator<Item = Breakpoint>,
    b: impl Iterator<Item = Breakpoint>,
) -> Vec<Breakpoint> {
    let mut a = a.peekable();
    let mut b = b.peekable();
    let mut out = Vec::new();
    let precedes = |x: &Breakpoint, y: &Breakpoint| {
        (x.rho, x.macro_saving, std::cmp::Reverse(x.point))
            .partial_cmp(&(y.rho, y.macro_saving, std::cmp::Reverse(y.point)))
            .unwrap()
            .is_ge()
    };
    loop {
        match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => {
                if precedes(x, y) {
                    out.push(a.next().unwrap());
                } else {
                    out.push(b.next().unwrap());
                }
            }
            (Some(_), None) => out.push(a.next().unwrap()),
            (None, Some(_)) => out.push(b.next().unwrap()),
            (None, None) => break,
        }
    }
    out
}

impl LoadCurve {
    /// Pico time needed to serve every profitable item. Equals `full_load`
    /// whenever the backhaul rate dominates the macro rate everywhere.
    pub fn serveable_time(&self) -> f64 {
        self.cum_time.last().copied().unwrap_or(0.0)
    }

    /// Cumulative pico time after each breakpoint; the budget values where
    /// the threshold and the slope of the macro time change.
    pub fn cumulative_loads(&self) -> &[f64] {
        &self.cum_time
    }

    /// Largest threshold with any served mass.
    pub fn max_rho(&self) -> f64 {
        self.breakpoints.first().map_or(0.0, |bp| bp.rho)
    }

    /// Smallest positive ratio on the curve.
    pub fn min_rho(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |bp| bp.rho)
    }

    /// Pico time of all items with ratio strictly above `rho`.
    pub fn load_at(&self, rho: f64) -> f64 {
        let k = self.breakpoints.partition_point(|bp| bp.rho > rho);
        if k == 0 {
            0.0
        } else {
            self.cum_time[k - 1]
        }
    }

    /// Macro saving of all items with ratio strictly above `rho`.
    pub fn savings_above(&self, rho: f64) -> f64 {
        let k = self.breakpoints.partition_point(|bp| bp.rho > rho);
        if k == 0 {
            0.0
        } else {
            self.cum_saving[k - 1]
        }
    }

    /// The serving threshold for budget `f`: the smallest ratio such that
    /// the load above it fits in `f`. Zero once the budget covers every
    /// profitable item; at `f = 0` this is the largest ratio on the curve.
    pub fn threshold(&self, f: f64) -> f64 {
        let f = f.max(0.0);
        if f >= self.serveable_time() {
            return 0.0;
        }
        let k = self.cum_time.partition_point(|&c| c <= f);
        self.breakpoints[k].rho
    }

    /// Left limit of the threshold as the budget rises to `f`.
    pub fn threshold_left_limit(&self, f: f64) -> f64 {
        let k = self.cum_time.partition_point(|&c| c < f);
        if k == self.breakpoints.len() {
            0.0
        } else {
            self.breakpoints[k].rho
        }
    }

    /// Boundary of the run of equal-ratio items containing index `k`:
    /// (first index, one past last index).
    fn run_bounds(&self, k: usize) -> (usize, usize) {
        let rho = self.breakpoints[k].rho;
        let mut lo = k;
        while lo > 0 && self.breakpoints[lo - 1].rho == rho {
            lo -= 1;
        }
        let mut hi = k + 1;
        while hi < self.breakpoints.len() && self.breakpoints[hi].rho == rho {
            hi += 1;
        }
        (lo, hi)
    }

    /// Threshold, macro time and boundary data at budget `f`.
    pub fn evaluate(&self, f: f64) -> CurvePoint {
        let f = f.max(0.0);
        let serveable = self.serveable_time();
        if f >= serveable || self.breakpoints.is_empty() {
            return CurvePoint {
                rho: 0.0,
                macro_time: self.saturation_cost,
                pico_time_used: serveable,
                boundary_fraction: 0.0,
                boundary_run: (self.breakpoints.len(), self.breakpoints.len()),
            };
        }
        let k = self.cum_time.partition_point(|&c| c <= f);
        let (lo, hi) = self.run_bounds(k);
        let strict_time = if lo == 0 { 0.0 } else { self.cum_time[lo - 1] };
        let strict_saving = if lo == 0 { 0.0 } else { self.cum_saving[lo - 1] };
        let run_time = self.cum_time[hi - 1] - strict_time;
        let run_saving = self.cum_saving[hi - 1] - strict_saving;
        let fraction = ((f - strict_time) / run_time).clamp(0.0, 1.0);
        CurvePoint {
            rho: self.breakpoints[k].rho,
            macro_time: self.macro_cost - strict_saving - fraction * run_saving,
            pico_time_used: f,
            boundary_fraction: fraction,
            boundary_run: (lo, hi),
        }
    }

    /// Macro time needed by the cell at pico budget `f`.
    pub fn macro_time(&self, f: f64) -> f64 {
        self.evaluate(f).macro_time
    }

    /// Macro time expressed through the strict serving regions at threshold
    /// `rho`, without the boundary term. Serves as the second algebraic
    /// route for the value identity.
    pub fn macro_time_strict(&self, rho: f64) -> f64 {
        self.macro_cost - self.savings_above(rho)
    }

    /// Lagrangian dual objective at multiplier `rho` and budget `f`. Its
    /// maximum over `rho >= 0` equals the optimal macro time at `f`.
    pub fn dual_value(&self, rho: f64, f: f64) -> f64 {
        let k = self.breakpoints.partition_point(|bp| bp.rho > rho);
        let (time, saving) = if k == 0 {
            (0.0, 0.0)
        } else {
            (self.cum_time[k - 1], self.cum_saving[k - 1])
        };
        rho * time - saving + self.macro_cost - rho * f
    }
}

/// Threshold-side data of a subproblem solve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub rho: f64,
    pub macro_time: f64,
    pub pico_time_used: f64,
    /// Fraction served of every item whose ratio equals the threshold.
    pub boundary_fraction: f64,
    /// Index range of those items in the curve.
    pub boundary_run: (usize, usize),
}

// ---------------------------------------------------------------------------
// Full subproblem solutions
// ---------------------------------------------------------------------------

/// Cache contents of one pico: the most popular files, with a fractional
/// marker under the continuous relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheSet {
    /// Files 0..full_files are fully cached.
    pub full_files: usize,
    /// Fractionally cached file and its fraction, when the size is not an
    /// integer.
    pub fractional: Option<(usize, f64)>,
}

impl CacheSet {
    pub fn from_size(cache_size: f64) -> Self {
        let whole = cache_size.floor();
        let frac = cache_size - whole;
        Self {
            full_files: whole as usize,
            fractional: (frac > 0.0).then_some((whole as usize, frac)),
        }
    }
}

/// Optimal caching and association of one pico at a given budget.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub pico: usize,
    /// Serving threshold on the benefit ratio.
    pub rho: f64,
    /// Macro time needed by the cell, seconds.
    pub tau: f64,
    pub pico_time_used: f64,
    pub boundary_fraction: f64,
    pub cache: CacheSet,
    /// Association of the cached demand class, aligned with the cell's
    /// member list; values are 0, the boundary fraction, or 1.
    pub x_cached: Vec<f64>,
    /// Association of the uncached demand class, same alignment.
    pub x_uncached: Vec<f64>,
}

/// Solve the cell of pico `l` for cache size `cache_size` and budget `f`.
pub fn solve_subproblem(
    cloud: &PointCloud,
    l: usize,
    bandwidth_hz: f64,
    cache_size: f64,
    popularity: &Popularity,
    f: f64,
) -> Result<SubproblemSolution> {
    let hit = popularity.hit_mass(cache_size)?;
    let curve = build_load_curve(cloud, l, bandwidth_hz, hit)?;
    Ok(solve_with_curve(cloud, &curve, cache_size, f))
}

/// Solve using a prebuilt curve; `cache_size` only shapes the cache set.
pub fn solve_with_curve(
    cloud: &PointCloud,
    curve: &LoadCurve,
    cache_size: f64,
    f: f64,
) -> SubproblemSolution {
    let at = curve.evaluate(f);
    let members = &cloud.per_pico[curve.pico].members;
    let mut x_cached = Vec::with_capacity(members.len());
    let mut x_uncached = Vec::with_capacity(members.len());
    for &i in members {
        let link = cloud.points[i].pico.as_ref().unwrap();
        x_cached.push(assign(link.rho_cached, at.rho, at.boundary_fraction));
        x_uncached.push(assign(link.rho_uncached, at.rho, at.boundary_fraction));
    }
    SubproblemSolution {
        pico: curve.pico,
        rho: at.rho,
        tau: at.macro_time,
        pico_time_used: at.pico_time_used,
        boundary_fraction: at.boundary_fraction,
        cache: CacheSet::from_size(cache_size),
        x_cached,
        x_uncached,
    }
}

fn assign(ratio: f64, threshold: f64, boundary: f64) -> f64 {
    if ratio > threshold {
        1.0
    } else if ratio == threshold && ratio > 0.0 {
        boundary
    } else {
        0.0
    }
}
