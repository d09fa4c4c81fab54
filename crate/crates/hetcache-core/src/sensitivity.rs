//! Resource sensitivity: analytic derivatives of a cell's macro time with
//! respect to bandwidth and cache size, finite-difference cross-checks on a
//! common cloud, and full (bandwidth, cache) sweeps of the optimal total
//! time with monotonicity auditing.

use crate::error::{Error, Result};
use crate::master::{MasterContext, Regime};
use crate::popularity::Popularity;
use crate::sampling::PointCloud;
use crate::subproblem::build_load_curve;

/// Derivatives are refused for cache sizes this close to an integer, where
/// the hit mass is not differentiable.
const CACHE_INTEGER_GUARD: f64 = 1e-6;
/// Relative tolerance of the sweep's monotonicity audit.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-3;

/// Analytic derivative of the cell's macro time with respect to bandwidth.
pub fn dtau_dw(
    cloud: &PointCloud,
    popularity: &Popularity,
    l: usize,
    f: f64,
    bandwidth_hz: f64,
    cache_size: f64,
) -> Result<f64> {
    check_common(popularity, f, bandwidth_hz, cache_size)?;
    let hit = popularity.hit_mass(cache_size)?;
    let curve = build_load_curve(cloud, l, bandwidth_hz, hit)?;
    guard_near_saturation(&curve, f)?;
    let at = curve.evaluate(f);
    if f < curve.serveable_time() {
        Ok(-(at.macro_time + at.rho * f) / bandwidth_hz)
    } else {
        Ok(-at.macro_time / bandwidth_hz)
    }
}

/// Analytic derivative of the cell's macro time with respect to cache size,
/// valid at non-integer sizes.
pub fn dtau_dc(
    cloud: &PointCloud,
    popularity: &Popularity,
    l: usize,
    f: f64,
    bandwidth_hz: f64,
    cache_size: f64,
) -> Result<f64> {
    check_common(popularity, f, bandwidth_hz, cache_size)?;
    if (cache_size - cache_size.round()).abs() < CACHE_INTEGER_GUARD {
        return Err(Error::Domain(format!(
            "cache derivative is undefined at integer sizes; {cache_size} is within \
             {CACHE_INTEGER_GUARD} of an integer (take one-sided differences instead)"
        )));
    }
    let marginal = popularity.marginal(cache_size)?;
    let hit = popularity.hit_mass(cache_size)?;
    let curve = build_load_curve(cloud, l, bandwidth_hz, hit)?;
    guard_near_saturation(&curve, f)?;

    if f >= curve.serveable_time() {
        return Ok(-marginal * curve.backhaul_integral);
    }
    let rho = curve.threshold(f);
    let w = bandwidth_hz;
    let backhaul = cloud.backhaul_rates[l];
    let mut cached_only = 0.0; // served for cached files but not uncached ones
    let mut backhaul_mass = 0.0;
    for &i in &cloud.per_pico[l].members {
        let p = &cloud.points[i];
        let link = p.pico.as_ref().unwrap();
        if link.rho_cached > rho && link.rho_uncached <= rho {
            cached_only += p.weight * (rho / (w * link.rate_pico) - 1.0 / (w * p.rate_macro));
        }
        if link.rho_uncached > rho {
            backhaul_mass += p.weight / (w * backhaul);
        }
    }
    Ok(marginal * (cached_only - backhaul_mass))
}

fn check_common(popularity: &Popularity, f: f64, bandwidth_hz: f64, cache_size: f64) -> Result<()> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::Domain("bandwidth must be positive".into()));
    }
    if !(f > 0.0) {
        return Err(Error::Domain(format!(
            "derivatives are stated for positive budgets, got {f}"
        )));
    }
    let n = popularity.len() as f64;
    if !(cache_size > 0.0 && cache_size < n) {
        return Err(Error::Domain(format!(
            "derivatives are stated for cache sizes in (0, {n}), got {cache_size}"
        )));
    }
    Ok(())
}

/// Refuse budgets within one breakpoint of the saturation kink, where the
/// derivative is one-sided.
fn guard_near_saturation(curve: &crate::subproblem::LoadCurve, f: f64) -> Result<()> {
    let loads = curve.cumulative_loads();
    let sat = curve.serveable_time();
    let last_step = if loads.len() >= 2 {
        sat - loads[loads.len() - 2]
    } else {
        sat
    };
    if (f - sat).abs() < last_step {
        return Err(Error::Domain(format!(
            "budget {f} is within one breakpoint of the saturation load {sat}; \
             the derivative is one-sided there"
        )));
    }
    Ok(())
}

/// Analytic derivatives against central finite differences on the same
/// cloud (common random numbers).
#[derive(Debug, Clone, Copy)]
pub struct SensitivityReport {
    pub pico: usize,
    pub f: f64,
    pub bandwidth_hz: f64,
    pub cache_size: f64,
    pub dtau_dw: f64,
    pub fd_dw: f64,
    pub rel_err_w: f64,
    pub dtau_dc: f64,
    pub fd_dc: f64,
    pub rel_err_c: f64,
}

/// Evaluate both analytic derivatives and their central finite differences.
pub fn check_derivatives(
    cloud: &PointCloud,
    popularity: &Popularity,
    l: usize,
    f: f64,
    bandwidth_hz: f64,
    cache_size: f64,
    h_w: f64,
    h_c: f64,
) -> Result<SensitivityReport> {
    let analytic_w = dtau_dw(cloud, popularity, l, f, bandwidth_hz, cache_size)?;
    let analytic_c = dtau_dc(cloud, popularity, l, f, bandwidth_hz, cache_size)?;

    let tau_at = |w: f64, c: f64| -> Result<f64> {
        let hit = popularity.hit_mass(c)?;
        Ok(build_load_curve(cloud, l, w, hit)?.macro_time(f))
    };
    let fd_dw = (tau_at(bandwidth_hz + h_w, cache_size)? - tau_at(bandwidth_hz - h_w, cache_size)?)
        / (2.0 * h_w);
    let fd_dc = (tau_at(bandwidth_hz, cache_size + h_c)? - tau_at(bandwidth_hz, cache_size - h_c)?)
        / (2.0 * h_c);

    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    Ok(SensitivityReport {
        pico: l,
        f,
        bandwidth_hz,
        cache_size,
        dtau_dw: analytic_w,
        fd_dw,
        rel_err_w: rel(analytic_w, fd_dw),
        dtau_dc: analytic_c,
        fd_dc,
        rel_err_c: rel(analytic_c, fd_dc),
    })
}

// ---------------------------------------------------------------------------
// (bandwidth, cache) sweeps
// ---------------------------------------------------------------------------

/// One solved grid cell of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepCell {
    pub bandwidth_hz: f64,
    pub cache_size: f64,
    pub tau_star: f64,
    pub f_star: f64,
    pub regime: Regime,
}

/// Full sweep with a monotonicity audit along both axes.
#[derive(Debug, Clone)]
pub struct SweepTable {
    /// Cells in the given grid order: bandwidth outer, cache inner.
    pub cells: Vec<SweepCell>,
    /// Adjacent cell pairs where the optimal time failed to decrease with a
    /// resource increase, beyond the Monte Carlo tolerance.
    pub violations: Vec<String>,
}

/// Solve the scenario on every (bandwidth, cache) grid point. The cache
/// value of a cell applies to every pico.
pub fn sweep(
    cloud: &PointCloud,
    popularity: &Popularity,
    w_grid: &[f64],
    c_grid: &[f64],
) -> Result<SweepTable> {
    if w_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::Validation("sweep grids must be non-empty".into()));
    }
    let picos = cloud.pico_count();
    let mut cells = Vec::with_capacity(w_grid.len() * c_grid.len());
    for &w in w_grid {
        for &c in c_grid {
            let ctx = MasterContext::new(cloud, popularity, w, vec![c; picos])?;
            let sol = ctx.solve()?;
            cells.push(SweepCell {
                bandwidth_hz: w,
                cache_size: c,
                tau_star: sol.tau_star,
                f_star: sol.f_star,
                regime: sol.regime,
            });
        }
    }

    let mut violations = Vec::new();
    let cell = |wi: usize, ci: usize| &cells[wi * c_grid.len() + ci];
    let mut w_order: Vec<usize> = (0..w_grid.len()).collect();
    w_order.sort_by(|&a, &b| w_grid[a].partial_cmp(&w_grid[b]).unwrap());
    let mut c_order: Vec<usize> = (0..c_grid.len()).collect();
    c_order.sort_by(|&a, &b| c_grid[a].partial_cmp(&c_grid[b]).unwrap());
    for &wi in &w_order {
        for pair in c_order.windows(2) {
            let (lo, hi) = (cell(wi, pair[0]), cell(wi, pair[1]));
            if hi.tau_star > lo.tau_star * (1.0 + MONOTONICITY_TOLERANCE) {
                violations.push(format!(
                    "tau* rose from {} to {} as the cache grew {} -> {} at {} Hz",
                    lo.tau_star, hi.tau_star, lo.cache_size, hi.cache_size, lo.bandwidth_hz
                ));
            }
        }
    }
    for &ci in &c_order {
        for pair in w_order.windows(2) {
            let (lo, hi) = (cell(pair[0], ci), cell(pair[1], ci));
            if hi.tau_star > lo.tau_star * (1.0 + MONOTONICITY_TOLERANCE) {
                violations.push(format!(
                    "tau* rose from {} to {} as the bandwidth grew {} -> {} Hz at cache {}",
                    lo.tau_star, hi.tau_star, lo.bandwidth_hz, hi.bandwidth_hz, lo.cache_size
                ));
            }
        }
    }
    Ok(SweepTable { cells, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Point;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_cloud(seed: u64, picos: usize, per_pico: usize) -> PointCloud {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut raw = Vec::new();
        let mut max_r0 = vec![0.0f64; picos];
        for l in 0..picos {
            for i in 0..per_pico {
                let r0 = 10f64.powf(rng.gen_range(-1.0..1.0));
                let rl = 10f64.powf(rng.gen_range(-1.0..1.0));
                let w = rng.gen_range(0.2..2.0);
                max_r0[l] = max_r0[l].max(r0);
                raw.push((Point::new(i as f64, l as f64), w, r0, Some((l, rl))));
            }
        }
        let b: Vec<f64> = max_r0.iter().map(|&m| m * 1.8).collect();
        PointCloud::from_parts(raw, b, true).unwrap()
    }

    #[test]
    fn saturated_budget_reduces_to_the_backhaul_forms() {
        let cloud = random_cloud(2, 1, 50);
        let pop = Popularity::zipf(8, 0.9).unwrap();
        let (w, c) = (1.0, 3.5);
        let hit = pop.hit_mass(c).unwrap();
        let curve = build_load_curve(&cloud, 0, w, hit).unwrap();
        let f = 2.0 * curve.serveable_time();
        let dw = dtau_dw(&cloud, &pop, 0, f, w, c).unwrap();
        assert!(close(dw, -curve.macro_time(f) / w, 1e-15));
        let dc = dtau_dc(&cloud, &pop, 0, f, w, c).unwrap();
        let expect = -pop.marginal(c).unwrap() * curve.backhaul_integral;
        assert!(close(dc, expect, 1e-15), "got {dc}, want {expect}");
    }

    #[test]
    fn small_budget_limit_of_the_bandwidth_derivative() {
        let cloud = random_cloud(4, 1, 50);
        let pop = Popularity::zipf(8, 0.9).unwrap();
        let (w, c) = (1.0, 3.5);
        let hit = pop.hit_mass(c).unwrap();
        let curve = build_load_curve(&cloud, 0, w, hit).unwrap();
        let f = 1e-7 * curve.serveable_time();
        let dw = dtau_dw(&cloud, &pop, 0, f, w, c).unwrap();
        // the rho * f correction vanishes with the budget
        assert!(close(dw, -curve.macro_time(f) / w, 1e-6 * dw.abs()));
    }

    #[test]
    fn vanishing_with_an_infinite_backhaul() {
        // enormous backhaul: the two serving regions coincide and only the
        // (tiny) backhaul integral remains
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut raw = Vec::new();
        for i in 0..40 {
            let r0 = 10f64.powf(rng.gen_range(-1.0..0.0));
            let rl = 10f64.powf(rng.gen_range(-0.5..0.5));
            raw.push((Point::new(i as f64, 0.0), 1.0, r0, Some((0, rl))));
        }
        let cloud = PointCloud::from_parts(raw, vec![1e12], true).unwrap();
        let pop = Popularity::zipf(8, 0.9).unwrap();
        let hit = pop.hit_mass(3.5).unwrap();
        let curve = build_load_curve(&cloud, 0, 1.0, hit).unwrap();
        let f = 0.5 * curve.serveable_time();
        let dc = dtau_dc(&cloud, &pop, 0, f, 1.0, 3.5).unwrap();
        assert!(dc <= 0.0, "derivative keeps its sign");
        assert!(dc.abs() < 1e-9, "vanishing backhaul cost, got {dc}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cloud = random_cloud(6, 2, 120);
        let pop = Popularity::zipf(8, 0.9).unwrap();
        for (l, frac, w, c) in [
            (0usize, 0.3, 1.0, 3.5),
            (0, 0.6, 1.3, 5.25),
            (1, 0.45, 0.8, 2.5),
        ] {
            let hit = pop.hit_mass(c).unwrap();
            let curve = build_load_curve(&cloud, l, w, hit).unwrap();
            let f = frac * curve.serveable_time();
            let report =
                check_derivatives(&cloud, &pop, l, f, w, c, 1e-3 * w, 0.25).unwrap();
            assert!(report.dtau_dw < 0.0 && report.dtau_dc < 0.0);
            assert!(
                report.rel_err_w <= 1e-2,
                "bandwidth: analytic {} vs fd {}",
                report.dtau_dw,
                report.fd_dw
            );
            assert!(
                report.rel_err_c <= 1e-2,
                "cache: analytic {} vs fd {}",
                report.dtau_dc,
                report.fd_dc
            );
        }
    }

    #[test]
    fn domain_guards() {
        let cloud = random_cloud(7, 1, 30);
        let pop = Popularity::zipf(8, 0.9).unwrap();
        assert!(matches!(
            dtau_dw(&cloud, &pop, 0, 0.0, 1.0, 3.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            dtau_dc(&cloud, &pop, 0, 0.1, 1.0, 3.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            dtau_dc(&cloud, &pop, 0, 0.1, 1.0, 8.0),
            Err(Error::Domain(_))
        ));
        // near the saturation kink the derivative is refused
        let hit = pop.hit_mass(3.5).unwrap();
        let sat = build_load_curve(&cloud, 0, 1.0, hit)
            .unwrap()
            .serveable_time();
        assert!(matches!(
            dtau_dw(&cloud, &pop, 0, sat, 1.0, 3.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sweep_is_monotone_and_consistent_with_single_solves() {
        let cloud = random_cloud(10, 2, 60);
        let pop = Popularity::zipf(8, 0.9).unwrap();
        let w_grid = [0.8, 1.0, 1.4];
        let c_grid = [0.0, 2.0, 6.0];
        let table = sweep(&cloud, &pop, &w_grid, &c_grid).unwrap();
        assert!(table.violations.is_empty(), "{:?}", table.violations);
        assert_eq!(table.cells.len(), 9);
        // a 1x1 sweep equals the direct solve
        let single = sweep(&cloud, &pop, &[1.0], &[2.0]).unwrap();
        let ctx = MasterContext::new(&cloud, &pop, 1.0, vec![2.0, 2.0]).unwrap();
        let sol = ctx.solve().unwrap();
        assert!(close(single.cells[0].tau_star, sol.tau_star, 0.0));
        assert!(close(single.cells[0].f_star, sol.f_star, 0.0));
    }

    #[test]
    fn sweep_rejects_empty_grids() {
        let cloud = random_cloud(11, 1, 10);
        let pop = Popularity::zipf(4, 0.9).unwrap();
        assert!(matches!(
            sweep(&cloud, &pop, &[], &[1.0]),
            Err(Error::Validation(_))
        ));
    }
}
