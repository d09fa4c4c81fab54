//! Independent ground-truth solvers for small instances.
//!
//! The oracle never touches the threshold machinery. It enumerates every
//! cache subset and solves the inner association problem per subset with the
//! classical continuous-knapsack ratio greedy over (file, point) items, so
//! agreement with the structured solver is a meaningful check rather than a
//! tautology. A hand-derived two-annulus instance with closed-form answers
//! rounds out the suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampling::PointCloud;
use crate::scenario::Point;

/// Enumeration bounds keeping the oracle exact and fast.
pub const MAX_POINTS: usize = 200;
pub const MAX_FILES: usize = 8;
pub const MAX_PICOS: usize = 3;

/// One explicit demand point of a small instance.
#[derive(Debug, Clone, Copy)]
pub struct OraclePoint {
    pub weight: f64,
    pub rate_macro: f64,
    pub rate_pico: f64,
    pub pico: usize,
}

/// A fully explicit instance small enough for exhaustive treatment.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub points: Vec<OraclePoint>,
    /// Backhaul rate per pico.
    pub backhaul: Vec<f64>,
    /// Descending popularity vector.
    pub popularity: Vec<f64>,
    /// Cache capacity per pico, in files.
    pub cache_sizes: Vec<f64>,
    pub bandwidth_hz: f64,
}

impl SmallInstance {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() > MAX_POINTS {
            return Err(Error::OracleBounds(format!(
                "{} points exceed the {MAX_POINTS}-point bound",
                self.points.len()
            )));
        }
        if self.popularity.len() > MAX_FILES {
            return Err(Error::OracleBounds(format!(
                "{} files exceed the {MAX_FILES}-file bound",
                self.popularity.len()
            )));
        }
        if self.backhaul.len() > MAX_PICOS {
            return Err(Error::OracleBounds(format!(
                "{} picos exceed the {MAX_PICOS}-pico bound",
                self.backhaul.len()
            )));
        }
        if self.cache_sizes.len() != self.backhaul.len() {
            return Err(Error::Validation(
                "cache_sizes and backhaul must have one entry per pico".into(),
            ));
        }
        for p in &self.points {
            if p.pico >= self.backhaul.len() {
                return Err(Error::Validation("point pico id out of range".into()));
            }
            if p.rate_macro >= self.backhaul[p.pico] {
                return Err(Error::Validation(
                    "oracle instances require the backhaul rate to dominate".into(),
                ));
            }
        }
        Ok(())
    }

    /// The same instance as a point cloud for the structured solver.
    pub fn to_cloud(&self) -> Result<PointCloud> {
        let raw: Vec<_> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    Point::new(i as f64, 0.0),
                    p.weight,
                    p.rate_macro,
                    Some((p.pico, p.rate_pico)),
                )
            })
            .collect();
        PointCloud::from_parts(raw, self.backhaul.clone(), true)
    }

    pub fn popularity(&self) -> Result<crate::popularity::Popularity> {
        crate::popularity::Popularity::from_probabilities(self.popularity.clone())
    }

    /// Pico time for pico `l` to carry its whole cell.
    pub fn full_load(&self, l: usize) -> f64 {
        self.points
            .iter()
            .filter(|p| p.pico == l)
            .map(|p| p.weight / (self.bandwidth_hz * p.rate_pico))
            .sum()
    }

    pub fn max_full_load(&self) -> f64 {
        (0..self.backhaul.len())
            .map(|l| self.full_load(l))
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive subproblem oracle
// ---------------------------------------------------------------------------

/// A nonzero association chosen by the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAssignment {
    pub file: usize,
    pub point: usize,
    pub x: f64,
    /// Saving-per-pico-time ratio of the item.
    pub ratio: f64,
}

/// Result of the exhaustive subproblem solve.
#[derive(Debug, Clone)]
pub struct OracleSubproblem {
    pub value: f64,
    /// Chosen cache contents, ascending file indices.
    pub cache_set: Vec<usize>,
    pub assignment: Vec<OracleAssignment>,
    pub pico_time: f64,
}

struct Item {
    file: usize,
    point: usize,
    time: f64,
    saving: f64,
    ratio: f64,
}

/// Exact optimum of one cell at budget `f` by cache-subset enumeration plus
/// ratio greedy for the inner continuous problem.
pub fn oracle_subproblem(inst: &SmallInstance, l: usize, f: f64) -> Result<OracleSubproblem> {
    inst.validate()?;
    let n = inst.popularity.len();
    let capacity = (inst.cache_sizes[l].floor() as usize).min(n);
    let most_popular: Vec<usize> = (0..capacity).collect();

    let mut best = evaluate_subset(inst, l, &most_popular, f);
    best.cache_set = most_popular;
    for mask in 0u32..(1u32 << n) {
        let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if subset.len() > capacity {
            continue;
        }
        let candidate = evaluate_subset(inst, l, &subset, f);
        if candidate.value < best.value - 1e-12 * best.value.abs().max(1.0) {
            best = candidate;
            best.cache_set = subset;
        }
    }
    Ok(best)
}

/// Inner continuous problem for a fixed cache subset: ratio greedy over
/// (file, point) items with positive saving.
fn evaluate_subset(inst: &SmallInstance, l: usize, subset: &[usize], f: f64) -> OracleSubproblem {
    let w = inst.bandwidth_hz;
    let b = inst.backhaul[l];
    let cached = |file: usize| subset.contains(&file);

    let mut base = 0.0;
    let mut items = Vec::new();
    for (pi, p) in inst.points.iter().enumerate() {
        if p.pico != l {
            continue;
        }
        base += p.weight / (w * p.rate_macro);
        for (file, &pn) in inst.popularity.iter().enumerate() {
            let backhaul_cost = if cached(file) { 0.0 } else { 1.0 / (w * b) };
            let saving = pn * p.weight * (1.0 / (w * p.rate_macro) - backhaul_cost);
            if saving <= 0.0 {
                continue;
            }
            let time = pn * p.weight / (w * p.rate_pico);
            items.push(Item {
                file,
                point: pi,
                time,
                saving,
                ratio: saving / time,
            });
        }
    }
    items.sort_by(|a, b| {
        b.ratio
            .partial_cmp(&a.ratio)
            .unwrap()
            .then(b.saving.partial_cmp(&a.saving).unwrap())
            .then(a.point.cmp(&b.point))
            .then(a.file.cmp(&b.file))
    });

    let mut remaining = f;
    let mut value = base;
    let mut pico_time = 0.0;
    let mut assignment = Vec::new();
    for item in &items {
        if remaining <= 0.0 {
            break;
        }
        let x = (remaining / item.time).min(1.0);
        value -= x * item.saving;
        pico_time += x * item.time;
        remaining -= x * item.time;
        assignment.push(OracleAssignment {
            file: item.file,
            point: item.point,
            x,
            ratio: item.ratio,
        });
    }
    OracleSubproblem {
        value,
        cache_set: Vec::new(),
        assignment,
        pico_time,
    }
}

/// Confirms by exhaustive enumeration that no cache subset beats the most
/// popular one at budget `f`. Returns the margin of the closest competitor.
pub fn most_popular_is_optimal(inst: &SmallInstance, l: usize, f: f64) -> Result<f64> {
    inst.validate()?;
    let n = inst.popularity.len();
    let capacity = (inst.cache_sizes[l].floor() as usize).min(n);
    let most_popular: Vec<usize> = (0..capacity).collect();
    let reference = evaluate_subset(inst, l, &most_popular, f).value;
    let mut margin = f64::INFINITY;
    for mask in 0u32..(1u32 << n) {
        let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if subset.len() > capacity || subset == most_popular {
            continue;
        }
        let value = evaluate_subset(inst, l, &subset, f).value;
        margin = margin.min(value - reference);
        if value < reference - 1e-9 * reference.abs().max(1.0) {
            return Err(Error::Internal(format!(
                "cache subset {subset:?} beats the most popular set: {value} < {reference}"
            )));
        }
    }
    Ok(margin)
}

// ---------------------------------------------------------------------------
// Dense-grid master oracle
// ---------------------------------------------------------------------------

/// Grid minimum of the total time over budgets in [0, max full load].
///
/// The per-subset item lists are sorted once and evaluated per budget via
/// prefix sums; the greedy itself is unchanged. The returned budget is the
/// leftmost grid argmin, accurate to one grid cell.
pub fn oracle_master(inst: &SmallInstance, grid_size: usize) -> Result<(f64, f64)> {
    inst.validate()?;
    if grid_size < 1000 {
        return Err(Error::Domain(format!(
            "the master oracle needs a grid of at least 1000 points, got {grid_size}"
        )));
    }
    let f_bar = inst.max_full_load();
    let evaluators: Vec<SubsetEvaluators> = (0..inst.backhaul.len())
        .map(|l| SubsetEvaluators::new(inst, l))
        .collect();

    let mut best_f = 0.0;
    let mut best_value = f64::INFINITY;
    for i in 0..=grid_size {
        let f = f_bar * i as f64 / grid_size as f64;
        let total: f64 = f + evaluators.iter().map(|e| e.value_at(f)).sum::<f64>();
        if total < best_value {
            best_value = total;
            best_f = f;
        }
    }
    Ok((best_f, best_value))
}

/// Prefix-sum evaluators for every cache subset of one cell.
struct SubsetEvaluators {
    base: f64,
    /// Per subset: (cumulative time, cumulative saving) of the sorted items.
    subsets: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SubsetEvaluators {
    fn new(inst: &SmallInstance, l: usize) -> Self {
        let n = inst.popularity.len();
        let capacity = (inst.cache_sizes[l].floor() as usize).min(n);
        let w = inst.bandwidth_hz;
        let base: f64 = inst
            .points
            .iter()
            .filter(|p| p.pico == l)
            .map(|p| p.weight / (w * p.rate_macro))
            .sum();
        let mut subsets = Vec::new();
        for mask in 0u32..(1u32 << n) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            if subset.len() > capacity {
                continue;
            }
            // under an infinite budget the greedy serves every profitable
            // item fully, in ratio order; freeze that order as prefix sums
            let solved = evaluate_subset(inst, l, &subset, f64::INFINITY);
            let mut cum_time = Vec::with_capacity(solved.assignment.len());
            let mut cum_saving = Vec::with_capacity(solved.assignment.len());
            let (mut t, mut s) = (0.0, 0.0);
            for a in &solved.assignment {
                let time = a.x * item_time(inst, l, a);
                t += time;
                s += time * a.ratio;
                cum_time.push(t);
                cum_saving.push(s);
            }
            subsets.push((cum_time, cum_saving));
        }
        Self { base, subsets }
    }

    fn value_at(&self, f: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (cum_time, cum_saving) in &self.subsets {
            let value = if cum_time.is_empty() {
                self.base
            } else {
                let k = cum_time.partition_point(|&c| c <= f);
                if k == cum_time.len() {
                    self.base - cum_saving[k - 1]
                } else {
                    let (t0, s0) = if k == 0 {
                        (0.0, 0.0)
                    } else {
                        (cum_time[k - 1], cum_saving[k - 1])
                    };
                    let span = cum_time[k] - t0;
                    let frac = ((f - t0) / span).clamp(0.0, 1.0);
                    self.base - s0 - frac * (cum_saving[k] - s0)
                }
            };
            best = best.min(value);
        }
        best
    }
}

fn item_time(inst: &SmallInstance, l: usize, a: &OracleAssignment) -> f64 {
    let p = &inst.points[a.point];
    debug_assert_eq!(p.pico, l);
    inst.popularity[a.file] * p.weight / (inst.bandwidth_hz * p.rate_pico)
}

// ---------------------------------------------------------------------------
// Hand-derived two-annulus instance
// ---------------------------------------------------------------------------

/// Closed-form answers of the ring instance, all derived by hand from the
/// two-annulus structure.
#[derive(Debug, Clone)]
pub struct RingExpectations {
    pub hit_mass: f64,
    /// (threshold, load above it)
    pub load_samples: Vec<(f64, f64)>,
    /// (budget, threshold at that budget)
    pub threshold_samples: Vec<(f64, f64)>,
    /// (budget, cell macro time)
    pub macro_time_samples: Vec<(f64, f64)>,
    pub full_load: f64,
    pub macro_cost: f64,
    pub f_star: f64,
    pub tau_star: f64,
}

/// A single-pico instance whose mass sits on two annuli with constant rates:
/// inner (weight 1, pico rate 1, macro rate 1/4), outer (weight 1, pico rate
/// 2, macro rate 1), backhaul 2, popularity (1/2, 1/2) with one file cached.
///
/// Benefit ratios: inner 4 (cached) and 3.5 (uncached); outer 2 and 1.
/// Curve items (ratio, pico time, saving): (4, 1/2, 2), (3.5, 1/2, 7/4),
/// (2, 1/4, 1/2), (1, 1/4, 1/4).
pub fn ring_scenario() -> (SmallInstance, RingExpectations) {
    let inst = SmallInstance {
        points: vec![
            OraclePoint {
                weight: 1.0,
                rate_macro: 0.25,
                rate_pico: 1.0,
                pico: 0,
            },
            OraclePoint {
                weight: 1.0,
                rate_macro: 1.0,
                rate_pico: 2.0,
                pico: 0,
            },
        ],
        backhaul: vec![2.0],
        popularity: vec![0.5, 0.5],
        cache_sizes: vec![1.0],
        bandwidth_hz: 1.0,
    };
    let expect = RingExpectations {
        hit_mass: 0.5,
        load_samples: vec![
            (0.0, 1.5),
            (0.5, 1.5),
            (1.0, 1.25),
            (1.5, 1.25),
            (2.0, 1.0),
            (2.5, 1.0),
            (3.5, 0.5),
            (3.75, 0.5),
            (4.0, 0.0),
            (5.0, 0.0),
        ],
        threshold_samples: vec![
            (0.0, 4.0),
            (0.25, 4.0),
            (0.5, 3.5),
            (0.75, 3.5),
            (1.0, 2.0),
            (1.1, 2.0),
            (1.25, 1.0),
            (1.4, 1.0),
            (1.5, 0.0),
            (2.0, 0.0),
        ],
        macro_time_samples: vec![
            (0.0, 5.0),
            (0.25, 4.0),
            (0.5, 3.0),
            (0.75, 2.125),
            (1.0, 1.25),
            (1.1, 1.05),
            (1.25, 0.75),
            (1.375, 0.625),
            (1.5, 0.5),
            (3.0, 0.5),
        ],
        full_load: 1.5,
        macro_cost: 5.0,
        f_star: 1.25,
        tau_star: 2.0,
    };
    (inst, expect)
}

// ---------------------------------------------------------------------------
// Seeded random instances
// ---------------------------------------------------------------------------

/// Parameters of the random-instance generator.
#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub max_picos: usize,
    pub max_files: usize,
    pub max_cache: usize,
    pub max_points: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_picos: 2,
            max_files: 6,
            max_cache: 3,
            max_points: 40,
        }
    }
}

/// Deterministic random instance: rates log-uniform over two decades, the
/// backhaul strictly above every macro rate of its cell.
pub fn random_instance(seed: u64, shape: InstanceShape) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picos = rng.gen_range(1..=shape.max_picos);
    let files = rng.gen_range(2..=shape.max_files);
    let points = rng.gen_range(picos.max(3)..=shape.max_points);

    let gamma = rng.gen_range(0.0..2.0);
    let popularity = crate::popularity::Popularity::zipf(files, gamma)
        .unwrap()
        .probabilities()
        .to_vec();

    let mut pts = Vec::with_capacity(points);
    let mut max_r0 = vec![0.0f64; picos];
    for i in 0..points {
        // round-robin guarantees every pico is non-empty
        let pico = if i < picos { i } else { rng.gen_range(0..picos) };
        let rate_macro = 10f64.powf(rng.gen_range(-1.0..1.0));
        let rate_pico = 10f64.powf(rng.gen_range(-1.0..1.0));
        let weight = rng.gen_range(0.2..2.0);
        max_r0[pico] = max_r0[pico].max(rate_macro);
        pts.push(OraclePoint {
            weight,
            rate_macro,
            rate_pico,
            pico,
        });
    }
    let backhaul: Vec<f64> = max_r0
        .iter()
        .map(|&m| m * 10f64.powf(rng.gen_range(0.05..1.0)))
        .collect();
    let cache_sizes: Vec<f64> = (0..picos)
        .map(|_| rng.gen_range(0..=shape.max_cache.min(files)) as f64)
        .collect();
    SmallInstance {
        points: pts,
        backhaul,
        popularity,
        cache_sizes,
        bandwidth_hz: 1.0,
    }
}
