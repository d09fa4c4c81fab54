//! Monte Carlo sampling of the traffic density.
//!
//! The cloud of weighted sample points is the discrete stand-in for every
//! spatial integral: an integral of h over a region becomes the sum of
//! `weight * h(point)` over the points in that region. Each point carries an
//! equal share of the arrival rate, its macro and pico rates, and the two
//! pico-vs-macro benefit ratios the solvers threshold on.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::{CoverageMode, Point, ScenarioConfig};

/// Consecutive rejection-sampling failures tolerated before a region is
/// declared degenerate.
const MAX_REJECTIONS: u32 = 1_000_000;

// ---------------------------------------------------------------------------
// Cloud data model
// ---------------------------------------------------------------------------

/// Link data of a sample point attached to a pico cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicoLink {
    pub pico_id: usize,
    /// Pico downlink rate at the point, files/sec/Hz.
    pub rate_pico: f64,
    /// Macro time saved per unit pico time when the file is cached:
    /// rate_pico / rate_macro.
    pub rho_cached: f64,
    /// Same ratio when the file must first cross the backhaul:
    /// rate_pico / rate_macro - rate_pico / backhaul.
    pub rho_uncached: f64,
}

/// One weighted Monte Carlo sample of the traffic density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub position: Point,
    /// Arrival mass carried by the point, files/sec.
    pub weight: f64,
    /// Macro downlink rate at the point, files/sec/Hz.
    pub rate_macro: f64,
    /// Pico attachment; absent for macro-only locations.
    pub pico: Option<PicoLink>,
}

/// Point indices of one pico cell with cached threshold orderings.
#[derive(Debug, Clone, Default)]
pub struct PicoIndex {
    /// Members in cloud order.
    pub members: Vec<usize>,
    /// Members sorted by rho_cached descending (ties: larger macro-time
    /// saving first, then lower index).
    pub by_rho_cached: Vec<usize>,
    /// Members sorted by rho_uncached descending (same tie rule).
    pub by_rho_uncached: Vec<usize>,
}

/// Per-pico outcome of the backhaul-dominance check.
#[derive(Debug, Clone, Copy)]
pub struct BackhaulCheck {
    pub pico: usize,
    pub backhaul_rate: f64,
    /// Largest macro rate among the cell's sampled locations.
    pub max_rate_macro: f64,
    /// Locations whose macro rate is at least the backhaul rate; such
    /// locations are never served over the backhaul.
    pub violating_points: usize,
}

/// An immutable cloud of sample points with per-pico indices.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<SamplePoint>,
    pub per_pico: Vec<PicoIndex>,
    /// Backhaul rate per pico, files/sec/Hz.
    pub backhaul_rates: Vec<f64>,
    /// Indices of macro-only points.
    pub macro_only: Vec<usize>,
    pub backhaul_report: Vec<BackhaulCheck>,
}

impl PointCloud {
    pub fn pico_count(&self) -> usize {
        self.per_pico.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// Assemble a cloud from raw per-point data. Benefit ratios are computed
    /// here so every construction path shares one definition.
    pub fn from_parts(
        raw: Vec<(Point, f64, f64, Option<(usize, f64)>)>,
        backhaul_rates: Vec<f64>,
        strict_backhaul: bool,
    ) -> Result<Self> {
        let pico_count = backhaul_rates.len();
        for (l, &b) in backhaul_rates.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Validation(format!(
                    "backhaul rate of pico {l} must be positive and finite, got {b}"
                )));
            }
        }
        let mut points = Vec::with_capacity(raw.len());
        for (i, (position, weight, rate_macro, pico)) in raw.into_iter().enumerate() {
            if !(weight > 0.0) {
                return Err(Error::Validation(format!(
                    "point {i}: weight must be positive, got {weight}"
                )));
            }
            if !(rate_macro > 0.0) || !rate_macro.is_finite() {
                return Err(Error::Validation(format!(
                    "point {i}: macro rate must be positive and finite, got {rate_macro}"
                )));
            }
            let pico = match pico {
                None => None,
                Some((pico_id, rate_pico)) => {
                    if pico_id >= pico_count {
                        return Err(Error::Validation(format!(
                            "point {i}: pico id {pico_id} out of range for {pico_count} picos"
                        )));
                    }
                    if !(rate_pico > 0.0) || !rate_pico.is_finite() {
                        return Err(Error::Validation(format!(
                            "point {i}: pico rate must be positive and finite, got {rate_pico}"
                        )));
                    }
                    let ratio = rate_pico / rate_macro;
                    Some(PicoLink {
                        pico_id,
                        rate_pico,
                        rho_cached: ratio,
                        rho_uncached: ratio - rate_pico / backhaul_rates[pico_id],
                    })
                }
            };
            points.push(SamplePoint {
                position,
                weight,
                rate_macro,
                pico,
            });
        }

        let mut per_pico = vec![PicoIndex::default(); pico_count];
        let mut macro_only = Vec::new();
        for (i, p) in points.iter().enumerate() {
            match &p.pico {
                Some(link) => per_pico[link.pico_id].members.push(i),
                None => macro_only.push(i),
            }
        }
        for (l, index) in per_pico.iter_mut().enumerate() {
            let b = backhaul_rates[l];
            // tie rule: higher ratio first, then larger saving, then index
            let mut cached = index.members.clone();
            cached.sort_by(|&a, &c| {
                let (pa, pc) = (&points[a], &points[c]);
                let (la, lc) = (pa.pico.as_ref().unwrap(), pc.pico.as_ref().unwrap());
                lc.rho_cached
                    .partial_cmp(&la.rho_cached)
                    .unwrap()
                    .then_with(|| {
                        let sa = pa.weight / pa.rate_macro;
                        let sc = pc.weight / pc.rate_macro;
                        sc.partial_cmp(&sa).unwrap()
                    })
                    .then(a.cmp(&c))
            });
            let mut uncached = index.members.clone();
            uncached.sort_by(|&a, &c| {
                let (pa, pc) = (&points[a], &points[c]);
                let (la, lc) = (pa.pico.as_ref().unwrap(), pc.pico.as_ref().unwrap());
                lc.rho_uncached
                    .partial_cmp(&la.rho_uncached)
                    .unwrap()
                    .then_with(|| {
                        let sa = pa.weight * (1.0 / pa.rate_macro - 1.0 / b);
                        let sc = pc.weight * (1.0 / pc.rate_macro - 1.0 / b);
                        sc.partial_cmp(&sa).unwrap()
                    })
                    .then(a.cmp(&c))
            });
            index.by_rho_cached = cached;
            index.by_rho_uncached = uncached;
        }

        let backhaul_report: Vec<BackhaulCheck> = (0..pico_count)
            .map(|l| {
                let mut max_rate_macro = 0.0f64;
                let mut violating = 0usize;
                for &i in &per_pico[l].members {
                    let r0 = points[i].rate_macro;
                    max_rate_macro = max_rate_macro.max(r0);
                    if r0 >= backhaul_rates[l] {
                        violating += 1;
                    }
                }
                BackhaulCheck {
                    pico: l,
                    backhaul_rate: backhaul_rates[l],
                    max_rate_macro,
                    violating_points: violating,
                }
            })
            .collect();

        if strict_backhaul {
            for check in &backhaul_report {
                if check.violating_points > 0 {
                    return Err(Error::Assumption(format!(
                        "pico {}: backhaul rate {:.6e} does not exceed the macro rate at {} \
                         sampled locations (max macro rate {:.6e})",
                        check.pico,
                        check.backhaul_rate,
                        check.violating_points,
                        check.max_rate_macro
                    )));
                }
            }
        }

        Ok(Self {
            points,
            per_pico,
            backhaul_rates,
            macro_only,
            backhaul_report,
        })
    }

    // -----------------------------------------------------------------------
    // Columnar CSV dump/load for debugging and cross-implementation diffing
    // -----------------------------------------------------------------------

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,pico_id,w,r0,rl,rho0,rho1")?;
        for p in &self.points {
            match &p.pico {
                Some(link) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    p.position.x,
                    p.position.y,
                    link.pico_id,
                    p.weight,
                    p.rate_macro,
                    link.rate_pico,
                    link.rho_uncached,
                    link.rho_cached
                )?,
                None => writeln!(
                    out,
                    "{},{},,{},{},,,",
                    p.position.x, p.position.y, p.weight, p.rate_macro
                )?,
            }
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty cloud file".into()))?
            .map_err(Error::Io)?;
        if header.trim() != "x,y,pico_id,w,r0,rl,rho0,rho1" {
            return Err(Error::Parse(format!("unexpected cloud header: {header}")));
        }
        let mut raw = Vec::new();
        let mut pico_rho: Vec<Option<(f64, f64, f64)>> = Vec::new();
        let mut max_pico: Option<usize> = None;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse(format!(
                    "line {}: expected 8 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let num = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: bad {name} value {s:?}", lineno + 2))
                })
            };
            let x = num(fields[0], "x")?;
            let y = num(fields[1], "y")?;
            let w = num(fields[3], "w")?;
            let r0 = num(fields[4], "r0")?;
            if fields[2].is_empty() {
                raw.push((Point::new(x, y), w, r0, None));
                pico_rho.push(None);
            } else {
                let id: usize = fields[2].parse().map_err(|_| {
                    Error::Parse(format!("line {}: bad pico_id {:?}", lineno + 2, fields[2]))
                })?;
                let rl = num(fields[5], "rl")?;
                let rho0 = num(fields[6], "rho0")?;
                let rho1 = num(fields[7], "rho1")?;
                max_pico = Some(max_pico.map_or(id, |m| m.max(id)));
                raw.push((Point::new(x, y), w, r0, Some((id, rl))));
                pico_rho.push(Some((rl, rho0, rho1)));
            }
        }
        // Recover the per-pico backhaul rate from the ratio gap of the first
        // point in each cell: rho1 - rho0 = rl / B.
        let pico_count = max_pico.map_or(0, |m| m + 1);
        let mut backhaul = vec![f64::NAN; pico_count];
        for (i, entry) in pico_rho.iter().enumerate() {
            if let Some((rl, rho0, rho1)) = entry {
                let id = match raw[i].3 {
                    Some((id, _)) => id,
                    None => continue,
                };
                let gap = rho1 - rho0;
                if !(gap > 0.0) {
                    return Err(Error::Parse(format!(
                        "point {i}: rho1 must exceed rho0 for pico points"
                    )));
                }
                let b = rl / gap;
                if backhaul[id].is_nan() {
                    backhaul[id] = b;
                } else if ((backhaul[id] - b) / backhaul[id]).abs() > 1e-9 {
                    return Err(Error::Parse(format!(
                        "point {i}: inconsistent backhaul rate for pico {id}"
                    )));
                }
            }
        }
        if backhaul.iter().any(|b| b.is_nan()) {
            return Err(Error::Parse(
                "a pico id appears without any sample points".into(),
            ));
        }
        Self::from_parts(raw, backhaul, false)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

// ---------------------------------------------------------------------------
// Cloud generation
// ---------------------------------------------------------------------------

/// Draw the Monte Carlo point cloud of a scenario.
///
/// Each point gets its own ChaCha8 substream derived from (seed, point
/// index), so generation is reproducible point-for-point and could be
/// parallelized without changing the result. A point first draws its region
/// (one of the hotspots or the outside area), then rejection-samples a
/// uniform location in that region against the exclusion zones.
pub fn generate_cloud(cfg: &ScenarioConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let g = &cfg.geometry;
    let pico_count = cfg.pico_count();
    let m = cfg.simulation.sample_count;
    let weight = cfg.traffic.arrival_rate / m as f64;

    let backhaul: Vec<f64> = (0..pico_count)
        .map(|l| cfg.backhaul_rate(l))
        .collect::<Result<_>>()?;

    // cumulative region distribution: hotspots first, outside last
    let mut cum = Vec::with_capacity(pico_count + 1);
    let mut acc = 0.0;
    for &p in &cfg.traffic.hotspot_probs {
        acc += p;
        cum.push(acc);
    }
    acc += cfg.traffic.outside_prob;
    cum.push(acc);

    let mut raw = Vec::with_capacity(m);
    for idx in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.simulation.rng_seed);
        rng.set_stream(idx as u64);

        let u: f64 = rng.gen::<f64>() * acc;
        let region = cum.iter().position(|&c| u < c).unwrap_or(pico_count);

        let position = sample_region(cfg, region, &mut rng)?;
        let pico_id = match g.coverage_mode {
            CoverageMode::VoronoiFull => nearest_pico(cfg, position),
            CoverageMode::HotspotOnly => {
                if region < pico_count {
                    Some(region)
                } else {
                    None
                }
            }
        };
        let rate_macro = cfg.rate_macro(position)?;
        let pico = match pico_id {
            Some(l) => Some((l, cfg.rate_pico(l, position)?)),
            None => None,
        };
        raw.push((position, weight, rate_macro, pico));
    }

    PointCloud::from_parts(raw, backhaul, cfg.simulation.strict_backhaul)
}

fn nearest_pico(cfg: &ScenarioConfig, p: Point) -> Option<usize> {
    cfg.geometry
        .pico_sites
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            p.distance(a.position)
                .partial_cmp(&p.distance(b.position))
                .unwrap()
        })
        .map(|(l, _)| l)
}

/// Uniform sample in region `region` (a hotspot index, or `pico_count` for
/// the outside area), rejected against the exclusion zones.
fn sample_region(cfg: &ScenarioConfig, region: usize, rng: &mut ChaCha8Rng) -> Result<Point> {
    let g = &cfg.geometry;
    let pico_count = g.pico_sites.len();
    for _ in 0..MAX_REJECTIONS {
        let candidate = if region < pico_count {
            let site = &g.pico_sites[region];
            uniform_in_disc(site.position, site.hotspot_radius_m, rng)
        } else {
            uniform_in_disc(Point::new(0.0, 0.0), g.macro_radius_m, rng)
        };
        if accept(cfg, region, candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::Geometry(format!(
        "gave up placing a point in region {region} after {MAX_REJECTIONS} rejections; \
         the region is degenerate"
    )))
}

fn accept(cfg: &ScenarioConfig, region: usize, p: Point) -> bool {
    let g = &cfg.geometry;
    let d_macro = p.norm();
    if d_macro > g.macro_radius_m || d_macro <= g.macro_exclusion_m {
        return false;
    }
    for site in &g.pico_sites {
        if p.distance(site.position) <= g.pico_exclusion_m {
            return false;
        }
    }
    if region == g.pico_sites.len() {
        // outside area: reject anything inside a hotspot
        for site in &g.pico_sites {
            if p.distance(site.position) <= site.hotspot_radius_m {
                return false;
            }
        }
    }
    true
}

fn uniform_in_disc(centre: Point, radius: f64, rng: &mut ChaCha8Rng) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = TAU * rng.gen::<f64>();
    Point::new(centre.x + r * theta.cos(), centre.y + r * theta.sin())
}

// ---------------------------------------------------------------------------
// Spatial integrals as weighted sums
// ---------------------------------------------------------------------------

/// Sum of weight * integrand over the selected points.
pub fn integrate<S, F>(cloud: &PointCloud, selector: S, integrand: F) -> f64
where
    S: Fn(&SamplePoint) -> bool,
    F: Fn(&SamplePoint) -> f64,
{
    cloud
        .points
        .iter()
        .filter(|p| selector(p))
        .map(|p| p.weight * integrand(p))
        .sum()
}

/// Macro time per second needed to serve the macro-only locations.
pub fn tau_zero(cloud: &PointCloud, bandwidth_hz: f64) -> f64 {
    cloud
        .macro_only
        .iter()
        .map(|&i| {
            let p = &cloud.points[i];
            p.weight / (bandwidth_hz * p.rate_macro)
        })
        .sum()
}

/// Pico time per second for pico `l` to carry all traffic in its cell.
pub fn full_load(cloud: &PointCloud, l: usize, bandwidth_hz: f64) -> Result<f64> {
    let index = cloud
        .per_pico
        .get(l)
        .ok_or_else(|| Error::Domain(format!("pico index {l} out of range")))?;
    if index.members.is_empty() {
        return Err(Error::Validation(format!(
            "pico {l} has no sample points; the scenario is degenerate"
        )));
    }
    Ok(index
        .members
        .iter()
        .map(|&i| {
            let p = &cloud.points[i];
            p.weight / (bandwidth_hz * p.pico.as_ref().unwrap().rate_pico)
        })
        .sum())
}

/// Largest full load over all picos.
pub fn max_full_load(cloud: &PointCloud, bandwidth_hz: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for l in 0..cloud.pico_count() {
        best = best.max(full_load(cloud, l, bandwidth_hz)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Geometry, PicoSite, Radio, Resources, Simulation, Traffic};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn small_config(mode: CoverageMode, samples: usize) -> ScenarioConfig {
        ScenarioConfig {
            geometry: Geometry {
                macro_radius_m: 1000.0,
                pico_sites: vec![
                    PicoSite {
                        position: Point::new(450.0, 0.0),
                        hotspot_radius_m: 150.0,
                    },
                    PicoSite {
                        position: Point::new(-225.0, -390.0),
                        hotspot_radius_m: 150.0,
                    },
                    PicoSite {
                        position: Point::new(-225.0, 390.0),
                        hotspot_radius_m: 150.0,
                    },
                ],
                macro_exclusion_m: 35.0,
                pico_exclusion_m: 10.0,
                coverage_mode: mode,
            },
            radio: Radio {
                macro_tx_dbm: 46.0,
                pico_tx_dbm: 30.0,
                macro_ms_gain_dbi: 14.0,
                pico_ms_gain_dbi: 5.0,
                macro_pico_gain_dbi: 17.0,
                noise_dbm: -104.0,
            },
            traffic: Traffic {
                n_files: 1000,
                file_size_bits: 4.0e6,
                arrival_rate: 1.0,
                zipf_gamma: 0.8,
                popularity: None,
                hotspot_probs: vec![0.8 / 3.0; 3],
                outside_prob: 0.2,
            },
            resources: Resources {
                bandwidth_hz: 1.0e6,
                cache_sizes: vec![200.0; 3],
            },
            simulation: Simulation {
                sample_count: samples,
                rng_seed: 11,
                strict_backhaul: false,
            },
        }
    }

    /// Synthetic two-point cell used by hand-value tests.
    fn two_point_cloud() -> PointCloud {
        // rates chosen so w/(W*rl) is 0.5 and 0.25 at W = 1
        let raw = vec![
            (Point::new(0.0, 0.0), 1.0, 1.0, Some((0, 2.0))),
            (Point::new(1.0, 0.0), 1.0, 1.0, Some((0, 4.0))),
        ];
        PointCloud::from_parts(raw, vec![8.0], true).unwrap()
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let cfg = small_config(CoverageMode::VoronoiFull, 500);
        let a = generate_cloud(&cfg).unwrap();
        let b = generate_cloud(&cfg).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(pa, pb, "clouds must match point for point");
        }
        let mut cfg2 = cfg;
        cfg2.simulation.rng_seed = 12;
        let c = generate_cloud(&cfg2).unwrap();
        assert!(a.points.iter().zip(&c.points).any(|(x, y)| x != y));
    }

    #[test]
    fn weights_sum_to_arrival_rate() {
        let cfg = small_config(CoverageMode::VoronoiFull, 777);
        let cloud = generate_cloud(&cfg).unwrap();
        let total = cloud.total_weight();
        assert!(
            close(total, 1.0, 1e-9),
            "weights must sum to the arrival rate, got {total}"
        );
    }

    #[test]
    fn exclusion_zones_are_respected() {
        let cfg = small_config(CoverageMode::VoronoiFull, 2000);
        let cloud = generate_cloud(&cfg).unwrap();
        for p in &cloud.points {
            let d = p.position.norm();
            assert!(d > 35.0 && d <= 1000.0, "point at {d} m from macro");
            for site in &cfg.geometry.pico_sites {
                assert!(p.position.distance(site.position) > 10.0);
            }
        }
    }

    #[test]
    fn voronoi_assignment_is_nearest_pico() {
        let cfg = small_config(CoverageMode::VoronoiFull, 1000);
        let cloud = generate_cloud(&cfg).unwrap();
        for p in &cloud.points {
            let assigned = p.pico.as_ref().unwrap().pico_id;
            let nearest = cfg
                .geometry
                .pico_sites
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    p.position
                        .distance(a.position)
                        .partial_cmp(&p.position.distance(b.position))
                        .unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(assigned, nearest);
        }
        assert!(cloud.macro_only.is_empty(), "no macro-only users expected");
    }

    #[test]
    fn hotspot_only_leaves_outside_points_on_the_macro() {
        let cfg = small_config(CoverageMode::HotspotOnly, 3000);
        let cloud = generate_cloud(&cfg).unwrap();
        assert!(!cloud.macro_only.is_empty());
        for p in &cloud.points {
            match &p.pico {
                Some(link) => {
                    let site = &cfg.geometry.pico_sites[link.pico_id];
                    assert!(p.position.distance(site.position) <= site.hotspot_radius_m);
                }
                None => {
                    for site in &cfg.geometry.pico_sites {
                        assert!(p.position.distance(site.position) > site.hotspot_radius_m);
                    }
                }
            }
        }
        let t0 = tau_zero(&cloud, cfg.resources.bandwidth_hz);
        assert!(t0 > 0.0, "macro-only mass must cost macro time, got {t0}");
    }

    #[test]
    fn region_masses_match_probabilities() {
        let cfg = small_config(CoverageMode::VoronoiFull, 60_000);
        let cloud = generate_cloud(&cfg).unwrap();
        for (l, site) in cfg.geometry.pico_sites.iter().enumerate() {
            let in_hotspot = cloud
                .points
                .iter()
                .filter(|p| p.position.distance(site.position) <= site.hotspot_radius_m)
                .count() as f64
                / cloud.points.len() as f64;
            let expect = cfg.traffic.hotspot_probs[l];
            // 4 sigma of a binomial share
            let sigma = (expect * (1.0 - expect) / cloud.points.len() as f64).sqrt();
            assert!(
                (in_hotspot - expect).abs() < 4.0 * sigma + 1e-3,
                "hotspot {l}: share {in_hotspot} vs probability {expect}"
            );
        }
    }

    #[test]
    fn single_pico_full_coverage_attaches_everything() {
        let mut cfg = small_config(CoverageMode::VoronoiFull, 400);
        cfg.geometry.pico_sites.truncate(1);
        cfg.traffic.hotspot_probs = vec![1.0];
        cfg.traffic.outside_prob = 0.0;
        cfg.resources.cache_sizes.truncate(1);
        let cloud = generate_cloud(&cfg).unwrap();
        assert!(cloud
            .points
            .iter()
            .all(|p| p.pico.as_ref().is_some_and(|l| l.pico_id == 0)));
    }

    #[test]
    fn benefit_ratios_ordered_and_positive_when_dominant() {
        let cfg = small_config(CoverageMode::VoronoiFull, 5000);
        let cloud = generate_cloud(&cfg).unwrap();
        for p in &cloud.points {
            let link = p.pico.as_ref().unwrap();
            assert!(
                link.rho_uncached < link.rho_cached,
                "backhaul must cost some of the ratio"
            );
        }
        // the reference geometry violates dominance near the macro BS
        let violations: usize = cloud
            .backhaul_report
            .iter()
            .map(|c| c.violating_points)
            .sum();
        assert!(violations > 0);
        for p in &cloud.points {
            let link = p.pico.as_ref().unwrap();
            if p.rate_macro < cloud.backhaul_rates[link.pico_id] {
                assert!(link.rho_uncached > 0.0);
            }
        }
    }

    #[test]
    fn strict_backhaul_rejects_violating_scenarios() {
        let mut cfg = small_config(CoverageMode::VoronoiFull, 3000);
        cfg.simulation.strict_backhaul = true;
        let err = generate_cloud(&cfg).unwrap_err();
        assert!(
            matches!(&err, Error::Assumption(m) if m.contains("pico")),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn integrate_constant_and_empty_selector() {
        let cfg = small_config(CoverageMode::VoronoiFull, 800);
        let cloud = generate_cloud(&cfg).unwrap();
        let mass = integrate(&cloud, |_| true, |_| 1.0);
        assert!(close(mass, 1.0, 1e-9), "got {mass}");
        let nothing = integrate(&cloud, |_| false, |_| 1.0);
        assert_eq!(nothing, 0.0);
    }

    #[test]
    fn integrate_reproduces_full_load() {
        let cfg = small_config(CoverageMode::VoronoiFull, 800);
        let w = cfg.resources.bandwidth_hz;
        let cloud = generate_cloud(&cfg).unwrap();
        for l in 0..3 {
            let direct = full_load(&cloud, l, w).unwrap();
            let general = integrate(
                &cloud,
                |p| p.pico.as_ref().is_some_and(|x| x.pico_id == l),
                |p| 1.0 / (w * p.pico.as_ref().unwrap().rate_pico),
            );
            assert!(close(direct, general, 1e-15 + 1e-12 * direct));
        }
    }

    #[test]
    fn tau_zero_is_zero_under_voronoi() {
        let cfg = small_config(CoverageMode::VoronoiFull, 300);
        let cloud = generate_cloud(&cfg).unwrap();
        assert_eq!(tau_zero(&cloud, 1.0e6), 0.0);
    }

    #[test]
    fn tau_zero_single_point_hand_value() {
        let raw = vec![
            (Point::new(0.0, 0.0), 1.0, 2.0, None),
            (Point::new(1.0, 0.0), 1.0, 1.0, Some((0, 1.0))),
        ];
        let cloud = PointCloud::from_parts(raw, vec![10.0], true).unwrap();
        // w / (W * r0) = 1 / (1 * 2) = 0.5
        assert!(close(tau_zero(&cloud, 1.0), 0.5, 1e-15));
    }

    #[test]
    fn full_load_hand_value_and_scaling() {
        let cloud = two_point_cloud();
        let fl = full_load(&cloud, 0, 1.0).unwrap();
        assert!(close(fl, 0.75, 1e-15), "expected 0.75, got {fl}");
        let fl2 = full_load(&cloud, 0, 2.0).unwrap();
        assert!(close(fl2, fl / 2.0, 1e-18), "doubling W must halve the load");
    }

    #[test]
    fn full_load_errors_on_empty_pico() {
        let raw = vec![(Point::new(1.0, 0.0), 1.0, 1.0, Some((0, 1.0)))];
        let cloud = PointCloud::from_parts(raw, vec![10.0, 10.0], true).unwrap();
        assert!(matches!(
            full_load(&cloud, 1, 1.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn homogeneous_full_loads_agree() {
        let cfg = small_config(CoverageMode::VoronoiFull, 100_000);
        let w = cfg.resources.bandwidth_hz;
        let cloud = generate_cloud(&cfg).unwrap();
        let loads: Vec<f64> = (0..3).map(|l| full_load(&cloud, l, w).unwrap()).collect();
        let max = loads.iter().cloned().fold(f64::MIN, f64::max);
        let min = loads.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            (max - min) / max < 0.02,
            "symmetric cells must have near-equal full loads: {loads:?}"
        );
    }

    #[test]
    fn rejection_gives_geometry_error_on_degenerate_region() {
        // A hotspot drowned in the macro exclusion zone is impossible to
        // validate into existence, so drive the sampler directly instead.
        let mut cfg = small_config(CoverageMode::VoronoiFull, 10);
        cfg.geometry.macro_radius_m = 460.0;
        // hotspot of pico 0 pokes outside the shrunk disc only partially;
        // shrink further so it is fully outside
        cfg.geometry.pico_sites[0].position = Point::new(440.0, 0.0);
        cfg.geometry.macro_radius_m = 445.0;
        cfg.geometry.pico_sites.truncate(1);
        cfg.traffic.hotspot_probs = vec![1.0];
        cfg.traffic.outside_prob = 0.0;
        cfg.resources.cache_sizes.truncate(1);
        // hotspot centre 440, radius 150: nearly all of the hotspot lies
        // outside the 445 m disc, but some sliver remains, so sampling works
        let ok = generate_cloud(&cfg);
        assert!(ok.is_ok());

        // now a region that is truly empty: hotspot fully inside the pico
        // exclusion cannot be configured (validated), so exercise the bound
        // via a zero-probability trick is impossible too; call the sampler
        // with an acceptance that never fires by shrinking the macro disc
        // below the hotspot entirely.
        cfg.geometry.macro_radius_m = 260.0;
        cfg.geometry.pico_sites[0].position = Point::new(255.0, 0.0);
        // hotspot spans [105, 405] but the disc ends at 260 with exclusion
        // 35; the overlap is nonempty, so this still works. Degenerate
        // regions therefore need the direct path:
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bad = cfg.clone();
        bad.geometry.pico_sites[0].position = Point::new(600.0, 0.0);
        // skip validation: hotspot entirely outside the macro disc
        let err = sample_region(&bad, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn csv_round_trip_preserves_cloud() {
        let cfg = small_config(CoverageMode::HotspotOnly, 300);
        let cloud = generate_cloud(&cfg).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let back = PointCloud::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(cloud.points.len(), back.points.len());
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert!(close(a.weight, b.weight, 0.0));
            assert!(close(a.rate_macro, b.rate_macro, 0.0));
            match (&a.pico, &b.pico) {
                (Some(x), Some(y)) => {
                    assert_eq!(x.pico_id, y.pico_id);
                    assert!(close(x.rate_pico, y.rate_pico, 0.0));
                    assert!(close(x.rho_cached, y.rho_cached, 1e-12 * x.rho_cached.abs()));
                }
                (None, None) => {}
                _ => panic!("pico attachment changed in round trip"),
            }
        }
        for (a, b) in cloud.backhaul_rates.iter().zip(&back.backhaul_rates) {
            assert!(close(*a, *b, 1e-9 * a.abs()));
        }
    }
}
