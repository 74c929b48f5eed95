//! Monte Carlo estimators for mixing quantities beyond exact-enumeration sizes.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{cftp, coalescence_time, EventStream, ExtremePair, DEFAULT_MAX_DOUBLINGS};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, render_svg_chart, CsvTable, Series};
use crate::lattice::{Region, SpinConfiguration, TorusGeometry};
use crate::model::{gibbs_log_weight, gibbs_table, monotone_order, Family, ModelSpec, RateRule};
use crate::oracle::{build_generator, spectral_gap_exact, GENERATOR_CAP};
use crate::rng::{rng_from_seed, split_seed_tagged};

/// An estimated curve with per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub replicas: usize,
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("time grid must be nonempty, finite, nonnegative and increasing".into()));
    }
    Ok(())
}

/// P(extreme chains not coalesced by t), an upper bound on the worst-start
/// total-variation distance at every grid time.
pub fn tv_upper_via_coalescence(
    m: &ModelSpec,
    g: &TorusGeometry,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<BoundCurve> {
    check_grid(times)?;
    monotone_order(m, g)?;
    let horizon = *times.last().unwrap();
    let taus: Vec<Option<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| coalescence_time(m, g, split_seed_tagged(seed, "coalescence", r as u64), horizon))
        .collect::<Result<_>>()?;
    let n = replicas.max(1) as f64;
    let mut values = Vec::with_capacity(times.len());
    let mut se = Vec::with_capacity(times.len());
    for &t in times {
        let open = taus.iter().filter(|tau| tau.is_none_or(|x| x > t)).count() as f64 / n;
        values.push(open);
        se.push((open * (1.0 - open) / n).sqrt());
    }
    Ok(BoundCurve { times: times.to_vec(), values, se, replicas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Magnetization,
    /// Independent boxes on `blocks_per_axis^d` tori of side n / blocks_per_axis.
    ProductBlocks { blocks_per_axis: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    pub se: f64,
    /// Plug-in value before any bias correction.
    pub raw: f64,
    /// Too few replicas for a standard error below 0.05.
    pub insufficient: bool,
}

/// Extreme start used by lower bounds: the top of the monotone order, or all-plus.
pub fn reference_start(m: &ModelSpec, g: &TorusGeometry) -> SpinConfiguration {
    match monotone_order(m, g) {
        Ok(order) => order.top(g.n_sites()),
        Err(_) => SpinConfiguration::all_plus(g.n_sites()),
    }
}

/// Exact stationary samples: CFTP when monotone, else drawn from the Gibbs table.
pub fn stationary_samples(m: &ModelSpec, g: &TorusGeometry, count: usize, seed: u64) -> Result<Vec<SpinConfiguration>> {
    if monotone_order(m, g).is_ok() {
        return (0..count)
            .into_par_iter()
            .map(|r| Ok(cftp(m, g, split_seed_tagged(seed, "stationary", r as u64), DEFAULT_MAX_DOUBLINGS, None)?.sample))
            .collect();
    }
    let table = gibbs_table(m, g)?;
    let cdf = cumulative(table.probs());
    let n = g.n_sites();
    Ok((0..count)
        .map(|r| {
            let mut rng = rng_from_seed(split_seed_tagged(seed, "stationary", r as u64));
            SpinConfiguration::from_index(n, draw(&cdf, rng.random()) as u64)
        })
        .collect())
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = p.iter().map(|x| { acc += x; acc }).collect();
    if let Some(last) = cdf.last_mut() {
        *last = f64::INFINITY;
    }
    cdf
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Binned two-sample TV with the half-normal bias of the plug-in removed.
/// Returns (corrected, se, raw).
pub fn binned_tv(a: &[i64], b: &[i64]) -> (f64, f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (0.0, f64::INFINITY, 0.0);
    }
    let distinct: BTreeSet<i64> = a.iter().chain(b).copied().collect();
    let edges: Vec<i64> = if distinct.len() <= 40 {
        distinct.iter().skip(1).copied().collect()
    } else {
        let mut pooled: Vec<i64> = a.iter().chain(b).copied().collect();
        pooled.sort_unstable();
        let r = a.len().min(b.len()) as f64;
        let k = ((2.0 * r.cbrt()).ceil() as usize).clamp(8, 64);
        let mut e: Vec<i64> = (1..k).map(|j| pooled[j * pooled.len() / k]).collect();
        e.dedup();
        e
    };
    let bins = edges.len() + 1;
    let bin = |v: i64| edges.partition_point(|&e| e <= v);
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for &v in a {
        pa[bin(v)] += 1.0;
    }
    for &v in b {
        pb[bin(v)] += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    pa.iter_mut().for_each(|x| *x /= na);
    pb.iter_mut().for_each(|x| *x /= nb);
    let mut raw = 0.0;
    let mut bias = 0.0;
    let mut var = 0.0;
    for k in 0..bins {
        raw += 0.5 * (pa[k] - pb[k]).abs();
        let s2 = pa[k] * (1.0 - pa[k]) / na + pb[k] * (1.0 - pb[k]) / nb;
        bias += 0.5 * (2.0 / std::f64::consts::PI).sqrt() * s2.sqrt();
        var += s2;
    }
    ((raw - bias).max(0.0), 0.5 * var.sqrt(), raw)
}

/// Snapshots of a chain started at `start` at each grid time.
fn forward_snapshots(
    m: &ModelSpec,
    g: &TorusGeometry,
    start: &SpinConfiguration,
    times: &[f64],
    seed: u64,
    mut record: impl FnMut(usize, &SpinConfiguration),
) {
    let kernel = m.kernel(g.degree());
    let mut state = start.clone();
    let mut k = 0;
    while k < times.len() && times[k] <= 0.0 {
        record(k, &state);
        k += 1;
    }
    for e in EventStream::new(g.n_sites(), seed) {
        while k < times.len() && e.time > times[k] {
            record(k, &state);
            k += 1;
        }
        if k == times.len() {
            break;
        }
        kernel.apply(g, &mut state, e.site as usize, e.u);
    }
}

/// Magnetization lower bound at every grid time from the reference start.
pub fn tv_lower_magnetization_curve(
    m: &ModelSpec,
    g: &TorusGeometry,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<BoundCurve> {
    check_grid(times)?;
    let start = reference_start(m, g);
    let stationary: Vec<i64> = stationary_samples(m, g, replicas, seed)?
        .iter()
        .map(|s| s.count_plus() as i64)
        .collect();
    let forward: Vec<Vec<i64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut out = vec![0i64; times.len()];
            forward_snapshots(m, g, &start, times, split_seed_tagged(seed, "forward", r as u64), |k, s| {
                out[k] = s.count_plus() as i64
            });
            out
        })
        .collect();
    let mut values = Vec::new();
    let mut se = Vec::new();
    for k in 0..times.len() {
        let column: Vec<i64> = forward.iter().map(|row| row[k]).collect();
        let (v, s, _) = binned_tv(&column, &stationary);
        values.push(v);
        se.push(s);
    }
    Ok(BoundCurve { times: times.to_vec(), values, se, replicas })
}

/// Oracle ingredients of the product-block statistic: the projected kernel
/// from the reference start and the projected stationary law on the central box.
#[derive(Debug, Clone)]
pub struct BlockLaw {
    pub torus_side: usize,
    pub box_sites: Region,
    pub kernel: Vec<f64>,
    pub stationary: Vec<f64>,
}

impl BlockLaw {
    pub fn exact_tv(&self) -> f64 {
        0.5 * self.kernel.iter().zip(&self.stationary).map(|(p, q)| (p - q).abs()).sum::<f64>()
    }
}

/// Central box of side ⌊2r/3⌋ on the r-torus.
pub fn central_box(torus: &TorusGeometry) -> Region {
    let r = torus.sides()[0];
    let a = (2 * r / 3).max(1);
    let off = (r - a) / 2;
    let d = torus.dimension();
    let mut sites: Vec<usize> = (0..torus.n_sites())
        .filter(|&s| (0..d).all(|ax| (off..off + a).contains(&torus.coord(s, ax))))
        .collect();
    sites.sort_unstable();
    Region::new(sites, torus.n_sites()).expect("box sites are valid")
}

pub fn block_laws(m: &ModelSpec, torus: &TorusGeometry, times: &[f64]) -> Result<Vec<BlockLaw>> {
    let l = build_generator(m, torus)?;
    let (_, spec) = spectral_gap_exact(&l)?;
    let b = central_box(torus);
    let start = reference_start(m, torus);
    let x = spec
        .state_index(&start)
        .ok_or_else(|| Error::InvalidArgument("reference start is outside the state space".into()))?;
    let cells = 1usize << b.len();
    let proj: Vec<usize> = spec
        .labels()
        .iter()
        .map(|&lab| b.sites().iter().enumerate().fold(0usize, |acc, (k, &s)| acc | ((((lab >> s) & 1) as usize) << k)))
        .collect();
    let mut stationary = vec![0.0; cells];
    for (i, &c) in proj.iter().enumerate() {
        stationary[c] += spec.stationary()[i];
    }
    times
        .iter()
        .map(|&t| {
            let row = spec.heat_kernel_row_index(x, t)?;
            let mut kernel = vec![0.0; cells];
            for (i, &c) in proj.iter().enumerate() {
                kernel[c] += row[i];
            }
            Ok(BlockLaw { torus_side: torus.sides()[0], box_sites: b.clone(), kernel, stationary: stationary.clone() })
        })
        .collect()
}

/// Plug-in `E|exp(ΣZᵢ) − 1|⁻` over `blocks` independent boxes.
pub fn product_statistic(law: &BlockLaw, blocks: usize, replicas: usize, seed: u64) -> LowerBound {
    let cdf = cumulative(&law.stationary);
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(split_seed_tagged(seed, "product-blocks", r as u64));
            let mut z = 0.0;
            for _ in 0..blocks {
                let u = draw(&cdf, rng.random());
                let (p, q) = (law.kernel[u], law.stationary[u]);
                z += if p > 0.0 { (p / q).ln() } else { f64::NEG_INFINITY };
            }
            (1.0 - z.exp()).max(0.0)
        })
        .collect();
    let n = replicas.max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let se = (var / n).sqrt();
    LowerBound { value: mean, se, raw: mean, insufficient: se > 0.05 || replicas < 100 }
}

fn product_geometry(g: &TorusGeometry, blocks_per_axis: usize) -> Result<TorusGeometry> {
    let sides = g.sides();
    if blocks_per_axis == 0 || sides.iter().any(|&s| s != sides[0] || s % blocks_per_axis != 0) {
        return Err(Error::InvalidArgument("product blocks need a cube whose side is divisible by the block count".into()));
    }
    let r = sides[0] / blocks_per_axis;
    let torus = TorusGeometry::new(g.dimension(), &vec![r; g.dimension()])?;
    if torus.n_sites() > GENERATOR_CAP {
        return Err(Error::SizeCap { what: "product-block torus", size: torus.n_sites(), cap: GENERATOR_CAP });
    }
    Ok(torus)
}

pub fn tv_lower_curve(
    m: &ModelSpec,
    g: &TorusGeometry,
    times: &[f64],
    replicas: usize,
    statistic: Statistic,
    seed: u64,
) -> Result<BoundCurve> {
    match statistic {
        Statistic::Magnetization => tv_lower_magnetization_curve(m, g, times, replicas, seed),
        Statistic::ProductBlocks { blocks_per_axis } => {
            check_grid(times)?;
            let torus = product_geometry(g, blocks_per_axis)?;
            let blocks = blocks_per_axis.pow(g.dimension() as u32);
            let laws = block_laws(m, &torus, times)?;
            let mut values = Vec::new();
            let mut se = Vec::new();
            for (k, law) in laws.iter().enumerate() {
                let lb = product_statistic(law, blocks, replicas, split_seed_tagged(seed, "product-time", k as u64));
                values.push(lb.value);
                se.push(lb.se);
            }
            Ok(BoundCurve { times: times.to_vec(), values, se, replicas })
        }
    }
}

pub fn tv_lower_via_statistic(
    m: &ModelSpec,
    g: &TorusGeometry,
    t: f64,
    replicas: usize,
    statistic: Statistic,
    seed: u64,
) -> Result<LowerBound> {
    let curve = tv_lower_curve(m, g, &[t], replicas, statistic, seed)?;
    let raw = curve.values[0];
    Ok(LowerBound { value: curve.values[0], se: curve.se[0], raw, insufficient: curve.se[0] > 0.05 || replicas < 100 })
}

/// ξₜ: disagreement probability of the extreme chains at a site.
#[derive(Debug, Clone, PartialEq)]
pub struct XiCurve {
    pub side: usize,
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub se: Vec<f64>,
    pub replicas: usize,
    /// Disagreement could plausibly wrap around the torus within the horizon.
    pub wraparound_risk: bool,
    /// Means over disjoint replica batches, one row per batch; the points of
    /// one curve are correlated in t, so fit errors come from these.
    pub batches: Vec<Vec<f64>>,
}

const XI_BATCHES: usize = 20;

/// Expected number of update paths long enough to wrap around, by the
/// counting bound on chains of successive updates.
fn wrap_path_bound(g: &TorusGeometry, horizon: f64) -> f64 {
    let len = g.sides().iter().min().copied().unwrap_or(0) / 2;
    let z = 2.0 * g.dimension() as f64;
    // P(Poisson(horizon) ≥ len), summed in log space.
    let mut tail = 0.0;
    let mut term = (-horizon).exp();
    for k in 0..len + 60 {
        if k >= len {
            tail += term;
        }
        term *= horizon / (k + 1) as f64;
    }
    g.n_sites() as f64 * z.powi(len as i32) * tail
}

/// Site-averaged disagreement fraction between the extreme chains. Under the
/// monotone coupling the top chain dominates, so the indicator of
/// disagreement at o equals 1{σ⁺(o)=+} − 1{σ⁻(o)=+} and its mean is ξₜ.
pub fn xi_t_curve(m: &ModelSpec, g: &TorusGeometry, times: &[f64], replicas: usize, seed: u64) -> Result<XiCurve> {
    check_grid(times)?;
    let order = monotone_order(m, g)?;
    let n = g.n_sites() as f64;
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut pair = ExtremePair::new(m, g, &order);
            let mut out = vec![0.0; times.len()];
            let mut k = 0;
            while k < times.len() && times[k] <= 0.0 {
                out[k] = pair.disagreements() as f64 / n;
                k += 1;
            }
            for e in EventStream::new(g.n_sites(), split_seed_tagged(seed, "xi", r as u64)) {
                while k < times.len() && e.time > times[k] {
                    out[k] = pair.disagreements() as f64 / n;
                    k += 1;
                }
                if k == times.len() || pair.coalesced() {
                    break;
                }
                pair.step(e.site as usize, e.u);
            }
            out
        })
        .collect();
    let reps = replicas.max(1) as f64;
    let mut xi = Vec::new();
    let mut se = Vec::new();
    for k in 0..times.len() {
        let mean = rows.iter().map(|row| row[k]).sum::<f64>() / reps;
        let var = rows.iter().map(|row| (row[k] - mean).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
        xi.push(mean);
        se.push((var / reps).sqrt());
    }
    let batches = if replicas >= 10 * XI_BATCHES {
        let size = replicas / XI_BATCHES;
        rows.chunks_exact(size)
            .take(XI_BATCHES)
            .map(|chunk| (0..times.len()).map(|k| chunk.iter().map(|r| r[k]).sum::<f64>() / size as f64).collect())
            .collect()
    } else {
        Vec::new()
    };
    Ok(XiCurve {
        side: g.sides()[0],
        times: times.to_vec(),
        xi,
        se,
        replicas,
        wraparound_risk: wrap_path_bound(g, *times.last().unwrap()) > 0.01,
        batches,
    })
}

impl XiCurve {
    /// A noiseless curve, used for fitting checks.
    pub fn synthetic(times: &[f64], f: impl Fn(f64) -> f64) -> Self {
        XiCurve {
            side: 0,
            times: times.to_vec(),
            xi: times.iter().map(|&t| f(t)).collect(),
            se: vec![0.0; times.len()],
            replicas: 0,
            wraparound_risk: false,
            batches: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["t", "xi", "se"]);
        t.meta("side", self.side).meta("replicas", self.replicas);
        for k in 0..self.times.len() {
            t.rows.push(vec![fmt_f64(self.times[k]), fmt_f64(self.xi[k]), fmt_f64(self.se[k])]);
        }
        t
    }

    pub fn to_svg(&self) -> String {
        let pts = self.times.iter().zip(&self.xi).map(|(&t, &x)| (t, x)).collect();
        render_svg_chart(&format!("disagreement decay, side {}", self.side), "t", "xi_t", &[Series { label: "xi".into(), points: pts }], true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub side: usize,
    pub lambda_hat: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub se: f64,
    pub points: usize,
}

fn weighted_slope(points: &[(f64, f64, f64)]) -> (f64, f64, f64, f64) {
    // points: (t, log xi, weight). Returns (slope, intercept, slope se, rms residual).
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let tm = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - tm).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss: f64 = points.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let rms = (ss / sw).sqrt();
    (slope, intercept, (1.0 / sxx).sqrt(), rms)
}

/// Weighted least squares of log ξₜ against t; default window [2/λ₀, 6/λ₀]
/// around a pilot estimate λ₀ from every usable point.
pub fn gap_from_xi(curve: &XiCurve, window: Option<(f64, f64)>) -> Result<GapEstimate> {
    let noiseless = curve.se.iter().all(|&s| s == 0.0);
    let usable: Vec<(f64, f64, f64)> = (0..curve.times.len())
        .filter(|&k| curve.xi[k] > 0.0 && (noiseless || (curve.se[k] > 0.0 && curve.xi[k] > 5.0 * curve.se[k])))
        .map(|k| {
            let w = if noiseless { 1.0 } else { (curve.xi[k] / curve.se[k]).powi(2) };
            (curve.times[k], curve.xi[k].ln(), w)
        })
        .collect();
    if usable.len() < 4 {
        return Err(Error::Numerical(format!("only {} usable points (need 4 with ξ > 5 SE)", usable.len())));
    }
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let (slope, ..) = weighted_slope(&usable);
            let pilot = -slope;
            if !(pilot > 0.0) {
                return Err(Error::Numerical("pilot fit shows no decay".into()));
            }
            let max_t = usable.iter().map(|p| p.0).fold(0.0, f64::max);
            if max_t < 2.0 / pilot {
                return Err(Error::Numerical(format!(
                    "usable points end at t = {max_t}, below twice the relaxation time {:.3}",
                    1.0 / pilot
                )));
            }
            (2.0 / pilot, 6.0 / pilot)
        }
    };
    let inside: Vec<(f64, f64, f64)> = usable.iter().copied().filter(|p| p.0 >= lo && p.0 <= hi).collect();
    if inside.len() < 4 {
        return Err(Error::Numerical(format!("only {} usable points inside the window [{lo:.3}, {hi:.3}]", inside.len())));
    }
    let (slope, _, wls_se, rms) = weighted_slope(&inside);
    let lambda_hat = -slope;
    let batch_slopes: Vec<f64> = curve
        .batches
        .iter()
        .filter_map(|b| {
            let pts: Option<Vec<(f64, f64, f64)>> = inside
                .iter()
                .map(|p| {
                    let k = curve.times.iter().position(|&t| t == p.0).unwrap();
                    (b[k] > 0.0).then(|| (p.0, b[k].ln(), p.2))
                })
                .collect();
            pts.map(|pts| weighted_slope(&pts).0)
        })
        .collect();
    let se = if batch_slopes.len() >= 5 && batch_slopes.len() == curve.batches.len() {
        let k = batch_slopes.len() as f64;
        let mean = batch_slopes.iter().sum::<f64>() / k;
        (batch_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        wls_se
    };
    if !(lambda_hat > 0.0) {
        return Err(Error::Numerical("fitted slope is not decreasing".into()));
    }
    Ok(GapEstimate {
        side: curve.side,
        lambda_hat,
        window: (lo, hi),
        residual: rms,
        se: if noiseless { 0.0 } else { se },
        points: inside.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmMode {
    Oracle,
    MonteCarlo { replicas: usize, boundary_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmFit {
    pub distances: Vec<usize>,
    /// Largest influence observed at each distance.
    pub tv: Vec<f64>,
    pub se: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub residual: f64,
}

/// Graph distances from `y` travelling only through sites outside `boundary`.
fn distances_avoiding(g: &TorusGeometry, y: usize, boundary: &[bool]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n_sites()];
    dist[y] = 0;
    let mut queue = std::collections::VecDeque::from([y]);
    while let Some(u) = queue.pop_front() {
        for v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                if !boundary[v] {
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Exponential fit of the boundary-flip influence on sub-regions of Δ (Δ
/// itself and each of its sites), against the distance from the flipped site.
pub fn ssm_decay_fit(
    m: &ModelSpec,
    g: &TorusGeometry,
    delta: &Region,
    boundary: &Region,
    distance_grid: &[usize],
    mode: SsmMode,
) -> Result<SsmFit> {
    if delta.is_empty() || boundary.is_empty() || delta.sites().iter().any(|&v| boundary.contains(v)) {
        return Err(Error::InvalidArgument("Δ and the boundary must be nonempty and disjoint".into()));
    }
    let bmask = boundary.to_mask();
    let mut regions: Vec<Vec<usize>> = vec![delta.sites().to_vec()];
    if delta.len() > 1 {
        regions.extend(delta.sites().iter().map(|&v| vec![v]));
    }
    let dist: Vec<Vec<usize>> = boundary.sites().iter().map(|&y| distances_avoiding(g, y, &bmask)).collect();
    let region_dist = |yi: usize, reg: &[usize]| reg.iter().map(|&v| dist[yi][v]).min().unwrap();

    // (distance, tv, se) candidates.
    let mut found: Vec<(usize, f64, f64)> = Vec::new();
    match mode {
        SsmMode::Oracle => {
            let n = g.n_sites();
            if n > GENERATOR_CAP {
                return Err(Error::SizeCap { what: "strong spatial mixing oracle", size: n, cap: GENERATOR_CAP });
            }
            let bsites = boundary.sites();
            let n_tau = 1usize << bsites.len();
            let mut acc: Vec<Vec<f64>> = regions.iter().map(|r| vec![0.0; n_tau << r.len()]).collect();
            let logs: Vec<Option<f64>> = (0..1u64 << n)
                .map(|x| gibbs_log_weight(m, g, &SpinConfiguration::from_index(n, x)).finite())
                .collect();
            let top = logs.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            for (x, lw) in logs.iter().enumerate() {
                let Some(lw) = lw else { continue };
                let w = (lw - top).exp();
                let tau = bsites.iter().enumerate().fold(0usize, |a, (k, &s)| a | (((x >> s) & 1) << k));
                for (ri, reg) in regions.iter().enumerate() {
                    let cell = reg.iter().enumerate().fold(0usize, |a, (k, &s)| a | (((x >> s) & 1) << k));
                    acc[ri][(tau << reg.len()) | cell] += w;
                }
            }
            for (ri, reg) in regions.iter().enumerate() {
                let cells = 1usize << reg.len();
                let law = |tau: usize| -> Option<Vec<f64>> {
                    let slice = &acc[ri][tau * cells..(tau + 1) * cells];
                    let z: f64 = slice.iter().sum();
                    (z > 0.0).then(|| slice.iter().map(|v| v / z).collect())
                };
                for yi in 0..bsites.len() {
                    let d = region_dist(yi, reg);
                    let mut best: f64 = 0.0;
                    let mut any = false;
                    for tau in 0..n_tau {
                        if tau & (1 << yi) != 0 {
                            continue;
                        }
                        if let (Some(p), Some(q)) = (law(tau), law(tau | (1 << yi))) {
                            any = true;
                            best = best.max(0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>());
                        }
                    }
                    if any {
                        found.push((d, best, 0.0));
                    }
                }
            }
        }
        SsmMode::MonteCarlo { replicas, boundary_samples, seed } => {
            monotone_order(m, g)?;
            let bsites = boundary.sites();
            for (yi, &y) in bsites.iter().enumerate() {
                for j in 0..boundary_samples {
                    let mut rng = rng_from_seed(split_seed_tagged(seed, "ssm-boundary", (yi * boundary_samples + j) as u64));
                    let mut pins: Vec<Option<bool>> = vec![None; g.n_sites()];
                    for &s in bsites {
                        pins[s] = Some(if m.family == Family::Hardcore { false } else { rng.random() });
                    }
                    let mut marginals = Vec::new();
                    for flip in [false, true] {
                        let mut p = pins.clone();
                        if flip {
                            p[y] = Some(!p[y].unwrap());
                        }
                        let base = split_seed_tagged(seed, "ssm-cftp", (yi * boundary_samples + j) as u64);
                        let samples: Vec<SpinConfiguration> = (0..replicas)
                            .into_par_iter()
                            .map(|r| cftp(m, g, split_seed_tagged(base, if flip { "b" } else { "a" }, r as u64), DEFAULT_MAX_DOUBLINGS, Some(&p)).map(|o| o.sample))
                            .collect::<Result<_>>()?;
                        marginals.push(
                            delta
                                .sites()
                                .iter()
                                .map(|&v| samples.iter().filter(|s| s.get(v)).count() as f64 / replicas as f64)
                                .collect::<Vec<f64>>(),
                        );
                    }
                    for (k, &v) in delta.sites().iter().enumerate() {
                        let (p, q) = (marginals[0][k], marginals[1][k]);
                        let se = ((p * (1.0 - p) + q * (1.0 - q)) / replicas as f64).sqrt();
                        found.push((dist[yi][v], (p - q).abs(), se));
                    }
                }
            }
        }
    }

    let mut by_distance: std::collections::BTreeMap<usize, (f64, f64)> = std::collections::BTreeMap::new();
    for (d, tv, se) in found {
        if d == usize::MAX || (!distance_grid.is_empty() && !distance_grid.contains(&d)) {
            continue;
        }
        let e = by_distance.entry(d).or_insert((0.0, 0.0));
        if tv >= e.0 {
            *e = (tv, se);
        }
    }
    let distances: Vec<usize> = by_distance.keys().copied().collect();
    let tv: Vec<f64> = by_distance.values().map(|v| v.0).collect();
    let se: Vec<f64> = by_distance.values().map(|v| v.1).collect();
    let points: Vec<(f64, f64, f64)> = distances
        .iter()
        .zip(tv.iter().zip(&se))
        .filter(|(_, (t, s))| **t > 1e-13 && **t > 2.0 * **s)
        .map(|(&d, (&t, _))| (d as f64, t.ln(), 1.0))
        .collect();
    if points.len() < 2 {
        return Err(Error::Numerical("boundary influence is below the noise floor at all but one distance; no decay to fit".into()));
    }
    let (slope, intercept, _, rms) = weighted_slope(&points);
    Ok(SsmFit { distances, tv, se, c1: intercept.exp(), c2: -slope, residual: rms })
}

/// Upper and lower total-variation curves on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    pub side: usize,
    pub dimension: usize,
    pub seed: u64,
    pub upper: BoundCurve,
    pub lower: BoundCurve,
}

impl MixingCurve {
    pub fn to_csv(&self, m: &ModelSpec) -> CsvTable {
        let mut t = CsvTable::new(&["t", "tv_upper", "tv_upper_se", "tv_lower", "tv_lower_se"]);
        t.meta("family", m.family.name())
            .meta("beta", m.beta)
            .meta("h", m.h)
            .meta("rate_rule", m.rate_rule.name())
            .meta("side", self.side)
            .meta("dimension", self.dimension)
            .meta("seed", self.seed)
            .meta("replicas", self.upper.replicas);
        for k in 0..self.upper.times.len() {
            t.rows.push(vec![
                fmt_f64(self.upper.times[k]),
                fmt_f64(self.upper.values[k]),
                fmt_f64(self.upper.se[k]),
                fmt_f64(self.lower.values[k]),
                fmt_f64(self.lower.se[k]),
            ]);
        }
        t
    }

    pub fn to_svg(&self) -> String {
        let pick = |c: &BoundCurve| c.times.iter().zip(&c.values).map(|(&a, &b)| (a, b)).collect();
        render_svg_chart(
            &format!("distance from stationarity, side {}", self.side),
            "t",
            "TV",
            &[
                Series { label: "upper".into(), points: pick(&self.upper) },
                Series { label: "lower".into(), points: pick(&self.lower) },
            ],
            false,
        )
    }
}

#[derive(Debug, Clone)]
pub struct MixingOptions {
    pub replicas: usize,
    pub t_step: f64,
    /// Grid end; defaults to the largest observed coalescence time.
    pub t_max: Option<f64>,
    pub statistic: Statistic,
    /// Gap used for the predicted location; 1D heat-bath Ising defaults to 1 − tanh 2β.
    pub lambda: Option<f64>,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions { replicas: 1000, t_step: 0.1, t_max: None, statistic: Statistic::Magnetization, lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingRow {
    pub side: usize,
    pub eps: f64,
    /// Last grid time with lower bound above ε (t_mix is later).
    pub bracket_lo: Option<f64>,
    /// First grid time with upper bound below ε (t_mix is no later).
    pub bracket_hi: Option<f64>,
    /// Interpolated crossing of ε by the lower bound.
    pub point: Option<f64>,
    /// Exact worst-start t_mix(ε) on sides small enough for the oracle.
    pub oracle: Option<f64>,
}

impl MixingRow {
    pub fn bracket_failed(&self) -> bool {
        self.bracket_lo.is_none() || self.bracket_hi.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDiagnostic {
    pub side: usize,
    /// t_mix(1/4) / t_mix(3/4).
    pub ratio: Option<f64>,
    /// t_mix(1/4) / log n.
    pub normalized_location: Option<f64>,
    /// d / (2λ).
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MixingProfile {
    pub curves: Vec<MixingCurve>,
    pub rows: Vec<MixingRow>,
    pub diagnostics: Vec<CutoffDiagnostic>,
}

fn crossing(curve: &BoundCurve, eps: f64) -> (Option<f64>, Option<f64>) {
    let last_above = curve.values.iter().rposition(|&v| v > eps);
    match last_above {
        None => (None, None),
        Some(k) if k + 1 == curve.values.len() => (Some(curve.times[k]), None),
        Some(k) => {
            let (t0, t1, v0, v1) = (curve.times[k], curve.times[k + 1], curve.values[k], curve.values[k + 1]);
            (Some(t0), Some(t0 + (t1 - t0) * (v0 - eps) / (v0 - v1)))
        }
    }
}

/// Sides whose oracle t_mix is reported alongside the bounds.
pub const ORACLE_PROFILE_CAP: usize = 10;

/// Exact worst-start t_mix(ε) by bisection; the worst-start distance is
/// nonincreasing in t.
pub fn exact_mixing_time(spec: &crate::oracle::SpectralData, eps: f64) -> Result<f64> {
    if spec.worst_tv(0.0)? <= eps {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while spec.worst_tv(hi)? > eps {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Numerical("worst-start distance does not fall below ε".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if spec.worst_tv(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

pub fn mixing_profile(
    m: &ModelSpec,
    dimension: usize,
    sides: &[usize],
    eps: &[f64],
    opts: &MixingOptions,
    seed: u64,
) -> Result<MixingProfile> {
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument("ε list must be nonempty with values in (0,1)".into()));
    }
    if !(opts.t_step > 0.0) {
        return Err(Error::InvalidArgument("time step must be positive".into()));
    }
    let lambda = opts.lambda.or_else(|| {
        (dimension == 1 && m.family == Family::IsingFerro && m.rate_rule == RateRule::HeatBath && m.h == 0.0)
            .then(|| 1.0 - (2.0 * m.beta).tanh())
    });
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, &n) in sides.iter().enumerate() {
        let g = TorusGeometry::cube(dimension, n)?;
        let s = split_seed_tagged(seed, "mixing-side", i as u64);
        let t_max = match opts.t_max {
            Some(t) => t,
            None => {
                let taus: Vec<Option<f64>> = (0..opts.replicas)
                    .into_par_iter()
                    .map(|r| coalescence_time(m, &g, split_seed_tagged(s, "coalescence", r as u64), 1e5))
                    .collect::<Result<_>>()?;
                taus.iter().map(|t| t.unwrap_or(1e5)).fold(0.0, f64::max) + opts.t_step
            }
        };
        let steps = (t_max / opts.t_step).ceil() as usize;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * opts.t_step).collect();
        let upper = tv_upper_via_coalescence(m, &g, &times, opts.replicas, s)?;
        let lower = tv_lower_curve(m, &g, &times, opts.replicas, opts.statistic, s)?;
        let spec = if g.n_sites() <= ORACLE_PROFILE_CAP {
            Some(spectral_gap_exact(&build_generator(m, &g)?)?.1)
        } else {
            None
        };
        let mut point_of = std::collections::HashMap::new();
        for &e in eps {
            let oracle = spec.as_ref().map(|s| exact_mixing_time(s, e)).transpose()?;
            let (lo, point) = crossing(&lower, e);
            let hi = upper.values.iter().position(|&v| v < e).map(|k| times[k]);
            point_of.insert(e.to_bits(), point);
            rows.push(MixingRow { side: n, eps: e, bracket_lo: lo, bracket_hi: hi, point, oracle });
        }
        let q = point_of.get(&0.25f64.to_bits()).copied().flatten();
        let tq = point_of.get(&0.75f64.to_bits()).copied().flatten();
        diagnostics.push(CutoffDiagnostic {
            side: n,
            ratio: q.zip(tq).map(|(a, b)| a / b),
            normalized_location: q.map(|a| a / (n as f64).ln()),
            predicted: lambda.map(|l| dimension as f64 / (2.0 * l)),
        });
        curves.push(MixingCurve { side: n, dimension, seed: s, upper, lower });
    }
    Ok(MixingProfile { curves, rows, diagnostics })
}

impl MixingProfile {
    pub fn table_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["side", "eps", "bracket_lo", "bracket_hi", "point", "oracle", "bracket_failed"]);
        let opt = |v: Option<f64>| v.map_or("".to_string(), fmt_f64);
        for r in &self.rows {
            t.rows.push(vec![
                r.side.to_string(),
                fmt_f64(r.eps),
                opt(r.bracket_lo),
                opt(r.bracket_hi),
                opt(r.point),
                opt(r.oracle),
                r.bracket_failed().to_string(),
            ]);
        }
        t
    }

    pub fn diagnostics_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["side", "ratio_q25_q75", "normalized_location", "predicted_location"]);
        let opt = |v: Option<f64>| v.map_or("".to_string(), fmt_f64);
        for d in &self.diagnostics {
            t.rows.push(vec![d.side.to_string(), opt(d.ratio), opt(d.normalized_location), opt(d.predicted)]);
        }
        t
    }
}

/// Exact single-site ξₜ on a small torus from the heat kernel.
pub fn xi_exact(m: &ModelSpec, g: &TorusGeometry, times: &[f64]) -> Result<Vec<f64>> {
    let order = monotone_order(m, g)?;
    let l = build_generator(m, g)?;
    let (_, spec) = spectral_gap_exact(&l)?;
    let n = g.n_sites();
    let top = spec.state_index(&order.top(n)).unwrap();
    let bottom = spec.state_index(&order.bottom(n)).unwrap();
    times
        .iter()
        .map(|&t| {
            let a = spec.heat_kernel_row_index(top, t)?;
            let b = spec.heat_kernel_row_index(bottom, t)?;
            let plus_at_origin = |row: &[f64]| -> f64 {
                spec.labels().iter().zip(row).filter(|(lab, _)| *lab & 1 == 1).map(|(_, p)| p).sum()
            };
            Ok((plus_at_origin(&a) - plus_at_origin(&b)).abs())
        })
        .collect()
}
