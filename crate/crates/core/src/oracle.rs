//! Exact analysis of small chains through the symmetrized generator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::lattice::{Region, SpinConfiguration, TorusGeometry};
use crate::model::{gibbs_log_weight, gibbs_table, LogWeight, ModelSpec, UpdateKernel};
use crate::rng::{rng_from_seed, split_seed};

/// Largest lattice for which a generator is built (2^14 states).
pub const GENERATOR_CAP: usize = 14;
/// Largest lattice for the log-Sobolev search.
pub const LOG_SOBOLEV_CAP: usize = 10;

/// Sparse rate matrix over an explicit state list, with its stationary law.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    n_sites: usize,
    labels: Vec<u64>,
    mu: Vec<f64>,
    rows: Vec<Vec<(u32, f64)>>,
}

pub fn build_generator(m: &ModelSpec, g: &TorusGeometry) -> Result<GeneratorMatrix> {
    let n = g.n_sites();
    if n > GENERATOR_CAP {
        return Err(Error::SizeCap { what: "generator", size: n, cap: GENERATOR_CAP });
    }
    let table = gibbs_table(m, g)?;
    let labels: Vec<u64> = (0..1u64 << n)
        .filter(|&x| matches!(gibbs_log_weight(m, g, &SpinConfiguration::from_index(n, x)), LogWeight::Finite(_)))
        .collect();
    let index_of = |x: u64| labels.binary_search(&x).ok();
    let kernel = m.kernel(g.degree());
    let mut rows = Vec::with_capacity(labels.len());
    for &x in &labels {
        let sigma = SpinConfiguration::from_index(n, x);
        let mut row = Vec::new();
        for site in 0..n {
            let rate = kernel.flip_rate_at(sigma.get(site), UpdateKernel::plus_neighbors(g, &sigma, site));
            if rate > 0.0 {
                let j = index_of(x ^ (1u64 << site)).ok_or_else(|| {
                    Error::Numerical("positive rate into an excluded state".into())
                })?;
                row.push((j as u32, rate));
            }
        }
        rows.push(row);
    }
    let mu = labels.iter().map(|&x| table.probs()[x as usize]).collect();
    let gen = GeneratorMatrix { n_sites: n, labels, mu, rows };
    if !gen.is_irreducible() {
        return Err(Error::InvalidArgument("restricted chain is not ergodic".into()));
    }
    Ok(gen)
}

impl GeneratorMatrix {
    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Packed configuration of each state.
    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn stationary(&self) -> &[f64] {
        &self.mu
    }

    pub fn state_index(&self, sigma: &SpinConfiguration) -> Option<usize> {
        self.labels.binary_search(&sigma.to_index()).ok()
    }

    /// Off-diagonal transitions out of state `i`.
    pub fn transitions(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for &(j, r) in &self.rows[i] {
                l[(i, j as usize)] += r;
            }
            l[(i, i)] -= self.exit_rate(i);
        }
        l
    }

    /// ‖μᵀL‖∞.
    pub fn stationarity_residual(&self) -> f64 {
        let mut flow = vec![0.0; self.n_states()];
        for i in 0..self.n_states() {
            for &(j, r) in &self.rows[i] {
                flow[j as usize] += self.mu[i] * r;
            }
            flow[i] -= self.mu[i] * self.exit_rate(i);
        }
        flow.iter().fold(0.0, |a, f| a.max(f.abs()))
    }

    /// max |μ(σ)L[σ,σ'] − μ(σ')L[σ',σ]|.
    pub fn reversibility_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_states() {
            for &(j, r) in &self.rows[i] {
                let back = self.rows[j as usize]
                    .iter()
                    .find(|&&(k, _)| k as usize == i)
                    .map_or(0.0, |&(_, r)| r);
                worst = worst.max((self.mu[i] * r - self.mu[j as usize] * back).abs());
            }
        }
        worst
    }

    fn is_irreducible(&self) -> bool {
        let mut seen = vec![false; self.n_states()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.rows[i] {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    stack.push(j as usize);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Generator of two independent chains run side by side; the sites of
    /// `other` are packed above those of `self`.
    pub fn product(&self, other: &GeneratorMatrix) -> Result<GeneratorMatrix> {
        let (na, nb) = (self.n_states(), other.n_states());
        if na * nb > 1 << GENERATOR_CAP {
            return Err(Error::SizeCap { what: "product generator", size: self.n_sites + other.n_sites, cap: GENERATOR_CAP });
        }
        let mut labels = Vec::with_capacity(na * nb);
        let mut mu = Vec::with_capacity(na * nb);
        let mut rows = Vec::with_capacity(na * nb);
        for a in 0..na {
            for b in 0..nb {
                labels.push(self.labels[a] | (other.labels[b] << self.n_sites));
                mu.push(self.mu[a] * other.mu[b]);
                let mut row: Vec<(u32, f64)> = self.rows[a].iter().map(|&(j, r)| ((j as usize * nb + b) as u32, r)).collect();
                row.extend(other.rows[b].iter().map(|&(j, r)| ((a * nb + j as usize) as u32, r)));
                rows.push(row);
            }
        }
        // Keep states sorted by packed label.
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| labels[i]);
        let mut rank = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new as u32;
        }
        Ok(GeneratorMatrix {
            n_sites: self.n_sites + other.n_sites,
            labels: order.iter().map(|&i| labels[i]).collect(),
            mu: order.iter().map(|&i| mu[i]).collect(),
            rows: order
                .iter()
                .map(|&i| rows[i].iter().map(|&(j, r)| (rank[j as usize], r)).collect())
                .collect(),
        })
    }
}

/// Spectrum of −L with an eigenbasis of the symmetrized generator.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors of D^{1/2}(−L)D^{−1/2}.
    vectors: DMatrix<f64>,
    mu: Vec<f64>,
    sqrt_mu: Vec<f64>,
    labels: Vec<u64>,
}

pub fn spectral_gap_exact(l: &GeneratorMatrix) -> Result<(f64, SpectralData)> {
    let n = l.n_states();
    let sqrt_mu: Vec<f64> = l.mu.iter().map(|p| p.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = l.exit_rate(i);
        for &(j, r) in &l.rows[i] {
            let j = j as usize;
            s[(i, j)] -= 0.5 * sqrt_mu[i] * r / sqrt_mu[j];
            s[(j, i)] -= 0.5 * sqrt_mu[i] * r / sqrt_mu[j];
        }
    }
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    if eigenvalues[0].abs() > 1e-10 {
        return Err(Error::Numerical(format!("bottom eigenvalue {} is not zero", eigenvalues[0])));
    }
    let gap = if n > 1 { eigenvalues[1] } else { 0.0 };
    Ok((
        gap,
        SpectralData { eigenvalues, vectors, mu: l.mu.clone(), sqrt_mu, labels: l.labels.clone() },
    ))
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn gap(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn stationary(&self) -> &[f64] {
        &self.mu
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn state_index(&self, sigma: &SpinConfiguration) -> Option<usize> {
        self.labels.binary_search(&sigma.to_index()).ok()
    }

    /// Eigenfunction `k` of −L, normalized in L²(μ).
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        (0..self.n_states()).map(|i| self.vectors[(i, k)] / self.sqrt_mu[i]).collect()
    }

    fn clip(&self, mut row: Vec<f64>) -> Result<Vec<f64>> {
        let worst = row.iter().fold(0.0f64, |a, &p| a.min(p));
        if worst < -1e-10 {
            return Err(Error::Numerical(format!("heat kernel negative excursion {worst:e}")));
        }
        for p in row.iter_mut() {
            *p = p.clamp(0.0, 1.0);
        }
        Ok(row)
    }

    /// `P_x(X_t = ·)` for the state with index `x`.
    pub fn heat_kernel_row_index(&self, x: usize, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::InvalidArgument("time must be nonnegative".into()));
        }
        let n = self.n_states();
        let coeff: Vec<f64> = (0..n).map(|k| (-self.eigenvalues[k] * t).exp() * self.vectors[(x, k)]).collect();
        let row = (0..n)
            .map(|y| {
                let s: f64 = (0..n).map(|k| coeff[k] * self.vectors[(y, k)]).sum();
                s * self.sqrt_mu[y] / self.sqrt_mu[x]
            })
            .collect();
        self.clip(row)
    }

    /// Full kernel matrix, rows indexed by start state.
    pub fn heat_kernel_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.n_states();
        let scaled = DMatrix::from_fn(n, n, |i, k| self.vectors[(i, k)] * (-self.eigenvalues[k] * t).exp());
        let mut h = &scaled * self.vectors.transpose();
        for x in 0..n {
            for y in 0..n {
                h[(x, y)] *= self.sqrt_mu[y] / self.sqrt_mu[x];
            }
        }
        let worst = h.iter().fold(0.0f64, |a, &p| a.min(p));
        if worst < -1e-10 {
            return Err(Error::Numerical(format!("heat kernel negative excursion {worst:e}")));
        }
        h.apply(|p| *p = p.clamp(0.0, 1.0));
        Ok(h)
    }

    /// Worst-start total-variation distance from stationarity.
    pub fn worst_tv(&self, t: f64) -> Result<f64> {
        let h = self.heat_kernel_matrix(t)?;
        Ok((0..self.n_states())
            .map(|x| 0.5 * (0..self.n_states()).map(|y| (h[(x, y)] - self.mu[y]).abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["k", "eigenvalue"]);
        t.meta("states", self.n_states());
        for (k, v) in self.eigenvalues.iter().enumerate() {
            t.rows.push(vec![k.to_string(), fmt_f64(*v)]);
        }
        t
    }
}

pub fn heat_kernel_row(s: &SpectralData, x0: &SpinConfiguration, t: f64) -> Result<Vec<f64>> {
    let x = s
        .state_index(x0)
        .ok_or_else(|| Error::InvalidArgument("start is outside the state space".into()))?;
    s.heat_kernel_row_index(x, t)
}

pub fn kernel_row_csv(s: &SpectralData, row: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["state", "probability", "stationary"]);
    for (i, p) in row.iter().enumerate() {
        t.rows.push(vec![s.labels[i].to_string(), fmt_f64(*p), fmt_f64(s.mu[i])]);
    }
    t
}

fn check_normalized(p: &[f64], name: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} is not a probability vector (sum {total})")));
    }
    Ok(())
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument("vectors differ in length".into()));
    }
    check_normalized(p, "p")?;
    check_normalized(q, "q")?;
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0))
}

pub fn l2_distance(p: &[f64], mu: &[f64]) -> Result<f64> {
    if p.len() != mu.len() {
        return Err(Error::InvalidArgument("vectors differ in length".into()));
    }
    let mut acc = 0.0;
    for (&pi, &m) in p.iter().zip(mu) {
        if m <= 0.0 {
            if pi > 0.0 {
                return Err(Error::InvalidArgument("mass on a state of zero stationary weight".into()));
            }
            continue;
        }
        acc += m * (pi / m - 1.0).powi(2);
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletValues {
    pub energy: f64,
    pub variance: f64,
    pub entropy: f64,
}

/// Dirichlet form, variance and entropy of `f` (indexed like the generator's states).
pub fn dirichlet_form(l: &GeneratorMatrix, f: &[f64]) -> Result<DirichletValues> {
    if f.len() != l.n_states() {
        return Err(Error::InvalidArgument("function length does not match state count".into()));
    }
    let mu = &l.mu;
    let mut energy = 0.0;
    for i in 0..l.n_states() {
        for &(j, r) in &l.rows[i] {
            energy += 0.5 * mu[i] * r * (f[j as usize] - f[i]).powi(2);
        }
    }
    let mean: f64 = mu.iter().zip(f).map(|(m, x)| m * x).sum();
    let variance: f64 = mu.iter().zip(f).map(|(m, x)| m * (x - mean).powi(2)).sum();
    let second: f64 = mu.iter().zip(f).map(|(m, x)| m * x * x).sum();
    let entropy: f64 = mu
        .iter()
        .zip(f)
        .filter(|(_, x)| **x != 0.0)
        .map(|(m, x)| m * x * x * (x * x / second).ln())
        .sum();
    Ok(DirichletValues { energy, variance, entropy: entropy.max(0.0) })
}

#[derive(Debug, Clone)]
pub struct LogSobolevEstimate {
    /// Reported upper bound on the log-Sobolev constant.
    pub alpha_hat: f64,
    /// Smallest E/Ent ratio found by the search.
    pub best_ratio: f64,
    pub minimizer: Vec<f64>,
    pub gap: f64,
    /// The bound came from the λ/2 limit along the bottom eigenfunction.
    pub gap_limit_used: bool,
    pub converged: bool,
}

fn ratio_and_gradient(l: &GeneratorMatrix, f: &[f64], grad: &mut [f64]) -> f64 {
    let mu = &l.mu;
    let n = f.len();
    let mut energy = 0.0;
    let mut ge = vec![0.0; n];
    for i in 0..n {
        for &(j, r) in &l.rows[i] {
            let w = mu[i] * r;
            let diff = f[i] - f[j as usize];
            energy += 0.5 * w * diff * diff;
            ge[i] += 2.0 * w * diff;
        }
    }
    let second: f64 = mu.iter().zip(f).map(|(m, x)| m * x * x).sum();
    let mut ent = 0.0;
    for i in 0..n {
        let x2 = f[i] * f[i];
        let log_term = if x2 > 0.0 { (x2 / second).ln() } else { 0.0 };
        ent += mu[i] * x2 * log_term;
        grad[i] = 2.0 * mu[i] * f[i] * log_term;
    }
    if ent <= 1e-300 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return f64::INFINITY;
    }
    let ratio = energy / ent;
    for i in 0..n {
        grad[i] = (ge[i] - ratio * grad[i]) / ent;
    }
    ratio
}

fn normalize(l: &GeneratorMatrix, f: &mut [f64]) {
    let norm: f64 = l.mu.iter().zip(f.iter()).map(|(m, x)| m * x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        f.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Multistart descent on E(f)/Ent(f). Every ratio is an upper bound on the
/// log-Sobolev constant, and so is λ/2; the smaller of the two is reported.
pub fn log_sobolev_upper_estimate(
    l: &GeneratorMatrix,
    restarts: usize,
    seed: u64,
) -> Result<LogSobolevEstimate> {
    if l.n_sites > LOG_SOBOLEV_CAP {
        return Err(Error::SizeCap { what: "log-Sobolev search", size: l.n_sites, cap: LOG_SOBOLEV_CAP });
    }
    let (gap, spec) = spectral_gap_exact(l)?;
    let n = l.n_states();
    if n < 2 {
        return Err(Error::InvalidArgument("a single-state chain has no log-Sobolev constant".into()));
    }
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let phi = spec.eigenfunction(1);
    for eps in [0.3, 1.0, 3.0] {
        starts.push(phi.iter().map(|p| 1.0 + eps * p).collect());
    }
    for r in 0..restarts {
        let mut rng = rng_from_seed(split_seed(seed, r as u64));
        starts.push((0..n).map(|_| (rng.random::<f64>() * 2.0).exp()).collect());
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut all_converged = true;
    for mut f in starts {
        normalize(l, &mut f);
        let mut grad = vec![0.0; n];
        let mut ratio = ratio_and_gradient(l, &f, &mut grad);
        let mut step = 0.1;
        let mut converged = false;
        for _ in 0..2000 {
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !ratio.is_finite() || gnorm < 1e-10 {
                converged = ratio.is_finite();
                break;
            }
            let mut accepted = false;
            while step > 1e-14 {
                let mut trial: Vec<f64> = f.iter().zip(&grad).map(|(x, g)| x - step * g / gnorm).collect();
                normalize(l, &mut trial);
                let mut tg = vec![0.0; n];
                let tr = ratio_and_gradient(l, &trial, &mut tg);
                if tr < ratio {
                    let improvement = ratio - tr;
                    f = trial;
                    grad = tg;
                    ratio = tr;
                    step *= 1.5;
                    accepted = true;
                    if improvement < 1e-13 * ratio.abs().max(1.0) {
                        converged = true;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                converged = true;
                break;
            }
            if converged {
                break;
            }
        }
        all_converged &= converged;
        if ratio < best.0 {
            best = (ratio, f);
        }
    }
    let limit = gap / 2.0;
    Ok(LogSobolevEstimate {
        alpha_hat: best.0.min(limit),
        best_ratio: best.0,
        minimizer: best.1,
        gap,
        gap_limit_used: limit < best.0,
        converged: all_converged,
    })
}

/// Sites of a region projected out of a packed label.
fn project_label(label: u64, sites: &[usize]) -> usize {
    sites
        .iter()
        .enumerate()
        .fold(0usize, |acc, (k, &s)| acc | ((((label >> s) & 1) as usize) << k))
}

/// 𝔪ₜ: worst-start L² distance of the kernel projected onto `b`.
pub fn m_t_exact(m: &ModelSpec, g: &TorusGeometry, b: &Region, t: f64) -> Result<f64> {
    let l = build_generator(m, g)?;
    let (_, spec) = spectral_gap_exact(&l)?;
    m_t_from_spectrum(&spec, b, t)
}

pub fn m_t_from_spectrum(spec: &SpectralData, b: &Region, t: f64) -> Result<f64> {
    let sites = b.sites();
    let cells = 1usize << sites.len();
    let proj: Vec<usize> = spec.labels.iter().map(|&x| project_label(x, sites)).collect();
    let mut mu_b = vec![0.0; cells];
    for (i, &c) in proj.iter().enumerate() {
        mu_b[c] += spec.mu[i];
    }
    let h = spec.heat_kernel_matrix(t)?;
    let mut worst: f64 = 0.0;
    for x in 0..spec.n_states() {
        let mut p = vec![0.0; cells];
        for (y, &c) in proj.iter().enumerate() {
            p[c] += h[(x, y)];
        }
        worst = worst.max(l2_distance(&p, &mu_b)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct DsBoundReport {
    pub s_grid: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub min_slack: f64,
    /// Always true unless the log-Sobolev value passed in is a proven lower bound.
    pub advisory: bool,
}

/// Evaluates `‖P_x(X_s ∈ ·) − μ‖_{L²(μ)} ≤ exp(1 − λ(s − loglog(1/μ(x))/(4α)))`.
pub fn ds_bound_check(
    spec: &SpectralData,
    alpha: f64,
    x0: &SpinConfiguration,
    s_grid: &[f64],
    alpha_is_proven: bool,
) -> Result<DsBoundReport> {
    let x = spec
        .state_index(x0)
        .ok_or_else(|| Error::InvalidArgument("start is outside the state space".into()))?;
    let mu_x = spec.mu[x];
    if mu_x > (-1.0f64).exp() {
        return Err(Error::InvalidArgument("start state must have stationary weight at most 1/e".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("log-Sobolev value must be positive".into()));
    }
    let lambda = spec.gap();
    let loglog = (1.0 / mu_x).ln().ln();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for &s in s_grid {
        lhs.push(l2_distance(&spec.heat_kernel_row_index(x, s)?, &spec.mu)?);
        rhs.push((1.0 - lambda * (s - loglog / (4.0 * alpha))).exp());
    }
    let min_slack = rhs.iter().zip(&lhs).map(|(r, l)| r - l).fold(f64::INFINITY, f64::min);
    Ok(DsBoundReport { s_grid: s_grid.to_vec(), lhs, rhs, min_slack, advisory: !alpha_is_proven })
}
