//! Spin-system models: Gibbs weights, single-site rates and the
//! partial orders used by monotone couplings.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{enumerate_configurations, SpinConfiguration, TorusGeometry};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    IsingFerro,
    IsingAntiferro,
    /// Hard-core lattice gas; `beta` is the fugacity and bit 1 means occupied.
    Hardcore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateRule {
    HeatBath,
    Metropolis,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising_ferro" => Ok(Family::IsingFerro),
            "ising_antiferro" => Ok(Family::IsingAntiferro),
            "hardcore" => Ok(Family::Hardcore),
            other => Err(Error::InvalidArgument(format!("unknown model family `{other}`"))),
        }
    }
}

impl std::str::FromStr for RateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat_bath" => Ok(RateRule::HeatBath),
            "metropolis" => Ok(RateRule::Metropolis),
            other => Err(Error::InvalidArgument(format!("unknown rate rule `{other}`"))),
        }
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::IsingFerro => "ising_ferro",
            Family::IsingAntiferro => "ising_antiferro",
            Family::Hardcore => "hardcore",
        }
    }
}

impl RateRule {
    pub fn name(self) -> &'static str {
        match self {
            RateRule::HeatBath => "heat_bath",
            RateRule::Metropolis => "metropolis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub beta: f64,
    pub h: f64,
    pub rate_rule: RateRule,
}

impl ModelSpec {
    pub fn new(family: Family, beta: f64, h: f64, rate_rule: RateRule) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be finite and ≥ 0, got {beta}")));
        }
        if !h.is_finite() {
            return Err(Error::InvalidArgument("external field must be finite".into()));
        }
        if family == Family::Hardcore && h != 0.0 {
            return Err(Error::InvalidArgument("the hard-core model takes no external field".into()));
        }
        Ok(ModelSpec {
            family,
            beta,
            h,
            rate_rule,
        })
    }

    pub fn ising(beta: f64, h: f64, rate_rule: RateRule) -> Result<Self> {
        Self::new(Family::IsingFerro, beta, h, rate_rule)
    }

    pub fn heat_bath_ising(beta: f64) -> Self {
        Self::ising(beta, 0.0, RateRule::HeatBath).expect("valid parameters")
    }

    /// Single-site update kernel for lattices of the given coordination number.
    pub fn kernel(&self, degree: usize) -> UpdateKernel {
        UpdateKernel::new(self, degree)
    }
}

/// Log of the unnormalized Gibbs weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogWeight {
    Finite(f64),
    /// Probability exactly zero (hard-core constraint violated).
    Excluded,
}

impl LogWeight {
    pub fn finite(self) -> Option<f64> {
        match self {
            LogWeight::Finite(x) => Some(x),
            LogWeight::Excluded => None,
        }
    }
}

/// Number of edges `{u, v}` with both endpoints plus, and Σ σ(u)σ(v), Σ σ(u).
fn edge_sums(g: &TorusGeometry, sigma: &SpinConfiguration) -> (i64, i64, usize) {
    let mut interaction = 0i64;
    let mut both_plus = 0usize;
    for u in 0..g.n_sites() {
        let su = sigma.spin(u) as i64;
        for axis in 0..g.dimension() {
            let v = g.neighbor(u, 2 * axis);
            interaction += su * sigma.spin(v) as i64;
            if sigma.get(u) && sigma.get(v) {
                both_plus += 1;
            }
        }
    }
    (interaction, sigma.magnetization(), both_plus)
}

pub fn gibbs_log_weight(m: &ModelSpec, g: &TorusGeometry, sigma: &SpinConfiguration) -> LogWeight {
    debug_assert_eq!(sigma.len(), g.n_sites());
    let (interaction, magnetization, both_plus) = edge_sums(g, sigma);
    match m.family {
        Family::IsingFerro => {
            LogWeight::Finite(m.beta * interaction as f64 + m.h * magnetization as f64)
        }
        Family::IsingAntiferro => {
            LogWeight::Finite(-m.beta * interaction as f64 + m.h * magnetization as f64)
        }
        Family::Hardcore => {
            let occupied = sigma.count_plus();
            if both_plus > 0 {
                LogWeight::Excluded
            } else if occupied == 0 {
                LogWeight::Finite(0.0)
            } else if m.beta == 0.0 {
                LogWeight::Excluded
            } else {
                LogWeight::Finite(occupied as f64 * m.beta.ln())
            }
        }
    }
}

/// Exact stationary law over all packed configurations of a small torus.
#[derive(Debug, Clone)]
pub struct GibbsTable {
    geometry: TorusGeometry,
    probs: Vec<f64>,
    log_z: f64,
}

impl GibbsTable {
    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, sigma: &SpinConfiguration) -> f64 {
        self.probs[sigma.to_index() as usize]
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// E_μ[f(σ)].
    pub fn expect(&self, f: impl Fn(&SpinConfiguration) -> f64) -> f64 {
        let n = self.geometry.n_sites();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| p * f(&SpinConfiguration::from_index(n, i as u64)))
            .sum()
    }
}

pub fn gibbs_table(m: &ModelSpec, g: &TorusGeometry) -> Result<GibbsTable> {
    let logs: Vec<LogWeight> = enumerate_configurations(g)?
        .map(|s| gibbs_log_weight(m, g, &s))
        .collect();
    let max = logs
        .iter()
        .filter_map(|w| w.finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs
        .iter()
        .map(|w| w.finite().map_or(0.0, |x| (x - max).exp()))
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(GibbsTable {
        geometry: g.clone(),
        probs,
        log_z: max + total.ln(),
    })
}

/// Precomputed single-site rule, indexed by the current spin and the number
/// of plus (occupied) neighbors.
///
/// Rates obey detailed balance `c(x,σ)/c(x,σˣ) = μ(σˣ)/μ(σ)`, so a site is
/// pushed toward agreement with its neighbors in the ferromagnet.
#[derive(Debug, Clone)]
pub struct UpdateKernel {
    rule: RateRule,
    /// P(σ(x) = + | neighbors) by plus-neighbor count.
    plus_prob: Vec<f64>,
    /// Flip rate by [current spin is plus][plus-neighbor count].
    flip: [Vec<f64>; 2],
}

impl UpdateKernel {
    fn new(m: &ModelSpec, degree: usize) -> Self {
        let mut plus_prob = Vec::with_capacity(degree + 1);
        let mut flip_minus = Vec::with_capacity(degree + 1);
        let mut flip_plus = Vec::with_capacity(degree + 1);
        for k in 0..=degree {
            match m.family {
                Family::IsingFerro | Family::IsingAntiferro => {
                    let nsum = 2.0 * k as f64 - degree as f64;
                    let coupling = if m.family == Family::IsingFerro { m.beta } else { -m.beta };
                    let field = coupling * nsum + m.h;
                    // μ(+|·) = e^{φ}/(e^{φ}+e^{-φ}).
                    let p = 1.0 / (1.0 + (-2.0 * field).exp());
                    plus_prob.push(p);
                    match m.rate_rule {
                        RateRule::HeatBath => {
                            flip_minus.push(p);
                            flip_plus.push(1.0 / (1.0 + (2.0 * field).exp()));
                        }
                        RateRule::Metropolis => {
                            // Ratio μ(σˣ)/μ(σ) = exp(-2σ(x)φ).
                            flip_minus.push((2.0 * field).exp().min(1.0));
                            flip_plus.push((-2.0 * field).exp().min(1.0));
                        }
                    }
                }
                Family::Hardcore => {
                    let lambda = m.beta;
                    let p = if k == 0 { lambda / (1.0 + lambda) } else { 0.0 };
                    plus_prob.push(p);
                    match m.rate_rule {
                        RateRule::HeatBath => {
                            flip_minus.push(p);
                            flip_plus.push(1.0 / (1.0 + lambda));
                        }
                        RateRule::Metropolis => {
                            flip_minus.push(if k == 0 { lambda.min(1.0) } else { 0.0 });
                            flip_plus.push(if lambda > 0.0 { (1.0 / lambda).min(1.0) } else { 1.0 });
                        }
                    }
                }
            }
        }
        UpdateKernel {
            rule: m.rate_rule,
            plus_prob,
            flip: [flip_minus, flip_plus],
        }
    }

    #[inline]
    pub fn plus_neighbors(g: &TorusGeometry, sigma: &SpinConfiguration, x: usize) -> usize {
        g.neighbors(x).filter(|&y| sigma.get(y)).count()
    }

    #[inline]
    pub fn flip_rate_at(&self, current_plus: bool, plus_neighbors: usize) -> f64 {
        self.flip[current_plus as usize][plus_neighbors]
    }

    #[inline]
    pub fn plus_probability(&self, plus_neighbors: usize) -> f64 {
        self.plus_prob[plus_neighbors]
    }

    /// New spin after an update driven by the uniform variate `u`.
    ///
    /// Heat bath sets + iff `u < μ(+|neighbors)`; Metropolis flips iff
    /// `u < c(x,σ)`.
    #[inline]
    pub fn new_value(&self, current_plus: bool, plus_neighbors: usize, u: f64) -> bool {
        match self.rule {
            RateRule::HeatBath => u < self.plus_prob[plus_neighbors],
            RateRule::Metropolis => {
                if u < self.flip[current_plus as usize][plus_neighbors] {
                    !current_plus
                } else {
                    current_plus
                }
            }
        }
    }

    /// Apply one update event in place; returns true when the spin changed.
    #[inline]
    pub fn apply(&self, g: &TorusGeometry, sigma: &mut SpinConfiguration, x: usize, u: f64) -> bool {
        let cur = sigma.get(x);
        let k = Self::plus_neighbors(g, sigma, x);
        let next = self.new_value(cur, k, u);
        if next != cur {
            sigma.set(x, next);
            true
        } else {
            false
        }
    }
}

/// Rate at which the spin at `x` flips in configuration `sigma`.
pub fn flip_rate(m: &ModelSpec, g: &TorusGeometry, sigma: &SpinConfiguration, x: usize) -> f64 {
    let kernel = m.kernel(g.degree());
    kernel.flip_rate_at(sigma.get(x), UpdateKernel::plus_neighbors(g, sigma, x))
}

/// Largest |μ(σ)c(x,σ) − μ(σˣ)c(x,σˣ)| over `samples` random pairs, plus all
/// pairs when there are at most 10⁶ of them.
pub fn check_detailed_balance(
    m: &ModelSpec,
    g: &TorusGeometry,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let table = gibbs_table(m, g)?;
    let n = g.n_sites();
    let residual = |index: u64, x: usize| -> f64 {
        let sigma = SpinConfiguration::from_index(n, index);
        let flipped = sigma.flipped(x);
        let lhs = table.prob(&sigma) * flip_rate(m, g, &sigma, x);
        let rhs = table.prob(&flipped) * flip_rate(m, g, &flipped, x);
        (lhs - rhs).abs()
    };
    let mut worst = 0.0f64;
    let mut rng = rng_from_seed(seed);
    for _ in 0..samples {
        let index = rng.random_range(0..(1u64 << n));
        let x = rng.random_range(0..n);
        worst = worst.max(residual(index, x));
    }
    if (1usize << n) * n <= 1_000_000 {
        for index in 0..(1u64 << n) {
            for x in 0..n {
                worst = worst.max(residual(index, x));
            }
        }
    }
    Ok(worst)
}

/// Even/odd sublattice membership (`true` = odd coordinate sum).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityMask {
    odd: Vec<bool>,
}

impl ParityMask {
    pub fn is_odd(&self, site: usize) -> bool {
        self.odd[site]
    }

    pub fn len(&self) -> usize {
        self.odd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.odd.is_empty()
    }
}

pub fn parity_mask(g: &TorusGeometry) -> Result<ParityMask> {
    if !g.is_bipartite() {
        return Err(Error::Geometry(format!(
            "torus {:?} has an odd side and is not bipartite",
            g.sides()
        )));
    }
    let odd = (0..g.n_sites())
        .map(|s| (0..g.dimension()).map(|a| g.coord(s, a)).sum::<usize>() % 2 == 1)
        .collect();
    Ok(ParityMask { odd })
}

/// `a ⪯ b` pointwise, or `a ⪯* b` (reversed on odd sites) when a mask is given.
pub fn partial_order_leq(
    a: &SpinConfiguration,
    b: &SpinConfiguration,
    mask: Option<&ParityMask>,
) -> bool {
    match mask {
        None => a
            .words()
            .iter()
            .zip(b.words())
            .all(|(x, y)| x & !y == 0),
        Some(mask) => (0..a.len()).all(|v| {
            let (x, y) = (a.get(v), b.get(v));
            if mask.is_odd(v) {
                x >= y
            } else {
                x <= y
            }
        }),
    }
}

/// The order under which the grand coupling of a model is monotone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MonotoneOrder {
    Standard,
    Parity(ParityMask),
}

impl MonotoneOrder {
    pub fn top(&self, n: usize) -> SpinConfiguration {
        match self {
            MonotoneOrder::Standard => SpinConfiguration::all_plus(n),
            MonotoneOrder::Parity(mask) => {
                let mut c = SpinConfiguration::all_minus(n);
                for v in 0..n {
                    if !mask.is_odd(v) {
                        c.set(v, true);
                    }
                }
                c
            }
        }
    }

    pub fn bottom(&self, n: usize) -> SpinConfiguration {
        match self {
            MonotoneOrder::Standard => SpinConfiguration::all_minus(n),
            MonotoneOrder::Parity(mask) => {
                let mut c = SpinConfiguration::all_minus(n);
                for v in 0..n {
                    if mask.is_odd(v) {
                        c.set(v, true);
                    }
                }
                c
            }
        }
    }

    pub fn leq(&self, a: &SpinConfiguration, b: &SpinConfiguration) -> bool {
        match self {
            MonotoneOrder::Standard => partial_order_leq(a, b, None),
            MonotoneOrder::Parity(mask) => partial_order_leq(a, b, Some(mask)),
        }
    }
}

/// Monotone order for heat-bath dynamics: the standard order for the
/// ferromagnet, the sublattice-flipped order for anti-monotone models on
/// bipartite tori.
pub fn monotone_order(m: &ModelSpec, g: &TorusGeometry) -> Result<MonotoneOrder> {
    if m.rate_rule != RateRule::HeatBath {
        return Err(Error::NotMonotone(
            "monotone couplings are only provided for heat-bath updates".into(),
        ));
    }
    match m.family {
        Family::IsingFerro => Ok(MonotoneOrder::Standard),
        Family::IsingAntiferro | Family::Hardcore => parity_mask(g)
            .map(MonotoneOrder::Parity)
            .map_err(|_| {
                Error::NotMonotone(format!(
                    "{} needs a bipartite torus (even sides), got {:?}",
                    m.family.name(),
                    g.sides()
                ))
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cycle(n: usize) -> TorusGeometry {
        TorusGeometry::new(1, &[n]).unwrap()
    }

    const ALL_MODELS: [(Family, RateRule); 6] = [
        (Family::IsingFerro, RateRule::HeatBath),
        (Family::IsingFerro, RateRule::Metropolis),
        (Family::IsingAntiferro, RateRule::HeatBath),
        (Family::IsingAntiferro, RateRule::Metropolis),
        (Family::Hardcore, RateRule::HeatBath),
        (Family::Hardcore, RateRule::Metropolis),
    ];

    fn model(family: Family, rule: RateRule, beta: f64, h: f64) -> ModelSpec {
        let h = if family == Family::Hardcore { 0.0 } else { h };
        ModelSpec::new(family, beta, h, rule).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::new(Family::Hardcore, 1.0, 0.5, RateRule::HeatBath).is_err());
        assert!(ModelSpec::new(Family::IsingFerro, -0.1, 0.0, RateRule::HeatBath).is_err());
        assert!(ModelSpec::new(Family::IsingFerro, f64::NAN, 0.0, RateRule::HeatBath).is_err());
    }

    #[test]
    fn log_weight_examples() {
        let g = cycle(3);
        let free = ModelSpec::heat_bath_ising(0.0);
        for s in enumerate_configurations(&g).unwrap() {
            assert_eq!(gibbs_log_weight(&free, &g, &s), LogWeight::Finite(0.0));
        }
        let m = ModelSpec::heat_bath_ising(1.0);
        assert_eq!(
            gibbs_log_weight(&m, &g, &SpinConfiguration::all_plus(3)),
            LogWeight::Finite(3.0)
        );
        let hc = model(Family::Hardcore, RateRule::HeatBath, 2.0, 0.0);
        let g4 = cycle(4);
        let alt = SpinConfiguration::from_spins(&[1, -1, 1, -1]);
        match gibbs_log_weight(&hc, &g4, &alt) {
            LogWeight::Finite(x) => assert!((x - 2.0 * 2f64.ln()).abs() < 1e-15),
            LogWeight::Excluded => panic!("independent set excluded"),
        }
        let adjacent = SpinConfiguration::from_spins(&[1, 1, -1, -1]);
        assert_eq!(gibbs_log_weight(&hc, &g4, &adjacent), LogWeight::Excluded);
    }

    #[test]
    fn hardcore_weights_match_independent_set_enumeration() {
        // Brute-force oracle: list independent sets of the 4-cycle by hand
        // (∅, four singletons, {0,2}, {1,3}) and compare total weight.
        let g = cycle(4);
        let lambda = 2.0;
        let hc = model(Family::Hardcore, RateRule::HeatBath, lambda, 0.0);
        let z: f64 = enumerate_configurations(&g)
            .unwrap()
            .filter_map(|s| gibbs_log_weight(&hc, &g, &s).finite())
            .map(f64::exp)
            .sum();
        let expected = 1.0 + 4.0 * lambda + 2.0 * lambda * lambda;
        assert!((z - expected).abs() < 1e-12);
        let table = gibbs_table(&hc, &g).unwrap();
        assert!((table.log_z() - expected.ln()).abs() < 1e-12);
    }

    #[test]
    fn gibbs_table_examples() {
        let g4 = TorusGeometry::new(1, &[4]).unwrap();
        let t = gibbs_table(&ModelSpec::heat_bath_ising(0.0), &g4).unwrap();
        assert!(t.probs().iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-15));

        // 3-cycle at β=0.4: agreement count a ∈ {3, 1}; weight e^{β(2a-3)}.
        let beta = 0.4;
        let g3 = cycle(3);
        let t = gibbs_table(&ModelSpec::heat_bath_ising(beta), &g3).unwrap();
        let mut raw = Vec::new();
        for i in 0..8u64 {
            let spins: Vec<i32> = (0..3).map(|k| if i >> k & 1 == 1 { 1 } else { -1 }).collect();
            let e: i32 = (0..3).map(|k| spins[k] * spins[(k + 1) % 3]).sum();
            raw.push((beta * e as f64).exp());
        }
        let z: f64 = raw.iter().sum();
        for i in 0..8 {
            assert!((t.probs()[i] - raw[i] / z).abs() < 1e-14);
        }
        assert!((t.log_z() - z.ln()).abs() < 1e-14);

        let hc = gibbs_table(&model(Family::Hardcore, RateRule::HeatBath, 1.0, 0.0), &g3).unwrap();
        for (i, &p) in hc.probs().iter().enumerate() {
            let independent = matches!(i, 0 | 1 | 2 | 4);
            let expected = if independent { 0.25 } else { 0.0 };
            assert!((p - expected).abs() < 1e-15, "state {i}");
        }
        let sum: f64 = hc.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flip_rate_examples() {
        let g = cycle(5);
        let hb = ModelSpec::heat_bath_ising(0.0);
        let mp = ModelSpec::ising(0.0, 0.0, RateRule::Metropolis).unwrap();
        for s in enumerate_configurations(&g).unwrap() {
            for x in 0..5 {
                assert_eq!(flip_rate(&hb, &g, &s, x), 0.5);
                assert_eq!(flip_rate(&mp, &g, &s, x), 1.0);
            }
        }
        // Site 2 minus with both neighbors plus, β = 0.4.
        let m = ModelSpec::heat_bath_ising(0.4);
        let s = SpinConfiguration::from_spins(&[1, 1, -1, 1, 1]);
        let rate = flip_rate(&m, &g, &s, 2);
        assert!((rate - 1.0 / (1.0 + (-1.6f64).exp())).abs() < 1e-15);
        assert!((rate - 0.8320).abs() < 1e-4);
        // Cross-check against the Gibbs conditional from the exact table.
        let t = gibbs_table(&m, &g).unwrap();
        let plus = s.flipped(2);
        let cond = t.prob(&plus) / (t.prob(&plus) + t.prob(&s));
        assert!((rate - cond).abs() < 1e-12);
    }

    #[test]
    fn detailed_balance_residuals() {
        let g = cycle(5);
        let free = ModelSpec::heat_bath_ising(0.0);
        assert_eq!(check_detailed_balance(&free, &g, 100, 1).unwrap(), 0.0);
        for (family, rule) in ALL_MODELS {
            let m = model(family, rule, 0.4, 0.0);
            assert!(check_detailed_balance(&m, &g, 500, 2).unwrap() < 1e-12);
            let m = model(family, rule, 0.7, 0.3);
            assert!(check_detailed_balance(&m, &g, 500, 3).unwrap() < 1e-12);
        }
    }

    #[test]
    fn heat_bath_matches_gibbs_conditional() {
        let g = TorusGeometry::new(2, &[3, 4]).unwrap();
        for family in [Family::IsingFerro, Family::IsingAntiferro, Family::Hardcore] {
            let m = model(family, RateRule::HeatBath, 0.6, 0.2);
            let t = gibbs_table(&m, &g).unwrap();
            let kernel = m.kernel(g.degree());
            for idx in (0..(1u64 << 12)).step_by(37) {
                let s = SpinConfiguration::from_index(12, idx);
                for x in 0..12 {
                    let mut plus = s.clone();
                    plus.set(x, true);
                    let mut minus = s.clone();
                    minus.set(x, false);
                    let denom = t.prob(&plus) + t.prob(&minus);
                    if denom == 0.0 {
                        continue;
                    }
                    let cond = t.prob(&plus) / denom;
                    let k = UpdateKernel::plus_neighbors(&g, &s, x);
                    assert!((kernel.plus_probability(k) - cond).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parity_and_orders() {
        let m4 = parity_mask(&cycle(4)).unwrap();
        assert_eq!(
            (0..4).map(|s| m4.is_odd(s) as u8).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
        let g = TorusGeometry::new(2, &[4, 4]).unwrap();
        let mask = parity_mask(&g).unwrap();
        for s in 0..16 {
            for nb in g.neighbors(s) {
                assert_ne!(mask.is_odd(s), mask.is_odd(nb));
            }
        }
        assert!(parity_mask(&cycle(5)).is_err());

        let minus = SpinConfiguration::all_minus(4);
        let plus = SpinConfiguration::all_plus(4);
        let a = SpinConfiguration::from_spins(&[1, -1, 1, -1]);
        assert!(partial_order_leq(&minus, &a, None));
        assert!(partial_order_leq(&a, &plus, None));
        assert!(partial_order_leq(&a, &a, None));
        assert!(partial_order_leq(&a, &a, Some(&m4)));
        assert!(!partial_order_leq(&a, &plus, Some(&m4)));
    }

    #[test]
    fn monotone_order_selection() {
        let g4 = cycle(4);
        assert_eq!(
            monotone_order(&ModelSpec::heat_bath_ising(0.3), &g4).unwrap(),
            MonotoneOrder::Standard
        );
        let hc = model(Family::Hardcore, RateRule::HeatBath, 1.0, 0.0);
        let order = monotone_order(&hc, &g4).unwrap();
        assert_eq!(order.top(4).to_spins(), vec![1, -1, 1, -1]);
        assert!(monotone_order(&hc, &cycle(5)).is_err());
        let mp = model(Family::IsingFerro, RateRule::Metropolis, 0.3, 0.0);
        assert!(monotone_order(&mp, &g4).is_err());
    }

    proptest! {
        #[test]
        fn rates_obey_axioms(
            family_idx in 0usize..6,
            beta in 0.0f64..1.5,
            h in -1.0f64..1.0,
            idx in 0u64..(1 << 16),
            x in 0usize..16,
            far in 0usize..16,
            shift in 0i64..4,
        ) {
            let (family, rule) = ALL_MODELS[family_idx];
            let m = model(family, rule, beta.max(0.01), h);
            let g = TorusGeometry::new(2, &[4, 4]).unwrap();
            let s = SpinConfiguration::from_index(16, idx);
            let c = flip_rate(&m, &g, &s, x);
            prop_assert!((0.0..=1.0).contains(&c));
            if family != Family::Hardcore {
                prop_assert!(c > 0.0);
                // Ratio identity against Gibbs weights.
                let w = gibbs_log_weight(&m, &g, &s).finite().unwrap();
                let wf = gibbs_log_weight(&m, &g, &s.flipped(x)).finite().unwrap();
                let ratio = c / flip_rate(&m, &g, &s.flipped(x), x);
                prop_assert!((ratio - (wf - w).exp()).abs() <= 1e-12 * ratio.max(1.0));
            }
            // Finite range: spins at distance ≥ 2 do not matter.
            if g.distance(x, far, crate::lattice::Metric::GraphL1) >= 2 {
                prop_assert_eq!(c, flip_rate(&m, &g, &s.flipped(far), x));
            }
            // Translation covariance.
            let offset = [shift, 1 - shift];
            let mut moved = SpinConfiguration::all_minus(16);
            for v in 0..16 {
                moved.set(g.translate(v, &offset), s.get(v));
            }
            prop_assert_eq!(c, flip_rate(&m, &g, &moved, g.translate(x, &offset)));
        }
    }
}
