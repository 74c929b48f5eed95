//! Continuous-time single-site dynamics driven by explicit update sequences.
//!
//! An update sequence is a Poisson stream of rate |V| on `[0, t_end]` whose
//! events carry a uniformly chosen site and a uniform variate. Replaying the
//! same sequence from different starts gives the grand coupling.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::lattice::{SpinConfiguration, TorusGeometry};
use crate::model::{monotone_order, ModelSpec, MonotoneOrder, UpdateKernel};
use crate::rng::{rng_from_seed, split_seed_tagged, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateEvent {
    pub time: f64,
    pub site: u32,
    pub u: f64,
}

/// Infinite event stream of a seeded rate-|V| Poisson process.
pub struct EventStream {
    rng: SimRng,
    n_sites: usize,
    time: f64,
}

impl EventStream {
    pub fn new(n_sites: usize, seed: u64) -> Self {
        EventStream {
            rng: rng_from_seed(seed),
            n_sites,
            time: 0.0,
        }
    }
}

impl Iterator for EventStream {
    type Item = UpdateEvent;

    fn next(&mut self) -> Option<UpdateEvent> {
        let gap: f64 = Exp1.sample(&mut self.rng);
        self.time += gap / self.n_sites as f64;
        let site = self.rng.random_range(0..self.n_sites) as u32;
        let u: f64 = self.rng.random();
        Some(UpdateEvent {
            time: self.time,
            site,
            u,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSequence {
    sides: Vec<usize>,
    t_end: f64,
    seed: u64,
    events: Vec<UpdateEvent>,
}

const SEQUENCE_MAGIC: &[u8; 8] = b"GLDUPS01";

impl UpdateSequence {
    /// Build a sequence from explicit events (used for hand-made fixtures).
    pub fn from_events(
        g: &TorusGeometry,
        t_end: f64,
        events: Vec<UpdateEvent>,
    ) -> Result<Self> {
        let mut last = f64::NEG_INFINITY;
        for e in &events {
            if !(e.time > last && e.time >= 0.0 && e.time <= t_end) {
                return Err(Error::InvalidArgument(format!(
                    "event times must increase strictly within [0, {t_end}]"
                )));
            }
            if e.site as usize >= g.n_sites() || !(0.0..1.0).contains(&e.u) {
                return Err(Error::InvalidArgument(format!("event {e:?} out of range")));
            }
            last = e.time;
        }
        Ok(UpdateSequence {
            sides: g.sides().to_vec(),
            t_end,
            seed: 0,
            events,
        })
    }

    pub fn events(&self) -> &[UpdateEvent] {
        &self.events
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The sub-sequence on `[0, t]`.
    pub fn prefix(&self, t: f64) -> UpdateSequence {
        let t = t.min(self.t_end);
        let cut = self.events.partition_point(|e| e.time <= t);
        UpdateSequence {
            sides: self.sides.clone(),
            t_end: t,
            seed: self.seed,
            events: self.events[..cut].to_vec(),
        }
    }

    pub fn check_geometry(&self, g: &TorusGeometry) -> Result<()> {
        if self.sides != g.sides() {
            return Err(Error::InvalidArgument(format!(
                "update sequence built for {:?}, used on {:?}",
                self.sides,
                g.sides()
            )));
        }
        Ok(())
    }

    /// Binary record stream: magic, header, then `(f64 time, u32 site, f64 u)`
    /// records, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SEQUENCE_MAGIC)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.t_end.to_le_bytes())?;
        w.write_all(&(self.sides.len() as u32).to_le_bytes())?;
        for &s in &self.sides {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for e in &self.events {
            w.write_all(&e.time.to_le_bytes())?;
            w.write_all(&e.site.to_le_bytes())?;
            w.write_all(&e.u.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SEQUENCE_MAGIC {
            return Err(Error::Format("not an update-sequence stream (bad magic)".into()));
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let t_end = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        let mut sides = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            sides.push(u64::from_le_bytes(b8) as usize);
        }
        let g = TorusGeometry::new(d, &sides)?;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut events = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            let time = f64::from_le_bytes(b8);
            r.read_exact(&mut b4)?;
            let site = u32::from_le_bytes(b4);
            r.read_exact(&mut b8)?;
            let u = f64::from_le_bytes(b8);
            events.push(UpdateEvent { time, site, u });
        }
        let mut seq = UpdateSequence::from_events(&g, t_end, events)
            .map_err(|e| Error::Format(e.to_string()))?;
        seq.seed = seed;
        Ok(seq)
    }
}

pub fn sample_update_sequence(g: &TorusGeometry, t_end: f64, seed: u64) -> Result<UpdateSequence> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and ≥ 0, got {t_end}")));
    }
    let events = EventStream::new(g.n_sites(), seed)
        .take_while(|e| e.time <= t_end)
        .collect();
    Ok(UpdateSequence {
        sides: g.sides().to_vec(),
        t_end,
        seed,
        events,
    })
}

/// Replays `events` in order on `state`.
pub fn replay(kernel: &UpdateKernel, g: &TorusGeometry, state: &mut SpinConfiguration, events: &[UpdateEvent]) {
    for e in events {
        kernel.apply(g, state, e.site as usize, e.u);
    }
}

/// The deterministic image `g_W(x0)`.
pub fn apply_updates(
    m: &ModelSpec,
    g: &TorusGeometry,
    x0: &SpinConfiguration,
    w: &UpdateSequence,
) -> Result<SpinConfiguration> {
    w.check_geometry(g)?;
    if x0.len() != g.n_sites() {
        return Err(Error::InvalidArgument("start configuration size mismatch".into()));
    }
    let mut state = x0.clone();
    replay(&m.kernel(g.degree()), g, &mut state, w.events());
    Ok(state)
}

/// Named chains evolving under one shared update sequence.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    pub model: ModelSpec,
    pub geometry: TorusGeometry,
    pub chains: Vec<(String, SpinConfiguration)>,
}

impl ChainEnsemble {
    pub fn new(model: ModelSpec, geometry: TorusGeometry) -> Self {
        ChainEnsemble {
            model,
            geometry,
            chains: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, start: SpinConfiguration) -> Result<()> {
        if start.len() != self.geometry.n_sites() {
            return Err(Error::InvalidArgument("start configuration size mismatch".into()));
        }
        self.chains.push((name.into(), start));
        Ok(())
    }

    /// Replays `w` on every chain, returning snapshots `[chain][time]` taken
    /// after all events with time ≤ each record time.
    pub fn run(&mut self, w: &UpdateSequence, record_times: &[f64]) -> Result<Vec<Vec<SpinConfiguration>>> {
        w.check_geometry(&self.geometry)?;
        if record_times.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::InvalidArgument("record times must be sorted".into()));
        }
        let kernel = self.model.kernel(self.geometry.degree());
        let g = &self.geometry;
        let events = w.events();
        Ok(self
            .chains
            .iter_mut()
            .map(|(_, state)| {
                let mut snaps = Vec::with_capacity(record_times.len());
                let mut next = 0;
                for &t in record_times {
                    let cut = events.partition_point(|e| e.time <= t);
                    if cut > next {
                        replay(&kernel, g, state, &events[next..cut]);
                        next = cut;
                    }
                    snaps.push(state.clone());
                }
                replay(&kernel, g, state, &events[next..]);
                snaps
            })
            .collect())
    }
}

pub fn run_grand_coupling(
    m: &ModelSpec,
    g: &TorusGeometry,
    starts: &[SpinConfiguration],
    w: &UpdateSequence,
    record_times: &[f64],
) -> Result<Vec<Vec<SpinConfiguration>>> {
    let mut ensemble = ChainEnsemble::new(*m, g.clone());
    for (i, s) in starts.iter().enumerate() {
        ensemble.push(format!("chain{i}"), s.clone())?;
    }
    ensemble.run(w, record_times)
}

/// Top and bottom chains with an O(1)-per-event disagreement counter.
pub struct ExtremePair<'a> {
    kernel: UpdateKernel,
    geometry: &'a TorusGeometry,
    pub top: SpinConfiguration,
    pub bottom: SpinConfiguration,
    disagreements: usize,
}

impl<'a> ExtremePair<'a> {
    pub fn new(m: &ModelSpec, g: &'a TorusGeometry, order: &MonotoneOrder) -> Self {
        let top = order.top(g.n_sites());
        let bottom = order.bottom(g.n_sites());
        let disagreements = top.hamming(&bottom);
        ExtremePair {
            kernel: m.kernel(g.degree()),
            geometry: g,
            top,
            bottom,
            disagreements,
        }
    }

    #[inline]
    pub fn step(&mut self, site: usize, u: f64) {
        let before = self.top.get(site) != self.bottom.get(site);
        self.kernel.apply(self.geometry, &mut self.top, site, u);
        self.kernel.apply(self.geometry, &mut self.bottom, site, u);
        let after = self.top.get(site) != self.bottom.get(site);
        match (before, after) {
            (true, false) => self.disagreements -= 1,
            (false, true) => self.disagreements += 1,
            _ => {}
        }
    }

    pub fn disagreements(&self) -> usize {
        self.disagreements
    }

    pub fn coalesced(&self) -> bool {
        self.disagreements == 0
    }
}

/// First event time at which the top and bottom chains agree everywhere,
/// under the sequence `sample_update_sequence(g, t_cap, seed)`; `None` when
/// that does not happen by `t_cap`.
pub fn coalescence_time(m: &ModelSpec, g: &TorusGeometry, seed: u64, t_cap: f64) -> Result<Option<f64>> {
    let order = monotone_order(m, g)?;
    let mut pair = ExtremePair::new(m, g, &order);
    if pair.coalesced() {
        return Ok(Some(0.0));
    }
    for e in EventStream::new(g.n_sites(), seed) {
        if e.time > t_cap {
            return Ok(None);
        }
        pair.step(e.site as usize, e.u);
        if pair.coalesced() {
            return Ok(Some(e.time));
        }
    }
    unreachable!("event stream is infinite")
}

pub const DEFAULT_MAX_DOUBLINGS: u32 = 24;

/// Outcome of a coupling-from-the-past run.
#[derive(Debug, Clone)]
pub struct CftpOutcome {
    pub sample: SpinConfiguration,
    /// Length of the window that produced coalescence.
    pub window: f64,
}

/// Per-site pin used for conditioned sampling (`None` = free site).
pub type Pins = [Option<bool>];

/// Monotone coupling from the past with windows 1, 2, 4, …; the randomness of
/// each window segment is fixed by `(seed, segment)` and reused whenever the
/// window is extended further into the past.
pub fn cftp(
    m: &ModelSpec,
    g: &TorusGeometry,
    seed: u64,
    max_doublings: u32,
    pins: Option<&Pins>,
) -> Result<CftpOutcome> {
    let order = monotone_order(m, g)?;
    let n = g.n_sites();
    if let Some(p) = pins {
        if p.len() != n {
            return Err(Error::InvalidArgument("pin vector size mismatch".into()));
        }
    }
    let kernel = m.kernel(g.degree());
    let pin_state = |mut c: SpinConfiguration| {
        if let Some(p) = pins {
            for (v, pin) in p.iter().enumerate() {
                if let Some(val) = pin {
                    c.set(v, *val);
                }
            }
        }
        c
    };
    let free = |site: usize| pins.is_none_or(|p| p[site].is_none());
    // segments[k] holds the events of [-2^k, -2^{k-1}) (k ≥ 1) or [-1, 0).
    let mut segments: Vec<Vec<UpdateEvent>> = Vec::new();
    for k in 0..=max_doublings {
        let len = if k == 0 { 1.0 } else { (1u64 << (k - 1)) as f64 };
        let segment_seed = split_seed_tagged(seed, "cftp-segment", k as u64);
        segments.push(
            EventStream::new(n, segment_seed)
                .take_while(|e| e.time < len)
                .collect(),
        );
        let mut top = pin_state(order.top(n));
        let mut bottom = pin_state(order.bottom(n));
        for seg in segments.iter().rev() {
            for e in seg {
                let site = e.site as usize;
                if free(site) {
                    kernel.apply(g, &mut top, site, e.u);
                    kernel.apply(g, &mut bottom, site, e.u);
                }
            }
        }
        if top == bottom {
            return Ok(CftpOutcome {
                sample: top,
                window: (1u64 << k) as f64,
            });
        }
    }
    Err(Error::Numerical(format!(
        "coupling from the past did not coalesce within 2^{max_doublings} time units"
    )))
}

/// Exact sample from the Gibbs measure of a monotone instance.
pub fn cftp_sample(m: &ModelSpec, g: &TorusGeometry, seed: u64) -> Result<SpinConfiguration> {
    Ok(cftp(m, g, seed, DEFAULT_MAX_DOUBLINGS, None)?.sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::enumerate_configurations;
    use crate::model::{gibbs_table, Family, RateRule};
    use crate::rng::split_seed;
    use proptest::prelude::*;

    fn cycle(n: usize) -> TorusGeometry {
        TorusGeometry::new(1, &[n]).unwrap()
    }

    #[test]
    fn empty_and_deterministic_sequences() {
        let g = cycle(10);
        assert!(sample_update_sequence(&g, 0.0, 3).unwrap().is_empty());
        let a = sample_update_sequence(&g, 5.0, 11).unwrap();
        let b = sample_update_sequence(&g, 5.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.events().windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events().iter().all(|e| e.time <= 5.0));
        assert!(sample_update_sequence(&g, -1.0, 0).is_err());
    }

    #[test]
    fn prefix_is_consistent_with_shorter_horizon() {
        let g = cycle(8);
        let long = sample_update_sequence(&g, 6.0, 4).unwrap();
        let short = sample_update_sequence(&g, 2.5, 4).unwrap();
        assert_eq!(long.prefix(2.5).events(), short.events());
    }

    #[test]
    fn event_count_matches_poisson_mean() {
        // |V| = 100, horizon 5: the count is Poisson(500).
        let g = TorusGeometry::new(2, &[10, 10]).unwrap();
        let reps = 10_000;
        let counts: Vec<f64> = (0..reps)
            .map(|r| sample_update_sequence(&g, 5.0, split_seed(99, r)).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let se = (500.0f64 / reps as f64).sqrt();
        assert!((mean - 500.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn apply_examples() {
        let g = cycle(6);
        let m = ModelSpec::heat_bath_ising(0.4);
        let x0 = SpinConfiguration::from_spins(&[1, -1, 1, 1, -1, -1]);
        let empty = UpdateSequence::from_events(&g, 1.0, vec![]).unwrap();
        assert_eq!(apply_updates(&m, &g, &x0, &empty).unwrap(), x0);

        let free = ModelSpec::heat_bath_ising(0.0);
        let events: Vec<UpdateEvent> = (0..6)
            .map(|s| UpdateEvent {
                time: 0.1 * (s + 1) as f64,
                site: s as u32,
                u: 0.15 * s as f64 + 0.05,
            })
            .collect();
        let w = UpdateSequence::from_events(&g, 1.0, events).unwrap();
        let outs: Vec<_> = enumerate_configurations(&g)
            .unwrap()
            .map(|x| apply_updates(&free, &g, &x, &w).unwrap())
            .collect();
        assert!(outs.iter().all(|o| *o == outs[0]));
    }

    #[test]
    fn golden_three_event_replay() {
        // Hand-stepped on the 4-cycle at β = 0.4 from (+,-,-,+):
        //  t=0.1 site 1, u=0.5: neighbors 0(+),2(-) → sum 0, P(+)=1/2, u<1/2? no → -.
        //  t=0.2 site 2, u=0.2: neighbors 1(-),3(+) → sum 0, P(+)=1/2 → +.
        //  t=0.3 site 1, u=0.7: neighbors 0(+),2(+) → sum 2, P(+)=1/(1+e^{-1.6})≈0.832 → +.
        let g = cycle(4);
        let m = ModelSpec::heat_bath_ising(0.4);
        let x0 = SpinConfiguration::from_spins(&[1, -1, -1, 1]);
        let events = vec![
            UpdateEvent { time: 0.1, site: 1, u: 0.5 },
            UpdateEvent { time: 0.2, site: 2, u: 0.2 },
            UpdateEvent { time: 0.3, site: 1, u: 0.7 },
        ];
        let w = UpdateSequence::from_events(&g, 1.0, events).unwrap();
        let out = apply_updates(&m, &g, &x0, &w).unwrap();
        assert_eq!(out.to_spins(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn grand_coupling_basics() {
        let g = cycle(12);
        let m = ModelSpec::heat_bath_ising(0.5);
        let w = sample_update_sequence(&g, 6.0, 8).unwrap();
        let x = SpinConfiguration::from_index(12, 0b1010_0110_0101);
        let times = [0.5, 1.0, 2.0, 4.0, 6.0];
        let single = run_grand_coupling(&m, &g, std::slice::from_ref(&x), &w, &times).unwrap();
        assert_eq!(single[0][4], apply_updates(&m, &g, &x, &w).unwrap());
        let pair = run_grand_coupling(
            &m,
            &g,
            &[SpinConfiguration::all_minus(12), SpinConfiguration::all_plus(12)],
            &w,
            &times,
        )
        .unwrap();
        let mut met = false;
        for k in 0..times.len() {
            assert!(crate::model::partial_order_leq(&pair[0][k], &pair[1][k], None));
            if met {
                assert_eq!(pair[0][k], pair[1][k]);
            }
            met |= pair[0][k] == pair[1][k];
        }
    }

    #[test]
    fn coalescence_examples() {
        let g = cycle(16);
        let free = ModelSpec::heat_bath_ising(0.0);
        assert_eq!(coalescence_time(&free, &g, 1, 0.0).unwrap(), None);
        // At β = 0 every site coalesces at its first update: coupon collector,
        // expected time H_16 = Σ 1/k.
        let reps = 4000;
        let mean = (0..reps)
            .map(|r| coalescence_time(&free, &g, split_seed(5, r), 1e6).unwrap().unwrap())
            .sum::<f64>()
            / reps as f64;
        let harmonic: f64 = (1..=16).map(|k| 1.0 / k as f64).sum();
        assert!((mean - harmonic).abs() < 0.1 * harmonic, "mean {mean} vs {harmonic}");

        let g32 = cycle(32);
        let median = |beta: f64| {
            let m = ModelSpec::heat_bath_ising(beta);
            let mut ts: Vec<f64> = (0..200)
                .map(|r| coalescence_time(&m, &g32, split_seed(77, r), 1e6).unwrap().unwrap())
                .collect();
            ts.sort_by(f64::total_cmp);
            ts[100]
        };
        assert!(median(0.2) <= median(0.8));
    }

    #[test]
    fn coalescence_matches_sequence_replay() {
        let g = cycle(10);
        let m = ModelSpec::heat_bath_ising(0.3);
        let t = coalescence_time(&m, &g, 21, 100.0).unwrap().unwrap();
        let w = sample_update_sequence(&g, 100.0, 21).unwrap();
        let before = w.prefix(t - 1e-12);
        let at = w.prefix(t);
        let run = |seq: &UpdateSequence| {
            (
                apply_updates(&m, &g, &SpinConfiguration::all_plus(10), seq).unwrap(),
                apply_updates(&m, &g, &SpinConfiguration::all_minus(10), seq).unwrap(),
            )
        };
        let (a, b) = run(&before);
        assert_ne!(a, b);
        let (a, b) = run(&at);
        assert_eq!(a, b);
    }

    #[test]
    fn cftp_uniform_at_infinite_temperature() {
        let g = TorusGeometry::new(1, &[4]).unwrap();
        let m = ModelSpec::heat_bath_ising(0.0);
        let n = 100_000u64;
        let mut counts = [0u64; 16];
        for r in 0..n {
            counts[cftp_sample(&m, &g, split_seed(3, r)).unwrap().to_index() as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²₁₅ upper 0.001 quantile is 37.70.
        assert!(chi2 < 37.70, "chi2 {chi2}");
    }

    #[test]
    fn cftp_matches_exact_edge_agreement_and_is_independent() {
        let g = cycle(6);
        let m = ModelSpec::heat_bath_ising(0.4);
        let table = gibbs_table(&m, &g).unwrap();
        let agree = |s: &SpinConfiguration| (0..6).filter(|&i| s.get(i) == s.get((i + 1) % 6)).count() as f64 / 6.0;
        let exact = table.expect(agree);
        let n = 10_000;
        let samples: Vec<SpinConfiguration> = (0..n).map(|r| cftp_sample(&m, &g, split_seed(17, r)).unwrap()).collect();
        let vals: Vec<f64> = samples.iter().map(agree).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - exact).abs() < 3.0 * (var / n as f64).sqrt(), "{mean} vs {exact}");

        let mags: Vec<f64> = samples.iter().map(|s| s.magnetization() as f64).collect();
        let mm = mags.iter().sum::<f64>() / n as f64;
        let num: f64 = mags.windows(2).map(|w| (w[0] - mm) * (w[1] - mm)).sum();
        let den: f64 = mags.iter().map(|v| (v - mm).powi(2)).sum();
        assert!((num / den).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn cftp_respects_pins_and_hardcore() {
        let g = cycle(6);
        let m = ModelSpec::heat_bath_ising(0.5);
        let pins: Vec<Option<bool>> = (0..6).map(|v| (v == 0).then_some(true)).collect();
        for r in 0..50 {
            let s = cftp(&m, &g, r, 20, Some(&pins)).unwrap().sample;
            assert!(s.get(0));
        }
        let hc = ModelSpec::new(Family::Hardcore, 1.5, 0.0, RateRule::HeatBath).unwrap();
        for r in 0..50 {
            let s = cftp_sample(&hc, &g, r).unwrap();
            for v in 0..6 {
                assert!(!(s.get(v) && s.get((v + 1) % 6)));
            }
        }
        let mp = ModelSpec::ising(0.3, 0.0, RateRule::Metropolis).unwrap();
        assert!(cftp_sample(&mp, &g, 0).is_err());
    }

    #[test]
    fn binary_round_trip_and_rejection() {
        let g = TorusGeometry::new(2, &[4, 5]).unwrap();
        let w = sample_update_sequence(&g, 3.0, 1234).unwrap();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], SEQUENCE_MAGIC);
        let back = UpdateSequence::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, w);
        buf[0] = b'X';
        assert!(UpdateSequence::read_from(buf.as_slice()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn heat_bath_preserves_order(seed in any::<u64>(), beta in 0.0f64..1.0, h in -0.5f64..0.5, a in any::<u64>(), b in any::<u64>()) {
            let g = TorusGeometry::new(2, &[4, 4]).unwrap();
            let m = ModelSpec::ising(beta, h, RateRule::HeatBath).unwrap();
            let lo = SpinConfiguration::from_index(16, (a & b) & 0xFFFF);
            let hi = SpinConfiguration::from_index(16, (a | b) & 0xFFFF);
            let w = sample_update_sequence(&g, 3.0, seed).unwrap();
            let x = apply_updates(&m, &g, &lo, &w).unwrap();
            let y = apply_updates(&m, &g, &hi, &w).unwrap();
            prop_assert!(crate::model::partial_order_leq(&x, &y, None));
        }
    }
}
