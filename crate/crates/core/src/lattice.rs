//! Periodic hypercubic lattices, packed spin configurations and site sets.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest lattice for which every configuration may be enumerated.
pub const ENUMERATION_CAP: usize = 24;

/// Neighbor tables are materialized up to this many sites.
const NEIGHBOR_TABLE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Shortest-path (wrapped ℓ¹) distance on the torus graph.
    GraphL1,
    /// Wrapped ℓ∞ distance.
    LInf,
}

/// The torus `Z_{n_1} × … × Z_{n_d}` with row-major site indexing
/// (the last axis varies fastest).
#[derive(Clone)]
pub struct TorusGeometry {
    sides: Vec<usize>,
    strides: Vec<usize>,
    n_sites: usize,
    table: Option<Vec<u32>>,
}

impl PartialEq for TorusGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.sides == other.sides
    }
}

impl Eq for TorusGeometry {}

impl fmt::Debug for TorusGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGeometry").field("sides", &self.sides).finish()
    }
}

impl TorusGeometry {
    pub fn new(dimension: usize, sides: &[usize]) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Geometry("dimension must be at least 1".into()));
        }
        if sides.len() != dimension {
            return Err(Error::Geometry(format!(
                "expected {dimension} side lengths, got {}",
                sides.len()
            )));
        }
        if let Some(&bad) = sides.iter().find(|&&s| s < 3) {
            return Err(Error::Geometry(format!(
                "side length {bad} is below the minimum of 3"
            )));
        }
        let n_sites = sides
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::Geometry(format!("site count of {sides:?} overflows")))?;
        let mut strides = vec![1usize; dimension];
        for axis in (0..dimension.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * sides[axis + 1];
        }
        let mut geometry = TorusGeometry {
            sides: sides.to_vec(),
            strides,
            n_sites,
            table: None,
        };
        if n_sites <= NEIGHBOR_TABLE_CAP {
            let degree = geometry.degree();
            let mut table = Vec::with_capacity(n_sites * degree);
            for site in 0..n_sites {
                for dir in 0..degree {
                    table.push(geometry.neighbor_arith(site, dir) as u32);
                }
            }
            geometry.table = Some(table);
        }
        Ok(geometry)
    }

    /// Hypercubic torus with equal sides.
    pub fn cube(dimension: usize, side: usize) -> Result<Self> {
        Self::new(dimension, &vec![side; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn degree(&self) -> usize {
        2 * self.sides.len()
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        (0..self.dimension()).map(|a| self.coord(site, a)).collect()
    }

    #[inline]
    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.sides[axis]
    }

    /// Site index of (possibly out-of-range) coordinates, wrapped onto the torus.
    pub fn site_wrapped(&self, coords: &[i64]) -> usize {
        coords
            .iter()
            .zip(&self.sides)
            .zip(&self.strides)
            .map(|((&c, &s), &st)| (c.rem_euclid(s as i64) as usize) * st)
            .sum()
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &st)| c * st)
            .sum()
    }

    fn neighbor_arith(&self, site: usize, dir: usize) -> usize {
        let axis = dir / 2;
        let side = self.sides[axis];
        let stride = self.strides[axis];
        let c = (site / stride) % side;
        if dir % 2 == 0 {
            if c + 1 == side {
                site - c * stride
            } else {
                site + stride
            }
        } else if c == 0 {
            site + (side - 1) * stride
        } else {
            site - stride
        }
    }

    /// Neighbor of `site` in direction `dir` (`2·axis` is +1, `2·axis+1` is −1).
    #[inline]
    pub fn neighbor(&self, site: usize, dir: usize) -> usize {
        match &self.table {
            Some(t) => t[site * self.degree() + dir] as usize,
            None => self.neighbor_arith(site, dir),
        }
    }

    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.degree()).map(move |dir| self.neighbor(site, dir))
    }

    pub fn distance(&self, u: usize, v: usize, metric: Metric) -> usize {
        let mut acc = 0;
        for axis in 0..self.dimension() {
            let a = self.coord(u, axis);
            let b = self.coord(v, axis);
            let diff = a.abs_diff(b);
            let wrapped = diff.min(self.sides[axis] - diff);
            acc = match metric {
                Metric::GraphL1 => acc + wrapped,
                Metric::LInf => acc.max(wrapped),
            };
        }
        acc
    }

    /// Translate `site` by the lattice vector `offset`.
    pub fn translate(&self, site: usize, offset: &[i64]) -> usize {
        let shifted: Vec<i64> = (0..self.dimension())
            .map(|a| self.coord(site, a) as i64 + offset[a])
            .collect();
        self.site_wrapped(&shifted)
    }

    /// True when every side is even, i.e. the torus graph is bipartite.
    pub fn is_bipartite(&self) -> bool {
        self.sides.iter().all(|s| s % 2 == 0)
    }
}

/// Bit-packed ±1 configuration: bit 1 is spin +1, bit 0 is spin −1.
///
/// For the hard-core model bit 1 means "occupied".
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    words: Vec<u64>,
    len: usize,
}

impl fmt::Debug for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len)
            .map(|i| if self.get(i) { '+' } else { '-' })
            .collect();
        write!(f, "SpinConfiguration({s})")
    }
}

impl SpinConfiguration {
    pub fn all_minus(len: usize) -> Self {
        SpinConfiguration {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn all_plus(len: usize) -> Self {
        let mut c = Self::all_minus(len);
        for w in c.words.iter_mut() {
            *w = u64::MAX;
        }
        c.clear_tail();
        c
    }

    /// Configuration whose packed representation is the integer `index`.
    pub fn from_index(len: usize, index: u64) -> Self {
        let mut c = Self::all_minus(len);
        if len > 0 {
            c.words[0] = index;
            c.clear_tail();
        }
        c
    }

    pub fn from_spins(spins: &[i8]) -> Self {
        let mut c = Self::all_minus(spins.len());
        for (i, &s) in spins.iter().enumerate() {
            if s > 0 {
                c.set(i, true);
            }
        }
        c
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Packed integer value; only meaningful for at most 64 sites.
    pub fn to_index(&self) -> u64 {
        debug_assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    #[inline]
    pub fn get(&self, site: usize) -> bool {
        (self.words[site >> 6] >> (site & 63)) & 1 == 1
    }

    #[inline]
    pub fn spin(&self, site: usize) -> i32 {
        if self.get(site) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, site: usize, plus: bool) {
        let mask = 1u64 << (site & 63);
        if plus {
            self.words[site >> 6] |= mask;
        } else {
            self.words[site >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, site: usize) {
        self.words[site >> 6] ^= 1u64 << (site & 63);
    }

    pub fn flipped(&self, site: usize) -> Self {
        let mut c = self.clone();
        c.flip(site);
        c
    }

    pub fn count_plus(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Σ σ(u).
    pub fn magnetization(&self) -> i64 {
        2 * self.count_plus() as i64 - self.len as i64
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn to_spins(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.spin(i) as i8).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

/// All `2^|V|` configurations in increasing packed-integer order.
pub fn enumerate_configurations(
    g: &TorusGeometry,
) -> Result<impl Iterator<Item = SpinConfiguration>> {
    let n = g.n_sites();
    if n > ENUMERATION_CAP {
        return Err(Error::SizeCap {
            what: "enumerated lattice",
            size: n,
            cap: ENUMERATION_CAP,
        });
    }
    Ok((0..(1u64 << n)).map(move |i| SpinConfiguration::from_index(n, i)))
}

/// A set of sites of one lattice, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    sites: Vec<usize>,
    universe: usize,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, universe: usize) -> Result<Self> {
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("region has duplicate sites".into()));
        }
        if let Some(&bad) = sites.iter().find(|&&s| s >= universe) {
            return Err(Error::InvalidArgument(format!(
                "site {bad} outside lattice of {universe} sites"
            )));
        }
        Ok(Region { sites, universe })
    }

    pub fn empty(universe: usize) -> Self {
        Region {
            sites: Vec::new(),
            universe,
        }
    }

    pub fn full(universe: usize) -> Self {
        Region {
            sites: (0..universe).collect(),
            universe,
        }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Region {
            sites: mask
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
            universe: mask.len(),
        }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|&s| other.contains(s))
    }

    pub fn to_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.universe];
        for &s in &self.sites {
            mask[s] = true;
        }
        mask
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Splits `region` into classes of the transitive closure of
/// "graph distance ≤ `linkage`". Components are ordered by smallest site.
pub fn region_components(g: &TorusGeometry, region: &Region, linkage: usize) -> Vec<Region> {
    let sites = region.sites();
    if sites.is_empty() {
        return Vec::new();
    }
    let d = g.dimension();
    let cell = linkage.max(1);
    // Cells are at least `cell` wide along every axis (the last cell absorbs
    // the remainder), so linked pairs always sit in cells adjacent mod count.
    let cells_per_axis: Vec<usize> = g.sides().iter().map(|&s| (s / cell).max(1)).collect();
    let cell_of = |site: usize| -> Vec<usize> {
        (0..d)
            .map(|a| (g.coord(site, a) / cell).min(cells_per_axis[a] - 1))
            .collect()
    };
    let mut buckets: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (i, &s) in sites.iter().enumerate() {
        buckets.entry(cell_of(s)).or_default().push(i);
    }
    let mut offsets: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..d {
        offsets = offsets
            .into_iter()
            .flat_map(|o| {
                (-1i64..=1).map(move |delta| {
                    let mut next = o.clone();
                    next.push(delta);
                    next
                })
            })
            .collect();
    }
    let mut dsu = DisjointSets::new(sites.len());
    for (key, members) in &buckets {
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for off in &offsets {
            let other: Vec<usize> = (0..d)
                .map(|a| {
                    (key[a] as i64 + off[a]).rem_euclid(cells_per_axis[a] as i64) as usize
                })
                .collect();
            if other < *key || seen.contains(&other) {
                continue;
            }
            seen.push(other.clone());
            let Some(partners) = buckets.get(&other) else {
                continue;
            };
            let same = other == *key;
            for (ai, &a) in members.iter().enumerate() {
                let start = if same { ai + 1 } else { 0 };
                for &b in &partners[start..] {
                    if dsu.find(a) != dsu.find(b)
                        && g.distance(sites[a], sites[b], Metric::GraphL1) <= linkage
                    {
                        dsu.union(a, b);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..sites.len() {
        let r = dsu.find(i);
        groups.entry(r).or_default().push(sites[i]);
    }
    let mut out: Vec<Region> = groups
        .into_values()
        .map(|s| Region {
            sites: s,
            universe: region.universe(),
        })
        .collect();
    out.sort_by_key(|r| r.sites[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builds_small_tori() {
        let cycle = TorusGeometry::new(1, &[6]).unwrap();
        assert_eq!(cycle.n_sites(), 6);
        for s in 0..6 {
            assert_eq!(cycle.neighbors(s).count(), 2);
        }
        let sq = TorusGeometry::new(2, &[3, 3]).unwrap();
        assert_eq!(sq.n_sites(), 9);
        for s in 0..9 {
            let mut n: Vec<_> = sq.neighbors(s).collect();
            n.sort();
            n.dedup();
            assert_eq!(n.len(), 4);
        }
        let big = TorusGeometry::new(2, &[500, 500]).unwrap();
        assert_eq!(big.n_sites(), 250_000);
    }

    #[test]
    fn rejects_bad_sides() {
        assert!(TorusGeometry::new(1, &[2]).is_err());
        assert!(TorusGeometry::new(2, &[3]).is_err());
        assert!(TorusGeometry::new(0, &[]).is_err());
        assert!(TorusGeometry::new(3, &[1 << 12, 1 << 12, 1 << 12]).is_err());
    }

    #[test]
    fn untabled_geometry_matches_table() {
        let g = TorusGeometry::new(2, &[1100, 1000]).unwrap();
        assert!(g.table.is_none());
        let corner = g.site(&[1099, 0]);
        let n: Vec<_> = g.neighbors(corner).collect();
        assert_eq!(
            n,
            vec![g.site(&[0, 0]), g.site(&[1098, 0]), g.site(&[1099, 1]), g.site(&[1099, 999])]
        );
    }

    #[test]
    fn distances() {
        let cycle = TorusGeometry::new(1, &[6]).unwrap();
        assert_eq!(cycle.distance(0, 5, Metric::GraphL1), 1);
        let sq = TorusGeometry::new(2, &[3, 3]).unwrap();
        let o = sq.site(&[0, 0]);
        assert_eq!(sq.distance(o, sq.site(&[1, 2]), Metric::LInf), 1);
        assert_eq!(sq.distance(o, sq.site(&[1, 1]), Metric::GraphL1), 2);
    }

    #[test]
    fn enumeration() {
        let g = TorusGeometry::new(2, &[3, 3]).unwrap();
        let all: Vec<_> = enumerate_configurations(&g).unwrap().collect();
        assert_eq!(all.len(), 512);
        assert_eq!(all[0], SpinConfiguration::all_minus(9));
        assert_eq!(all[511], SpinConfiguration::all_plus(9));
        let mut uniq = all.clone();
        uniq.sort_by_key(|c| c.to_index());
        uniq.dedup();
        assert_eq!(uniq.len(), 512);
        let g25 = TorusGeometry::new(2, &[5, 5]).unwrap();
        assert!(enumerate_configurations(&g25).is_err());
    }

    #[test]
    fn enumeration_of_two_sites_via_packed_order() {
        // Tori have at least three sites, so the two-site case is checked on
        // the packed representation directly.
        let all: Vec<_> = (0..4u64).map(|i| SpinConfiguration::from_index(2, i)).collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].to_spins(), vec![-1, -1]);
        assert_eq!(all[1].to_spins(), vec![1, -1]);
    }

    #[test]
    fn components_examples() {
        let g = TorusGeometry::new(1, &[20]).unwrap();
        let single = Region::new(vec![4], 20).unwrap();
        assert_eq!(region_components(&g, &single, 4).len(), 1);
        let apart = Region::new(vec![0, 5], 20).unwrap();
        assert_eq!(region_components(&g, &apart, 4).len(), 2);
        // Pairwise distances 2, 2, 4 and linkage 3: chained into one.
        let chain = Region::new(vec![0, 2, 4], 20).unwrap();
        assert_eq!(region_components(&g, &chain, 3).len(), 1);
        // Wraparound link.
        let wrap = Region::new(vec![1, 18], 20).unwrap();
        assert_eq!(region_components(&g, &wrap, 3).len(), 1);
        assert!(region_components(&g, &Region::empty(20), 3).is_empty());
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(vec![1, 1], 4).is_err());
        assert!(Region::new(vec![4], 4).is_err());
        let r = Region::new(vec![3, 0], 4).unwrap();
        assert_eq!(r.sites(), &[0, 3]);
    }

    fn brute_components(g: &TorusGeometry, sites: &[usize], linkage: usize) -> Vec<Vec<usize>> {
        let n = sites.len();
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if g.distance(sites[i], sites[j], Metric::GraphL1) <= linkage
                        && label[i] != label[j]
                    {
                        let m = label[i].min(label[j]);
                        label[i] = m;
                        label[j] = m;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            groups.entry(label[i]).or_default().push(sites[i]);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        for grp in out.iter_mut() {
            grp.sort();
        }
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn metric_axioms(a in 3usize..9, b in 3usize..9, u in 0usize..64, v in 0usize..64) {
            let g = TorusGeometry::new(2, &[a, b]).unwrap();
            let (u, v) = (u % g.n_sites(), v % g.n_sites());
            for m in [Metric::GraphL1, Metric::LInf] {
                prop_assert_eq!(g.distance(u, v, m), g.distance(v, u, m));
                prop_assert_eq!(g.distance(u, v, m) == 0, u == v);
            }
            prop_assert!(g.distance(u, v, Metric::GraphL1) >= g.distance(u, v, Metric::LInf));
            let is_nb = g.neighbors(u).any(|w| w == v);
            prop_assert_eq!(is_nb, g.distance(u, v, Metric::GraphL1) == 1);
            if is_nb {
                prop_assert!(g.neighbors(v).any(|w| w == u));
            }
        }

        #[test]
        fn components_match_brute_force(
            side in 3usize..12,
            raw in proptest::collection::btree_set(0usize..144, 0..20),
            linkage in 0usize..6,
        ) {
            let g = TorusGeometry::new(2, &[side, side]).unwrap();
            let sites: Vec<usize> = raw.into_iter().filter(|&s| s < g.n_sites()).collect();
            let region = Region::new(sites.clone(), g.n_sites()).unwrap();
            let mut fast: Vec<Vec<usize>> = region_components(&g, &region, linkage)
                .into_iter()
                .map(|r| r.sites().to_vec())
                .collect();
            fast.sort();
            prop_assert_eq!(fast, brute_components(&g, &sites, linkage));
        }

        #[test]
        fn packing_round_trips(spins in proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], 1..200)) {
            let c = SpinConfiguration::from_spins(&spins);
            prop_assert_eq!(c.to_spins(), spins.clone());
            let m: i64 = spins.iter().map(|&s| s as i64).sum();
            prop_assert_eq!(c.magnetization(), m);
        }
    }
}
