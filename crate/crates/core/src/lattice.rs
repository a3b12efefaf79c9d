//! Finite-torus and finite-window geometry, bit-packed occupancy
//! configurations, initial-state sampling, and snapshot I/O.
//!
//! A `Configuration` stores one bit per site in row-major order (first
//! coordinate slowest). Windows use the exterior-occupied convention:
//! reading a site outside the window bounds returns `true`.

use crate::error::{KaError, Result};
use rand::Rng;

pub type Coord = i64;

/// A lattice site, given by its integer coordinates. Torus sites are
/// kept in canonical representatives `[0, N)`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Site(pub Vec<Coord>);

impl Site {
    pub fn new(coords: impl Into<Vec<Coord>>) -> Self {
        Site(coords.into())
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    /// Standard basis vector e_alpha (alpha is zero-based).
    pub fn unit(d: usize, axis: usize) -> Self {
        let mut c = vec![0; d];
        c[axis] = 1;
        Site(c)
    }

    pub fn shifted(&self, axis: usize, delta: Coord) -> Self {
        let mut c = self.0.clone();
        c[axis] += delta;
        Site(c)
    }

    pub fn add(&self, v: &[Coord]) -> Self {
        Site(self.0.iter().zip(v).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, v: &[Coord]) -> Self {
        Site(self.0.iter().zip(v).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Site(self.0.iter().map(|a| -a).collect())
    }

    /// Sup-norm of the coordinate vector.
    pub fn norm_inf(&self) -> Coord {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct TorusGeometry {
    pub d: usize,
    pub n: usize,
}

impl TorusGeometry {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d < 1 {
            return Err(KaError::Geometry("dimension must be >= 1".into()));
        }
        if n < 3 {
            return Err(KaError::Geometry("side length must be >= 3".into()));
        }
        let mut count: usize = 1;
        for _ in 0..d {
            count = count
                .checked_mul(n)
                .ok_or_else(|| KaError::Geometry("site count overflows usize".into()))?;
        }
        let _ = count;
        Ok(TorusGeometry { d, n })
    }

    pub fn site_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn canonicalize(&self, site: &Site) -> Site {
        Site(
            site.0
                .iter()
                .map(|c| c.rem_euclid(self.n as Coord))
                .collect(),
        )
    }
}

/// An axis-aligned box of sites, bounds inclusive.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct Window {
    pub lo: Vec<Coord>,
    pub hi: Vec<Coord>,
}

impl Window {
    pub fn new(lo: Vec<Coord>, hi: Vec<Coord>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(KaError::Geometry("window bounds dimension mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(KaError::Geometry("window has empty extent".into()));
        }
        Ok(Window { lo, hi })
    }

    /// The centered box `[-r, r]^d`.
    pub fn centered(d: usize, r: Coord) -> Self {
        Window {
            lo: vec![-r; d],
            hi: vec![r; d],
        }
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn site_count(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .product()
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.0
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(c, (l, h))| c >= l && c <= h)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(|i| self.site_at(i))
    }

    pub fn index_of(&self, site: &Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for (c, (l, h)) in site.0.iter().zip(self.lo.iter().zip(&self.hi)) {
            idx = idx * ((h - l + 1) as usize) + (c - l) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let d = self.d();
        let mut coords = vec![0; d];
        for axis in (0..d).rev() {
            let extent = (self.hi[axis] - self.lo[axis] + 1) as usize;
            coords[axis] = self.lo[axis] + (idx % extent) as Coord;
            idx /= extent;
        }
        Site(coords)
    }
}

/// Flat row-major indexing over a window with O(1), allocation-free
/// neighbor arithmetic (`None` when the step leaves the window).
#[derive(Clone, Debug)]
pub(crate) struct WindowIndexer {
    pub lo: Vec<Coord>,
    pub extents: Vec<usize>,
    pub strides: Vec<usize>,
}

impl WindowIndexer {
    pub fn new(w: &Window) -> Self {
        let d = w.d();
        let extents: Vec<usize> = w
            .lo
            .iter()
            .zip(&w.hi)
            .map(|(l, h)| (h - l + 1) as usize)
            .collect();
        let mut strides = vec![1usize; d];
        for axis in (0..d.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * extents[axis + 1];
        }
        WindowIndexer {
            lo: w.lo.clone(),
            extents,
            strides,
        }
    }

    pub fn d(&self) -> usize {
        self.extents.len()
    }

    pub fn site_count(&self) -> usize {
        self.extents.iter().product()
    }

    #[inline]
    pub fn neighbor(&self, i: usize, axis: usize, positive: bool) -> Option<usize> {
        let stride = self.strides[axis];
        let coord = (i / stride) % self.extents[axis];
        if positive {
            if coord + 1 == self.extents[axis] {
                None
            } else {
                Some(i + stride)
            }
        } else if coord == 0 {
            None
        } else {
            Some(i - stride)
        }
    }

    pub fn index_of_coords(&self, coords: &[Coord]) -> Option<usize> {
        let mut idx = 0usize;
        for axis in 0..self.d() {
            let off = coords[axis] - self.lo[axis];
            if off < 0 || off as usize >= self.extents[axis] {
                return None;
            }
            idx += off as usize * self.strides[axis];
        }
        Some(idx)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Geometry {
    Torus(TorusGeometry),
    Window(Window),
}

impl Geometry {
    pub fn d(&self) -> usize {
        match self {
            Geometry::Torus(t) => t.d,
            Geometry::Window(w) => w.d(),
        }
    }

    pub fn site_count(&self) -> usize {
        match self {
            Geometry::Torus(t) => t.site_count(),
            Geometry::Window(w) => w.site_count(),
        }
    }

    /// Index of a site, if it belongs to the geometry. Torus coordinates
    /// are reduced first.
    pub fn index_of(&self, site: &Site) -> Option<usize> {
        match self {
            Geometry::Torus(t) => {
                let s = t.canonicalize(site);
                let mut idx = 0usize;
                for c in &s.0 {
                    idx = idx * t.n + *c as usize;
                }
                Some(idx)
            }
            Geometry::Window(w) => w.index_of(site),
        }
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        match self {
            Geometry::Torus(t) => {
                let mut coords = vec![0; t.d];
                for axis in (0..t.d).rev() {
                    coords[axis] = (idx % t.n) as Coord;
                    idx /= t.n;
                }
                Site(coords)
            }
            Geometry::Window(w) => w.site_at(idx),
        }
    }
}

/// The 2d nearest neighbors of a site, in the fixed order
/// `+e_1, -e_1, ..., +e_d, -e_d`. Torus coordinates wrap.
pub fn neighbors(site: &Site, geom: &Geometry) -> Vec<Site> {
    let d = site.d();
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        for delta in [1, -1] {
            let s = site.shifted(axis, delta);
            out.push(match geom {
                Geometry::Torus(t) => t.canonicalize(&s),
                Geometry::Window(_) => s,
            });
        }
    }
    out
}

/// A nearest-neighbor edge, stored with the lexicographically smaller
/// endpoint first.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Edge {
    pub a: Site,
    pub b: Site,
}

impl Edge {
    pub fn new(geom: &Geometry, x: Site, y: Site) -> Result<Self> {
        if x.d() != geom.d() || y.d() != geom.d() {
            return Err(KaError::Edge("endpoint dimension mismatch".into()));
        }
        let (x, y) = match geom {
            Geometry::Torus(t) => (t.canonicalize(&x), t.canonicalize(&y)),
            Geometry::Window(_) => (x, y),
        };
        let adjacent = match geom {
            Geometry::Torus(t) => {
                let mut diff_axes = 0;
                let mut ok = true;
                for axis in 0..t.d {
                    let diff = (x.0[axis] - y.0[axis]).rem_euclid(t.n as Coord);
                    if diff != 0 {
                        diff_axes += 1;
                        if diff != 1 && diff != t.n as Coord - 1 {
                            ok = false;
                        }
                    }
                }
                ok && diff_axes == 1
            }
            Geometry::Window(_) => {
                let mut diff_axes = 0;
                let mut ok = true;
                for axis in 0..x.d() {
                    let diff = (x.0[axis] - y.0[axis]).abs();
                    if diff != 0 {
                        diff_axes += 1;
                        if diff != 1 {
                            ok = false;
                        }
                    }
                }
                ok && diff_axes == 1
            }
        };
        if !adjacent {
            return Err(KaError::Edge(format!("{:?} and {:?} are not adjacent", x, y)));
        }
        if x.0 <= y.0 {
            Ok(Edge { a: x, b: y })
        } else {
            Ok(Edge { a: y, b: x })
        }
    }
}

/// Occupancy configuration over a torus or window, one bit per site
/// (1 = occupied). Value-like: cheap to clone, safe to send.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Configuration {
    geom: Geometry,
    bits: Vec<u64>,
}

impl Configuration {
    pub fn empty(geom: Geometry) -> Self {
        let words = geom.site_count().div_ceil(64);
        Configuration {
            geom,
            bits: vec![0; words],
        }
    }

    pub fn full(geom: Geometry) -> Self {
        let mut c = Self::empty(geom);
        for i in 0..c.geom.site_count() {
            c.set_index(i, true);
        }
        c
    }

    /// Entirely filled except the sites of `empties` (the configuration
    /// `eta_A` with `A = empties`).
    pub fn filled_except(geom: Geometry, empties: &[Site]) -> Self {
        let mut c = Self::full(geom);
        for s in empties {
            if let Some(i) = c.geom.index_of(s) {
                c.set_index(i, false);
            }
        }
        c
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn site_count(&self) -> usize {
        self.geom.site_count()
    }

    /// Occupancy at a site. Sites outside a window read as occupied.
    pub fn get(&self, site: &Site) -> bool {
        match self.geom.index_of(site) {
            Some(i) => self.get_index(i),
            None => true,
        }
    }

    pub fn get_index(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, site: &Site, occupied: bool) -> Result<()> {
        let i = self
            .geom
            .index_of(site)
            .ok_or_else(|| KaError::Geometry(format!("site {:?} outside geometry", site)))?;
        self.set_index(i, occupied);
        Ok(())
    }

    pub fn set_index(&mut self, i: usize, occupied: bool) {
        if occupied {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn occupied_count(&self) -> usize {
        let mut total: usize = self.bits.iter().map(|w| w.count_ones() as usize).sum();
        // mask out padding bits beyond site_count
        let extra = self.bits.len() * 64 - self.site_count();
        if extra > 0 {
            let last = *self.bits.last().unwrap();
            let pad = last >> (64 - extra);
            total -= pad.count_ones() as usize;
        }
        total
    }

    pub fn density(&self) -> f64 {
        self.occupied_count() as f64 / self.site_count() as f64
    }

    /// Swap occupancies along an edge (the configuration `eta^{x,y}`).
    /// An involution; conserves the particle count.
    pub fn exchange(&self, edge: &Edge) -> Result<Configuration> {
        let ia = self
            .geom
            .index_of(&edge.a)
            .ok_or_else(|| KaError::Edge("endpoint outside geometry".into()))?;
        let ib = self
            .geom
            .index_of(&edge.b)
            .ok_or_else(|| KaError::Edge("endpoint outside geometry".into()))?;
        let mut out = self.clone();
        out.swap_indices(ia, ib);
        Ok(out)
    }

    pub(crate) fn swap_indices(&mut self, i: usize, j: usize) {
        let vi = self.get_index(i);
        let vj = self.get_index(j);
        self.set_index(i, vj);
        self.set_index(j, vi);
    }

    /// Translation `tau_v`: `(tau_v eta)(y) = eta(y + v)` on the torus.
    pub fn translate(&self, v: &[Coord]) -> Result<Configuration> {
        let t = match &self.geom {
            Geometry::Torus(t) => *t,
            Geometry::Window(_) => {
                return Err(KaError::Geometry("translate requires a torus".into()))
            }
        };
        let mut out = Configuration::empty(self.geom.clone());
        for i in 0..self.site_count() {
            let y = self.geom.site_at(i);
            let src = t.canonicalize(&y.add(v));
            let j = self.geom.index_of(&src).unwrap();
            out.set_index(i, self.get_index(j));
        }
        Ok(out)
    }
}

/// Grid-sampled density profile on the continuous torus, values in [0, 1].
/// Lookup uses the nearest grid cell, no interpolation.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DensityProfile {
    d: usize,
    res: usize,
    values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(d: usize, res: usize, values: Vec<f64>) -> Result<Self> {
        if res == 0 || values.len() != res.pow(d as u32) {
            return Err(KaError::Params("profile grid size mismatch".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(KaError::Params("profile values must lie in [0,1]".into()));
        }
        Ok(DensityProfile { d, res, values })
    }

    pub fn constant(d: usize, rho: f64) -> Result<Self> {
        Self::new(d, 1, vec![rho])
    }

    /// Sample `f` at cell centers of a `res^d` grid.
    pub fn from_fn(d: usize, res: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let count = res.pow(d as u32);
        let mut values = Vec::with_capacity(count);
        let mut u = vec![0.0; d];
        for idx in 0..count {
            let mut rem = idx;
            for axis in (0..d).rev() {
                u[axis] = ((rem % res) as f64 + 0.5) / res as f64;
                rem /= res;
            }
            values.push(f(&u));
        }
        Self::new(d, res, values)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a point of the unit torus (coordinates taken mod 1).
    pub fn value_at_unit(&self, u: &[f64]) -> f64 {
        let mut idx = 0usize;
        for axis in 0..self.d {
            let frac = u[axis].rem_euclid(1.0);
            let cell = ((frac * self.res as f64) as usize).min(self.res - 1);
            idx = idx * self.res + cell;
        }
        self.values[idx]
    }

    /// Value at the macroscopic position `x / N` of a lattice site.
    pub fn value_at_site(&self, site: &Site, n: usize) -> f64 {
        let u: Vec<f64> = site.0.iter().map(|c| *c as f64 / n as f64).collect();
        self.value_at_unit(&u)
    }
}

/// Product-measure initial state: each site occupied independently with
/// probability `rho_0(x / N)`.
pub fn sample_product(
    geom: TorusGeometry,
    profile: &DensityProfile,
    rng: &mut impl Rng,
) -> Configuration {
    let g = Geometry::Torus(geom);
    let mut config = Configuration::empty(g.clone());
    for i in 0..config.site_count() {
        let site = g.site_at(i);
        let p = profile.value_at_site(&site, geom.n);
        config.set_index(i, rng.random::<f64>() < p);
    }
    config
}

/// Blocked initial state for d = 2, N divisible by 3: sites off the
/// sublattice 3Z^2 are occupied deterministically; sites on 3Z^2 are
/// occupied independently with probability `9 rho_0(x/N) - 8`.
pub fn construct_blocked(
    geom: TorusGeometry,
    profile: &DensityProfile,
    rng: &mut impl Rng,
) -> Result<Configuration> {
    if geom.d != 2 {
        return Err(KaError::Params("blocked construction requires d = 2".into()));
    }
    if geom.n % 3 != 0 {
        return Err(KaError::Params("blocked construction requires 3 | N".into()));
    }
    let g = Geometry::Torus(geom);
    let mut config = Configuration::empty(g.clone());
    for i in 0..config.site_count() {
        let site = g.site_at(i);
        let on_sublattice = site.0.iter().all(|c| c % 3 == 0);
        if !on_sublattice {
            config.set_index(i, true);
        } else {
            let rho = profile.value_at_site(&site, geom.n);
            let p = 9.0 * rho - 8.0;
            if p < 0.0 {
                return Err(KaError::Params(format!(
                    "profile value {rho} < 8/9 gives negative probability"
                )));
            }
            config.set_index(i, rng.random::<f64>() < p);
        }
    }
    Ok(config)
}

/// Snapshot text format: header `d N k`, then `N^d` characters '0'/'1'
/// in row-major order with a newline every `N` characters.
pub fn write_snapshot(config: &Configuration, k: usize) -> Result<String> {
    let t = match config.geometry() {
        Geometry::Torus(t) => *t,
        Geometry::Window(_) => {
            return Err(KaError::Snapshot("snapshot requires a torus".into()))
        }
    };
    let count = t.site_count();
    let mut out = String::with_capacity(count + count / t.n + 32);
    out.push_str(&format!("{} {} {}\n", t.d, t.n, k));
    for i in 0..count {
        out.push(if config.get_index(i) { '1' } else { '0' });
        if (i + 1) % t.n == 0 {
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn read_snapshot(text: &str) -> Result<(Configuration, usize)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| KaError::Snapshot("missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(KaError::Snapshot("header must be `d N k`".into()));
    }
    let d: usize = fields[0]
        .parse()
        .map_err(|_| KaError::Snapshot("bad dimension".into()))?;
    let n: usize = fields[1]
        .parse()
        .map_err(|_| KaError::Snapshot("bad side length".into()))?;
    let k: usize = fields[2]
        .parse()
        .map_err(|_| KaError::Snapshot("bad constraint parameter".into()))?;
    let geom = TorusGeometry::new(d, n)?;
    let mut config = Configuration::empty(Geometry::Torus(geom));
    let mut i = 0usize;
    for line in lines {
        for ch in line.chars() {
            if i >= geom.site_count() {
                return Err(KaError::Snapshot("too many occupancy characters".into()));
            }
            match ch {
                '0' => config.set_index(i, false),
                '1' => config.set_index(i, true),
                _ => return Err(KaError::Snapshot(format!("bad character {ch:?}"))),
            }
            i += 1;
        }
    }
    if i != geom.site_count() {
        return Err(KaError::Snapshot(format!(
            "expected {} occupancy characters, got {i}",
            geom.site_count()
        )));
    }
    Ok((config, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn neighbors_wrap_on_torus() {
        let geom = Geometry::Torus(TorusGeometry::new(2, 5).unwrap());
        let ns = neighbors(&Site::new([0, 0]), &geom);
        assert_eq!(
            ns,
            vec![
                Site::new([1, 0]),
                Site::new([4, 0]),
                Site::new([0, 1]),
                Site::new([0, 4]),
            ]
        );
    }

    #[test]
    fn neighbors_d1_and_d3() {
        let g1 = Geometry::Torus(TorusGeometry::new(1, 3).unwrap());
        assert_eq!(
            neighbors(&Site::new([2]), &g1),
            vec![Site::new([0]), Site::new([1])]
        );
        let g3 = Geometry::Torus(TorusGeometry::new(3, 4).unwrap());
        let ns = neighbors(&Site::new([1, 1, 1]), &g3);
        assert_eq!(ns.len(), 6);
        let mut uniq = ns.clone();
        uniq.sort_by(|a, b| a.0.cmp(&b.0));
        uniq.dedup();
        assert_eq!(uniq.len(), 6);
    }

    #[test]
    fn exchange_swaps_and_is_involutive() {
        let geom = Geometry::Torus(TorusGeometry::new(2, 4).unwrap());
        let mut config = Configuration::empty(geom.clone());
        let x = Site::new([0, 0]);
        let y = Site::new([1, 0]);
        config.set(&x, true).unwrap();
        let edge = Edge::new(&geom, x.clone(), y.clone()).unwrap();
        let swapped = config.exchange(&edge).unwrap();
        assert!(!swapped.get(&x));
        assert!(swapped.get(&y));
        assert_eq!(swapped.exchange(&edge).unwrap(), config);

        // equal occupancies: exchange is the identity
        let full = Configuration::full(geom.clone());
        assert_eq!(full.exchange(&edge).unwrap(), full);
    }

    #[test]
    fn exchange_involution_randomized() {
        let geom = TorusGeometry::new(2, 6).unwrap();
        let g = Geometry::Torus(geom);
        let mut rng = stream_rng(7, 0);
        let profile = DensityProfile::constant(2, 0.5).unwrap();
        for _ in 0..100 {
            let config = sample_product(geom, &profile, &mut rng);
            let x = Site::new([
                rng.random_range(0..6) as Coord,
                rng.random_range(0..6) as Coord,
            ]);
            let axis = rng.random_range(0..2);
            let y = match &g {
                Geometry::Torus(t) => t.canonicalize(&x.shifted(axis, 1)),
                _ => unreachable!(),
            };
            let edge = Edge::new(&g, x, y).unwrap();
            let count = config.occupied_count();
            let once = config.exchange(&edge).unwrap();
            assert_eq!(once.occupied_count(), count);
            assert_eq!(once.exchange(&edge).unwrap(), config);
        }
    }

    #[test]
    fn invalid_edge_rejected() {
        let geom = Geometry::Torus(TorusGeometry::new(2, 5).unwrap());
        assert!(Edge::new(&geom, Site::new([0, 0]), Site::new([2, 0])).is_err());
        assert!(Edge::new(&geom, Site::new([0, 0]), Site::new([1, 1])).is_err());
    }

    #[test]
    fn sample_product_extremes() {
        let geom = TorusGeometry::new(2, 8).unwrap();
        let mut rng = stream_rng(1, 0);
        let ones = sample_product(geom, &DensityProfile::constant(2, 1.0).unwrap(), &mut rng);
        assert_eq!(ones.occupied_count(), 64);
        let zeros = sample_product(geom, &DensityProfile::constant(2, 0.0).unwrap(), &mut rng);
        assert_eq!(zeros.occupied_count(), 0);
    }

    #[test]
    fn sample_product_binomial_concentration() {
        // constant profile 0.5, N=64, d=2: occupied fraction within 4 sigma
        let geom = TorusGeometry::new(2, 64).unwrap();
        let profile = DensityProfile::constant(2, 0.5).unwrap();
        let n = geom.site_count() as f64;
        let sigma = (0.25 / n).sqrt();
        for seed in 0..100 {
            let mut rng = stream_rng(42, seed);
            let config = sample_product(geom, &profile, &mut rng);
            let frac = config.density();
            assert!(
                (frac - 0.5).abs() < 4.0 * sigma,
                "seed {seed}: fraction {frac}"
            );
        }
    }

    #[test]
    fn blocked_construction_density_and_support() {
        let geom = TorusGeometry::new(2, 9).unwrap();
        let mut rng = stream_rng(3, 0);
        let p89 = DensityProfile::constant(2, 8.0 / 9.0).unwrap();
        let config = construct_blocked(geom, &p89, &mut rng).unwrap();
        // all 3Z^2 sites empty, everything else occupied: density exactly 8/9
        assert_eq!(config.occupied_count(), 81 - 9);
        for i in 0..config.site_count() {
            let s = Geometry::Torus(geom).site_at(i);
            let on = s.0.iter().all(|c| c % 3 == 0);
            assert_eq!(config.get_index(i), !on);
        }

        let ones = construct_blocked(geom, &DensityProfile::constant(2, 1.0).unwrap(), &mut rng)
            .unwrap();
        assert_eq!(ones.occupied_count(), 81);

        assert!(construct_blocked(
            geom,
            &DensityProfile::constant(2, 0.5).unwrap(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn blocked_construction_sublattice_binomial() {
        // profile 17/18: each 3Z^2 site occupied with probability 1/2
        let geom = TorusGeometry::new(2, 9).unwrap();
        let profile = DensityProfile::constant(2, 17.0 / 18.0).unwrap();
        let mut total = 0usize;
        let trials = 1000usize;
        for seed in 0..trials {
            let mut rng = stream_rng(99, seed as u64);
            let config = construct_blocked(geom, &profile, &mut rng).unwrap();
            for i in 0..config.site_count() {
                let s = Geometry::Torus(geom).site_at(i);
                if s.0.iter().all(|c| c % 3 == 0) && config.get_index(i) {
                    total += 1;
                }
            }
            // empty sites always lie on 3Z^2
            for i in 0..config.site_count() {
                if !config.get_index(i) {
                    let s = Geometry::Torus(geom).site_at(i);
                    assert!(s.0.iter().all(|c| c % 3 == 0));
                }
            }
        }
        let n = (trials * 9) as f64;
        let sigma = (0.25 * n).sqrt();
        assert!((total as f64 - 0.5 * n).abs() < 4.0 * sigma);
    }

    #[test]
    fn translate_properties() {
        let geom = TorusGeometry::new(2, 5).unwrap();
        let g = Geometry::Torus(geom);
        let mut rng = stream_rng(11, 0);
        let config = sample_product(geom, &DensityProfile::constant(2, 0.4).unwrap(), &mut rng);

        assert_eq!(config.translate(&[0, 0]).unwrap(), config);

        let mut shifted = config.clone();
        for _ in 0..5 {
            shifted = shifted.translate(&[1, 0]).unwrap();
        }
        assert_eq!(shifted, config);

        // group property
        let a = config.translate(&[2, 1]).unwrap().translate(&[1, 3]).unwrap();
        let b = config.translate(&[3, 4]).unwrap();
        assert_eq!(a, b);

        // single particle at origin moves to -e_1 mod N under tau_{e_1}
        let mut single = Configuration::empty(g.clone());
        single.set(&Site::new([0, 0]), true).unwrap();
        let moved = single.translate(&[1, 0]).unwrap();
        assert!(moved.get(&Site::new([4, 0])));
        assert_eq!(moved.occupied_count(), 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let geom = TorusGeometry::new(2, 6).unwrap();
        let mut rng = stream_rng(5, 0);
        let config = sample_product(geom, &DensityProfile::constant(2, 0.7).unwrap(), &mut rng);
        let text = write_snapshot(&config, 2).unwrap();
        let (back, k) = read_snapshot(&text).unwrap();
        assert_eq!(k, 2);
        assert_eq!(back, config);
        assert_eq!(write_snapshot(&back, 2).unwrap(), text);
    }

    #[test]
    fn window_exterior_reads_occupied() {
        let w = Window::centered(2, 2);
        let config = Configuration::empty(Geometry::Window(w));
        assert!(!config.get(&Site::new([0, 0])));
        assert!(config.get(&Site::new([3, 0])));
    }
}
