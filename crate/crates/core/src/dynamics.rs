//! The Kob-Andersen constraint, soft rates, and exact continuous-time
//! kinetic Monte Carlo simulation on the torus.
//!
//! Rate convention: each unordered edge carries one exponential clock of
//! rate `c^(eps)` evaluated at the current state. Exchanges with equal
//! occupancies are counted as attempts but change nothing.

use crate::error::{KaError, Result};
use crate::lattice::{neighbors, Configuration, Edge, Geometry, Site, TorusGeometry};
use rand::Rng;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub rho: f64,
}

impl ModelParams {
    /// `k = 1` is admitted as the SSEP reference case; otherwise
    /// `2 <= k <= d` is required.
    pub fn new(d: usize, k: usize, eps: f64, rho: f64) -> Result<Self> {
        if d < 1 {
            return Err(KaError::Params("d must be >= 1".into()));
        }
        if k == 0 || (k > 1 && k > d) {
            return Err(KaError::Params(format!("k = {k} not in {{1}} u [2, d]")));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(KaError::Params("eps must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(KaError::Params("rho must lie in [0, 1]".into()));
        }
        Ok(ModelParams { d, k, eps, rho })
    }
}

/// The KA constraint: 1 iff both endpoints have at least `k - 1` empty
/// neighbors besides each other. Never reads the occupancy of the
/// endpoints themselves. For `k = 1` the constraint is always satisfied.
pub fn constraint(config: &Configuration, edge: &Edge, params: &ModelParams) -> bool {
    constraint_at(config, &edge.a, &edge.b, params.k)
}

/// Constraint for an explicit site pair (must be nearest neighbors in the
/// caller's geometry; not re-validated here).
pub fn constraint_at(config: &Configuration, x: &Site, y: &Site, k: usize) -> bool {
    if k == 1 {
        return true;
    }
    let need = k - 1;
    let geom = config.geometry();
    let count_empty_excl = |center: &Site, excl: &Site| -> usize {
        neighbors(center, geom)
            .iter()
            .filter(|z| *z != excl && !config.get(z))
            .count()
    };
    count_empty_excl(y, x) >= need && count_empty_excl(x, y) >= need
}

/// Soft rate `c^(eps)`: 1 when the constraint holds, `eps` otherwise.
pub fn soft_rate(config: &Configuration, edge: &Edge, params: &ModelParams) -> f64 {
    if constraint(config, edge, params) {
        1.0
    } else {
        params.eps
    }
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct SimStats {
    pub attempted: u64,
    pub accepted: u64,
    pub elapsed: f64,
}

/// Flat torus indexing with O(1) neighbor arithmetic.
#[derive(Clone, Debug)]
pub(crate) struct TorusIndexer {
    pub d: usize,
    pub n: usize,
    strides: Vec<usize>,
}

impl TorusIndexer {
    pub fn new(geom: TorusGeometry) -> Self {
        let mut strides = vec![1usize; geom.d];
        for axis in (0..geom.d.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * geom.n;
        }
        TorusIndexer {
            d: geom.d,
            n: geom.n,
            strides,
        }
    }

    pub fn site_count(&self) -> usize {
        self.strides[0] * self.n
    }

    #[inline]
    pub fn neighbor(&self, i: usize, axis: usize, positive: bool) -> usize {
        let stride = self.strides[axis];
        let coord = (i / stride) % self.n;
        if positive {
            if coord + 1 == self.n {
                i - (self.n - 1) * stride
            } else {
                i + stride
            }
        } else if coord == 0 {
            i + (self.n - 1) * stride
        } else {
            i - stride
        }
    }

}

/// Sum tree over per-edge rates: O(log m) sampling and update.
struct RateTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    fn new(rates: &[f64]) -> Self {
        let leaves = rates.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + rates.len()].copy_from_slice(rates);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        RateTree { leaves, nodes }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, rate: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = rate;
        node /= 2;
        while node >= 1 {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            if node == 1 {
                break;
            }
            node /= 2;
        }
    }

    /// Leaf index for a point `r` in `[0, total)`.
    fn sample(&self, mut r: f64) -> usize {
        let mut node = 1usize;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if r < left {
                node = 2 * node;
            } else {
                r -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }
}

/// Event-driven KMC simulator for the (soft) KA dynamics on a torus.
/// Edge `s * d + axis` joins site `s` and `s + e_axis`. After an accepted
/// exchange only edges within graph distance 2 of the swapped pair can
/// change rate; exactly those are recomputed.
pub struct Simulator {
    idx: TorusIndexer,
    k: usize,
    eps: f64,
    config: Configuration,
    tree: RateTree,
    rates_fixed: bool,
    time: f64,
    stats: SimStats,
    scratch: Vec<usize>,
}

impl Simulator {
    pub fn new(config: Configuration, params: &ModelParams) -> Result<Self> {
        let geom = match config.geometry() {
            Geometry::Torus(t) => *t,
            Geometry::Window(_) => {
                return Err(KaError::Geometry("simulation requires a torus".into()))
            }
        };
        if geom.d != params.d {
            return Err(KaError::Params("params dimension mismatch".into()));
        }
        let idx = TorusIndexer::new(geom);
        let m = idx.site_count() * idx.d;
        let rates_fixed = params.k == 1 || params.eps == 1.0;
        let mut sim = Simulator {
            idx,
            k: params.k,
            eps: params.eps,
            config,
            tree: RateTree::new(&vec![0.0; m]),
            rates_fixed,
            time: 0.0,
            stats: SimStats::default(),
            scratch: Vec::with_capacity(64),
        };
        for e in 0..m {
            let r = sim.edge_rate(e);
            sim.tree.set(e, r);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            elapsed: self.time,
            ..self.stats
        }
    }

    #[inline]
    fn count_empty_excl(&self, center: usize, excl: usize) -> usize {
        let mut count = 0;
        for axis in 0..self.idx.d {
            for positive in [true, false] {
                let nb = self.idx.neighbor(center, axis, positive);
                if nb != excl && !self.config.get_index(nb) {
                    count += 1;
                }
            }
        }
        count
    }

    fn edge_rate(&self, edge: usize) -> f64 {
        if self.k == 1 {
            return 1.0;
        }
        let x = edge / self.idx.d;
        let axis = edge % self.idx.d;
        let y = self.idx.neighbor(x, axis, true);
        let need = self.k - 1;
        let ok = self.count_empty_excl(y, x) >= need && self.count_empty_excl(x, y) >= need;
        if ok {
            1.0
        } else {
            self.eps
        }
    }

    fn apply_event(&mut self, edge: usize) {
        let x = edge / self.idx.d;
        let axis = edge % self.idx.d;
        let y = self.idx.neighbor(x, axis, true);
        self.stats.attempted += 1;
        if self.config.get_index(x) == self.config.get_index(y) {
            return;
        }
        self.config.swap_indices(x, y);
        self.stats.accepted += 1;
        if self.rates_fixed {
            return;
        }
        debug_assert!(self.tree.get(edge) > 0.0);
        // refresh every edge incident to a neighbor of x or y
        self.scratch.clear();
        for center in [x, y] {
            for axis2 in 0..self.idx.d {
                for positive in [true, false] {
                    let s = self.idx.neighbor(center, axis2, positive);
                    for axis3 in 0..self.idx.d {
                        self.scratch.push(s * self.idx.d + axis3);
                        self.scratch
                            .push(self.idx.neighbor(s, axis3, false) * self.idx.d + axis3);
                    }
                }
            }
        }
        self.scratch.sort_unstable();
        self.scratch.dedup();
        let edges = std::mem::take(&mut self.scratch);
        for &e in &edges {
            let r = self.edge_rate(e);
            self.tree.set(e, r);
        }
        self.scratch = edges;
    }

    /// Advance to absolute time `t_target`.
    pub fn run_until(&mut self, t_target: f64, rng: &mut impl Rng) -> Result<()> {
        if t_target < self.time {
            return Err(KaError::Params("target time is in the past".into()));
        }
        loop {
            let total = self.tree.total();
            if total <= 0.0 {
                // absorbing: nothing can ever fire again
                self.time = t_target;
                return Ok(());
            }
            let dt = -(1.0 - rng.random::<f64>()).ln() / total;
            if self.time + dt > t_target {
                self.time = t_target;
                return Ok(());
            }
            self.time += dt;
            let r = rng.random::<f64>() * total;
            let edge = self.tree.sample(r.min(total * (1.0 - f64::EPSILON)));
            self.apply_event(edge);
        }
    }

    /// Attempt at most `max_events` events (stops early if the total rate
    /// vanishes). Returns the number of attempts made.
    pub fn run_events(&mut self, max_events: u64, rng: &mut impl Rng) -> u64 {
        let mut done = 0;
        while done < max_events {
            let total = self.tree.total();
            if total <= 0.0 {
                break;
            }
            let dt = -(1.0 - rng.random::<f64>()).ln() / total;
            self.time += dt;
            let r = rng.random::<f64>() * total;
            let edge = self.tree.sample(r.min(total * (1.0 - f64::EPSILON)));
            self.apply_event(edge);
            done += 1;
        }
        done
    }

    #[cfg(test)]
    fn check_rates(&self) {
        for e in 0..self.idx.site_count() * self.idx.d {
            assert_eq!(self.tree.get(e), self.edge_rate(e), "stale rate at edge {e}");
        }
    }
}

/// Run the (soft) KA dynamics for `duration` time units and return the
/// final configuration with trajectory counters.
pub fn simulate(
    config: &Configuration,
    params: &ModelParams,
    duration: f64,
    rng: &mut impl Rng,
) -> Result<(Configuration, SimStats)> {
    if duration < 0.0 {
        return Err(KaError::Params("duration must be nonnegative".into()));
    }
    let mut sim = Simulator::new(config.clone(), params)?;
    sim.run_until(duration, rng)?;
    let stats = sim.stats();
    Ok((sim.into_config(), stats))
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct DetailedBalanceReport {
    pub trials: usize,
    pub violations: usize,
}

/// Check `mu(eta) c(eta) = mu(eta^{x,y}) c(eta^{x,y})` on random
/// (configuration, edge) pairs in a window, for an arbitrary rate
/// function (the production rate is `soft_rate`; tests pass corrupted
/// rates as a negative control).
pub fn check_detailed_balance_with(
    params: &ModelParams,
    window: &crate::lattice::Window,
    trials: usize,
    rng: &mut impl Rng,
    rate_fn: impl Fn(&Configuration, &Site, &Site) -> f64,
) -> DetailedBalanceReport {
    let geom = Geometry::Window(window.clone());
    let mut violations = 0;
    for _ in 0..trials {
        let mut config = Configuration::empty(geom.clone());
        for i in 0..config.site_count() {
            config.set_index(i, rng.random::<f64>() < params.rho);
        }
        // random in-window edge
        let (x, y) = loop {
            let i = rng.random_range(0..config.site_count());
            let x = geom.site_at(i);
            let axis = rng.random_range(0..window.d());
            let delta = if rng.random::<bool>() { 1 } else { -1 };
            let y = x.shifted(axis, delta);
            if window.contains(&y) {
                break (x, y);
            }
        };
        let edge = Edge::new(&geom, x.clone(), y.clone()).unwrap();
        let swapped = config.exchange(&edge).unwrap();
        // mu is exchangeable and the exchange conserves particles, so the
        // measure factors cancel; the identity reduces to equal rates.
        let lhs = rate_fn(&config, &x, &y);
        let rhs = rate_fn(&swapped, &x, &y);
        if (lhs - rhs).abs() > 1e-12 {
            violations += 1;
        }
    }
    DetailedBalanceReport { trials, violations }
}

pub fn check_detailed_balance(
    params: &ModelParams,
    window: &crate::lattice::Window,
    trials: usize,
    rng: &mut impl Rng,
) -> DetailedBalanceReport {
    let k = params.k;
    let eps = params.eps;
    check_detailed_balance_with(params, window, trials, rng, move |config, x, y| {
        if constraint_at(config, x, y, k) {
            1.0
        } else {
            eps
        }
    })
}
