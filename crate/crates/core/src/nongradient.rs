//! Finite certificates of the non-gradient structure of the constrained
//! dynamics: multistep-move validation with collision accounting,
//! reachability of configurations under allowed exchanges, directional
//! stretch of vacancy sets, mobile-cluster verification, and
//! constraint-weighted current sums with an explicit nonzero-current
//! witness configuration.
//!
//! All window computations use the exterior-occupied convention and
//! explicit state caps; a cap hit is reported as a distinct outcome,
//! never silently coerced into a number.

use crate::bootstrap::SiteSet;
use crate::dynamics::constraint_at;
use crate::error::{KaError, Result};
use crate::lattice::{Configuration, Coord, Geometry, Site, TorusGeometry, Window};
use std::collections::{HashMap, HashSet, VecDeque};

/// A step direction: one of the 2d unit vectors, or staying put (an
/// exchange of a site with itself, which leaves the configuration
/// unchanged and is always allowed).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Direction {
    Stay,
    Unit { axis: usize, positive: bool },
}

impl Direction {
    pub fn apply(&self, x: &Site) -> Site {
        match self {
            Direction::Stay => x.clone(),
            Direction::Unit { axis, positive } => {
                x.shifted(*axis, if *positive { 1 } else { -1 })
            }
        }
    }

    /// Inner product of the direction vector with a site (0 for `Stay`).
    pub fn dot(&self, y: &Site) -> Coord {
        match self {
            Direction::Stay => 0,
            Direction::Unit { axis, positive } => {
                if *positive {
                    y.0[*axis]
                } else {
                    -y.0[*axis]
                }
            }
        }
    }

    /// The 2d unit directions in the order `+e_1, -e_1, ..., +e_d, -e_d`.
    pub fn units(d: usize) -> Vec<Direction> {
        (0..d)
            .flat_map(|axis| {
                [true, false].map(|positive| Direction::Unit { axis, positive })
            })
            .collect()
    }
}

/// One step of a multistep move: the exchange site, its direction, and
/// the configuration after the exchange (recorded explicitly so that a
/// supplied move can be checked for internal consistency).
#[derive(Clone, Debug)]
pub struct MoveStep {
    pub site: Site,
    pub dir: Direction,
    pub config: Configuration,
}

/// A multistep move on a window configuration: the initial configuration
/// followed by the exchanges applied to it, in order.
#[derive(Clone, Debug)]
pub struct MoveSequence {
    pub initial: Configuration,
    pub steps: Vec<MoveStep>,
}

/// Outcome of move validation. `valid` means every step's constraint
/// holds (steps with direction `Stay` pass automatically); structural
/// defects are errors, not `valid = false`. `loss` is only computed for
/// families: the base-2 logarithm of the largest set of members that
/// agree on some step's (configuration, site, direction) triple, so an
/// injective family has loss 0.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MoveValidation {
    pub valid: bool,
    pub loss: Option<f64>,
}

/// Packed occupancy bits, used as a hash key for configurations sharing
/// a geometry.
fn config_key(c: &Configuration) -> Vec<u8> {
    let n = c.site_count();
    let mut out = vec![0u8; n.div_ceil(8)];
    for i in 0..n {
        if c.get_index(i) {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn window_of(config: &Configuration, what: &str) -> Result<Window> {
    match config.geometry() {
        Geometry::Window(w) => Ok(w.clone()),
        Geometry::Torus(_) => Err(KaError::Window(format!(
            "{what} requires a window configuration"
        ))),
    }
}

/// Checks one sequence for structural consistency and returns, per step,
/// the exchange partner site (`None` for `Stay` steps). Errors are
/// structural defects: geometry mismatches, sites or partners outside
/// the window, or an intermediate configuration that is not the exchange
/// of its predecessor.
fn check_structure(seq: &MoveSequence) -> Result<Vec<Option<Site>>> {
    let window = window_of(&seq.initial, "move validation")?;
    let mut partners = Vec::with_capacity(seq.steps.len());
    let mut prev = &seq.initial;
    for (t, step) in seq.steps.iter().enumerate() {
        if step.config.geometry() != seq.initial.geometry() {
            return Err(KaError::MoveSequence(format!(
                "step {t}: configuration geometry differs from the initial one"
            )));
        }
        if !window.contains(&step.site) {
            return Err(KaError::MoveSequence(format!(
                "step {t}: site {:?} outside the window",
                step.site
            )));
        }
        match step.dir {
            Direction::Stay => {
                if step.config != *prev {
                    return Err(KaError::MoveSequence(format!(
                        "step {t}: stay step must leave the configuration unchanged"
                    )));
                }
                partners.push(None);
            }
            Direction::Unit { .. } => {
                let y = step.dir.apply(&step.site);
                if !window.contains(&y) {
                    return Err(KaError::MoveSequence(format!(
                        "step {t}: exchange partner {y:?} outside the window"
                    )));
                }
                let ix = window.index_of(&step.site).unwrap();
                let iy = window.index_of(&y).unwrap();
                let mut expected = prev.clone();
                expected.swap_indices(ix, iy);
                if step.config != expected {
                    return Err(KaError::MoveSequence(format!(
                        "step {t}: configuration is not the exchange of its predecessor"
                    )));
                }
                partners.push(Some(y));
            }
        }
        prev = &step.config;
    }
    Ok(partners)
}

fn steps_allowed(seq: &MoveSequence, partners: &[Option<Site>], k: usize) -> bool {
    seq.steps.iter().zip(partners).all(|(step, partner)| {
        match partner {
            None => true,
            // the constraint never reads the occupancies of the exchanged
            // pair, so checking it on the post-exchange configuration is
            // equivalent to checking it before the move
            Some(y) => constraint_at(&step.config, &step.site, y, k),
        }
    })
}

/// Validates a single multistep move: structural defects are errors,
/// and `valid` reports whether every exchange satisfies the constraint.
/// The loss is a family-level quantity and is not computed here.
pub fn validate_multistep_move(seq: &MoveSequence, k: usize) -> Result<MoveValidation> {
    let partners = check_structure(seq)?;
    Ok(MoveValidation {
        valid: steps_allowed(seq, &partners, k),
        loss: None,
    })
}

/// Validates a family of multistep moves over a common window and of
/// common length, and computes its loss: the base-2 logarithm of the
/// largest number of members that share a step's (configuration, site,
/// direction) triple. Members are distinguished at step 0 by their
/// initial configurations, so an injective family has loss exactly 0.
pub fn validate_move_family(family: &[MoveSequence], k: usize) -> Result<MoveValidation> {
    if family.is_empty() {
        return Err(KaError::MoveSequence("empty move family".into()));
    }
    let geom = family[0].initial.geometry().clone();
    let len = family[0].steps.len();
    let mut valid = true;
    let mut partners_all = Vec::with_capacity(family.len());
    for (i, seq) in family.iter().enumerate() {
        if seq.initial.geometry() != &geom {
            return Err(KaError::MoveSequence(format!(
                "family member {i}: window differs from member 0"
            )));
        }
        if seq.steps.len() != len {
            return Err(KaError::MoveSequence(format!(
                "family member {i}: length differs from member 0"
            )));
        }
        let partners = check_structure(seq)?;
        valid &= steps_allowed(seq, &partners, k);
        partners_all.push(partners);
    }
    let mut max_bucket = 1usize;
    for t in 0..=len {
        let mut buckets: HashMap<(Vec<u8>, Vec<Coord>, Direction), usize> = HashMap::new();
        for seq in family {
            let key = if t == 0 {
                (config_key(&seq.initial), Vec::new(), Direction::Stay)
            } else {
                let step = &seq.steps[t - 1];
                (config_key(&step.config), step.site.0.clone(), step.dir)
            };
            let count = buckets.entry(key).or_insert(0);
            *count += 1;
            max_bucket = max_bucket.max(*count);
        }
    }
    Ok(MoveValidation {
        valid,
        loss: Some((max_bucket as f64).log2()),
    })
}

/// Which exchanges generate the reachability graph.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConnectMode {
    /// Any constraint-allowed exchange of unequal occupancies.
    Connected,
    /// Only exchanges that move a vacancy one step in the fixed
    /// direction (the site is empty and its partner in that direction
    /// is occupied).
    EConnected(Direction),
}

/// Breadth-first exploration of the configurations reachable from a
/// starting one.
#[derive(Clone, Debug)]
pub struct Reachability {
    /// Distinct configurations reached, in discovery order (the start
    /// first).
    pub configurations: Vec<Configuration>,
    /// Union of the empty sites over the reachable configurations.
    pub reachable_sites: SiteSet,
    /// True when the state cap stopped the search early; the result is
    /// then a partial lower bound.
    pub cap_hit: bool,
}

/// Reachability under the hard constraint with parameter `k`.
pub fn reachable_configurations(
    eta0: &Configuration,
    k: usize,
    mode: ConnectMode,
    cap: usize,
) -> Result<Reachability> {
    reachable_configurations_with(eta0, mode, cap, |c, x, y| constraint_at(c, x, y, k))
}

/// Reachability with a caller-supplied exchange rule: `allowed(config,
/// x, y)` decides whether the exchange of the adjacent sites `x, y` is
/// permitted. The rule must not depend on the occupancies of `x` and
/// `y` themselves, so that allowed exchanges are reversible.
pub fn reachable_configurations_with(
    eta0: &Configuration,
    mode: ConnectMode,
    cap: usize,
    allowed: impl Fn(&Configuration, &Site, &Site) -> bool,
) -> Result<Reachability> {
    let window = window_of(eta0, "reachability")?;
    if cap == 0 {
        return Err(KaError::Params("state cap must be positive".into()));
    }
    if matches!(mode, ConnectMode::EConnected(Direction::Stay)) {
        return Err(KaError::Params(
            "directed reachability needs a unit direction".into(),
        ));
    }
    let d = window.d();
    let count = window.site_count();
    let mut visited: HashSet<Vec<u8>> = HashSet::new();
    visited.insert(config_key(eta0));
    let mut queue: VecDeque<Configuration> = VecDeque::new();
    queue.push_back(eta0.clone());
    let mut configurations = vec![eta0.clone()];
    let mut empty_union = vec![false; count];
    for i in 0..count {
        empty_union[i] |= !eta0.get_index(i);
    }
    let mut cap_hit = false;

    let try_push = |next: Configuration,
                        visited: &mut HashSet<Vec<u8>>,
                        queue: &mut VecDeque<Configuration>,
                        configurations: &mut Vec<Configuration>,
                        empty_union: &mut Vec<bool>,
                        cap_hit: &mut bool| {
        let key = config_key(&next);
        if visited.contains(&key) {
            return;
        }
        if visited.len() >= cap {
            *cap_hit = true;
            return;
        }
        visited.insert(key);
        for i in 0..count {
            empty_union[i] |= !next.get_index(i);
        }
        queue.push_back(next.clone());
        configurations.push(next);
    };

    while let Some(cfg) = queue.pop_front() {
        match mode {
            ConnectMode::Connected => {
                for i in 0..count {
                    let x = window.site_at(i);
                    for axis in 0..d {
                        let y = x.shifted(axis, 1);
                        let Some(j) = window.index_of(&y) else { continue };
                        if cfg.get_index(i) == cfg.get_index(j) {
                            continue; // equal occupancies: exchange is a no-op
                        }
                        if !allowed(&cfg, &x, &y) {
                            continue;
                        }
                        let mut next = cfg.clone();
                        next.swap_indices(i, j);
                        try_push(
                            next,
                            &mut visited,
                            &mut queue,
                            &mut configurations,
                            &mut empty_union,
                            &mut cap_hit,
                        );
                    }
                }
            }
            ConnectMode::EConnected(dir) => {
                for i in 0..count {
                    if cfg.get_index(i) {
                        continue;
                    }
                    let x = window.site_at(i);
                    let y = dir.apply(&x);
                    let Some(j) = window.index_of(&y) else { continue };
                    if !cfg.get_index(j) {
                        continue;
                    }
                    if !allowed(&cfg, &x, &y) {
                        continue;
                    }
                    let mut next = cfg.clone();
                    next.swap_indices(i, j);
                    try_push(
                        next,
                        &mut visited,
                        &mut queue,
                        &mut configurations,
                        &mut empty_union,
                        &mut cap_hit,
                    );
                }
            }
        }
    }
    let sites: Vec<Site> = (0..count)
        .filter(|i| empty_union[*i])
        .map(|i| window.site_at(i))
        .collect();
    Ok(Reachability {
        configurations,
        reachable_sites: SiteSet::from_sites(window, &sites),
        cap_hit,
    })
}

/// How far a vacancy set can push in one direction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Stretch {
    Exact(Coord),
    /// The search hit its state cap, so this is a lower bound only.
    AtLeast(Coord),
}

/// Maximum of `e . x` over the empty sites of every configuration
/// reachable from the all-filled-except-`a` configuration by moving
/// vacancies in the direction `e` (within the window, exterior
/// occupied). Since `a` itself is reachable, the result is at least
/// `max{e . x : x in a}`.
pub fn e_stretch(
    a: &[Site],
    e: Direction,
    window: &Window,
    k: usize,
    cap: usize,
) -> Result<Stretch> {
    if a.is_empty() {
        return Err(KaError::Params("vacancy set must be nonempty".into()));
    }
    if e == Direction::Stay {
        return Err(KaError::Params("stretch needs a unit direction".into()));
    }
    if let Some(s) = a.iter().find(|s| !window.contains(s)) {
        return Err(KaError::Window(format!("site {s:?} outside the window")));
    }
    let eta = Configuration::filled_except(Geometry::Window(window.clone()), a);
    let reach = reachable_configurations(&eta, k, ConnectMode::EConnected(e), cap)?;
    let best = reach
        .reachable_sites
        .sites()
        .iter()
        .map(|s| e.dot(s))
        .max()
        .expect("start configuration always contributes its vacancies");
    Ok(if reach.cap_hit {
        Stretch::AtLeast(best)
    } else {
        Stretch::Exact(best)
    })
}

/// A finite vacancy set to be checked for mobility, together with the
/// search box the exploration lives in and a state cap.
#[derive(Clone, Debug)]
pub struct ClusterCandidate {
    pub sites: Vec<Site>,
    pub window: Window,
    pub cap: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Pass,
    Fail,
    /// The state cap (or the box) was too small to decide.
    Indeterminate,
}

/// Result of the mobile-cluster check: whether the cluster can carry
/// itself one step in each unit direction (sufficient for arbitrary
/// translations by composition), and whether some translate of it
/// unlocks a fixed edge (sufficient for every edge by translation
/// symmetry).
#[derive(Clone, Debug)]
pub struct ClusterReport {
    /// Verdict per unit direction, in the order `+e_1, -e_1, ...,
    /// +e_d, -e_d`.
    pub translations: Vec<(Direction, Verdict)>,
    /// Whether some translate of the cluster satisfies the constraint
    /// at the edge `(0, e_1)`. Decided exactly by a finite scan.
    pub edge_coverage: bool,
}

pub fn verify_mobile_cluster(cand: &ClusterCandidate, k: usize) -> Result<ClusterReport> {
    if cand.sites.is_empty() {
        return Err(KaError::Params("cluster must be nonempty".into()));
    }
    if let Some(s) = cand.sites.iter().find(|s| !cand.window.contains(s)) {
        return Err(KaError::Window(format!("site {s:?} outside the search box")));
    }
    let d = cand.window.d();
    let geom = Geometry::Window(cand.window.clone());
    let eta = Configuration::filled_except(geom.clone(), &cand.sites);
    let reach = reachable_configurations(&eta, k, ConnectMode::Connected, cand.cap)?;
    let keys: HashSet<Vec<u8>> = reach.configurations.iter().map(config_key).collect();

    let mut translations = Vec::with_capacity(2 * d);
    for dir in Direction::units(d) {
        let shifted: Vec<Site> = cand.sites.iter().map(|s| dir.apply(s)).collect();
        let verdict = if shifted.iter().any(|s| !cand.window.contains(s)) {
            Verdict::Indeterminate // box too small to even place the target
        } else {
            let target = Configuration::filled_except(geom.clone(), &shifted);
            if keys.contains(&config_key(&target)) {
                Verdict::Pass
            } else if reach.cap_hit {
                Verdict::Indeterminate
            } else {
                Verdict::Fail
            }
        };
        translations.push((dir, verdict));
    }

    // Exact scan for a translate unlocking the edge (0, e_1): any useful
    // shift must bring a cluster site within distance 1 of an endpoint,
    // so a box of radius max|site| + 2 around the origin is exhaustive.
    let edge_coverage = if k == 1 {
        true
    } else {
        let set: HashSet<Vec<Coord>> = cand.sites.iter().map(|s| s.0.clone()).collect();
        let radius = cand.sites.iter().map(Site::norm_inf).max().unwrap() + 2;
        let origin = Site::origin(d);
        let e1 = Site::unit(d, 0);
        Window::centered(d, radius).sites().any(|z| {
            let is_empty = |s: &Site| set.contains(&s.sub(&z.0).0);
            let enough = |center: &Site, excl: &Site| {
                Direction::units(d)
                    .iter()
                    .map(|u| u.apply(center))
                    .filter(|w| w != excl && is_empty(w))
                    .count()
                    >= k - 1
            };
            enough(&origin, &e1) && enough(&e1, &origin)
        })
    };

    Ok(ClusterReport {
        translations,
        edge_coverage,
    })
}

/// Constraint-weighted current of a torus configuration under the hard
/// constraint with parameter `k`.
pub fn current_sum(config: &Configuration, k: usize) -> Result<Vec<i64>> {
    current_sum_with(config, |c, x, y| constraint_at(c, x, y, k))
}

/// Component `alpha` is the sum over all sites `x` of
/// `(eta(x) - eta(x + e_alpha)) * c(x, x + e_alpha)`, i.e. the net
/// occupancy drop across every unordered edge, oriented along `+e_alpha`
/// and weighted by the exchange rule. A nonzero value certifies that the
/// microscopic current is not a discrete gradient; for the unconstrained
/// walk (`c` identically 1) each component telescopes to zero.
pub fn current_sum_with(
    config: &Configuration,
    allowed: impl Fn(&Configuration, &Site, &Site) -> bool,
) -> Result<Vec<i64>> {
    let torus = match config.geometry() {
        Geometry::Torus(t) => *t,
        Geometry::Window(_) => {
            return Err(KaError::Geometry("current sum requires a torus".into()))
        }
    };
    let geom = config.geometry();
    let mut out = vec![0i64; torus.d];
    for i in 0..config.site_count() {
        let x = geom.site_at(i);
        let hx = config.get_index(i) as i64;
        for (axis, component) in out.iter_mut().enumerate() {
            let y = torus.canonicalize(&x.shifted(axis, 1));
            let hy = config.get(&y) as i64;
            if hx != hy && allowed(config, &x, &y) {
                *component += hx - hy;
            }
        }
    }
    Ok(out)
}

/// All `2d` neighbors of `center` except `excluded`, in lexicographic
/// coordinate order, truncated to `count`.
fn lex_first_neighbors(center: &Site, excluded: &Site, count: usize, d: usize) -> Vec<Site> {
    let mut sites: Vec<Site> = Direction::units(d)
        .iter()
        .map(|u| u.apply(center))
        .filter(|s| s != excluded)
        .collect();
    sites.sort_by(|a, b| a.0.cmp(&b.0));
    sites.truncate(count);
    sites
}

/// Builds a torus configuration whose current sum has a strictly
/// positive first component, certifying the non-gradient structure of
/// the constrained dynamics for `2 <= k <= d`.
///
/// The seed empties the origin together with the `k - 1`
/// lexicographically first neighbors of `0` other than `e_1` and of
/// `e_1` other than `0`, leaving `e_1` occupied and the exchange
/// `(0, e_1)` allowed. Vacancies are then pushed rightward greedily
/// (smallest canonical site first) while any exchange `(x, x + e_1)`
/// with `x` empty, `x + e_1` occupied, and the constraint satisfied
/// exists. At termination no edge contributes `-1` to the first current
/// component (such an edge would be another legal move), while the edge
/// of the final move contributes `+1`: the move only changed the
/// occupancies of its own endpoints, which the constraint never reads.
///
/// `k = 1` is rejected: the unconstrained walk has identically zero
/// current sums and its vacancies would cycle around the torus forever.
pub fn construct_witness(k: usize, d: usize, n: usize) -> Result<Configuration> {
    if k < 2 {
        return Err(KaError::Params(
            "no current-sum witness exists for k = 1 (zero current, \
             and the greedy push never terminates)"
                .into(),
        ));
    }
    if k > d {
        return Err(KaError::Params(format!(
            "witness construction needs k <= d, got k = {k}, d = {d}"
        )));
    }
    let torus = TorusGeometry::new(d, n)?;
    if n < 8 {
        return Err(KaError::Params(
            "torus side must be at least 8 so the pushed vacancies never wrap".into(),
        ));
    }
    let geom = Geometry::Torus(torus);
    let origin = Site::origin(d);
    let e1 = Site::unit(d, 0);
    let mut empties = vec![origin.clone()];
    empties.extend(lex_first_neighbors(&origin, &e1, k - 1, d));
    empties.extend(lex_first_neighbors(&e1, &origin, k - 1, d));
    let empties: Vec<Site> = empties.iter().map(|s| torus.canonicalize(s)).collect();
    let mut config = Configuration::filled_except(geom.clone(), &empties);
    debug_assert!(config.get(&e1));
    debug_assert!(constraint_at(&config, &origin, &e1, k));

    let cap = 4 * torus.site_count();
    for _ in 0..cap {
        let mut moved = false;
        for i in 0..config.site_count() {
            if config.get_index(i) {
                continue;
            }
            let x = geom.site_at(i);
            let y = torus.canonicalize(&x.shifted(0, 1));
            let j = geom.index_of(&y).unwrap();
            if config.get_index(j) && constraint_at(&config, &x, &y, k) {
                config.swap_indices(i, j);
                moved = true;
                break;
            }
        }
        if !moved {
            return Ok(config);
        }
    }
    Err(KaError::CapExceeded(cap))
}
