//! k-neighbor bootstrap percolation in a finite window: span computation,
//! connectivity inside the span, and the relevant-site classification.
//!
//! The span is computed by a work-queue algorithm (a site enters once its
//! in-span neighbor count reaches `k`); the synchronous fixed-point
//! iteration `span_naive` is the reference oracle. Neighbors outside the
//! window never count: the growing set lives inside `V`.

use crate::error::{KaError, Result};
use crate::lattice::{Configuration, Geometry, Site, Window, WindowIndexer};

/// A set of sites of a finite window `V`, stored as a membership mask.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SiteSet {
    window: Window,
    mask: Vec<bool>,
}

impl SiteSet {
    pub fn empty(window: Window) -> Self {
        let count = window.site_count();
        SiteSet {
            window,
            mask: vec![false; count],
        }
    }

    pub fn from_sites(window: Window, sites: &[Site]) -> Self {
        let mut set = Self::empty(window);
        for s in sites {
            set.insert(s);
        }
        set
    }

    /// Empty sites of a window configuration, as a subset of its window.
    pub fn empties_of(config: &Configuration) -> Result<Self> {
        let window = match config.geometry() {
            Geometry::Window(w) => w.clone(),
            Geometry::Torus(_) => {
                return Err(KaError::Window("expected a window configuration".into()))
            }
        };
        let mut set = Self::empty(window);
        for i in 0..set.mask.len() {
            set.mask[i] = !config.get_index(i);
        }
        Ok(set)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub(crate) fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn insert(&mut self, site: &Site) -> bool {
        match self.window.index_of(site) {
            Some(i) => {
                let was = self.mask[i];
                self.mask[i] = true;
                !was
            }
            None => false,
        }
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.window
            .index_of(site)
            .map(|i| self.mask[i])
            .unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|b| *b)
    }

    pub fn is_subset_of(&self, other: &SiteSet) -> bool {
        debug_assert_eq!(self.window, other.window);
        self.mask
            .iter()
            .zip(&other.mask)
            .all(|(a, b)| !*a || *b)
    }

    pub fn sites(&self) -> Vec<Site> {
        (0..self.mask.len())
            .filter(|i| self.mask[*i])
            .map(|i| self.window.site_at(i))
            .collect()
    }
}

/// Span of `A` in `V` with connected components of the induced subgraph
/// labeled (label -1 outside the span).
#[derive(Clone, Debug)]
pub struct SpanResult {
    pub window: Window,
    pub in_span: Vec<bool>,
    pub component: Vec<i32>,
}

impl SpanResult {
    pub fn span_set(&self) -> SiteSet {
        SiteSet {
            window: self.window.clone(),
            mask: self.in_span.clone(),
        }
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.window
            .index_of(site)
            .map(|i| self.in_span[i])
            .unwrap_or(false)
    }

    pub fn component_of(&self, site: &Site) -> Option<i32> {
        self.window.index_of(site).and_then(|i| {
            if self.in_span[i] {
                Some(self.component[i])
            } else {
                None
            }
        })
    }
}

/// Work-queue span: each site of `V` joins once `k` of its neighbors are
/// in the growing set. `A` is taken as a subset of its own window `V`.
pub fn span(a: &SiteSet, k: usize) -> SpanResult {
    let win = WindowIndexer::new(&a.window);
    let mut in_span = vec![false; win.site_count()];
    span_mask_into(a.mask(), &win, k, &mut in_span, &mut Vec::new(), &mut Vec::new());
    let component = label_components(&in_span, &win);
    SpanResult {
        window: a.window.clone(),
        in_span,
        component,
    }
}

pub(crate) fn span_mask_into(
    seed: &[bool],
    win: &WindowIndexer,
    k: usize,
    in_span: &mut [bool],
    counts: &mut Vec<u8>,
    queue: &mut Vec<usize>,
) {
    counts.clear();
    counts.resize(in_span.len(), 0);
    queue.clear();
    for i in 0..in_span.len() {
        in_span[i] = seed[i];
        if seed[i] {
            queue.push(i);
        }
    }
    while let Some(i) = queue.pop() {
        for axis in 0..win.d() {
            for positive in [true, false] {
                if let Some(nb) = win.neighbor(i, axis, positive) {
                    if !in_span[nb] {
                        counts[nb] += 1;
                        if counts[nb] as usize >= k {
                            in_span[nb] = true;
                            queue.push(nb);
                        }
                    }
                }
            }
        }
    }
}

fn label_components(in_span: &[bool], win: &WindowIndexer) -> Vec<i32> {
    let mut component = vec![-1i32; in_span.len()];
    let mut next = 0i32;
    let mut stack = Vec::new();
    for start in 0..in_span.len() {
        if !in_span[start] || component[start] >= 0 {
            continue;
        }
        component[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for axis in 0..win.d() {
                for positive in [true, false] {
                    if let Some(nb) = win.neighbor(i, axis, positive) {
                        if in_span[nb] && component[nb] < 0 {
                            component[nb] = next;
                            stack.push(nb);
                        }
                    }
                }
            }
        }
        next += 1;
    }
    component
}

/// Reference implementation: synchronous fixed-point iteration of
/// `A_{t+1} = A_t u {x in V : #neighbors in A_t >= k}`.
pub fn span_naive(a: &SiteSet, k: usize) -> SiteSet {
    let win = WindowIndexer::new(&a.window);
    let mut current = a.mask().to_vec();
    loop {
        let mut next = current.clone();
        let mut changed = false;
        for i in 0..current.len() {
            if current[i] {
                continue;
            }
            let mut count = 0;
            for axis in 0..win.d() {
                for positive in [true, false] {
                    if let Some(nb) = win.neighbor(i, axis, positive) {
                        if current[nb] {
                            count += 1;
                        }
                    }
                }
            }
            if count >= k {
                next[i] = true;
                changed = true;
            }
        }
        current = next;
        if !changed {
            break;
        }
    }
    SiteSet {
        window: a.window.clone(),
        mask: current,
    }
}

/// 1 iff `x` lies in the span of `A` in `V` and a nearest-neighbor path
/// inside the span joins it to a site of `S`.
pub fn connected_in_span(x: &Site, s: &[Site], a: &SiteSet, k: usize) -> bool {
    let result = span(a, k);
    match result.component_of(x) {
        None => false,
        Some(cx) => s
            .iter()
            .any(|site| result.component_of(site) == Some(cx)),
    }
}

pub(crate) fn reach_into(
    in_span: &[bool],
    win: &WindowIndexer,
    seeds: impl Iterator<Item = usize>,
    reached: &mut [bool],
    queue: &mut Vec<usize>,
) {
    reached.iter_mut().for_each(|r| *r = false);
    queue.clear();
    for i in seeds {
        if in_span[i] && !reached[i] {
            reached[i] = true;
            queue.push(i);
        }
    }
    while let Some(i) = queue.pop() {
        for axis in 0..win.d() {
            for positive in [true, false] {
                if let Some(nb) = win.neighbor(i, axis, positive) {
                    if in_span[nb] && !reached[nb] {
                        reached[nb] = true;
                        queue.push(nb);
                    }
                }
            }
        }
    }
}

/// Reusable buffers for the span + slab-reachability pipeline.
#[derive(Default)]
pub(crate) struct RelevantScratch {
    pub in_span: Vec<bool>,
    pub reached: Vec<bool>,
    counts: Vec<u8>,
    queue: Vec<usize>,
}

/// Relevant mask over a `[-2l, 2l]^d` window: true for sites NOT
/// connected to the central slab `{0,1} x [-2l,2l]^{d-1}` in the span of
/// the empty sites. `empty[i]` indexes the window row-major.
pub(crate) fn relevant_mask_into(
    empty: &[bool],
    win: &WindowIndexer,
    k: usize,
    scratch: &mut RelevantScratch,
) {
    scratch.in_span.resize(empty.len(), false);
    scratch.reached.resize(empty.len(), false);
    let mut counts = std::mem::take(&mut scratch.counts);
    let mut queue = std::mem::take(&mut scratch.queue);
    span_mask_into(empty, win, k, &mut scratch.in_span, &mut counts, &mut queue);
    // slab sites: first coordinate 0 or 1
    let stride0 = win.strides[0];
    let lo0 = win.lo[0];
    let per_slice = win.site_count() / win.extents[0];
    let slab = (0..2usize).flat_map(move |c| {
        let offset = ((c as i64 - lo0) as usize) * stride0;
        (0..per_slice).map(move |j| offset + j)
    });
    reach_into(&scratch.in_span, win, slab, &mut scratch.reached, &mut queue);
    scratch.counts = counts;
    scratch.queue = queue;
}

/// Sites of `Lambda_{2l}` not connected to the central slab
/// `{0,1} x [-2l,2l]^{d-1}` in the span of the empty set. Occupied sites
/// outside the span are relevant by this definition.
pub fn relevant_sites(config: &Configuration, l: i64, k: usize) -> Result<SiteSet> {
    let window = match config.geometry() {
        Geometry::Window(w) => w.clone(),
        Geometry::Torus(_) => {
            return Err(KaError::Window("relevant_sites needs a window".into()))
        }
    };
    let expected = Window::centered(window.d(), 2 * l);
    if window != expected {
        return Err(KaError::Window(format!(
            "window must be [-2l, 2l]^d with l = {l}"
        )));
    }
    let win = WindowIndexer::new(&window);
    let empty: Vec<bool> = (0..win.site_count()).map(|i| !config.get_index(i)).collect();
    let mut scratch = RelevantScratch::default();
    relevant_mask_into(&empty, &win, k, &mut scratch);
    let mask: Vec<bool> = scratch.reached.iter().map(|r| !r).collect();
    Ok(SiteSet { window, mask })
}

/// Debug dump: snapshot-style grid with '2' marking span membership on
/// top of the occupancies.
pub fn dump_span(a: &SiteSet, k: usize) -> String {
    let result = span(a, k);
    let win = WindowIndexer::new(&a.window);
    let mut out = String::new();
    let row = *win.extents.last().unwrap();
    for i in 0..win.site_count() {
        out.push(if result.in_span[i] {
            '2'
        } else if a.mask[i] {
            '0'
        } else {
            '1'
        });
        if (i + 1) % row == 0 {
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::constraint_at;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_set(window: Window, p: f64, rng: &mut impl Rng) -> SiteSet {
        let mut set = SiteSet::empty(window);
        for i in 0..set.mask.len() {
            set.mask[i] = rng.random::<f64>() < p;
        }
        set
    }

    #[test]
    fn span_trivial_cases() {
        let v = Window::new(vec![0, 0], vec![1, 1]).unwrap();
        let empty = SiteSet::empty(v.clone());
        assert!(span(&empty, 2).span_set().is_empty());

        let mut all = SiteSet::empty(v.clone());
        for s in v.sites() {
            all.insert(&s);
        }
        assert_eq!(span(&all, 2).span_set(), all);
    }

    #[test]
    fn span_diagonal_fills_square() {
        // k=2, V=[0,1]^2, A = two diagonal corners: the other two corners
        // each see two in-span neighbors and join
        let v = Window::new(vec![0, 0], vec![1, 1]).unwrap();
        let a = SiteSet::from_sites(v.clone(), &[Site::new([0, 0]), Site::new([1, 1])]);
        let result = span(&a, 2);
        assert_eq!(result.span_set().len(), 4);
        // and the whole square is one component
        assert_eq!(
            result.component_of(&Site::new([0, 0])),
            result.component_of(&Site::new([1, 1]))
        );
    }

    #[test]
    fn connected_in_span_cases() {
        let v = Window::new(vec![0, 0], vec![1, 1]).unwrap();
        let a = SiteSet::from_sites(v.clone(), &[Site::new([0, 0]), Site::new([1, 1])]);
        assert!(connected_in_span(
            &Site::new([0, 0]),
            &[Site::new([1, 1])],
            &a,
            2
        ));
        // a site outside the span is never connected
        let tiny = SiteSet::from_sites(v.clone(), &[Site::new([0, 0])]);
        assert!(!connected_in_span(
            &Site::new([1, 1]),
            &[Site::new([0, 0])],
            &tiny,
            2
        ));
        // membership in S inside the span suffices
        assert!(connected_in_span(
            &Site::new([0, 0]),
            &[Site::new([0, 0])],
            &tiny,
            2
        ));
    }

    #[test]
    fn queue_span_matches_naive_oracle() {
        let v = Window::centered(2, 3);
        for k in [1usize, 2] {
            for trial in 0..200 {
                let mut rng = stream_rng(50 + k as u64, trial);
                let a = random_set(v.clone(), 0.35, &mut rng);
                let fast = span(&a, k).span_set();
                let naive = span_naive(&a, k);
                assert_eq!(fast, naive, "k={k} trial={trial}");
            }
        }
    }

    #[test]
    fn monotone_in_window() {
        // U subset V implies [A]^U subset [A]^V
        let u = Window::centered(2, 2);
        let v = Window::centered(2, 4);
        for trial in 0..100 {
            let mut rng = stream_rng(60, trial);
            let a_v = random_set(v.clone(), 0.4, &mut rng);
            let mut a_u = SiteSet::empty(u.clone());
            for s in a_v.sites() {
                a_u.insert(&s);
            }
            let span_u = span(&a_u, 2).span_set();
            let span_v = span(&a_v, 2).span_set();
            for s in span_u.sites() {
                assert!(span_v.contains(&s));
            }
        }
    }

    #[test]
    fn monotone_in_seed() {
        let v = Window::centered(2, 3);
        for trial in 0..100 {
            let mut rng = stream_rng(61, trial);
            let a = random_set(v.clone(), 0.3, &mut rng);
            let mut bigger = a.clone();
            for i in 0..bigger.mask.len() {
                if rng.random::<f64>() < 0.1 {
                    bigger.mask[i] = true;
                }
            }
            assert!(span(&a, 2).span_set().is_subset_of(&span(&bigger, 2).span_set()));
        }
    }

    #[test]
    fn idempotent() {
        let v = Window::centered(2, 3);
        for trial in 0..100 {
            let mut rng = stream_rng(62, trial);
            let a = random_set(v.clone(), 0.4, &mut rng);
            let once = span(&a, 2).span_set();
            let twice = span(&once, 2).span_set();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn span_invariant_under_allowed_exchange() {
        // constraint satisfied inside V (exterior occupied) implies the
        // spans of eta and eta^{x,y} coincide
        let v = Window::centered(2, 3);
        let geom = Geometry::Window(v.clone());
        let mut rng = stream_rng(63, 0);
        let mut checked = 0;
        while checked < 300 {
            let mut config = Configuration::empty(geom.clone());
            for i in 0..config.site_count() {
                config.set_index(i, rng.random::<f64>() < 0.55);
            }
            let i = rng.random_range(0..config.site_count());
            let x = geom.site_at(i);
            let axis = rng.random_range(0..2);
            let delta = if rng.random::<bool>() { 1 } else { -1 };
            let y = x.shifted(axis, delta);
            if !v.contains(&y) || !constraint_at(&config, &x, &y, 2) {
                continue;
            }
            let swapped = {
                let edge = crate::lattice::Edge::new(&geom, x.clone(), y.clone()).unwrap();
                config.exchange(&edge).unwrap()
            };
            let s1 = span(&SiteSet::empties_of(&config).unwrap(), 2).span_set();
            let s2 = span(&SiteSet::empties_of(&swapped).unwrap(), 2).span_set();
            assert_eq!(s1, s2);
            checked += 1;
        }
    }

    #[test]
    fn components_are_spans_of_their_seeds() {
        // each connected component U of [A]^V is itself the span, inside
        // V, of the seed sites it contains: A n U spans exactly U
        let v = Window::centered(2, 3);
        for trial in 0..100 {
            let mut rng = stream_rng(64, trial);
            let a = random_set(v.clone(), 0.45, &mut rng);
            let result = span(&a, 2);
            let labels: std::collections::BTreeSet<i32> = result
                .component
                .iter()
                .copied()
                .filter(|c| *c >= 0)
                .collect();
            for label in labels {
                let mut seed = SiteSet::empty(v.clone());
                for i in 0..result.in_span.len() {
                    if result.component[i] == label && a.mask[i] {
                        seed.mask[i] = true;
                    }
                }
                let grown = span(&seed, 2).span_set();
                for i in 0..grown.mask.len() {
                    assert_eq!(grown.mask[i], result.component[i] == label);
                }
            }
        }
    }

    #[test]
    fn escape_property() {
        // z connected to S in B' but not in B implies z connected to the
        // inner boundary of B in B'
        let b = Window::centered(2, 2);
        let bp = Window::centered(2, 4);
        let mut rng = stream_rng(65, 0);
        let mut hits = 0;
        for _ in 0..3000 {
            let a = random_set(bp.clone(), 0.4, &mut rng);
            let z = Site::new([
                rng.random_range(-2..=2i64),
                rng.random_range(-2..=2i64),
            ]);
            let s: Vec<Site> = (0..3)
                .map(|_| {
                    Site::new([
                        rng.random_range(-4..=4i64),
                        rng.random_range(-4..=4i64),
                    ])
                })
                .collect();
            let mut a_in_b = SiteSet::empty(b.clone());
            for site in a.sites() {
                a_in_b.insert(&site);
            }
            let in_bp = connected_in_span(&z, &s, &a, 2);
            let in_b = connected_in_span(&z, &s, &a_in_b, 2);
            if in_bp && !in_b {
                hits += 1;
                let boundary: Vec<Site> = b
                    .sites()
                    .filter(|site| {
                        (0..2).any(|axis| {
                            [1, -1]
                                .iter()
                                .any(|delta| !b.contains(&site.shifted(axis, *delta)))
                        })
                    })
                    .collect();
                assert!(connected_in_span(&z, &boundary, &a, 2));
            }
        }
        assert!(hits > 0, "hypothesis never sampled");
    }

    #[test]
    fn relevant_sites_cases() {
        let l = 2i64;
        let w = Window::centered(2, 4);
        let geom = Geometry::Window(w.clone());

        // all empty: everything joins the slab through the full span
        let empty = Configuration::empty(geom.clone());
        assert!(relevant_sites(&empty, l, 2).unwrap().is_empty());

        // all occupied: span empty, nothing connected, everything relevant
        let full = Configuration::full(geom.clone());
        assert_eq!(relevant_sites(&full, l, 2).unwrap().len(), w.site_count());

        // empty slab plus an isolated empty corner: the corner cannot
        // grow or connect and stays relevant; slab sites are irrelevant
        let mut config = Configuration::full(geom.clone());
        for x1 in -4..=4i64 {
            config.set(&Site::new([0, x1]), false).unwrap();
            config.set(&Site::new([1, x1]), false).unwrap();
        }
        config.set(&Site::new([4, 4]), false).unwrap();
        let relevant = relevant_sites(&config, l, 2).unwrap();
        assert!(relevant.contains(&Site::new([4, 4])));
        assert!(!relevant.contains(&Site::new([0, 0])));
        assert!(!relevant.contains(&Site::new([1, 3])));

        // wrong window shape rejected
        let bad = Configuration::full(Geometry::Window(Window::centered(2, 3)));
        assert!(relevant_sites(&bad, l, 2).is_err());
    }
}
