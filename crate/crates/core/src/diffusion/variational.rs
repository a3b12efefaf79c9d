//! Least-squares variational estimator for the diffusion coefficient.
//!
//! The objective is quadratic in the basis coefficients, so a pass over
//! the samples (or over all patterns of the dependency sites, when few
//! enough) reduces the problem to normal equations. Hard-constraint and
//! all-rates moments are kept separately; the moments at any soft rate
//! eps are their convex combination, so one sample set serves every eps.

use crate::dynamics::ModelParams;
use crate::error::{KaError, Result};
use crate::lattice::{Site, Window, WindowIndexer};
use crate::rng::stream_rng;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::basis::LocalFunctionBasis;

const ENUMERATION_SITE_CAP: usize = 20;
const JACKKNIFE_BLOCKS: usize = 64;
const RIDGE_SCALE: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct VariationalEstimate {
    pub estimate: f64,
    pub raw: f64,
    pub stderr: f64,
    pub coefficients: Vec<f64>,
    pub n_samples: u64,
    pub enumerated: bool,
}

/// One gradient term: monomial `basis_index` at a translate whose support
/// contains exactly one of the exchanged pair. `sign` is +1 when the pair
/// site covered is the origin, -1 when it is `e_alpha`; `other_sites` are
/// the remaining support indices in the sampling window.
struct Term {
    basis_index: usize,
    sign: f64,
    other_sites: Vec<usize>,
}

struct Precomp {
    window: Window,
    idx_origin: usize,
    idx_e: Vec<usize>,
    // per axis: window indices of neighbors of 0 (excluding e_alpha) and
    // of e_alpha (excluding 0)
    cons_origin: Vec<Vec<usize>>,
    cons_e: Vec<Vec<usize>>,
    terms: Vec<Vec<Term>>,
}

fn precompute(d: usize, basis: &LocalFunctionBasis) -> Precomp {
    let origin = Site::origin(d);
    let units: Vec<Site> = (0..d).map(|a| Site::unit(d, a)).collect();

    // gather every site any evaluation can read, then build the window
    let mut needed: Vec<Site> = vec![origin.clone()];
    let need = |s: Site, needed: &mut Vec<Site>| {
        if !needed.contains(&s) {
            needed.push(s);
        }
    };
    for e in &units {
        need(e.clone(), &mut needed);
        for axis in 0..d {
            for delta in [1i64, -1] {
                need(origin.shifted(axis, delta), &mut needed);
                need(e.shifted(axis, delta), &mut needed);
            }
        }
    }
    struct RawTerm {
        basis_index: usize,
        sign: f64,
        sites: Vec<Site>,
    }
    let mut raw_terms: Vec<Vec<RawTerm>> = (0..d).map(|_| Vec::new()).collect();
    for (alpha, e) in units.iter().enumerate() {
        for (i, m) in basis.monomials().iter().enumerate() {
            let mut xs: Vec<Site> = Vec::new();
            for s in m {
                for cand in [s.neg(), e.sub(&s.0)] {
                    if !xs.contains(&cand) {
                        xs.push(cand);
                    }
                }
            }
            for x in xs {
                let support: Vec<Site> = m.iter().map(|s| x.add(&s.0)).collect();
                let has_origin = support.contains(&origin);
                let has_e = support.contains(e);
                if has_origin == has_e {
                    // covers both (product invariant) or, for the constant
                    // monomial, neither
                    continue;
                }
                let other: Vec<Site> = support
                    .into_iter()
                    .filter(|s| *s != origin && *s != *e)
                    .collect();
                for s in &other {
                    need(s.clone(), &mut needed);
                }
                raw_terms[alpha].push(RawTerm {
                    basis_index: i,
                    sign: if has_origin { 1.0 } else { -1.0 },
                    sites: other,
                });
            }
        }
    }

    let lo: Vec<i64> = (0..d)
        .map(|a| needed.iter().map(|s| s.0[a]).min().unwrap())
        .collect();
    let hi: Vec<i64> = (0..d)
        .map(|a| needed.iter().map(|s| s.0[a]).max().unwrap())
        .collect();
    let window = Window::new(lo, hi).unwrap();
    let win = WindowIndexer::new(&window);
    let at = |s: &Site| win.index_of_coords(&s.0).unwrap();

    Precomp {
        idx_origin: at(&origin),
        idx_e: units.iter().map(&at).collect(),
        cons_origin: (0..d)
            .map(|alpha| {
                (0..d)
                    .flat_map(|a| [origin.shifted(a, 1), origin.shifted(a, -1)])
                    .filter(|s| *s != units[alpha])
                    .map(|s| at(&s))
                    .collect()
            })
            .collect(),
        cons_e: (0..d)
            .map(|alpha| {
                (0..d)
                    .flat_map(|a| [units[alpha].shifted(a, 1), units[alpha].shifted(a, -1)])
                    .filter(|s| *s != origin)
                    .map(|s| at(&s))
                    .collect()
            })
            .collect(),
        terms: raw_terms
            .into_iter()
            .map(|ts| {
                ts.into_iter()
                    .map(|t| Term {
                        basis_index: t.basis_index,
                        sign: t.sign,
                        other_sites: t.sites.iter().map(&at).collect(),
                    })
                    .collect()
            })
            .collect(),
        window,
    }
}

/// Weighted second-moment sums for one batch of samples. Matrices are
/// stored as lower triangles, row-major.
#[derive(Clone)]
struct Block {
    weight: f64,
    m_all: Vec<f64>,
    m_hard: Vec<f64>,
    v_all: Vec<f64>,
    v_hard: Vec<f64>,
    c_all: f64,
    c_hard: f64,
}

impl Block {
    fn zero(m: usize) -> Self {
        Block {
            weight: 0.0,
            m_all: vec![0.0; m * (m + 1) / 2],
            m_hard: vec![0.0; m * (m + 1) / 2],
            v_all: vec![0.0; m],
            v_hard: vec![0.0; m],
            c_all: 0.0,
            c_hard: 0.0,
        }
    }

    fn add(&mut self, other: &Block) {
        self.weight += other.weight;
        for (a, b) in self.m_all.iter_mut().zip(&other.m_all) {
            *a += b;
        }
        for (a, b) in self.m_hard.iter_mut().zip(&other.m_hard) {
            *a += b;
        }
        for (a, b) in self.v_all.iter_mut().zip(&other.v_all) {
            *a += b;
        }
        for (a, b) in self.v_hard.iter_mut().zip(&other.v_hard) {
            *a += b;
        }
        self.c_all += other.c_all;
        self.c_hard += other.c_hard;
    }

    fn sub(&self, other: &Block) -> Block {
        let mut out = self.clone();
        out.weight -= other.weight;
        for (a, b) in out.m_all.iter_mut().zip(&other.m_all) {
            *a -= b;
        }
        for (a, b) in out.m_hard.iter_mut().zip(&other.m_hard) {
            *a -= b;
        }
        for (a, b) in out.v_all.iter_mut().zip(&other.v_all) {
            *a -= b;
        }
        for (a, b) in out.v_hard.iter_mut().zip(&other.v_hard) {
            *a -= b;
        }
        out.c_all -= other.c_all;
        out.c_hard -= other.c_hard;
        out
    }

    /// Accumulate one configuration with the given weight. `occ` covers
    /// the precomputed window; `scratch` holds the residual vector.
    fn accumulate(
        &mut self,
        occ: &[bool],
        weight: f64,
        pre: &Precomp,
        k: usize,
        scratch: &mut Vec<f64>,
    ) {
        self.weight += weight;
        let m = self.v_all.len();
        let o = occ[pre.idx_origin];
        for alpha in 0..pre.idx_e.len() {
            let t = occ[pre.idx_e[alpha]];
            if o == t {
                continue;
            }
            let hard = k == 1 || {
                let need = k - 1;
                let empties = |sites: &[usize]| sites.iter().filter(|&&j| !occ[j]).count();
                empties(&pre.cons_origin[alpha]) >= need && empties(&pre.cons_e[alpha]) >= need
            };
            let s = if t { 1.0 } else { -1.0 }; // eta(e) - eta(0)
            scratch.clear();
            scratch.resize(m, 0.0);
            for term in &pre.terms[alpha] {
                if term.other_sites.iter().all(|&j| occ[j]) {
                    scratch[term.basis_index] += term.sign * s;
                }
            }
            let b = if alpha == 0 { s } else { 0.0 };
            let mut row = 0usize;
            for i in 0..m {
                let ai = scratch[i];
                if ai == 0.0 {
                    row += i + 1;
                    continue;
                }
                let wai = weight * ai;
                for j in 0..=i {
                    let aj = scratch[j];
                    if aj != 0.0 {
                        let x = wai * aj;
                        self.m_all[row + j] += x;
                        if hard {
                            self.m_hard[row + j] += x;
                        }
                    }
                }
                row += i + 1;
                if b != 0.0 {
                    self.v_all[i] += wai * b;
                    if hard {
                        self.v_hard[i] += wai * b;
                    }
                }
            }
            let wb2 = weight * b * b;
            self.c_all += wb2;
            if hard {
                self.c_hard += wb2;
            }
        }
    }
}

/// Accumulated moments of the variational objective over a sample set
/// (or the exact product measure), solvable at any eps.
pub struct VariationalMoments {
    k: usize,
    rho: f64,
    n_samples: u64,
    enumerated: bool,
    total: Block,
    blocks: Vec<Block>,
}

impl VariationalMoments {
    /// Exact moments by enumerating every pattern of the dependency
    /// sites; `None` when the dependency set is too large.
    pub fn enumerate(params: &ModelParams, basis: &LocalFunctionBasis) -> Result<Option<Self>> {
        validate(params, basis)?;
        let pre = precompute(params.d, basis);
        let mut deps: Vec<usize> = vec![pre.idx_origin];
        let need = |j: usize, deps: &mut Vec<usize>| {
            if !deps.contains(&j) {
                deps.push(j);
            }
        };
        for &j in &pre.idx_e {
            need(j, &mut deps);
        }
        for list in pre.cons_origin.iter().chain(&pre.cons_e) {
            for &j in list {
                need(j, &mut deps);
            }
        }
        for terms in &pre.terms {
            for t in terms {
                for &j in &t.other_sites {
                    need(j, &mut deps);
                }
            }
        }
        if deps.len() > ENUMERATION_SITE_CAP {
            return Ok(None);
        }
        let rho = params.rho;
        let m = basis.len();
        let mut total = Block::zero(m);
        let mut occ = vec![true; pre.window.site_count()];
        let mut scratch = Vec::new();
        for pattern in 0u64..(1 << deps.len()) {
            let mut weight = 1.0;
            for (bit, &j) in deps.iter().enumerate() {
                let occupied = pattern >> bit & 1 == 1;
                occ[j] = occupied;
                weight *= if occupied { rho } else { 1.0 - rho };
            }
            if weight > 0.0 {
                total.accumulate(&occ, weight, &pre, params.k, &mut scratch);
            }
        }
        Ok(Some(VariationalMoments {
            k: params.k,
            rho,
            n_samples: 1u64 << deps.len(),
            enumerated: true,
            total,
            blocks: Vec::new(),
        }))
    }

    /// Monte Carlo moments over `n_samples` i.i.d. product-measure draws,
    /// collected in parallel blocks with deterministic reduction.
    pub fn collect(
        params: &ModelParams,
        basis: &LocalFunctionBasis,
        n_samples: u64,
        master_seed: u64,
    ) -> Result<Self> {
        validate(params, basis)?;
        if n_samples < 1 {
            return Err(KaError::Params("n_samples must be >= 1".into()));
        }
        let pre = precompute(params.d, basis);
        let m = basis.len();
        let n_blocks = JACKKNIFE_BLOCKS.min(n_samples as usize);
        let blocks: Vec<Block> = (0..n_blocks as u64)
            .into_par_iter()
            .map(|block| {
                let mut rng = stream_rng(master_seed, block);
                let per = n_samples / n_blocks as u64
                    + u64::from(block < n_samples % n_blocks as u64);
                let mut sums = Block::zero(m);
                let mut occ = vec![false; pre.window.site_count()];
                let mut scratch = Vec::new();
                for _ in 0..per {
                    for o in occ.iter_mut() {
                        *o = rng.random::<f64>() < params.rho;
                    }
                    sums.accumulate(&occ, 1.0, &pre, params.k, &mut scratch);
                }
                sums
            })
            .collect();
        let mut total = Block::zero(m);
        for b in &blocks {
            total.add(b);
        }
        Ok(VariationalMoments {
            k: params.k,
            rho: params.rho,
            n_samples,
            enumerated: false,
            total,
            blocks,
        })
    }

    pub fn enumerated(&self) -> bool {
        self.enumerated
    }

    /// Objective value of f = 0 on the same moments (the estimate with
    /// all coefficients forced to zero). At eps = 1 this is the SSEP
    /// reference value of the shared sample set.
    pub fn empty_basis_value(&self, eps: f64) -> f64 {
        let norm = if self.enumerated {
            self.total.weight
        } else {
            self.n_samples as f64
        };
        let c = if self.k == 1 {
            self.total.c_all
        } else {
            eps * self.total.c_all + (1.0 - eps) * self.total.c_hard
        };
        c / norm / (2.0 * self.rho * (1.0 - self.rho))
    }

    /// Solve the ridge-regularized normal equations at soft rate `eps`.
    pub fn solve(&self, eps: f64) -> Result<VariationalEstimate> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(KaError::Params("eps must lie in [0, 1]".into()));
        }
        let norm = if self.enumerated {
            self.total.weight
        } else {
            self.n_samples as f64
        };
        let (raw, coefficients) = solve_block(&self.total, norm, eps, self.rho, self.k)?;
        let stderr = if self.blocks.len() > 1 {
            let b = self.blocks.len() as f64;
            let values: Vec<f64> = self
                .blocks
                .iter()
                .map(|block| {
                    let rest = self.total.sub(block);
                    let n_rest = norm - if self.enumerated { 0.0 } else { block_n(block) };
                    solve_block(&rest, n_rest, eps, self.rho, self.k).map(|(v, _)| v)
                })
                .collect::<Result<_>>()?;
            let mean = values.iter().sum::<f64>() / b;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            ((b - 1.0) / b * var).sqrt()
        } else {
            0.0
        };
        Ok(VariationalEstimate {
            estimate: raw.max(0.0),
            raw,
            stderr,
            coefficients,
            n_samples: self.n_samples,
            enumerated: self.enumerated,
        })
    }
}

fn block_n(block: &Block) -> f64 {
    block.weight
}

fn validate(params: &ModelParams, _basis: &LocalFunctionBasis) -> Result<()> {
    if params.rho <= 0.0 || params.rho >= 1.0 {
        return Err(KaError::Params("rho must lie in (0, 1)".into()));
    }
    Ok(())
}

fn solve_block(block: &Block, n: f64, eps: f64, rho: f64, k: usize) -> Result<(f64, Vec<f64>)> {
    let m = block.v_all.len();
    let mix = |all: f64, hard: f64| {
        if k == 1 {
            all / n
        } else {
            (eps * all + (1.0 - eps) * hard) / n
        }
    };
    let c = mix(block.c_all, block.c_hard);
    let scale = 1.0 / (2.0 * rho * (1.0 - rho));
    if m == 0 {
        return Ok((c * scale, Vec::new()));
    }
    let mut mat = DMatrix::<f64>::zeros(m, m);
    let mut row = 0usize;
    for i in 0..m {
        for j in 0..=i {
            let x = mix(block.m_all[row + j], block.m_hard[row + j]);
            mat[(i, j)] = x;
            mat[(j, i)] = x;
        }
        row += i + 1;
    }
    let v = DVector::from_iterator(
        m,
        (0..m).map(|i| mix(block.v_all[i], block.v_hard[i])),
    );
    let ridge = RIDGE_SCALE * mat.trace() / m as f64;
    if ridge <= 0.0 {
        // every gradient vanished on these samples (e.g. a basis of
        // single-site monomials, whose sums telescope); f = 0 is optimal
        return Ok((c * scale, vec![0.0; m]));
    }
    for i in 0..m {
        mat[(i, i)] += ridge;
    }
    let diag_max = (0..m).map(|i| mat[(i, i)]).fold(f64::MIN, f64::max);
    let diag_min = (0..m).map(|i| mat[(i, i)]).fold(f64::MAX, f64::min);
    let chol = Cholesky::new(mat).ok_or(KaError::Singular {
        condition: diag_max / diag_min.max(f64::MIN_POSITIVE),
    })?;
    let theta = chol.solve(&v);
    let raw = (c - v.dot(&theta)) * scale;
    Ok((raw, theta.iter().copied().collect()))
}

/// Eq.-(6) estimator: exact enumeration when the dependency set is small,
/// Monte Carlo with jackknife errors otherwise.
#[allow(non_snake_case)]
pub fn estimate_D_variational(
    params: &ModelParams,
    basis: &LocalFunctionBasis,
    n_samples: u64,
    master_seed: u64,
) -> Result<VariationalEstimate> {
    let moments = match VariationalMoments::enumerate(params, basis)? {
        Some(m) => m,
        None => VariationalMoments::collect(params, basis, n_samples, master_seed)?,
    };
    moments.solve(params.eps)
}
