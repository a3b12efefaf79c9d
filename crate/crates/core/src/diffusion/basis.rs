//! Local function bases for the variational estimator: monomial families
//! eta(x1)...eta(xm) supported on a finite window.

use crate::error::{KaError, Result};
use crate::lattice::{Configuration, Geometry, Site, Window};

/// A family of local functions, each a monomial over occupancies of a
/// fixed support window. The empty list represents f = 0.
#[derive(Clone, Debug)]
pub struct LocalFunctionBasis {
    window: Window,
    monomials: Vec<Vec<Site>>,
}

impl LocalFunctionBasis {
    /// The empty basis: f = 0.
    pub fn empty(d: usize) -> Self {
        LocalFunctionBasis {
            window: Window::centered(d, 0),
            monomials: Vec::new(),
        }
    }

    pub fn from_monomials(window: Window, monomials: Vec<Vec<Site>>) -> Result<Self> {
        for m in &monomials {
            for s in m {
                if !window.contains(s) {
                    return Err(KaError::Window(format!(
                        "monomial site {:?} outside the basis window",
                        s.0
                    )));
                }
            }
            let mut sorted = m.clone();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            sorted.dedup();
            if sorted.len() != m.len() {
                return Err(KaError::Invalid("monomial repeats a site".into()));
            }
        }
        Ok(LocalFunctionBasis { window, monomials })
    }

    /// All monomials of at most two sites over `[-r, r+1] x [-r, r]^{d-1}`,
    /// including the constant.
    pub fn pair_monomials(d: usize, r: i64) -> Self {
        let lo = vec![-r; d];
        let mut hi = vec![r; d];
        hi[0] = r + 1;
        let window = Window::new(lo, hi).unwrap();
        let sites: Vec<Site> = window.sites().collect();
        let mut monomials = vec![Vec::new()];
        for s in &sites {
            monomials.push(vec![s.clone()]);
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                monomials.push(vec![sites[i].clone(), sites[j].clone()]);
            }
        }
        LocalFunctionBasis { window, monomials }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn monomials(&self) -> &[Vec<Site>] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// A short structural description for result records.
    pub fn descriptor(&self) -> String {
        let degree = self.monomials.iter().map(|m| m.len()).max().unwrap_or(0);
        format!(
            "monomials(count={}, max_degree={}, window_sites={})",
            self.monomials.len(),
            degree,
            self.window.site_count()
        )
    }
}

/// Sum over translates of the exchange gradient of `f = sum_i theta_i
/// phi_i`: `sum_x [f(tau_x eta^{0, e_axis}) - f(tau_x eta)]`, the sum
/// running over exactly the translates whose support meets the exchanged
/// pair. Exterior reads are rejected unless `allow_exterior`.
pub fn gradient_sum(
    config: &Configuration,
    basis: &LocalFunctionBasis,
    coefficients: &[f64],
    axis: usize,
    allow_exterior: bool,
) -> Result<f64> {
    let d = config.geometry().d();
    if axis >= d {
        return Err(KaError::Params(format!("axis {axis} out of range")));
    }
    if coefficients.len() != basis.len() {
        return Err(KaError::Params(format!(
            "{} coefficients for {} basis functions",
            coefficients.len(),
            basis.len()
        )));
    }
    let origin = Site::origin(d);
    let e = Site::unit(d, axis);
    let occ = |site: &Site| -> f64 {
        // swapped read: occupancy of eta^{0,e}
        if *site == origin {
            config.get(&e) as u8 as f64
        } else if *site == e {
            config.get(&origin) as u8 as f64
        } else {
            config.get(site) as u8 as f64
        }
    };

    // translates x with (x + W) meeting {0, e}: x in (-W) u (e - W)
    let mut xs: Vec<Site> = Vec::new();
    for w in basis.window.sites() {
        let a = w.neg();
        let b = e.sub(&w.0);
        for cand in [a, b] {
            if !xs.contains(&cand) {
                xs.push(cand);
            }
        }
    }

    if let Geometry::Window(win) = config.geometry() {
        if !allow_exterior {
            for x in &xs {
                for w in basis.window.sites() {
                    if !win.contains(&x.add(&w.0)) {
                        return Err(KaError::Window(
                            "configuration window does not cover all translates".into(),
                        ));
                    }
                }
            }
        }
    }

    let mut total = 0.0;
    for x in &xs {
        for (i, m) in basis.monomials.iter().enumerate() {
            if coefficients[i] == 0.0 {
                continue;
            }
            let mut before = 1.0;
            let mut after = 1.0;
            for s in m {
                let site = x.add(&s.0);
                before *= config.get(&site) as u8 as f64;
                after *= occ(&site);
            }
            total += coefficients[i] * (after - before);
        }
    }
    Ok(total)
}
