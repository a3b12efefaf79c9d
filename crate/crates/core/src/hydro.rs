//! Empirical density profiles, a conservative finite-difference solver
//! for the hydrodynamic equation, and diffusive-rescaling experiments
//! comparing the two.

use crate::dynamics::{ModelParams, Simulator};
use crate::error::{KaError, Result};
use crate::lattice::{
    construct_blocked, sample_product, Configuration, DensityProfile, Geometry, TorusGeometry,
};
use crate::rng::stream_rng;
use rayon::prelude::*;
use serde::Serialize;

/// Number of sample points of a tabulated diffusion coefficient on [0,1].
const TABLE_POINTS: usize = 257;

/// Binned particle counts of a configuration, normalized to densities.
/// `t` is the macroscopic time stamp (microscopic time / N^2).
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalProfile {
    pub t: f64,
    pub d: usize,
    pub bins: usize,
    pub densities: Vec<f64>,
}

impl EmpiricalProfile {
    /// Total mass, i.e. particle count over N^d; bins have equal volume,
    /// so this is the plain average of the bin densities.
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() / self.densities.len() as f64
    }
}

/// Per-bin densities of a torus configuration: particle count over bin
/// volume, bins of side N / `bins` per axis. The time stamp is set by
/// the caller (0 here).
pub fn empirical_profile(config: &Configuration, bins: usize) -> Result<EmpiricalProfile> {
    let geom = match config.geometry() {
        Geometry::Torus(t) => *t,
        Geometry::Window(_) => {
            return Err(KaError::Geometry(
                "empirical profiles require a torus configuration".into(),
            ))
        }
    };
    if bins == 0 || geom.n % bins != 0 {
        return Err(KaError::Params(format!(
            "bins = {bins} must divide N = {}",
            geom.n
        )));
    }
    let d = geom.d;
    let side = geom.n / bins;
    let mut counts = vec![0usize; bins.pow(d as u32)];
    let g = Geometry::Torus(geom);
    for i in 0..config.site_count() {
        if config.get_index(i) {
            let site = g.site_at(i);
            let mut bin = 0usize;
            for c in &site.0 {
                bin = bin * bins + *c as usize / side;
            }
            counts[bin] += 1;
        }
    }
    let volume = (side as f64).powi(d as i32);
    Ok(EmpiricalProfile {
        t: 0.0,
        d,
        bins,
        densities: counts.into_iter().map(|c| c as f64 / volume).collect(),
    })
}

/// Diffusion coefficient as a table on [0,1] with linear interpolation.
#[derive(Clone, Debug, Serialize)]
pub struct DiffusionTable {
    values: Vec<f64>,
}

impl DiffusionTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != TABLE_POINTS {
            return Err(KaError::Params(format!(
                "diffusion table needs {TABLE_POINTS} points"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(KaError::Params(
                "diffusion table values must be finite and non-negative".into(),
            ));
        }
        Ok(DiffusionTable { values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![value; TABLE_POINTS])
    }

    /// Sample `f` at the table knots rho = i / (TABLE_POINTS - 1).
    pub fn from_fn(f: impl Fn(f64) -> f64) -> Result<Self> {
        let m = (TABLE_POINTS - 1) as f64;
        Self::new((0..TABLE_POINTS).map(|i| f(i as f64 / m)).collect())
    }

    /// Interpolated value at `rho`, clamped to [0,1].
    pub fn eval(&self, rho: f64) -> f64 {
        let x = rho.clamp(0.0, 1.0) * (TABLE_POINTS - 1) as f64;
        let i = (x as usize).min(TABLE_POINTS - 2);
        let frac = x - i as f64;
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Grid solution of the hydrodynamic equation at one output time.
#[derive(Clone, Debug, Serialize)]
pub struct PdeState {
    pub t: f64,
    pub d: usize,
    pub grid: usize,
    pub values: Vec<f64>,
}

impl PdeState {
    /// Grid integral of the density (cell volume times the value sum).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Conservative explicit solver for `d rho / dt = div D(rho) grad rho` on
/// the unit torus: edge fluxes `D((rho_i + rho_j)/2) (rho_j - rho_i) / h`
/// with periodic wrap, time step within the stability bound
/// `h^2 / (2 d max D)`. Under that bound every update is a convex
/// combination of neighboring values, so the solution stays inside the
/// initial range and mass is conserved to rounding. Output times must be
/// non-negative and strictly increasing.
pub fn pde_solve(
    rho0: &DensityProfile,
    table: &DiffusionTable,
    times: &[f64],
    grid: usize,
) -> Result<Vec<PdeState>> {
    let d = rho0.d();
    if grid < 2 {
        return Err(KaError::Params("grid resolution must be >= 2".into()));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KaError::Params(
            "output times must be non-negative and strictly increasing".into(),
        ));
    }
    let count = grid.pow(d as u32);
    let mut values = Vec::with_capacity(count);
    let mut u = vec![0.0; d];
    for idx in 0..count {
        let mut rem = idx;
        for axis in (0..d).rev() {
            u[axis] = ((rem % grid) as f64 + 0.5) / grid as f64;
            rem /= grid;
        }
        values.push(rho0.value_at_unit(&u));
    }
    let h = 1.0 / grid as f64;
    let max_d = table.max_value();
    let dt_bound = if max_d > 0.0 {
        0.9 * h * h / (2.0 * d as f64 * max_d)
    } else {
        f64::INFINITY
    };

    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * grid;
    }
    let mut delta = vec![0.0; count];
    let mut states = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let span = t - now;
        let steps = if span == 0.0 || max_d == 0.0 {
            0
        } else {
            (span / dt_bound).ceil() as usize
        };
        let dt = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            delta.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..count {
                for axis in 0..d {
                    // forward neighbor along the axis, periodic
                    let coord = i / strides[axis] % grid;
                    let j = if coord + 1 == grid {
                        i - (grid - 1) * strides[axis]
                    } else {
                        i + strides[axis]
                    };
                    let flux = table.eval(0.5 * (values[i] + values[j])) * (values[j] - values[i]);
                    delta[i] += flux;
                    delta[j] -= flux;
                }
            }
            let scale = dt / (h * h);
            for (v, dv) in values.iter_mut().zip(&delta) {
                *v += scale * dv;
            }
        }
        now = t;
        states.push(PdeState {
            t,
            d,
            grid,
            values: values.clone(),
        });
    }
    Ok(states)
}

/// How replica initial states are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InitialCondition {
    /// Product measure with marginal `rho0(x/N)`.
    Product,
    /// The 3Z^2 blocked construction with the matching sublattice law.
    Blocked,
}

/// Replica-averaged empirical profiles against the reference solution of
/// the hydrodynamic equation, with distances per time.
#[derive(Clone, Debug, Serialize)]
pub struct HydroExperiment {
    pub times: Vec<f64>,
    pub profiles: Vec<EmpiricalProfile>,
    pub pde: Vec<PdeState>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub n_replicas: u64,
    /// Set when eps = 0 with k > 1: blocked states then freeze and the
    /// dynamics need not follow the hydrodynamic limit.
    pub frozen_warning: bool,
}

/// Runs `n_replicas` trajectories to microscopic times N^2 t for each
/// macroscopic t, bins and averages the empirical measures, solves the
/// hydrodynamic equation with the supplied coefficient table on the same
/// bin grid, and reports L1 and L2 distances per time.
pub fn run_hydro_experiment(
    params: &ModelParams,
    n: usize,
    rho0: &DensityProfile,
    times: &[f64],
    n_replicas: u64,
    bins: usize,
    initial: InitialCondition,
    table: &DiffusionTable,
    master_seed: u64,
) -> Result<HydroExperiment> {
    let geom = TorusGeometry::new(params.d, n)?;
    if rho0.d() != params.d {
        return Err(KaError::Params("profile dimension mismatch".into()));
    }
    if bins == 0 || n % bins != 0 {
        return Err(KaError::Params(format!("bins = {bins} must divide N = {n}")));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KaError::Params(
            "times must be non-negative and strictly increasing".into(),
        ));
    }
    if n_replicas < 1 {
        return Err(KaError::Params("need at least 1 replica".into()));
    }
    let frozen_warning = params.k > 1 && params.eps == 0.0;
    let micro = (n * n) as f64;

    let per_replica: Vec<Vec<Vec<f64>>> = (0..n_replicas)
        .into_par_iter()
        .map(|replica| -> Result<Vec<Vec<f64>>> {
            let mut rng = stream_rng(master_seed, replica);
            let start = match initial {
                InitialCondition::Product => sample_product(geom, rho0, &mut rng),
                InitialCondition::Blocked => construct_blocked(geom, rho0, &mut rng)?,
            };
            let mut sim = Simulator::new(start, params)?;
            let mut rows = Vec::with_capacity(times.len());
            for &t in times {
                sim.run_until(micro * t, &mut rng)?;
                rows.push(empirical_profile(sim.config(), bins)?.densities);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let pde = pde_solve(rho0, table, times, bins)?;
    let r = n_replicas as f64;
    let mut profiles = Vec::with_capacity(times.len());
    let mut l1 = Vec::with_capacity(times.len());
    let mut l2 = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let mut mean = vec![0.0; bins.pow(params.d as u32)];
        for rep in &per_replica {
            for (m, v) in mean.iter_mut().zip(&rep[ti]) {
                *m += v / r;
            }
        }
        let (mut abs, mut sq) = (0.0, 0.0);
        for (m, p) in mean.iter().zip(&pde[ti].values) {
            let diff = m - p;
            abs += diff.abs();
            sq += diff * diff;
        }
        let cells = mean.len() as f64;
        l1.push(abs / cells);
        l2.push((sq / cells).sqrt());
        profiles.push(EmpiricalProfile {
            t,
            d: params.d,
            bins,
            densities: mean,
        });
    }
    Ok(HydroExperiment {
        times: times.to_vec(),
        profiles,
        pde,
        l1,
        l2,
        n_replicas,
        frozen_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn empirical_profile_counting() {
        let geom = TorusGeometry::new(2, 8).unwrap();
        let g = Geometry::Torus(geom);

        let full = Configuration::full(g.clone());
        let p = empirical_profile(&full, 4).unwrap();
        assert!(p.densities.iter().all(|&v| v == 1.0));
        assert_eq!(p.mass(), 1.0);

        let empty = Configuration::empty(g.clone());
        let p = empirical_profile(&empty, 2).unwrap();
        assert!(p.densities.iter().all(|&v| v == 0.0));

        // single particle, one bin per site
        let mut one = Configuration::empty(g.clone());
        one.set_index(11, true);
        let p = empirical_profile(&one, 8).unwrap();
        assert_eq!(p.densities.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(p.densities.iter().filter(|&&v| v == 0.0).count(), 63);

        assert!(empirical_profile(&full, 3).is_err());
        assert!(empirical_profile(&full, 0).is_err());
    }

    #[test]
    fn profile_mass_conserved_along_trajectory() {
        let geom = TorusGeometry::new(2, 8).unwrap();
        let profile = DensityProfile::constant(2, 0.5).unwrap();
        let mut rng = crate::rng::stream_rng(90, 0);
        let start = sample_product(geom, &profile, &mut rng);
        let mass0 = empirical_profile(&start, 4).unwrap().mass();
        let params = ModelParams::new(2, 1, 0.0, 0.5).unwrap();
        let mut sim = Simulator::new(start, &params).unwrap();
        sim.run_until(5.0, &mut rng).unwrap();
        let mass1 = empirical_profile(sim.config(), 4).unwrap().mass();
        assert_eq!(mass0, mass1);
    }

    #[test]
    fn diffusion_table_interpolation() {
        let table = DiffusionTable::from_fn(|rho| 1.0 + rho).unwrap();
        assert_eq!(table.eval(0.0), 1.0);
        assert_eq!(table.eval(1.0), 2.0);
        assert!((table.eval(0.25) - 1.25).abs() < 1e-12);
        assert!((table.eval(-3.0) - 1.0).abs() < 1e-12);
        assert_eq!(table.max_value(), 2.0);
        assert!(DiffusionTable::new(vec![1.0; 5]).is_err());
        assert!(DiffusionTable::constant(-1.0).is_err());
    }

    #[test]
    fn pde_constant_profile_is_fixed() {
        let rho0 = DensityProfile::constant(2, 0.3).unwrap();
        let table = DiffusionTable::constant(1.0).unwrap();
        let states = pde_solve(&rho0, &table, &[0.0, 0.01, 0.1], 16).unwrap();
        for s in &states {
            assert!(s.values.iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn pde_heat_mode_decay() {
        // D = 1, single cosine mode: amplitude decays as exp(-4 pi^2 t)
        let rho0 = DensityProfile::from_fn(1, 256, |u| 0.5 + 0.1 * (2.0 * PI * u[0]).cos())
            .unwrap();
        let table = DiffusionTable::constant(1.0).unwrap();
        let t = 0.05;
        let states = pde_solve(&rho0, &table, &[t], 256).unwrap();
        let decay = (-4.0 * PI * PI * t).exp();
        for (i, v) in states[0].values.iter().enumerate() {
            let u = (i as f64 + 0.5) / 256.0;
            let expected = 0.5 + 0.1 * decay * (2.0 * PI * u).cos();
            assert!((v - expected).abs() < 1e-3, "cell {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn pde_conserves_mass_and_range() {
        let rho0 = DensityProfile::from_fn(1, 128, |u| {
            0.5 + 0.3 * (2.0 * PI * u[0]).cos() + 0.1 * (6.0 * PI * u[0]).sin()
        })
        .unwrap();
        let table = DiffusionTable::from_fn(|rho| 0.2 + rho * (1.0 - rho)).unwrap();
        let states = pde_solve(&rho0, &table, &[0.0, 0.02, 0.1], 128).unwrap();
        let mass0 = states[0].mass();
        let (lo, hi) = states[0]
            .values
            .iter()
            .fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        for s in &states[1..] {
            assert!((s.mass() - mass0).abs() < 1e-12);
            assert!(s.values.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }

    #[test]
    fn pde_comparison_principle() {
        let low = DensityProfile::from_fn(1, 64, |u| 0.35 + 0.1 * (2.0 * PI * u[0]).cos())
            .unwrap();
        let high = DensityProfile::from_fn(1, 64, |u| 0.45 + 0.1 * (2.0 * PI * u[0]).cos())
            .unwrap();
        let table = DiffusionTable::from_fn(|rho| 0.5 + 0.5 * rho).unwrap();
        let a = pde_solve(&low, &table, &[0.01, 0.05], 64).unwrap();
        let b = pde_solve(&high, &table, &[0.01, 0.05], 64).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            for (va, vb) in sa.values.iter().zip(&sb.values) {
                assert!(va <= &(vb + 1e-8));
            }
        }
    }

    #[test]
    fn frozen_dynamics_keep_the_profile() {
        // blocked construction, hard constraint: nothing can move
        let params = ModelParams::new(2, 2, 0.0, 8.0 / 9.0).unwrap();
        let rho0 = DensityProfile::constant(2, 8.0 / 9.0).unwrap();
        let table = DiffusionTable::constant(1.0).unwrap();
        let out = run_hydro_experiment(
            &params,
            9,
            &rho0,
            &[0.01, 0.02],
            2,
            3,
            InitialCondition::Blocked,
            &table,
            7,
        )
        .unwrap();
        assert!(out.frozen_warning);
        assert_eq!(out.profiles[0].densities, out.profiles[1].densities);
    }

    #[test]
    fn ssep_profile_tracks_the_pde() {
        let params = ModelParams::new(2, 1, 0.0, 0.5).unwrap();
        let rho0 = DensityProfile::from_fn(2, 32, |u| 0.5 + 0.2 * (2.0 * PI * u[0]).cos())
            .unwrap();
        let table = DiffusionTable::constant(1.0).unwrap();
        let out = run_hydro_experiment(
            &params,
            32,
            &rho0,
            &[0.02],
            32,
            8,
            InitialCondition::Product,
            &table,
            3,
        )
        .unwrap();
        assert!(!out.frozen_warning);
        assert!(out.l1[0] < 0.05, "L1 {}", out.l1[0]);
        assert!(out.l2[0] < 0.07, "L2 {}", out.l2[0]);
        let mass: f64 = out.profiles[0].mass();
        assert!((mass - 0.5).abs() < 0.05);
    }
}
