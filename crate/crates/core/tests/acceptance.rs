//! End-to-end acceptance checks, one test per headline guarantee of the
//! toolkit. Each test prints a single summary line with the measured
//! quantities next to its threshold; every random input is seeded, so
//! the whole suite is reproducible bit for bit.

use ka_core::bootstrap::{span, span_naive, SiteSet};
use ka_core::diffusion::{
    green_kubo_estimate, test_function_dirichlet, test_function_gradient,
    test_function_gradient_fast, LocalFunctionBasis, TestFunctionSpec, VariationalMoments,
};
use ka_core::dynamics::{constraint_at, ModelParams, Simulator};
use ka_core::hydro::{run_hydro_experiment, DiffusionTable, InitialCondition};
use ka_core::lattice::{construct_blocked, Edge};
use ka_core::nongradient::{
    construct_witness, current_sum, e_stretch, verify_mobile_cluster, ClusterCandidate,
    Direction, Stretch, Verdict,
};
use ka_core::rng::stream_rng;
use ka_core::{Configuration, DensityProfile, Geometry, Site, TorusGeometry, Window};
use rand::Rng;
use std::f64::consts::PI;

#[test]
fn c01_blocked_state_freezes() {
    // hard constraint, blocked sublattice construction: every
    // unequal-occupancy exchange is forbidden, so nothing ever moves
    let geom = TorusGeometry::new(2, 9).unwrap();
    let profile = DensityProfile::constant(2, 8.0 / 9.0).unwrap();
    let mut rng = stream_rng(101, 0);
    let start = construct_blocked(geom, &profile, &mut rng).unwrap();
    let params = ModelParams::new(2, 2, 0.0, 8.0 / 9.0).unwrap();
    let mut sim = Simulator::new(start.clone(), &params).unwrap();
    let attempted = sim.run_events(100_000, &mut rng);
    let stats = sim.stats();
    println!(
        "c01 blocked freeze: {attempted} attempts, {} accepted (must be 0)",
        stats.accepted
    );
    assert_eq!(attempted, 100_000);
    assert_eq!(stats.accepted, 0);
    assert_eq!(sim.config(), &start);
}

#[test]
fn c02_ssep_profile_matches_heat_equation() {
    // unconstrained exclusion on N = 128 against the heat equation with
    // unit coefficient, cosine initial profile, macroscopic t = 0.05
    let params = ModelParams::new(2, 1, 0.0, 0.5).unwrap();
    let rho0 =
        DensityProfile::from_fn(2, 256, |u| 0.5 + 0.2 * (2.0 * PI * u[0]).cos()).unwrap();
    let table = DiffusionTable::constant(1.0).unwrap();
    let exp = run_hydro_experiment(
        &params,
        128,
        &rho0,
        &[0.05],
        16,
        8,
        InitialCondition::Product,
        &table,
        102,
    )
    .unwrap();
    println!("c02 hydrodynamics: L1 = {:.5} (<= 0.02)", exp.l1[0]);
    assert!(exp.l1[0] <= 0.02, "L1 = {}", exp.l1[0]);
}

#[test]
fn c03_variational_empty_basis_anchors() {
    // with no basis functions the objective is the bare jump rate: 1
    // exactly for the unconstrained walk, and again 1 at full softening
    let basis = LocalFunctionBasis::empty(2);
    let ssep = ModelParams::new(2, 1, 0.0, 0.5).unwrap();
    let m = VariationalMoments::enumerate(&ssep, &basis).unwrap().unwrap();
    let v1 = m.empty_basis_value(0.0);

    let soft = ModelParams::new(2, 2, 1.0, 0.5).unwrap();
    let m = VariationalMoments::enumerate(&soft, &basis).unwrap().unwrap();
    let v2 = m.empty_basis_value(1.0);
    println!("c03 anchors: k=1 -> {v1:.15}, eps=1 -> {v2:.15} (both 1 within 1e-12)");
    assert!((v1 - 1.0).abs() <= 1e-12, "k=1 empty basis {v1}");
    assert!((v2 - 1.0).abs() <= 1e-12, "eps=1 empty basis {v2}");
}

const SHARED_SAMPLE_SEED: u64 = 103;

fn shared_moments() -> VariationalMoments {
    let params = ModelParams::new(2, 2, 0.0, 0.7).unwrap();
    let basis = LocalFunctionBasis::pair_monomials(2, 1);
    VariationalMoments::collect(&params, &basis, 100_000, SHARED_SAMPLE_SEED).unwrap()
}

#[test]
fn c04_variational_monotone_in_softening() {
    // on one fixed sample set the objective is pointwise non-decreasing
    // in eps, hence so is its minimum
    let moments = shared_moments();
    let raws: Vec<f64> = [0.01, 0.1, 0.5]
        .iter()
        .map(|&eps| moments.solve(eps).unwrap().raw)
        .collect();
    println!(
        "c04 monotonicity: raw({{0.01, 0.1, 0.5}}) = {:.6}, {:.6}, {:.6} (non-decreasing)",
        raws[0], raws[1], raws[2]
    );
    assert!(raws[0] <= raws[1] && raws[1] <= raws[2], "{raws:?}");
}

#[test]
fn c05_variational_sandwich_bounds() {
    // eps times the all-rates-one reference value bounds the estimate
    // below; the zero-coefficient value at the same eps bounds it above
    let moments = shared_moments();
    let reference = moments.empty_basis_value(1.0);
    for eps in [0.01, 0.1, 0.5] {
        let raw = moments.solve(eps).unwrap().raw;
        let upper = moments.empty_basis_value(eps);
        println!(
            "c05 sandwich at eps={eps}: {:.6} <= {raw:.6} <= {upper:.6}",
            eps * reference
        );
        assert!(eps * reference <= raw, "eps={eps}: {raw} < {}", eps * reference);
        assert!(raw <= upper, "eps={eps}: {raw} > {upper}");
    }
}

#[test]
fn c06_dirichlet_value_decays_with_scale() {
    // the test-function Dirichlet value at scale 8 must sit below the
    // scale-2 value by at least two combined standard errors
    //
    // Known failure at these parameters: with 5% vacancies the value is
    // dominated by rare frame-boundary translates whose gradients grow
    // with l (in-frame bootstrap cascades), and pooled over millions of
    // samples it rises again beyond l = 4. The decay regime needs the
    // vacancy density well below 1/l; at rho = 0.995 both scales give
    // exactly zero. The check is kept as stated rather than tuned to pass.
    let params = ModelParams::new(2, 2, 0.0, 0.95).unwrap();
    let small = test_function_dirichlet(&params, 2, 100_000, 104).unwrap();
    let large = test_function_dirichlet(&params, 8, 100_000, 105).unwrap();
    let gap = small.value - large.value;
    let two_se = 2.0 * (small.stderr * small.stderr + large.stderr * large.stderr).sqrt();
    println!(
        "c06 decay: l=2 -> {:.5} ({:.5}), l=8 -> {:.5} ({:.5}), gap {:.5} (>= {:.5})",
        small.value, small.stderr, large.value, large.stderr, gap, two_se
    );
    assert!(gap >= two_se, "gap {gap} < {two_se}");
}

#[test]
fn c07_witness_current_is_positive() {
    for (k, d, n) in [(2usize, 2usize, 16usize), (2, 3, 8)] {
        let config = construct_witness(k, d, n).unwrap();
        let sum = current_sum(&config, k).unwrap();
        println!("c07 witness k={k} d={d}: current {sum:?} (first component >= 1)");
        assert!(sum[0] >= 1, "k={k} d={d}: {sum:?}");
    }
}

#[test]
fn c08_span_matches_naive_oracle() {
    let window = Window::new(vec![0, 0], vec![5, 5]).unwrap();
    for k in [1usize, 2] {
        for trial in 0..200u64 {
            let mut rng = stream_rng(106 + k as u64, trial);
            let sites: Vec<Site> = window
                .sites()
                .filter(|_| rng.random::<f64>() < 0.35)
                .collect();
            let a = SiteSet::from_sites(window.clone(), &sites);
            let fast = span(&a, k).span_set();
            let naive = span_naive(&a, k);
            assert_eq!(fast, naive, "k={k} trial={trial}");
        }
    }
    println!("c08 span oracle: 200 random 6x6 instances per k in {{1, 2}}, all identical");
}

#[test]
fn c09_span_invariant_under_allowed_exchanges() {
    // an exchange whose constraint holds cannot change the span of the
    // empty set
    let window = Window::centered(2, 3);
    let geom = Geometry::Window(window.clone());
    let mut rng = stream_rng(107, 0);
    let mut checked = 0u32;
    while checked < 1000 {
        let mut config = Configuration::empty(geom.clone());
        for i in 0..config.site_count() {
            config.set_index(i, rng.random::<f64>() < 0.55);
        }
        let i = rng.random_range(0..config.site_count());
        let x = geom.site_at(i);
        let axis = rng.random_range(0..2);
        let delta = if rng.random::<bool>() { 1 } else { -1 };
        let y = x.shifted(axis, delta);
        if !window.contains(&y) || !constraint_at(&config, &x, &y, 2) {
            continue;
        }
        let edge = Edge::new(&geom, x, y).unwrap();
        let swapped = config.exchange(&edge).unwrap();
        let before = span(&SiteSet::empties_of(&config).unwrap(), 2).span_set();
        let after = span(&SiteSet::empties_of(&swapped).unwrap(), 2).span_set();
        assert_eq!(before, after, "instance {checked}");
        checked += 1;
    }
    println!("c09 span invariance: 1000 allowed exchanges, spans identical");
}

#[test]
fn c10_gradient_fast_path_matches_direct() {
    let spec = TestFunctionSpec::new(2, 3).unwrap();
    let window = Window::centered(2, 7);
    let geom = Geometry::Window(window.clone());
    for trial in 0..1000u64 {
        let mut rng = stream_rng(108, trial);
        let mut config = Configuration::empty(geom.clone());
        for i in 0..config.site_count() {
            config.set_index(i, rng.random::<f64>() < 0.7);
        }
        let x = Site::new([rng.random_range(-7..=7i64), rng.random_range(-7..=7i64)]);
        let axis = rng.random_range(0..2usize);
        let fast = test_function_gradient_fast(&config, &x, axis, &spec, 2).unwrap();
        let direct = test_function_gradient(&config, &x, axis, &spec, 2).unwrap();
        assert_eq!(fast, direct, "trial {trial} at x={x:?} axis={axis}");
    }
    println!("c10 gradient oracle: 1000 random triples at l=3, fast path exact");
}

#[test]
fn c11_green_kubo_ssep_diffusion_matrix() {
    // the correlation estimator must reproduce the unit diffusion matrix
    // of the unconstrained walk within 10% on the diagonal, with the
    // off-diagonal and the diagonal mismatch inside two standard errors
    let params = ModelParams::new(2, 1, 0.0, 0.5).unwrap();
    let est = green_kubo_estimate(&params, 64, &[5.0, 10.0, 20.0], 512, 17).unwrap();
    assert!(!est.displacement_warning);
    for (ti, &t) in est.times.iter().enumerate() {
        let m = &est.mean[ti];
        let se = &est.stderr[ti];
        println!(
            "c11 green-kubo t={t}: diag {:.4} ({:.4}), {:.4} ({:.4}); off {:.4} ({:.4})",
            m[0], se[0], m[3], se[3], m[1], se[1]
        );
        for a in 0..2 {
            let v = m[a * 2 + a];
            assert!((v - 1.0).abs() <= 0.10, "t={t}: diagonal {v}");
        }
        assert!(
            m[1].abs() <= 2.0 * se[1],
            "t={t}: off-diagonal {} vs 2 x {}",
            m[1],
            se[1]
        );
        let diff = (m[0] - m[3]).abs();
        let combined = 2.0 * (se[0] * se[0] + se[3] * se[3]).sqrt();
        assert!(
            diff <= combined,
            "t={t}: diagonal mismatch {diff} vs {combined}"
        );
    }
}

#[test]
fn c12_mobile_cluster_verdicts() {
    let lone = ClusterCandidate {
        sites: vec![Site::new([0, 0])],
        window: Window::centered(2, 2),
        cap: 10_000,
    };

    // unconstrained: a single vacancy translates freely and unlocks
    // every edge
    let report = verify_mobile_cluster(&lone, 1).unwrap();
    assert!(report.translations.iter().all(|(_, v)| *v == Verdict::Pass));
    assert!(report.edge_coverage);

    // k = 2: the same vacancy cannot move at all
    let report = verify_mobile_cluster(&lone, 2).unwrap();
    assert!(report.translations.iter().all(|(_, v)| *v == Verdict::Fail));

    let stretch = e_stretch(
        &[Site::new([0, 0])],
        Direction::Unit { axis: 0, positive: true },
        &Window::centered(2, 3),
        2,
        10_000,
    )
    .unwrap();
    assert_eq!(stretch, Stretch::Exact(0));
    println!("c12 mobile cluster: k=1 passes, k=2 fails to translate, stretch = 0");
}
