//! Subcommand argument parsing and execution.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ka_core::bootstrap::{dump_span, span, SiteSet};
use ka_core::diffusion::{
    estimate_D_variational, green_kubo_estimate, test_function_dirichlet, DirichletEstimate,
    VariationalEstimate,
};
use ka_core::dynamics::{simulate, ModelParams};
use ka_core::hydro::run_hydro_experiment;
use ka_core::lattice::{
    read_snapshot, write_snapshot, Configuration, Edge, Geometry, Site, Window,
};
use ka_core::nongradient::{
    construct_witness, current_sum, validate_move_family, validate_multistep_move, Direction,
    MoveSequence, MoveStep,
};
use ka_core::rng::stream_rng;

use crate::artifacts::{resolve_out, OutputDir};
use crate::config::{
    load, override_with, BasisSpec, BootstrapConfig, CurrentSumConfig, DiffusionSpec,
    EstimateDConfig, GreenKuboConfig, HydroConfig, InitialSpec, ProfileSpec, RunConfig,
    SimulateConfig, TestFunctionConfig, ValidateConfig, ValidateMoveConfig, WitnessConfig,
};
use crate::{DynError, Exit};

#[derive(Parser)]
#[command(name = "ka", version, about = "Kob-Andersen lattice gas experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (soft) constrained dynamics from a snapshot
    Simulate(SimulateArgs),
    /// Variational estimate of the diffusion coefficient
    EstimateD(EstimateDArgs),
    /// Dirichlet value of the scale-l test function
    TestFunction(TestFunctionArgs),
    /// Green-Kubo estimate of the diffusion matrix
    GreenKubo(GreenKuboArgs),
    /// Empirical density profiles against the hydrodynamic equation
    Hydro(HydroArgs),
    /// Bootstrap percolation span of an empty-site instance
    Bootstrap(BootstrapArgs),
    /// Non-gradient structure probes
    #[command(subcommand)]
    Nongradient(NongradientCommand),
    /// Check a multistep move or move family for constraint legality
    ValidateMove(ValidateMoveArgs),
    /// Round-trip snapshot files through the text format
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum NongradientCommand {
    /// Construct a torus configuration whose current sum is nonzero
    Witness(WitnessArgs),
    /// Current sums of a snapshot, one component per axis
    CurrentSum(CurrentSumArgs),
}

pub fn run(cli: Cli) -> Result<Exit, DynError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::EstimateD(a) => cmd_estimate_d(a),
        Command::TestFunction(a) => cmd_test_function(a),
        Command::GreenKubo(a) => cmd_green_kubo(a),
        Command::Hydro(a) => cmd_hydro(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Nongradient(NongradientCommand::Witness(a)) => cmd_witness(a),
        Command::Nongradient(NongradientCommand::CurrentSum(a)) => cmd_current_sum(a),
        Command::ValidateMove(a) => cmd_validate_move(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = machine cores); results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: $KA_OUTPUT_DIR or `.`)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Loads the configuration, applies the common overrides, sets up the
/// worker pool, and opens the output directory.
fn prepare<T: RunConfig>(common: &CommonArgs) -> Result<(T, OutputDir), DynError> {
    let mut cfg: T = load(common.config.as_ref())?;
    override_with(cfg.seed_mut(), common.seed);
    override_with(cfg.threads_mut(), common.threads);
    let threads = *cfg.threads_mut();
    if threads > 0 {
        // only the first per-process initialization can take effect;
        // determinism never depends on the pool size anyway
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let out = OutputDir::create(&resolve_out(common.out.clone(), cfg.out()))?;
    Ok((cfg, out))
}

fn path_string(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

fn read_input(path: &str) -> Result<String, DynError> {
    fs::read_to_string(path)
        .map_err(|e| format!("cannot read {path}: {e}").into())
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input snapshot (`d N k` header plus occupancy grid)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Soft-constraint rate for blocked exchanges
    #[arg(long)]
    eps: Option<f64>,
    /// Simulated time span
    #[arg(long)]
    duration: Option<f64>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (SimulateConfig, _) = prepare(&args.common)?;
    if let Some(p) = args.input {
        cfg.input = Some(path_string(p));
    }
    override_with(&mut cfg.eps, args.eps);
    override_with(&mut cfg.duration, args.duration);
    let input = cfg
        .input
        .clone()
        .ok_or("an input snapshot is required (--input)")?;
    let (start, k) = read_snapshot(&read_input(&input)?)?;
    let params = ModelParams::new(start.geometry().d(), k, cfg.eps, start.density())?;
    let mut rng = stream_rng(cfg.seed, 0);
    let (end, stats) = simulate(&start, &params, cfg.duration, &mut rng)?;
    println!(
        "simulated t = {}: {} of {} exchanges accepted",
        stats.elapsed, stats.accepted, stats.attempted
    );
    out.write("final.snap", write_snapshot(&end, k)?)?;
    out.write_json("stats.json", &stats)?;
    out.finish(SimulateConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct EstimateDArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spatial dimension
    #[arg(long)]
    d: Option<usize>,
    /// Constraint parameter
    #[arg(long)]
    k: Option<usize>,
    /// Soft-constraint rate
    #[arg(long)]
    eps: Option<f64>,
    /// Particle density
    #[arg(long)]
    rho: Option<f64>,
    /// Basis descriptor: `empty` or `pair:<r>`
    #[arg(long)]
    basis: Option<BasisSpec>,
    /// Monte Carlo sample count (ignored when exact enumeration applies)
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Serialize)]
struct EstimateDRecord<'a> {
    params: &'a ModelParams,
    basis: String,
    estimate: &'a VariationalEstimate,
}

fn cmd_estimate_d(args: EstimateDArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (EstimateDConfig, _) = prepare(&args.common)?;
    override_with(&mut cfg.d, args.d);
    override_with(&mut cfg.k, args.k);
    override_with(&mut cfg.eps, args.eps);
    override_with(&mut cfg.rho, args.rho);
    override_with(&mut cfg.basis, args.basis);
    override_with(&mut cfg.samples, args.samples);
    let params = ModelParams::new(cfg.d, cfg.k, cfg.eps, cfg.rho)?;
    let basis = cfg.basis.build(cfg.d);
    let estimate = estimate_D_variational(&params, &basis, cfg.samples, cfg.seed)?;
    println!(
        "D estimate: {} (stderr {})",
        estimate.estimate, estimate.stderr
    );
    out.write_json(
        "estimate_d.json",
        &EstimateDRecord {
            params: &params,
            basis: basis.descriptor(),
            estimate: &estimate,
        },
    )?;
    out.finish(EstimateDConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct TestFunctionArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spatial dimension
    #[arg(long)]
    d: Option<usize>,
    /// Constraint parameter
    #[arg(long)]
    k: Option<usize>,
    /// Soft-constraint rate
    #[arg(long)]
    eps: Option<f64>,
    /// Particle density
    #[arg(long)]
    rho: Option<f64>,
    /// Test function scale
    #[arg(long)]
    l: Option<i64>,
    /// Monte Carlo sample count
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Serialize)]
struct TestFunctionRecord<'a> {
    params: &'a ModelParams,
    l: i64,
    estimate: &'a DirichletEstimate,
}

fn cmd_test_function(args: TestFunctionArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (TestFunctionConfig, _) = prepare(&args.common)?;
    override_with(&mut cfg.d, args.d);
    override_with(&mut cfg.k, args.k);
    override_with(&mut cfg.eps, args.eps);
    override_with(&mut cfg.rho, args.rho);
    override_with(&mut cfg.l, args.l);
    override_with(&mut cfg.samples, args.samples);
    let params = ModelParams::new(cfg.d, cfg.k, cfg.eps, cfg.rho)?;
    let estimate = test_function_dirichlet(&params, cfg.l, cfg.samples, cfg.seed)?;
    println!(
        "Dirichlet value at l = {}: {} (stderr {})",
        cfg.l, estimate.value, estimate.stderr
    );
    out.write_json(
        "test_function.json",
        &TestFunctionRecord {
            params: &params,
            l: cfg.l,
            estimate: &estimate,
        },
    )?;
    out.finish(TestFunctionConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct GreenKuboArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spatial dimension
    #[arg(long)]
    d: Option<usize>,
    /// Constraint parameter
    #[arg(long)]
    k: Option<usize>,
    /// Soft-constraint rate
    #[arg(long)]
    eps: Option<f64>,
    /// Particle density
    #[arg(long)]
    rho: Option<f64>,
    /// Torus side length
    #[arg(long)]
    n: Option<usize>,
    /// Measurement times, comma separated and increasing
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Replica count
    #[arg(long)]
    replicas: Option<u64>,
}

fn cmd_green_kubo(args: GreenKuboArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (GreenKuboConfig, _) = prepare(&args.common)?;
    override_with(&mut cfg.d, args.d);
    override_with(&mut cfg.k, args.k);
    override_with(&mut cfg.eps, args.eps);
    override_with(&mut cfg.rho, args.rho);
    override_with(&mut cfg.n, args.n);
    override_with(&mut cfg.times, args.times);
    override_with(&mut cfg.replicas, args.replicas);
    let params = ModelParams::new(cfg.d, cfg.k, cfg.eps, cfg.rho)?;
    let estimate = green_kubo_estimate(&params, cfg.n, &cfg.times, cfg.replicas, cfg.seed)?;

    let d = cfg.d;
    let mut csv = String::from("t");
    for tag in ["m", "se"] {
        for a in 0..d {
            for b in 0..d {
                csv.push_str(&format!(",{tag}{a}{b}"));
            }
        }
    }
    csv.push('\n');
    for (i, t) in estimate.times.iter().enumerate() {
        csv.push_str(&t.to_string());
        for v in estimate.mean[i].iter().chain(&estimate.stderr[i]) {
            csv.push(',');
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }
    out.write("green_kubo.csv", csv)?;
    out.write_json("green_kubo.json", &estimate)?;
    out.finish(GreenKuboConfig::SUBCOMMAND, &cfg)?;
    if estimate.displacement_warning {
        eprintln!("warning: displacements reach the torus scale; minimal-image correlations fold back");
        return Ok(Exit::Warning);
    }
    Ok(Exit::Success)
}

#[derive(Args)]
struct HydroArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spatial dimension
    #[arg(long)]
    d: Option<usize>,
    /// Constraint parameter
    #[arg(long)]
    k: Option<usize>,
    /// Soft-constraint rate
    #[arg(long)]
    eps: Option<f64>,
    /// Constant initial density (shorthand for a constant profile)
    #[arg(long)]
    rho: Option<f64>,
    /// Torus side length
    #[arg(long)]
    n: Option<usize>,
    /// Bins per axis (must divide n)
    #[arg(long)]
    bins: Option<usize>,
    /// Macroscopic measurement times, comma separated and increasing
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Replica count
    #[arg(long)]
    replicas: Option<u64>,
    /// Initial condition
    #[arg(long, value_enum)]
    initial: Option<InitialSpec>,
    /// Constant diffusion coefficient of the reference equation
    #[arg(long)]
    diffusion: Option<f64>,
}

fn cmd_hydro(args: HydroArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (HydroConfig, _) = prepare(&args.common)?;
    override_with(&mut cfg.d, args.d);
    override_with(&mut cfg.k, args.k);
    override_with(&mut cfg.eps, args.eps);
    override_with(&mut cfg.n, args.n);
    override_with(&mut cfg.bins, args.bins);
    override_with(&mut cfg.times, args.times);
    override_with(&mut cfg.replicas, args.replicas);
    override_with(&mut cfg.initial, args.initial);
    if let Some(rho) = args.rho {
        cfg.profile = ProfileSpec::Constant { rho };
    }
    if let Some(value) = args.diffusion {
        cfg.diffusion = DiffusionSpec::Constant { value };
    }
    let rho0 = cfg.profile.build(cfg.d)?;
    let table = cfg.diffusion.build()?;
    let params = ModelParams::new(cfg.d, cfg.k, cfg.eps, cfg.profile.mean())?;
    let experiment = run_hydro_experiment(
        &params,
        cfg.n,
        &rho0,
        &cfg.times,
        cfg.replicas,
        cfg.bins,
        cfg.initial.into(),
        &table,
        cfg.seed,
    )?;

    let mut csv = String::from("t");
    for a in 1..=cfg.d {
        csv.push_str(&format!(",b{a}"));
    }
    csv.push_str(",density,pde\n");
    for (i, profile) in experiment.profiles.iter().enumerate() {
        let t = experiment.times[i];
        for (flat, density) in profile.densities.iter().enumerate() {
            csv.push_str(&t.to_string());
            let mut rem = flat;
            let mut idx = vec![0usize; cfg.d];
            for a in (0..cfg.d).rev() {
                idx[a] = rem % cfg.bins;
                rem /= cfg.bins;
            }
            for v in idx {
                csv.push_str(&format!(",{v}"));
            }
            csv.push_str(&format!(",{density},{}\n", experiment.pde[i].values[flat]));
        }
    }
    for (t, l1) in experiment.times.iter().zip(&experiment.l1) {
        println!("t = {t}: L1 distance {l1}");
    }
    out.write("hydro.csv", csv)?;
    out.write_json("hydro.json", &experiment)?;
    out.finish(HydroConfig::SUBCOMMAND, &cfg)?;
    if experiment.frozen_warning {
        eprintln!("warning: eps = 0 with k > 1; blocked states freeze and need not follow the hydrodynamic equation");
        return Ok(Exit::Warning);
    }
    Ok(Exit::Success)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowSpec {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BootstrapInstance {
    window: WindowSpec,
    empties: Vec<Vec<i64>>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Instance file: JSON with `window` ({lo, hi}) and `empties`
    #[arg(long)]
    input: Option<PathBuf>,
    /// Constraint parameter
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Serialize)]
struct SpanRecord {
    k: usize,
    window: WindowSpec,
    empty_count: usize,
    span_count: usize,
    spans_window: bool,
}

fn cmd_bootstrap(args: BootstrapArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (BootstrapConfig, _) = prepare(&args.common)?;
    if let Some(p) = args.input {
        cfg.input = Some(path_string(p));
    }
    override_with(&mut cfg.k, args.k);
    let input = cfg
        .input
        .clone()
        .ok_or("an instance file is required (--input)")?;
    let instance: BootstrapInstance = serde_json::from_str(&read_input(&input)?)
        .map_err(|e| format!("invalid instance {input}: {e}"))?;
    let window = Window::new(instance.window.lo.clone(), instance.window.hi.clone())?;
    let mut empties = Vec::with_capacity(instance.empties.len());
    for coords in &instance.empties {
        let site = Site::new(coords.clone());
        if !window.contains(&site) {
            return Err(format!("empty site {coords:?} lies outside the window").into());
        }
        empties.push(site);
    }
    let a = SiteSet::from_sites(window.clone(), &empties);
    let result = span(&a, cfg.k);
    let span_count = result.span_set().len();
    println!(
        "span of {} empty sites: {} of {} window sites",
        a.len(),
        span_count,
        window.site_count()
    );
    out.write("span.txt", dump_span(&a, cfg.k))?;
    out.write_json(
        "span.json",
        &SpanRecord {
            k: cfg.k,
            window: instance.window,
            empty_count: a.len(),
            span_count,
            spans_window: span_count == window.site_count(),
        },
    )?;
    out.finish(BootstrapConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct WitnessArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Constraint parameter (>= 2)
    #[arg(long)]
    k: Option<usize>,
    /// Spatial dimension (>= k)
    #[arg(long)]
    d: Option<usize>,
    /// Torus side length (>= 8)
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Serialize)]
struct WitnessRecord {
    k: usize,
    d: usize,
    n: usize,
    current_sum: Vec<i64>,
}

fn cmd_witness(args: WitnessArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (WitnessConfig, _) = prepare(&args.common)?;
    override_with(&mut cfg.k, args.k);
    override_with(&mut cfg.d, args.d);
    override_with(&mut cfg.n, args.n);
    let config = construct_witness(cfg.k, cfg.d, cfg.n)?;
    let sums = current_sum(&config, cfg.k)?;
    println!("current sums: {sums:?}");
    out.write("witness.snap", write_snapshot(&config, cfg.k)?)?;
    out.write_json(
        "witness.json",
        &WitnessRecord {
            k: cfg.k,
            d: cfg.d,
            n: cfg.n,
            current_sum: sums,
        },
    )?;
    out.finish(WitnessConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct CurrentSumArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input snapshot
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Serialize)]
struct CurrentSumRecord {
    k: usize,
    current_sum: Vec<i64>,
}

fn cmd_current_sum(args: CurrentSumArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (CurrentSumConfig, _) = prepare(&args.common)?;
    if let Some(p) = args.input {
        cfg.input = Some(path_string(p));
    }
    let input = cfg
        .input
        .clone()
        .ok_or("an input snapshot is required (--input)")?;
    let (config, k) = read_snapshot(&read_input(&input)?)?;
    let sums = current_sum(&config, k)?;
    println!("current sums: {sums:?}");
    out.write_json(
        "current_sum.json",
        &CurrentSumRecord {
            k,
            current_sum: sums,
        },
    )?;
    out.finish(CurrentSumConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveFile {
    k: usize,
    window: WindowSpec,
    sequences: Vec<SequenceSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceSpec {
    initial_empties: Vec<Vec<i64>>,
    steps: Vec<StepSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSpec {
    site: Vec<i64>,
    dir: String,
}

/// Parses `stay` or a signed 1-based axis like `+e1` / `-e2`.
fn parse_direction(s: &str, d: usize) -> Result<Direction, DynError> {
    if s == "stay" {
        return Ok(Direction::Stay);
    }
    let (positive, rest) = if let Some(r) = s.strip_prefix('+') {
        (true, r)
    } else if let Some(r) = s.strip_prefix('-') {
        (false, r)
    } else {
        return Err(format!("bad direction {s:?}; expected `stay` or like `+e1`").into());
    };
    let axis: usize = rest
        .strip_prefix('e')
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| format!("bad direction {s:?}; expected `stay` or like `+e1`"))?;
    if axis == 0 || axis > d {
        return Err(format!("direction axis out of range in {s:?} for d = {d}").into());
    }
    Ok(Direction::Unit {
        axis: axis - 1,
        positive,
    })
}

fn build_sequence(window: &Window, spec: &SequenceSpec) -> Result<MoveSequence, DynError> {
    let geom = Geometry::Window(window.clone());
    let mut empties = Vec::with_capacity(spec.initial_empties.len());
    for coords in &spec.initial_empties {
        let site = Site::new(coords.clone());
        if !window.contains(&site) {
            return Err(format!("initial empty site {coords:?} lies outside the window").into());
        }
        empties.push(site);
    }
    let mut current = Configuration::filled_except(geom.clone(), &empties);
    let initial = current.clone();
    let mut steps = Vec::with_capacity(spec.steps.len());
    for step in &spec.steps {
        let site = Site::new(step.site.clone());
        let dir = parse_direction(&step.dir, window.d())?;
        let config = match dir {
            Direction::Stay => current.clone(),
            Direction::Unit { .. } => {
                let edge = Edge::new(&geom, site.clone(), dir.apply(&site))?;
                current.exchange(&edge)?
            }
        };
        current = config.clone();
        steps.push(MoveStep { site, dir, config });
    }
    Ok(MoveSequence { initial, steps })
}

#[derive(Args)]
struct ValidateMoveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Move file: JSON with `k`, `window` and a list of `sequences`
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Serialize)]
struct ValidationRecord {
    k: usize,
    sequences: usize,
    valid: bool,
    loss: Option<f64>,
}

fn cmd_validate_move(args: ValidateMoveArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (ValidateMoveConfig, _) = prepare(&args.common)?;
    if let Some(p) = args.input {
        cfg.input = Some(path_string(p));
    }
    let input = cfg
        .input
        .clone()
        .ok_or("a move file is required (--input)")?;
    let file: MoveFile = serde_json::from_str(&read_input(&input)?)
        .map_err(|e| format!("invalid move file {input}: {e}"))?;
    if file.sequences.is_empty() {
        return Err("the move file lists no sequences".into());
    }
    let window = Window::new(file.window.lo.clone(), file.window.hi.clone())?;
    let sequences = file
        .sequences
        .iter()
        .map(|s| build_sequence(&window, s))
        .collect::<Result<Vec<_>, _>>()?;
    let validation = if sequences.len() == 1 {
        validate_multistep_move(&sequences[0], file.k)?
    } else {
        validate_move_family(&sequences, file.k)?
    };
    match validation.loss {
        Some(loss) => println!("valid: {}, loss: {loss}", validation.valid),
        None => println!("valid: {}", validation.valid),
    }
    out.write_json(
        "validation.json",
        &ValidationRecord {
            k: file.k,
            sequences: sequences.len(),
            valid: validation.valid,
            loss: validation.loss,
        },
    )?;
    out.finish(ValidateMoveConfig::SUBCOMMAND, &cfg)?;
    Ok(Exit::Success)
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Snapshot files to round-trip
    inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct FileReport {
    path: String,
    ok: bool,
    detail: String,
}

fn round_trip(path: &str) -> Result<(), DynError> {
    let text = read_input(path)?;
    let (config, k) = read_snapshot(&text)?;
    let written = write_snapshot(&config, k)?;
    let (reread, k2) = read_snapshot(&written)?;
    let rewritten = write_snapshot(&reread, k2)?;
    if written != rewritten || k != k2 {
        return Err("round-trip produced a different snapshot".into());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<Exit, DynError> {
    let (mut cfg, mut out): (ValidateConfig, _) = prepare(&args.common)?;
    if !args.inputs.is_empty() {
        cfg.inputs = args.inputs.into_iter().map(path_string).collect();
    }
    if cfg.inputs.is_empty() {
        return Err("no snapshot files given".into());
    }
    let mut reports = Vec::with_capacity(cfg.inputs.len());
    let mut failures = 0usize;
    for path in &cfg.inputs {
        let report = match round_trip(path) {
            Ok(()) => FileReport {
                path: path.clone(),
                ok: true,
                detail: "round-trip ok".into(),
            },
            Err(e) => {
                failures += 1;
                FileReport {
                    path: path.clone(),
                    ok: false,
                    detail: e.to_string(),
                }
            }
        };
        println!("{}: {}", report.path, report.detail);
        reports.push(report);
    }
    out.write_json("validate.json", &reports)?;
    out.finish(ValidateConfig::SUBCOMMAND, &cfg)?;
    if failures > 0 {
        return Err(format!(
            "{failures} of {} snapshots failed validation",
            cfg.inputs.len()
        )
        .into());
    }
    Ok(Exit::Success)
}
