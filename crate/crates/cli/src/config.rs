//! Run configurations: strict-schema JSON files, with every field
//! overridable from the command line. An identical configuration
//! produces bit-identical outputs regardless of the parallelism degree.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use ka_core::diffusion::LocalFunctionBasis;
use ka_core::hydro::{DiffusionTable, InitialCondition};
use ka_core::lattice::DensityProfile;
use ka_core::{KaError, Result as KaResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Shared behavior of the per-subcommand configurations: defaults, the
/// subcommand echo check, and the common seed / threads / output fields.
pub trait RunConfig: DeserializeOwned + Serialize + Default {
    const SUBCOMMAND: &'static str;
    fn named_subcommand(&self) -> Option<&str>;
    fn seed_mut(&mut self) -> &mut u64;
    fn threads_mut(&mut self) -> &mut usize;
    fn out(&self) -> &Option<String>;
}

macro_rules! run_config {
    ($(#[$doc:meta])* $name:ident, $subcommand:literal {
        $( $(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
    }) => {
        $(#[$doc])*
        #[derive(Clone, Debug, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            /// Optional subcommand echo; rejected when it names another
            /// command.
            #[serde(skip_serializing_if = "Option::is_none")]
            pub subcommand: Option<String>,
            /// Master seed; together with the rest of the configuration it
            /// determines every random draw.
            pub seed: u64,
            /// Worker threads (0 = machine cores). Replica reductions are
            /// ordered by task index, so results do not depend on it and,
            /// like the output directory, it is omitted from the manifest
            /// echo.
            #[serde(skip_serializing)]
            pub threads: usize,
            /// Output directory. Not part of the result identity, so it is
            /// omitted from the manifest echo.
            #[serde(skip_serializing)]
            pub out: Option<String>,
            $( $(#[$fmeta])* pub $field: $ty, )*
        }

        impl Default for $name {
            fn default() -> Self {
                $name {
                    subcommand: None,
                    seed: 0,
                    threads: 0,
                    out: None,
                    $( $field: $default, )*
                }
            }
        }

        impl RunConfig for $name {
            const SUBCOMMAND: &'static str = $subcommand;

            fn named_subcommand(&self) -> Option<&str> {
                self.subcommand.as_deref()
            }

            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }

            fn threads_mut(&mut self) -> &mut usize {
                &mut self.threads
            }

            fn out(&self) -> &Option<String> {
                &self.out
            }
        }
    };
}

run_config!(
    /// `simulate`: run the dynamics from a snapshot file.
    SimulateConfig, "simulate" {
        input: Option<String> = None,
        eps: f64 = 0.0,
        duration: f64 = 0.0,
    }
);

run_config!(
    /// `estimate-d`: variational diffusion coefficient estimate.
    EstimateDConfig, "estimate-d" {
        d: usize = 2,
        k: usize = 2,
        eps: f64 = 0.1,
        rho: f64 = 0.5,
        basis: BasisSpec = BasisSpec::Pair { r: 1 },
        samples: u64 = 100_000,
    }
);

run_config!(
    /// `test-function`: Dirichlet value of the scale-`l` test function.
    TestFunctionConfig, "test-function" {
        d: usize = 2,
        k: usize = 2,
        eps: f64 = 0.0,
        rho: f64 = 0.9,
        l: i64 = 2,
        samples: u64 = 100_000,
    }
);

run_config!(
    /// `green-kubo`: correlation estimate of the diffusion matrix.
    GreenKuboConfig, "green-kubo" {
        d: usize = 2,
        k: usize = 1,
        eps: f64 = 0.0,
        rho: f64 = 0.5,
        n: usize = 64,
        times: Vec<f64> = vec![1.0],
        replicas: u64 = 128,
    }
);

run_config!(
    /// `hydro`: replica-averaged profiles against the hydrodynamic
    /// equation.
    HydroConfig, "hydro" {
        d: usize = 2,
        k: usize = 1,
        eps: f64 = 0.0,
        n: usize = 64,
        bins: usize = 8,
        profile: ProfileSpec = ProfileSpec::Constant { rho: 0.5 },
        times: Vec<f64> = vec![0.05],
        replicas: u64 = 8,
        initial: InitialSpec = InitialSpec::Product,
        diffusion: DiffusionSpec = DiffusionSpec::Constant { value: 1.0 },
    }
);

run_config!(
    /// `bootstrap`: span of an empty-site instance file.
    BootstrapConfig, "bootstrap" {
        input: Option<String> = None,
        k: usize = 2,
    }
);

run_config!(
    /// `nongradient witness`: torus configuration with nonzero current
    /// sum.
    WitnessConfig, "nongradient witness" {
        k: usize = 2,
        d: usize = 2,
        n: usize = 16,
    }
);

run_config!(
    /// `nongradient current-sum`: current sums of a snapshot.
    CurrentSumConfig, "nongradient current-sum" {
        input: Option<String> = None,
    }
);

run_config!(
    /// `validate-move`: constraint legality of a move file.
    ValidateMoveConfig, "validate-move" {
        input: Option<String> = None,
    }
);

run_config!(
    /// `validate`: snapshot round-trip checks.
    ValidateConfig, "validate" {
        inputs: Vec<String> = Vec::new(),
    }
);

/// Local function basis descriptor: the zero function, or all monomials
/// of at most two sites within radius `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Empty,
    Pair { r: i64 },
}

impl BasisSpec {
    pub fn build(&self, d: usize) -> LocalFunctionBasis {
        match self {
            BasisSpec::Empty => LocalFunctionBasis::empty(d),
            BasisSpec::Pair { r } => LocalFunctionBasis::pair_monomials(d, *r),
        }
    }
}

impl FromStr for BasisSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "empty" {
            return Ok(BasisSpec::Empty);
        }
        if let Some(r) = s.strip_prefix("pair:") {
            let r: i64 = r.parse().map_err(|_| format!("bad pair radius {r:?}"))?;
            if r < 0 {
                return Err("pair radius must be >= 0".into());
            }
            return Ok(BasisSpec::Pair { r });
        }
        Err(format!("unknown basis {s:?}; expected `empty` or `pair:<r>`"))
    }
}

/// Initial macroscopic density profile on the unit torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        rho: f64,
    },
    /// `mean + amplitude cos(2 pi u_axis)`, sampled on a grid of the
    /// given resolution per axis.
    Cosine {
        mean: f64,
        amplitude: f64,
        #[serde(default)]
        axis: usize,
        #[serde(default = "default_profile_resolution")]
        resolution: usize,
    },
}

fn default_profile_resolution() -> usize {
    256
}

impl ProfileSpec {
    pub fn build(&self, d: usize) -> KaResult<DensityProfile> {
        match self {
            ProfileSpec::Constant { rho } => DensityProfile::constant(d, *rho),
            ProfileSpec::Cosine {
                mean,
                amplitude,
                axis,
                resolution,
            } => {
                if *axis >= d {
                    return Err(KaError::Params(format!(
                        "profile axis {axis} out of range for d = {d}"
                    )));
                }
                let (m, a, ax) = (*mean, *amplitude, *axis);
                DensityProfile::from_fn(d, *resolution, |u| {
                    m + a * (2.0 * std::f64::consts::PI * u[ax]).cos()
                })
            }
        }
    }

    /// Spatial mean, used as the nominal density of the model parameters.
    pub fn mean(&self) -> f64 {
        match self {
            ProfileSpec::Constant { rho } => *rho,
            ProfileSpec::Cosine { mean, .. } => *mean,
        }
    }
}

/// Diffusion coefficient of the reference hydrodynamic equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant {
        value: f64,
    },
    /// Values of D at equally spaced densities spanning [0, 1].
    Table {
        values: Vec<f64>,
    },
}

impl DiffusionSpec {
    pub fn build(&self) -> KaResult<DiffusionTable> {
        match self {
            DiffusionSpec::Constant { value } => DiffusionTable::constant(*value),
            DiffusionSpec::Table { values } => DiffusionTable::new(values.clone()),
        }
    }
}

/// How replica initial states are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Product,
    Blocked,
}

impl From<InitialSpec> for InitialCondition {
    fn from(s: InitialSpec) -> InitialCondition {
        match s {
            InitialSpec::Product => InitialCondition::Product,
            InitialSpec::Blocked => InitialCondition::Blocked,
        }
    }
}

/// Loads a configuration file (or the defaults when no file is given)
/// and checks its subcommand echo.
pub fn load<T: RunConfig>(path: Option<&PathBuf>) -> Result<T, String> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let config: T = serde_json::from_str(&text)
        .map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    if let Some(name) = config.named_subcommand() {
        if name != T::SUBCOMMAND {
            return Err(format!(
                "config {} is for subcommand {name:?}, not {:?}",
                path.display(),
                T::SUBCOMMAND
            ));
        }
    }
    Ok(config)
}

/// Command-line override of a config-file field.
pub fn override_with<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
