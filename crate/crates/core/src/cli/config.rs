//! JSON run configuration and its merge with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kalman::GaussianBelief;
use crate::pflow::{FlowConfig, Scheme};
use crate::statespace::{
    build_matrices, load_params, ModelParams, RhoPolicy, State, SystemMatrices,
};
use crate::ukf::UkfConfig;

pub const SEED_ENV: &str = "DRIFTBENCH_SEED";
pub const DEFAULT_STEPS: usize = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kf,
    Ukf,
    Pff,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Kf, FilterKind::Ukf, FilterKind::Pff];

    pub fn tag(self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Ukf => "ukf",
            FilterKind::Pff => "pff",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UkfSection {
    pub w0: Option<f64>,
    pub sigma_count: Option<usize>,
    pub noise_injection: Option<bool>,
    pub p0_jitter: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PffSection {
    pub particles: Option<usize>,
    pub dlambda: Option<f64>,
    pub scheme: Option<Scheme>,
    pub diffusion: Option<bool>,
    pub sigma2_scale: Option<f64>,
}

/// Starting belief for the linear filter. Either field may be given alone.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanSection {
    pub init_mean: Option<[f64; 2]>,
    pub init_cov: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub z0: Option<[f64; 2]>,
    pub n_steps: Option<usize>,
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Option<BTreeMap<String, f64>>,
    pub rho_policy: Option<RhoPolicy>,
    pub filter: Option<FilterKind>,
    #[serde(default)]
    pub ukf: UkfSection,
    #[serde(default)]
    pub pff: PffSection,
    #[serde(default)]
    pub kalman: KalmanSection,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub simulation: Option<SimulationSection>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub filter: Option<FilterKind>,
    pub w0: Option<f64>,
    pub sigma_count: Option<usize>,
    pub noise_injection: Option<bool>,
    pub particles: Option<usize>,
    pub dlambda: Option<f64>,
    pub scheme: Option<Scheme>,
    pub diffusion: Option<bool>,
    pub sigma2_scale: Option<f64>,
    pub rho_policy: Option<RhoPolicy>,
    pub z0: Option<[f64; 2]>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Simulation { z0: State, n_steps: usize },
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub params: ModelParams,
    pub warnings: Vec<String>,
    pub model: SystemMatrices,
    pub filter: FilterKind,
    pub ukf: UkfConfig,
    pub flow: FlowConfig,
    pub kalman_init: Option<GaussianBelief>,
    pub seed: u64,
    pub source: DataSource,
    pub out: PathBuf,
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => u64::from_str(raw.trim()).map(Some).map_err(|_| {
            Error::config(
                SEED_ENV,
                format!("`{raw}` is not an unsigned 64-bit integer"),
            )
        }),
        Err(_) => Ok(None),
    }
}

fn resolve_source(cfg: &RunConfig, ov: &Overrides) -> Result<DataSource> {
    let sim_flags = ov.z0.is_some() || ov.n_steps.is_some();
    if let Some(path) = &ov.input {
        if sim_flags {
            return Err(Error::config(
                "input",
                "--input cannot be combined with --z0/--n-steps",
            ));
        }
        return Ok(DataSource::File(path.clone()));
    }
    let sim = match (&cfg.input, &cfg.simulation) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "input",
                "config sets both `input` and `simulation`; choose one",
            ));
        }
        (Some(path), None) if !sim_flags => return Ok(DataSource::File(path.clone())),
        (Some(_), None) => {
            return Err(Error::config(
                "input",
                "config sets `input` but --z0/--n-steps ask for a simulation",
            ));
        }
        (None, sim) => sim.clone().unwrap_or_default(),
    };
    let z0 = ov.z0.or(sim.z0).ok_or_else(|| {
        Error::config(
            "simulation.z0",
            "no data source: give `input` or a simulation with `z0`",
        )
    })?;
    let n_steps = ov.n_steps.or(sim.n_steps).unwrap_or(DEFAULT_STEPS);
    if n_steps == 0 {
        return Err(Error::config("simulation.n_steps", "must be >= 1"));
    }
    Ok(DataSource::Simulation {
        z0: State::new(z0[0], z0[1]),
        n_steps,
    })
}

fn resolve_kalman_init(
    k: &KalmanSection,
    first_hint: Option<[f64; 2]>,
) -> Result<Option<GaussianBelief>> {
    let (mean, cov) = match (k.init_mean, k.init_cov) {
        (None, None) => return Ok(None),
        (mean, cov) => (mean.or(first_hint), cov),
    };
    let cov = cov.map(|c| DMatrix::from_row_slice(2, 2, &[c[0][0], c[0][1], c[1][0], c[1][1]]));
    match mean {
        Some(m) => {
            let belief = GaussianBelief::new(
                DVector::from_vec(m.to_vec()),
                cov.unwrap_or_else(|| DMatrix::zeros(2, 2)),
            );
            belief
                .validate()
                .map_err(|e| Error::config("kalman.init_cov", e.to_string()))?;
            Ok(Some(belief))
        }
        None => Err(Error::config(
            "kalman.init_mean",
            "init_cov without init_mean needs a simulated source (the mean defaults to z0)",
        )),
    }
}

impl Settings {
    pub fn resolve(cfg: &RunConfig, ov: &Overrides) -> Result<Settings> {
        let raw = cfg
            .params
            .as_ref()
            .ok_or_else(|| Error::config("params", "model parameters are required"))?;
        let policy = ov.rho_policy.or(cfg.rho_policy).unwrap_or_default();
        let loaded = load_params(raw, policy)?;
        let model = build_matrices(&loaded.params)?;

        let seed = match ov.seed.or(cfg.seed) {
            Some(s) => s,
            None => seed_from_env()?.unwrap_or(0),
        };

        let defaults = UkfConfig::default();
        let ukf = UkfConfig {
            w0: ov.w0.or(cfg.ukf.w0).unwrap_or(defaults.w0),
            sigma_count: ov
                .sigma_count
                .or(cfg.ukf.sigma_count)
                .unwrap_or(defaults.sigma_count),
            noise_injection: ov
                .noise_injection
                .or(cfg.ukf.noise_injection)
                .unwrap_or(defaults.noise_injection),
            seed,
            p0_jitter: cfg.ukf.p0_jitter.unwrap_or(defaults.p0_jitter),
        };
        ukf.validate(2)?;

        let defaults = FlowConfig::default();
        let flow = FlowConfig {
            n_particles: ov
                .particles
                .or(cfg.pff.particles)
                .unwrap_or(defaults.n_particles),
            d_lambda: ov.dlambda.or(cfg.pff.dlambda).unwrap_or(defaults.d_lambda),
            scheme: ov.scheme.or(cfg.pff.scheme).unwrap_or(defaults.scheme),
            diffusion: ov
                .diffusion
                .or(cfg.pff.diffusion)
                .unwrap_or(defaults.diffusion),
            sigma2_scale: ov
                .sigma2_scale
                .or(cfg.pff.sigma2_scale)
                .unwrap_or(defaults.sigma2_scale),
            seed,
        };
        flow.validate()?;

        let source = resolve_source(cfg, ov)?;
        let z0_hint = match &source {
            DataSource::Simulation { z0, .. } => Some([z0.dividend_yield, z0.real_return]),
            DataSource::File(_) => None,
        };
        let kalman_init = resolve_kalman_init(&cfg.kalman, z0_hint)?;

        Ok(Settings {
            params: loaded.params,
            warnings: loaded.warnings,
            model,
            filter: ov.filter.or(cfg.filter).unwrap_or(FilterKind::Kf),
            ukf,
            flow,
            kalman_init,
            seed,
            source,
            out: ov
                .out
                .clone()
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}
