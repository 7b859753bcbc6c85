//! Dividend-yield / real-return state-space model.
//!
//! State `Z = (X, dR)` evolves as
//!
//! ```text
//! Z_n = Phi Z_{n-1} + D + sqrt(X_{n-1}) C W_n
//! Y_n = H Z_n + V B_n
//! ```
//!
//! with `W_n`, `B_n` standard normal 2-vectors. Process noise is carried as
//! `CC^T` rather than `C`: the entries of `CC^T` are real polynomials in the
//! parameters even when `1 - rho^2 < 0`, so positive-semidefiniteness of `CC^T`
//! is the validity test, and sampling uses its Cholesky factor.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky_psd, is_psd};
use crate::rng::{self, Stream};

/// Lower bound applied to the dividend yield wherever it must stay positive.
pub const YIELD_FLOOR: f64 = 1e-8;

/// Tolerance used when checking that `CC^T` is PSD.
const CCT_PSD_TOL: f64 = 1e-12;

/// Names of the eight model constants, in table order.
pub const PARAM_NAMES: [&str; 8] = ["k", "theta", "sigma", "mu", "a", "rho", "Q1", "Q2"];

/// What to do when `|rho| > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoPolicy {
    #[default]
    Reject,
    Clamp,
}

impl FromStr for RhoPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reject" => Ok(RhoPolicy::Reject),
            "clamp" => Ok(RhoPolicy::Clamp),
            other => Err(format!(
                "unknown rho policy `{other}` (expected reject|clamp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: f64,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub a: f64,
    pub rho: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Validated parameters plus any warnings raised while loading them.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedParams {
    pub params: ModelParams,
    pub warnings: Vec<String>,
}

/// Determinant of `CC^T`, which factors as `c11^2 a^2 (1 - rho^2)`.
pub fn cct_determinant(p: &ModelParams) -> f64 {
    let c11 = p.sigma / (1.0 + p.k);
    c11 * c11 * p.a * p.a * (1.0 - p.rho * p.rho)
}

impl ModelParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in PARAM_NAMES.iter().zip(self.values()) {
            if !v.is_finite() {
                return Err(Error::Param(format!("{name} = {v} is not finite")));
            }
        }
        if 1.0 + self.k == 0.0 {
            return Err(Error::Param("k = -1 makes 1 + k vanish".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Param(format!("sigma = {} must be > 0", self.sigma)));
        }
        if self.a < 0.0 {
            return Err(Error::Param(format!("a = {} must be >= 0", self.a)));
        }
        Ok(())
    }

    fn values(&self) -> [f64; 8] {
        [
            self.k, self.theta, self.sigma, self.mu, self.a, self.rho, self.q1, self.q2,
        ]
    }
}

/// Builds validated parameters from a `name -> value` map.
///
/// `|rho| > 1` is rejected under [`RhoPolicy::Reject`]; under
/// [`RhoPolicy::Clamp`] it is replaced by `sign(rho)` and a warning is
/// recorded.
pub fn load_params(raw: &BTreeMap<String, f64>, policy: RhoPolicy) -> Result<LoadedParams> {
    let get = |name: &str| {
        raw.get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("params.{name}"), "missing model parameter"))
    };
    let mut params = ModelParams {
        k: get("k")?,
        theta: get("theta")?,
        sigma: get("sigma")?,
        mu: get("mu")?,
        a: get("a")?,
        rho: get("rho")?,
        q1: get("Q1")?,
        q2: get("Q2")?,
    };
    params.validate()?;

    let mut warnings = Vec::new();
    if params.rho.abs() > 1.0 {
        match policy {
            RhoPolicy::Reject => {
                return Err(Error::Param(format!(
                    "rho = {} has |rho| > 1, so sqrt(1 - rho^2) is imaginary and the process-noise \
                     matrix CC^T is indefinite (det = c11^2 a^2 (1 - rho^2) = {:.6e} < 0); \
                     use --rho-policy clamp or supply |rho| <= 1",
                    params.rho,
                    cct_determinant(&params)
                )));
            }
            RhoPolicy::Clamp => {
                let clamped = params.rho.signum();
                warnings.push(format!(
                    "rho = {} has |rho| > 1; clamped to {} so that CC^T is positive semidefinite",
                    params.rho, clamped
                ));
                params.rho = clamped;
            }
        }
    }
    // CC^T must be PSD for whatever survives the rho policy.
    build_matrices(&params)?;
    Ok(LoadedParams { params, warnings })
}

/// How the plant-noise covariance is scaled at each step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseScaling {
    /// `X_{n-1} CC^T`, the square-root (CIR-like) model.
    #[default]
    StateDependent,
    /// `level * CC^T` regardless of the state; `Fixed(1.0)` is the linear
    /// Gaussian variant, `Fixed(0.0)` switches plant noise off.
    Fixed(f64),
}

/// Model matrices derived from [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub phi: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub cct: DMatrix<f64>,
    /// Lower Cholesky factor of `cct`.
    pub lc: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    pub noise: NoiseScaling,
}

pub fn build_matrices(p: &ModelParams) -> Result<SystemMatrices> {
    let denom = 1.0 + p.k;
    let phi = DMatrix::from_row_slice(2, 2, &[1.0 / denom, 0.0, p.mu / denom, 0.0]);
    let d1 = p.k * p.theta / denom;
    let drift = DVector::from_vec(vec![d1, p.mu * d1]);

    let c11 = p.sigma / denom;
    let c21 = p.mu * p.sigma / denom + p.a * p.rho;
    let cct = DMatrix::from_row_slice(
        2,
        2,
        &[
            c11 * c11,
            c11 * c21,
            c11 * c21,
            c21 * c21 + p.a * p.a * (1.0 - p.rho * p.rho),
        ],
    );
    if !is_psd(&cct, CCT_PSD_TOL) {
        return Err(Error::Param(format!(
            "process-noise matrix CC^T is indefinite (rho = {}, det = {:.6e})",
            p.rho,
            cct_determinant(p)
        )));
    }
    let lc = cholesky_psd(&cct, 0.0)?;
    let v = DMatrix::from_diagonal(&DVector::from_vec(vec![p.q1, p.q2]));
    let v2 = DMatrix::from_diagonal(&DVector::from_vec(vec![p.q1 * p.q1, p.q2 * p.q2]));
    Ok(SystemMatrices {
        phi,
        drift,
        cct,
        lc,
        h: DMatrix::identity(2, 2),
        v,
        v2,
        noise: NoiseScaling::StateDependent,
    })
}

impl SystemMatrices {
    pub fn with_noise(mut self, noise: NoiseScaling) -> Self {
        self.noise = noise;
        self
    }

    /// Multiplier on `CC^T` given the previous yield, floored at `floor`.
    pub fn noise_level(&self, previous_yield: f64, floor: f64) -> f64 {
        match self.noise {
            NoiseScaling::StateDependent => previous_yield.max(floor),
            NoiseScaling::Fixed(level) => level,
        }
    }

    /// Noise-free part of the transition, `Phi z + D`.
    pub fn transition_mean(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.phi * z + &self.drift
    }
}

/// Hidden state: dividend yield `X` and real return `dR`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub dividend_yield: f64,
    pub real_return: f64,
}

/// One noisy reading of the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dividend_yield: f64,
    pub real_return: f64,
}

macro_rules! pair_conversions {
    ($t:ty) => {
        impl $t {
            pub fn new(dividend_yield: f64, real_return: f64) -> Self {
                Self {
                    dividend_yield,
                    real_return,
                }
            }

            pub fn to_vector(&self) -> DVector<f64> {
                DVector::from_vec(vec![self.dividend_yield, self.real_return])
            }

            pub fn from_vector(v: &DVector<f64>) -> Self {
                Self::new(v[0], v[1])
            }
        }
    };
}

pair_conversions!(State);
pair_conversions!(Observation);

/// Advances the true state one period.
///
/// The returned yield is clamped to at least [`YIELD_FLOOR`].
pub fn step_state(m: &SystemMatrices, z_prev: &State, noise: &DVector<f64>) -> State {
    let zp = z_prev.to_vector();
    let scale = m.noise_level(z_prev.dividend_yield, 0.0).max(0.0).sqrt();
    let mut z = m.transition_mean(&zp);
    if scale > 0.0 {
        z += &m.lc * noise * scale;
    }
    let mut s = State::from_vector(&z);
    s.dividend_yield = s.dividend_yield.max(YIELD_FLOOR);
    s
}

/// `Y = H z + V noise`.
pub fn observe(m: &SystemMatrices, z: &State, noise: &DVector<f64>) -> Observation {
    Observation::from_vector(&(&m.h * z.to_vector() + &m.v * noise))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub state: State,
    pub observation: Observation,
}

/// Simulated series: contiguous records starting at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.records.iter().map(|r| r.observation).collect()
    }

    pub fn states(&self) -> Vec<State> {
        self.records.iter().map(|r| r.state).collect()
    }
}

/// Runs the model forward from the pre-sample state `z0`.
///
/// Record `n` draws its plant noise from substream `(seed, SimProcess, n)`
/// and its measurement noise from `(seed, SimObservation, n)`.
pub fn simulate(m: &SystemMatrices, z0: &State, n_steps: usize, seed: u64) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::config("simulation.n_steps", "must be >= 1"));
    }
    if !z0.dividend_yield.is_finite() || z0.dividend_yield < 0.0 || !z0.real_return.is_finite() {
        return Err(Error::config(
            "simulation.z0",
            "yield must be >= 0 and values finite",
        ));
    }
    let mut records = Vec::with_capacity(n_steps);
    let mut z = *z0;
    for index in 0..n_steps {
        let w = rng::standard_normals(
            &mut rng::substream(seed, Stream::SimProcess, index as u64),
            2,
        );
        let b = rng::standard_normals(
            &mut rng::substream(seed, Stream::SimObservation, index as u64),
            2,
        );
        z = step_state(m, &z, &w);
        let observation = observe(m, &z, &b);
        records.push(TrajectoryRecord {
            index,
            state: z,
            observation,
        });
    }
    Ok(Trajectory { records })
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} theta={} sigma={} mu={} a={} rho={} Q1={} Q2={}",
            self.k, self.theta, self.sigma, self.mu, self.a, self.rho, self.q1, self.q2
        )
    }
}

/// Raw parameter map for the published table (note `rho = 1.6309`).
pub fn tabulated_raw() -> BTreeMap<String, f64> {
    PARAM_NAMES
        .iter()
        .zip([
            2.0714, 2.0451, 0.3003, 0.1907, 0.9197, 1.6309, 0.0310, -0.8857,
        ])
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// The published table with `rho = 0.6309`, a sign/typo substitute that
/// makes `CC^T` positive definite. Not a published value.
pub fn substitute_raw() -> BTreeMap<String, f64> {
    let mut raw = tabulated_raw();
    raw.insert("rho".into(), 0.6309);
    raw
}
