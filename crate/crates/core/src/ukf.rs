//! Unscented Kalman filter.
//!
//! Sigma points are `mean`, then `mean + s_j L e_j` and `mean - s_j L e_j`
//! for `i = 0..Nx` with `j = i mod d`, where `L` is the Cholesky factor of
//! the covariance. With `Nx = d` each column is used once and
//! `s_j^2 = Nx / (1 - W0)`. When `Nx > d` the columns are cycled and each
//! column's scale is divided by the number of times it appears, so the set
//! still reproduces the covariance exactly.
//!
//! Two prediction modes:
//!
//! * additive (default): sigma points go through the noise-free transition,
//!   `X CC^T` is added to the predicted covariance, and a fresh sigma set is
//!   drawn from the prediction before the observation step. On this model
//!   the result equals the linear Kalman filter.
//! * noise injection: every sigma point is pushed through the full plant,
//!   each with its own noise draw, and the propagated cloud is used directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kalman::{GaussianBelief, COV_PSD_TOL};
use crate::numerics::{cholesky_psd, is_psd, min_eigenvalue, sym_inverse, symmetrize};
use crate::rng::{self, Stream};
use crate::statespace::{observe, step_state, Observation, State, SystemMatrices, YIELD_FLOOR};

/// Starting jitter handed to [`cholesky_psd`] when factoring a sigma cloud.
const SIGMA_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfConfig {
    /// Weight on the central sigma point, in `(-1, 1)`.
    pub w0: f64,
    /// `Nx`; the set has `2 Nx + 1` points.
    pub sigma_count: usize,
    pub noise_injection: bool,
    pub seed: u64,
    /// Initial covariance is `p0_jitter * I`.
    pub p0_jitter: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            w0: 1.0 / 3.0,
            sigma_count: 2,
            noise_injection: false,
            seed: 0,
            p0_jitter: 1e-6,
        }
    }
}

impl UkfConfig {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if !(self.w0 > -1.0 && self.w0 < 1.0) {
            return Err(Error::config(
                "ukf.w0",
                format!("must lie in (-1, 1), got {}", self.w0),
            ));
        }
        if self.sigma_count < state_dim {
            return Err(Error::config(
                "ukf.sigma_count",
                format!(
                    "must be at least the state dimension {state_dim}, got {}",
                    self.sigma_count
                ),
            ));
        }
        if !(self.p0_jitter >= 0.0 && self.p0_jitter.is_finite()) {
            return Err(Error::config("ukf.p0_jitter", "must be finite and >= 0"));
        }
        if self.p0_jitter == 0.0 && !self.noise_injection {
            return Err(Error::config(
                "ukf.p0_jitter",
                "a zero initial covariance is only allowed with noise injection",
            ));
        }
        Ok(())
    }
}

/// Weighted sigma points.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub nx: usize,
}

pub fn generate_sigma_points(belief: &GaussianBelief, cfg: &UkfConfig) -> Result<SigmaSet> {
    let d = belief.dim();
    cfg.validate(d)?;
    let nx = cfg.sigma_count;
    let l = cholesky_psd(&belief.cov, SIGMA_JITTER)?;

    let spread = 1.0 - cfg.w0;
    let columns: Vec<DVector<f64>> = (0..d)
        .map(|j| {
            let uses = nx / d + usize::from(j < nx % d);
            l.column(j) * (nx as f64 / (uses as f64 * spread)).sqrt()
        })
        .collect();

    let mut points = Vec::with_capacity(2 * nx + 1);
    points.push(belief.mean.clone());
    points.extend((0..nx).map(|i| &belief.mean + &columns[i % d]));
    points.extend((0..nx).map(|i| &belief.mean - &columns[i % d]));

    let mut weights = vec![spread / (2 * nx) as f64; 2 * nx + 1];
    weights[0] = cfg.w0;
    Ok(SigmaSet {
        points,
        weights,
        nx,
    })
}

fn check_weights(points: usize, weights: &[f64]) -> Result<()> {
    if points == 0 || points != weights.len() {
        return Err(Error::Dimension(format!(
            "unscented transform: {points} points but {} weights",
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "sigma weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn weighted_mean(points: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut mean = DVector::zeros(points[0].len());
    for (p, w) in points.iter().zip(weights) {
        mean.axpy(*w, p, 1.0);
    }
    mean
}

fn weighted_cross(
    a: &[DVector<f64>],
    a_mean: &DVector<f64>,
    b: &[DVector<f64>],
    b_mean: &DVector<f64>,
    weights: &[f64],
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a_mean.len(), b_mean.len());
    for ((x, y), w) in a.iter().zip(b).zip(weights) {
        out.ger(*w, &(x - a_mean), &(y - b_mean), 1.0);
    }
    out
}

/// Weighted mean and weighted covariance of a point set.
pub fn unscented_transform(points: &[DVector<f64>], weights: &[f64]) -> Result<GaussianBelief> {
    check_weights(points.len(), weights)?;
    let mean = weighted_mean(points, weights);
    let cov = symmetrize(&weighted_cross(points, &mean, points, &mean, weights))?;
    Ok(GaussianBelief { mean, cov })
}

/// Everything one UKF step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfStep {
    pub prior: GaussianBelief,
    /// Predicted observation mean and innovation covariance (including `V^2`).
    pub predicted_observation: GaussianBelief,
    pub gain: DMatrix<f64>,
    pub posterior: GaussianBelief,
}

pub fn ukf_step<R: Rng + ?Sized>(
    m: &SystemMatrices,
    belief: &GaussianBelief,
    y: &Observation,
    cfg: &UkfConfig,
    rng: &mut R,
) -> Result<UkfStep> {
    let sigma = generate_sigma_points(belief, cfg)?;
    let zero = DVector::zeros(2);

    let propagated: Vec<DVector<f64>> = sigma
        .points
        .iter()
        .map(|p| {
            let noise = if cfg.noise_injection {
                rng::standard_normals(rng, 2)
            } else {
                zero.clone()
            };
            step_state(m, &State::from_vector(p), &noise).to_vector()
        })
        .collect();
    let mut prior = unscented_transform(&propagated, &sigma.weights)?;

    let predicted_points = if cfg.noise_injection {
        propagated
    } else {
        let level = m.noise_level(belief.mean[0], YIELD_FLOOR);
        prior.cov = symmetrize(&(&prior.cov + &m.cct * level))?;
        generate_sigma_points(&prior, cfg)?.points
    };

    let obs_points: Vec<DVector<f64>> = predicted_points
        .iter()
        .map(|p| observe(m, &State::from_vector(p), &zero).to_vector())
        .collect();
    let state_mean = weighted_mean(&predicted_points, &sigma.weights);
    let obs = unscented_transform(&obs_points, &sigma.weights)?;
    let innovation_cov = symmetrize(&(&obs.cov + &m.v2))?;
    let cross = weighted_cross(
        &predicted_points,
        &state_mean,
        &obs_points,
        &obs.mean,
        &sigma.weights,
    );

    let gain = cross * sym_inverse(&innovation_cov)?;
    let innovation = y.to_vector() - &obs.mean;
    let mean = &state_mean + &gain * innovation;
    let cov = symmetrize(&(&prior.cov - &gain * &innovation_cov * gain.transpose()))?;
    if !is_psd(&cov, COV_PSD_TOL) {
        return Err(Error::Numerical(format!(
            "UKF posterior covariance is not PSD (min eigenvalue {:e})",
            min_eigenvalue(&cov)
        )));
    }
    Ok(UkfStep {
        prior,
        predicted_observation: GaussianBelief::new(obs.mean, innovation_cov),
        gain,
        posterior: GaussianBelief { mean, cov },
    })
}

/// Initial belief: first observation, covariance `p0_jitter * I`.
pub fn default_init(first: &Observation, cfg: &UkfConfig) -> GaussianBelief {
    GaussianBelief::new(first.to_vector(), DMatrix::identity(2, 2) * cfg.p0_jitter)
}

pub fn ukf_run(
    m: &SystemMatrices,
    observations: &[Observation],
    cfg: &UkfConfig,
) -> Result<Vec<UkfStep>> {
    let first = observations
        .first()
        .ok_or_else(|| Error::config("observations", "at least one observation is required"))?;
    ukf_run_with_init(m, observations, cfg, default_init(first, cfg))
}

/// [`ukf_run`] from an explicit starting belief. Step `n` draws its
/// injected noise from substream `(seed, UkfInjection, n)`.
pub fn ukf_run_with_init(
    m: &SystemMatrices,
    observations: &[Observation],
    cfg: &UkfConfig,
    init: GaussianBelief,
) -> Result<Vec<UkfStep>> {
    cfg.validate(2)?;
    if observations.is_empty() {
        return Err(Error::config(
            "observations",
            "at least one observation is required",
        ));
    }
    init.validate()?;
    let mut belief = init;
    let mut steps = Vec::with_capacity(observations.len());
    for (n, y) in observations.iter().enumerate() {
        let mut rng = rng::substream(cfg.seed, Stream::UkfInjection, n as u64);
        let step = ukf_step(m, &belief, y, cfg, &mut rng).map_err(Error::at_step(n))?;
        belief = step.posterior.clone();
        steps.push(step);
    }
    Ok(steps)
}
