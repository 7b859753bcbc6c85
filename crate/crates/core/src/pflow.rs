//! Stochastic particle flow filter with Gaussian prior and likelihood.
//!
//! Particles move in pseudo-time `lambda` from 0 to 1 under
//!
//! ```text
//! dx = f(x, lambda) dlambda + L dW,    L L^T = Q(lambda)
//! ```
//!
//! For a Gaussian prior `N(mu, S1)` and Gaussian likelihood `N(m, S2)` the
//! drift is
//!
//! ```text
//! f(x, lambda) = -[S1^-1 + lambda S2^-1]^-1 S2^-1 (x - m)
//!              = -S1 (S2 + lambda S1)^-1 (x - m)
//! ```
//!
//! The second form is the one evaluated: it needs no inverse of `S1`, so
//! singular sample covariances (a collapsed ensemble) are handled without
//! jitter. The normalizer of `g h^lambda` never appears because `f` depends
//! only on derivatives of the log-density.
//!
//! With `H = I` the diffusion covariance is
//!
//! ```text
//! Q = B R^-1 B,    B = P - lambda P (R + lambda P)^-1 P
//! ```
//!
//! symmetrized before use. Within one pseudo-time step all particles share
//! the same linear map, so the whole ensemble (stored as a `d x N` matrix,
//! one column per particle) is updated with a couple of matrix products.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::GaussianBelief;
use crate::numerics::{cholesky_psd, inverse, min_eigenvalue, sym_inverse, symmetrize};
use crate::rng::{self, Stream};
use crate::statespace::{step_state, Observation, State, SystemMatrices, YIELD_FLOOR};

/// Starting jitter for the Cholesky factor of `Q`.
const DIFFUSION_JITTER: f64 = 1e-12;

/// Particle positions, one column per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: DMatrix<f64>,
}

impl ParticleEnsemble {
    pub fn new(particles: DMatrix<f64>) -> Self {
        Self { particles }
    }

    pub fn from_points(points: &[DVector<f64>]) -> Self {
        Self {
            particles: DMatrix::from_columns(points),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.particles.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.particles.column_mean()
    }

    /// Sample mean and unbiased sample covariance.
    pub fn summary(&self) -> Result<GaussianBelief> {
        let n = self.len();
        if n < 2 {
            return Err(Error::config(
                "pff.particles",
                format!("need at least 2 particles to estimate a covariance, got {n}"),
            ));
        }
        let mean = self.mean();
        let mut centered = self.particles.clone();
        for mut c in centered.column_iter_mut() {
            c -= &mean;
        }
        let cov = symmetrize(&(&centered * centered.transpose() / (n as f64 - 1.0)))?;
        Ok(GaussianBelief { mean, cov })
    }

    /// Largest Euclidean distance any particle moved relative to `other`.
    pub fn max_displacement(&self, other: &ParticleEnsemble) -> f64 {
        (&self.particles - &other.particles)
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    fn clamp_yield(&mut self) {
        for v in self.particles.row_mut(0).iter_mut() {
            *v = v.max(YIELD_FLOOR);
        }
    }
}

/// Gaussian prior `g(x)` fitted to the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub mu: DVector<f64>,
    pub sigma1: DMatrix<f64>,
}

/// Gaussian likelihood `h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSpec {
    pub m: DVector<f64>,
    pub sigma2: DMatrix<f64>,
}

impl LikelihoodSpec {
    fn validate(&self) -> Result<()> {
        if self.sigma2.shape() != (self.m.len(), self.m.len()) {
            return Err(Error::Dimension(
                "likelihood covariance does not match its mean".into(),
            ));
        }
        // must be positive definite
        sym_inverse(&self.sigma2).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Forward Euler.
    Explicit,
    /// Backward Euler, solved in closed form.
    #[default]
    Implicit,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "implicit" => Ok(Scheme::Implicit),
            other => Err(format!(
                "unknown scheme `{other}` (expected explicit|implicit)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub n_particles: usize,
    pub d_lambda: f64,
    pub scheme: Scheme,
    pub diffusion: bool,
    /// Likelihood covariance is `sigma2_scale * V^2` in [`pff_run`].
    pub sigma2_scale: f64,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            d_lambda: 0.01,
            scheme: Scheme::Implicit,
            diffusion: true,
            sigma2_scale: 4.0,
            seed: 0,
        }
    }
}

impl FlowConfig {
    /// Validates the config and returns the number of pseudo-time steps.
    pub fn validate(&self) -> Result<usize> {
        if self.n_particles < 2 {
            return Err(Error::config(
                "pff.particles",
                format!("must be >= 2, got {}", self.n_particles),
            ));
        }
        if !(self.d_lambda > 0.0 && self.d_lambda <= 1.0) {
            return Err(Error::config(
                "pff.dlambda",
                format!("must lie in (0, 1], got {}", self.d_lambda),
            ));
        }
        let steps = (1.0 / self.d_lambda).round();
        if (steps * self.d_lambda - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "pff.dlambda",
                format!("1/dlambda must be an integer, got 1/{}", self.d_lambda),
            ));
        }
        if !(self.sigma2_scale > 0.0 && self.sigma2_scale.is_finite()) {
            return Err(Error::config("pff.sigma2_scale", "must be finite and > 0"));
        }
        Ok(steps as usize)
    }
}

/// Fits `N(mu, S1)` to the ensemble.
pub fn estimate_prior(ensemble: &ParticleEnsemble) -> Result<PriorSpec> {
    let summary = ensemble.summary()?;
    let mut sigma1 = summary.cov;
    let lowest = min_eigenvalue(&sigma1);
    if lowest < 0.0 {
        let d = sigma1.nrows();
        sigma1 += DMatrix::identity(d, d) * (-lowest);
    }
    Ok(PriorSpec {
        mu: summary.mean,
        sigma1,
    })
}

/// `A(lambda) = S1 (S2 + lambda S1)^-1`, so that `f = -A (x - m)`.
pub fn flow_matrix(lambda: f64, prior: &PriorSpec, lik: &LikelihoodSpec) -> Result<DMatrix<f64>> {
    let inner = symmetrize(&(&lik.sigma2 + &prior.sigma1 * lambda))?;
    Ok(&prior.sigma1 * sym_inverse(&inner)?)
}

/// `f(x, lambda) = -[S1^-1 + lambda S2^-1]^-1 S2^-1 (x - m)`.
pub fn drift(
    x: &DVector<f64>,
    lambda: f64,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
) -> Result<DVector<f64>> {
    let f = -(flow_matrix(lambda, prior, lik)? * (x - &lik.m));
    if f.iter().all(|v| v.is_finite()) {
        Ok(f)
    } else {
        Err(Error::Numerical("drift is not finite".into()))
    }
}

/// Diffusion covariance for observation covariance `r` and prior covariance `p`.
pub fn diffusion_cov(lambda: f64, p: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inner = symmetrize(&(r + p * lambda))?;
    let b = p - p * sym_inverse(&inner)? * p * lambda;
    symmetrize(&(&b * sym_inverse(r)? * &b))
}

fn subtract_from_columns(x: &mut DMatrix<f64>, v: &DVector<f64>) {
    for mut c in x.column_iter_mut() {
        c -= v;
    }
}

fn add_to_columns(x: &mut DMatrix<f64>, v: &DVector<f64>) {
    for mut c in x.column_iter_mut() {
        c += v;
    }
}

/// Advances every particle from `lambda_next - d_lambda` to `lambda_next`.
///
/// Diffusion increments are drawn as one `d x N` block, column by column,
/// before any particle moves.
#[allow(clippy::too_many_arguments)]
pub fn flow_step<R: Rng + ?Sized>(
    ensemble: &ParticleEnsemble,
    lambda_next: f64,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    p: &DMatrix<f64>,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    if !(lambda_next > 0.0 && lambda_next <= 1.0 + 1e-12) {
        return Err(Error::Numerical(format!(
            "lambda_next = {lambda_next} is outside (0, 1]"
        )));
    }
    let d = ensemble.dim();
    let n = ensemble.len();
    let dl = cfg.d_lambda;
    let lambda_prev = (lambda_next - dl).max(0.0);

    let mut centered = ensemble.particles.clone();
    subtract_from_columns(&mut centered, &lik.m);

    let noise = if cfg.diffusion {
        let q = diffusion_cov(lambda_prev, p, &lik.sigma2)?;
        let l = cholesky_psd(&q, DIFFUSION_JITTER)?;
        let dw = rng::standard_normal_matrix(rng, d, n) * dl.sqrt();
        Some(l * dw)
    } else {
        None
    };

    let mut next = match cfg.scheme {
        Scheme::Explicit => {
            let a = flow_matrix(lambda_prev, prior, lik)?;
            let mut moved = &centered - (&a * &centered) * dl;
            if let Some(noise) = &noise {
                moved += noise;
            }
            moved
        }
        Scheme::Implicit => {
            let a = flow_matrix(lambda_next, prior, lik)?;
            let resolvent = inverse(&(DMatrix::identity(d, d) + a * dl))
                .map_err(|_| Error::Numerical("implicit flow resolvent is singular".into()))?;
            match &noise {
                Some(noise) => resolvent * (centered + noise),
                None => resolvent * centered,
            }
        }
    };
    add_to_columns(&mut next, &lik.m);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "particle positions became non-finite".into(),
        ));
    }
    Ok(ParticleEnsemble::new(next))
}

/// Fits the prior, then flows over the grid `d_lambda, 2 d_lambda, ..., 1`.
pub fn flow_sweep<R: Rng + ?Sized>(
    ensemble: &ParticleEnsemble,
    lik: &LikelihoodSpec,
    p: &DMatrix<f64>,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let steps = cfg.validate()?;
    lik.validate()?;
    if lik.m.len() != ensemble.dim() || p.shape() != (ensemble.dim(), ensemble.dim()) {
        return Err(Error::Dimension(
            "flow inputs disagree on the state dimension".into(),
        ));
    }
    let prior = estimate_prior(ensemble)?;
    let mut current = ensemble.clone();
    for k in 1..=steps {
        let lambda = k as f64 / steps as f64;
        current = flow_step(&current, lambda, &prior, lik, p, cfg, rng)?;
    }
    Ok(current)
}

/// One assimilation: [`flow_sweep`], then the yield row is floored at
/// [`YIELD_FLOOR`].
pub fn pff_assimilate<R: Rng + ?Sized>(
    ensemble: &ParticleEnsemble,
    lik: &LikelihoodSpec,
    p: &DMatrix<f64>,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let mut out = flow_sweep(ensemble, lik, p, cfg, rng)?;
    out.clamp_yield();
    Ok(out)
}

/// Ensemble summaries before and after assimilating one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PffRecord {
    pub prior: GaussianBelief,
    pub posterior: GaussianBelief,
    /// Largest distance a particle moved during the flow, clamp included.
    pub max_flow_displacement: f64,
}

/// `N` draws from `N(y0, V^2)` using substream `(seed, PffInit, 0)`.
pub fn initial_ensemble(
    m: &SystemMatrices,
    first: &Observation,
    cfg: &FlowConfig,
) -> ParticleEnsemble {
    let mut rng = rng::substream(cfg.seed, Stream::PffInit, 0);
    let mut particles = &m.v * rng::standard_normal_matrix(&mut rng, 2, cfg.n_particles);
    add_to_columns(&mut particles, &first.to_vector());
    ParticleEnsemble::new(particles)
}

/// Runs the flow filter over a series.
///
/// Per observation `n`: particles go through the plant with noise from
/// `(seed, PffPropagate, n)`; the diffusion prior covariance is
/// `Phi P(+) Phi^T + X CC^T` from the previous ensemble posterior; the
/// likelihood is `N(y_n, sigma2_scale V^2)`; the flow uses `(seed,
/// PffDiffusion, n)`.
pub fn pff_run(
    m: &SystemMatrices,
    observations: &[Observation],
    cfg: &FlowConfig,
) -> Result<Vec<PffRecord>> {
    cfg.validate()?;
    let first = observations
        .first()
        .ok_or_else(|| Error::config("observations", "at least one observation is required"))?;
    let sigma2 = &m.v2 * cfg.sigma2_scale;

    let mut ensemble = initial_ensemble(m, first, cfg);
    let mut posterior = ensemble.summary()?;
    let mut records = Vec::with_capacity(observations.len());

    for (n, y) in observations.iter().enumerate() {
        let step = || -> Result<(ParticleEnsemble, PffRecord)> {
            let mut prop_rng = rng::substream(cfg.seed, Stream::PffPropagate, n as u64);
            let propagated: Vec<DVector<f64>> = ensemble
                .particles
                .column_iter()
                .map(|c| {
                    let w = rng::standard_normals(&mut prop_rng, 2);
                    step_state(m, &State::new(c[0], c[1]), &w).to_vector()
                })
                .collect();
            let propagated = ParticleEnsemble::from_points(&propagated);

            let level = m.noise_level(posterior.mean[0], YIELD_FLOOR);
            let p_prior =
                symmetrize(&(&m.phi * &posterior.cov * m.phi.transpose() + &m.cct * level))?;
            let lik = LikelihoodSpec {
                m: y.to_vector(),
                sigma2: sigma2.clone(),
            };
            let mut flow_rng = rng::substream(cfg.seed, Stream::PffDiffusion, n as u64);
            let assimilated = pff_assimilate(&propagated, &lik, &p_prior, cfg, &mut flow_rng)?;
            let record = PffRecord {
                prior: propagated.summary()?,
                posterior: assimilated.summary()?,
                max_flow_displacement: assimilated.max_displacement(&propagated),
            };
            Ok((assimilated, record))
        };
        let (next, record) = step().map_err(Error::at_step(n))?;
        ensemble = next;
        posterior = record.posterior.clone();
        records.push(record);
    }
    Ok(records)
}
