//! Linear Kalman filter.
//!
//! Two entry points share the same algebra:
//!
//! * [`generic_lkf_step`]: the textbook step for `x_k = Phi x_{k-1} + w`,
//!   `z_k = H x_k + v`, with arbitrary `Phi, Q, H, R`.
//! * [`kf_predict`] / [`kf_gain`] / [`kf_update`]: the yield/return
//!   specialization, where the plant noise is `X_{n-1} CC^T` and the
//!   transition carries the constant drift `D`.
//!
//! The posterior covariance uses the short form `(I - K H) P(-)`. The Joseph
//! form ([`joseph_covariance`]) is exposed so callers and tests can check the
//! two agree, which they do exactly when `K` is the optimal gain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, is_psd, sym_inverse, symmetrize};
use crate::statespace::{Observation, SystemMatrices, YIELD_FLOOR};

/// PSD tolerance applied to every covariance the filters hand back.
pub const COV_PSD_TOL: f64 = 1e-8;

/// Mean and covariance of a Gaussian state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    /// Point mass at `mean`.
    pub fn certain(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks finiteness, symmetry and positive-semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.cov.nrows() != d || self.cov.ncols() != d {
            return Err(Error::Dimension(format!(
                "belief mean has {d} components but covariance is {}x{}",
                self.cov.nrows(),
                self.cov.ncols()
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "belief mean has non-finite entries".into(),
            ));
        }
        ensure_finite(&self.cov, "belief covariance")?;
        if !crate::numerics::is_symmetric(&self.cov, 1e-10) {
            return Err(Error::Numerical(
                "belief covariance is not symmetric".into(),
            ));
        }
        if !is_psd(&self.cov, COV_PSD_TOL) {
            return Err(Error::Numerical(format!(
                "belief covariance is not PSD (min eigenvalue {:e})",
                crate::numerics::min_eigenvalue(&self.cov)
            )));
        }
        Ok(())
    }
}

/// Kalman gain, `d x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanGain(pub DMatrix<f64>);

impl KalmanGain {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Output of one generic filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct LkfStep {
    pub prior: GaussianBelief,
    pub gain: KalmanGain,
    pub posterior: GaussianBelief,
}

fn check_dims(
    phi: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    belief: &GaussianBelief,
    z: &DVector<f64>,
) -> Result<()> {
    let d = belief.dim();
    let m = z.len();
    let ok = phi.shape() == (d, d)
        && q.shape() == (d, d)
        && h.shape() == (m, d)
        && r.shape() == (m, m)
        && belief.cov.shape() == (d, d);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "inconsistent filter dimensions: state {d}, observation {m}, Phi {:?}, Q {:?}, H {:?}, R {:?}",
            phi.shape(),
            q.shape(),
            h.shape(),
            r.shape()
        )))
    }
}

/// `P H^T (H P H^T + R)^-1`.
fn optimal_gain(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<KalmanGain> {
    let s = symmetrize(&(h * p * h.transpose() + r))?;
    let s_inv = sym_inverse(&s)?;
    Ok(KalmanGain(p * h.transpose() * s_inv))
}

fn short_form_update(
    prior: &GaussianBelief,
    gain: &KalmanGain,
    h: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<GaussianBelief> {
    let k = gain.matrix();
    let d = prior.dim();
    let innovation = z - h * &prior.mean;
    let mean = &prior.mean + k * innovation;
    let cov = symmetrize(&((DMatrix::identity(d, d) - k * h) * &prior.cov))?;
    Ok(GaussianBelief { mean, cov })
}

/// One predict/update cycle of the textbook linear filter.
pub fn generic_lkf_step(
    phi: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    belief: &GaussianBelief,
    z: &DVector<f64>,
) -> Result<LkfStep> {
    check_dims(phi, q, h, r, belief, z)?;
    let prior = GaussianBelief {
        mean: phi * &belief.mean,
        cov: symmetrize(&(phi * &belief.cov * phi.transpose() + q))?,
    };
    let gain = optimal_gain(&prior.cov, h, r)?;
    let posterior = short_form_update(&prior, &gain, h, z)?;
    Ok(LkfStep {
        prior,
        gain,
        posterior,
    })
}

/// Joseph-form posterior covariance `(I-KH) P (I-KH)^T + K R K^T`.
pub fn joseph_covariance(
    prior_cov: &DMatrix<f64>,
    gain: &KalmanGain,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = gain.matrix();
    let d = prior_cov.nrows();
    let a = DMatrix::identity(d, d) - k * h;
    symmetrize(&(&a * prior_cov * a.transpose() + k * r * k.transpose()))
}

/// Yield level multiplying `CC^T` in the prediction, taken from the
/// posterior mean and floored at [`YIELD_FLOOR`].
pub fn noise_level(m: &SystemMatrices, post: &GaussianBelief) -> f64 {
    m.noise_level(post.mean[0], YIELD_FLOOR)
}

/// Prior: `Phi mean + D`, `Phi P Phi^T + X CC^T`.
pub fn kf_predict(m: &SystemMatrices, post: &GaussianBelief) -> Result<GaussianBelief> {
    let level = noise_level(m, post);
    Ok(GaussianBelief {
        mean: m.transition_mean(&post.mean),
        cov: symmetrize(&(&m.phi * &post.cov * m.phi.transpose() + &m.cct * level))?,
    })
}

/// `K = P(-) H^T (H P(-) H^T + V^2)^-1`.
pub fn kf_gain(m: &SystemMatrices, prior: &GaussianBelief) -> Result<KalmanGain> {
    optimal_gain(&prior.cov, &m.h, &m.v2)
}

/// Posterior from prior, gain and observation.
pub fn kf_update(
    m: &SystemMatrices,
    prior: &GaussianBelief,
    gain: &KalmanGain,
    y: &Observation,
) -> Result<GaussianBelief> {
    let post = short_form_update(prior, gain, &m.h, &y.to_vector())?;
    if !is_psd(&post.cov, COV_PSD_TOL) {
        return Err(Error::Numerical(format!(
            "posterior covariance lost positive-semidefiniteness (min eigenvalue {:e})",
            crate::numerics::min_eigenvalue(&post.cov)
        )));
    }
    Ok(post)
}

/// Everything one step of [`kf_run`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanRecord {
    pub prior: GaussianBelief,
    pub gain: KalmanGain,
    pub posterior: GaussianBelief,
    /// `y - H mean(-)`.
    pub innovation: DVector<f64>,
}

/// Starting belief: mean at the first observation, zero covariance.
pub fn default_init(first: &Observation) -> GaussianBelief {
    GaussianBelief::certain(first.to_vector())
}

/// Filters a whole series, one record per observation.
///
/// `init` defaults to [`default_init`] of the first observation.
pub fn kf_run(
    m: &SystemMatrices,
    observations: &[Observation],
    init: Option<GaussianBelief>,
) -> Result<Vec<KalmanRecord>> {
    let first = observations
        .first()
        .ok_or_else(|| Error::config("observations", "at least one observation is required"))?;
    let mut belief = init.unwrap_or_else(|| default_init(first));
    belief.validate()?;

    let mut records = Vec::with_capacity(observations.len());
    for (n, y) in observations.iter().enumerate() {
        let step = || -> Result<KalmanRecord> {
            let prior = kf_predict(m, &belief)?;
            let gain = kf_gain(m, &prior)?;
            let posterior = kf_update(m, &prior, &gain, y)?;
            ensure_finite(&posterior.cov, "posterior covariance")?;
            let innovation = y.to_vector() - &m.h * &prior.mean;
            Ok(KalmanRecord {
                prior,
                gain,
                posterior,
                innovation,
            })
        };
        let record = step().map_err(Error::at_step(n))?;
        belief = record.posterior.clone();
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{
        build_matrices, load_params, simulate, substitute_raw, NoiseScaling, RhoPolicy, State,
    };
    use approx::assert_relative_eq;

    fn eye(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    fn v(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn model() -> SystemMatrices {
        build_matrices(
            &load_params(&substitute_raw(), RhoPolicy::Reject)
                .unwrap()
                .params,
        )
        .unwrap()
    }

    /// Model matrices with `V^2` replaced; `H` stays the identity.
    fn with_v2(mut m: SystemMatrices, v2: DMatrix<f64>) -> SystemMatrices {
        m.v2 = v2;
        m
    }

    #[test]
    fn generic_identity_case() {
        let b = GaussianBelief::new(v(0.0, 0.0), eye(2));
        let step = generic_lkf_step(
            &eye(2),
            &DMatrix::zeros(2, 2),
            &eye(2),
            &eye(2),
            &b,
            &v(1.0, -1.0),
        )
        .unwrap();
        assert_relative_eq!(step.gain.0, eye(2) * 0.5, epsilon = 1e-15);
        assert_relative_eq!(step.posterior.cov, eye(2) * 0.5, epsilon = 1e-15);
        assert_relative_eq!(step.posterior.mean, v(0.5, -0.5), epsilon = 1e-15);
    }

    #[test]
    fn generic_zero_prior_uncertainty() {
        let b = GaussianBelief::certain(v(1.0, 2.0));
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let r = DMatrix::from_element(1, 1, 0.7);
        let z = DVector::from_element(1, 40.0);
        let step = generic_lkf_step(&eye(2), &DMatrix::zeros(2, 2), &h, &r, &b, &z).unwrap();
        assert_eq!(step.gain.0, DMatrix::zeros(2, 1));
        assert_eq!(step.posterior.mean, step.prior.mean);
    }

    #[test]
    fn generic_huge_measurement_noise_ignores_measurement() {
        let b = GaussianBelief::new(v(0.3, -0.2), diag(2.0, 0.5));
        let z = v(10.0, -7.0);
        let step =
            generic_lkf_step(&eye(2), &(eye(2) * 0.1), &eye(2), &(eye(2) * 1e12), &b, &z).unwrap();
        let moved = (&step.posterior.mean - &step.prior.mean).norm();
        let innovation = (&z - &step.prior.mean).norm();
        assert!(moved <= 1e-6 * innovation, "moved {moved}");
    }

    #[test]
    fn generic_dimension_mismatch() {
        let b = GaussianBelief::new(v(0.0, 0.0), eye(2));
        let r = generic_lkf_step(&eye(3), &eye(2), &eye(2), &eye(2), &b, &v(0.0, 0.0));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn generic_singular_innovation_covariance() {
        let b = GaussianBelief::certain(v(0.0, 0.0));
        let r = generic_lkf_step(
            &eye(2),
            &DMatrix::zeros(2, 2),
            &eye(2),
            &DMatrix::zeros(2, 2),
            &b,
            &v(0.0, 0.0),
        );
        assert!(matches!(r, Err(Error::Inversion(_))));
    }

    #[test]
    fn predict_examples() {
        let m = model();
        let p = kf_predict(&m, &GaussianBelief::certain(v(1.0, 0.0))).unwrap();
        assert_eq!(p.cov, m.cct);

        let p = kf_predict(&m, &GaussianBelief::new(v(-3.0, 0.0), eye(2))).unwrap();
        let expect = &m.phi * m.phi.transpose() + &m.cct * YIELD_FLOOR;
        assert_relative_eq!(p.cov, expect, epsilon = 1e-15);

        let x = 1.7;
        let p = kf_predict(&m, &GaussianBelief::new(v(x, 0.1), eye(2))).unwrap();
        // Phi Phi^T with Phi = [[a,0],[b,0]] is [[a^2, ab],[ab, b^2]]
        let (a, b) = (1.0 / 3.0714, 0.1907 / 3.0714);
        let expect = DMatrix::from_row_slice(2, 2, &[a * a, a * b, a * b, b * b]) + &m.cct * x;
        assert_relative_eq!(p.cov, expect, epsilon = 1e-14);
        assert_relative_eq!(p.mean, &m.phi * v(x, 0.1) + &m.drift, epsilon = 1e-15);
    }

    #[test]
    fn gain_examples() {
        let m = with_v2(model(), eye(2));
        let k = kf_gain(&m, &GaussianBelief::new(v(1.0, 1.0), eye(2))).unwrap();
        assert_relative_eq!(k.0, eye(2) * 0.5, epsilon = 1e-15);
        let k = kf_gain(&m, &GaussianBelief::new(v(1.0, 1.0), diag(2.0, 1.0))).unwrap();
        assert_relative_eq!(k.0, diag(2.0 / 3.0, 0.5), epsilon = 1e-15);
        let k = kf_gain(&m, &GaussianBelief::certain(v(1.0, 1.0))).unwrap();
        assert_eq!(k.0, DMatrix::zeros(2, 2));
    }

    #[test]
    fn update_examples() {
        let m = with_v2(model(), eye(2));
        let prior = GaussianBelief::new(v(1.5, -0.5), eye(2));
        let k = kf_gain(&m, &prior).unwrap();

        let same = kf_update(&m, &prior, &k, &Observation::new(1.5, -0.5)).unwrap();
        assert_eq!(same.mean, prior.mean);
        assert_relative_eq!(same.cov, eye(2) * 0.5, epsilon = 1e-15);

        let zero = KalmanGain(DMatrix::zeros(2, 2));
        let unchanged = kf_update(&m, &prior, &zero, &Observation::new(9.0, 9.0)).unwrap();
        assert_eq!(unchanged, prior);
    }

    #[test]
    fn run_length_and_identities() {
        let m = model();
        let t = simulate(&m, &State::new(2.0, 0.4), 65, 7).unwrap();
        let recs = kf_run(&m, &t.observations(), None).unwrap();
        assert_eq!(recs.len(), 65);
        for r in &recs {
            let s = &m.h * &r.prior.cov * m.h.transpose() + &m.v2;
            let residual = r.gain.matrix() * s - &r.prior.cov * m.h.transpose();
            assert!(residual.amax() < 1e-10);
            let joseph = joseph_covariance(&r.prior.cov, &r.gain, &m.h, &m.v2).unwrap();
            assert!((joseph - &r.posterior.cov).amax() < 1e-9);
            r.posterior.validate().unwrap();
        }
    }

    #[test]
    fn run_tracks_noise_free_series_from_truth() {
        let mut raw = substitute_raw();
        raw.insert("Q1".into(), 0.0);
        raw.insert("Q2".into(), 0.0);
        let quiet = build_matrices(&load_params(&raw, RhoPolicy::Reject).unwrap().params)
            .unwrap()
            .with_noise(NoiseScaling::Fixed(0.0));
        let z0 = State::new(0.8, -0.1);
        let t = simulate(&quiet, &z0, 65, 1).unwrap();

        let m = model();
        let recs = kf_run(
            &m,
            &t.observations(),
            Some(GaussianBelief::certain(z0.to_vector())),
        )
        .unwrap();
        for (r, truth) in recs.iter().zip(t.states()) {
            assert!((&r.posterior.mean - truth.to_vector()).amax() < 1e-8);
        }
    }

    #[test]
    fn single_observation_matches_generic_step() {
        let m = model();
        let y = Observation::new(2.2, 0.9);
        let recs = kf_run(&m, &[y], None).unwrap();
        let init = default_init(&y);
        let q = &m.cct * noise_level(&m, &init);
        let shifted = y.to_vector() - &m.h * &m.drift;
        let g = generic_lkf_step(&m.phi, &q, &m.h, &m.v2, &init, &shifted).unwrap();
        assert_relative_eq!(
            recs[0].posterior.mean,
            &g.posterior.mean + &m.drift,
            epsilon = 1e-12
        );
        assert_relative_eq!(recs[0].posterior.cov, g.posterior.cov, epsilon = 1e-12);
    }

    #[test]
    fn run_requires_observations() {
        assert!(kf_run(&model(), &[], None).is_err());
    }

    #[test]
    fn errors_carry_step_index() {
        // no plant noise, no measurement noise, certain prior: S = 0
        let quiet = with_v2(model(), DMatrix::zeros(2, 2)).with_noise(NoiseScaling::Fixed(0.0));
        let obs = vec![Observation::new(1.0, 0.0); 3];
        match kf_run(&quiet, &obs, None) {
            Err(Error::Step { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected step error, got {other:?}"),
        }
    }
}
