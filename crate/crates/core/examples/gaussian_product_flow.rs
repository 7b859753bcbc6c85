//! Flows a Gaussian cloud through a Gaussian likelihood and compares the
//! result with the closed-form product, with and without diffusion.
//!
//! cargo run --example gaussian_product_flow

use driftbench::numerics::sym_inverse;
use driftbench::pflow::{estimate_prior, flow_sweep, FlowConfig, LikelihoodSpec, ParticleEnsemble};
use driftbench::rng::{self, Stream};
use nalgebra::{DMatrix, DVector};

fn main() -> driftbench::Result<()> {
    let mu = DVector::from_vec(vec![0.5, -0.3]);
    let s1 = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.4]);
    let lik = LikelihoodSpec {
        m: DVector::from_vec(vec![1.5, 0.7]),
        sigma2: DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 0.8]),
    };

    let l = s1.clone().cholesky().expect("SPD").l();
    let mut x =
        l * rng::standard_normal_matrix(&mut rng::substream(1, Stream::PffInit, 0), 2, 10_000);
    for mut c in x.column_iter_mut() {
        c += &mu;
    }
    let cloud = ParticleEnsemble::new(x);
    let prior = estimate_prior(&cloud)?;

    let s1i = sym_inverse(&prior.sigma1)?;
    let s2i = sym_inverse(&lik.sigma2)?;
    let post_cov = sym_inverse(&(&s1i + &s2i))?;
    let post_mean = &post_cov * (s1i * &prior.mu + s2i * &lik.m);
    println!("closed form mean {:?}", post_mean.as_slice());
    println!("closed form cov  {:?}", post_cov.as_slice());

    for diffusion in [false, true] {
        let cfg = FlowConfig {
            d_lambda: 1e-3,
            diffusion,
            ..FlowConfig::default()
        };
        let out = flow_sweep(
            &cloud,
            &lik,
            &prior.sigma1,
            &cfg,
            &mut rng::substream(1, Stream::PffDiffusion, 0),
        )?;
        let s = out.summary()?;
        println!("diffusion {diffusion:<5}: mean {:?}", s.mean.as_slice());
        println!("                 cov  {:?}", s.cov.as_slice());
    }
    Ok(())
}
