//! Toy GAN training on 2D point clouds.
//!
//! The discriminator trains on the standard logistic real/fake loss, the
//! generator on the non-saturating variant. Both players update
//! simultaneously from the same parameter snapshot, with a consensus
//! correction: each player also descends `gamma_c * 0.5 * ||v||^2`, where
//! `v` is the joint gradient of both losses. The correction's gradient is
//! approximated by a central finite difference of the joint gradient field
//! along `v` (two extra gradient evaluations per step), which keeps the
//! whole trainer first order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpParams, OptimizerState};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDist {
    Gaussian,
    Uniform,
}

/// Generator/discriminator pair for unconditional 2D GAN training.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dist: LatentDist,
}

impl GanModel {
    pub fn new(generator: Mlp, discriminator: Mlp, latent_dist: LatentDist) -> Result<Self> {
        if generator.output_dim() != discriminator.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "GanModel",
                expected: format!("discriminator input {}", generator.output_dim()),
                got: format!("{}", discriminator.input_dim()),
            });
        }
        Ok(Self {
            generator,
            discriminator,
            latent_dist,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }
}

/// Consensus-term weight and finite-difference step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusConfig {
    pub gamma_c: f64,
    pub hvp_step: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            gamma_c: 1.0,
            hvp_step: 1e-4,
        }
    }
}

/// Latent batch: rows i.i.d. from `N(0, I)` or `U(-1, 1)^dim`.
pub fn sample_latent(n: usize, dim: usize, dist: LatentDist, rng: &mut Rng) -> Array2<f64> {
    match dist {
        LatentDist::Gaussian => rng.normal_matrix(n, dim, 1.0),
        LatentDist::Uniform => {
            let data: Vec<f64> = (0..n * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Array2::from_shape_vec((n, dim), data).expect("shape matches data length")
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Discriminator and generator losses at the current parameters.
///
/// `d_loss = -mean ln sigma(D(x)) - mean ln(1 - sigma(D(g(z))))`,
/// `g_loss = -mean ln sigma(D(g(z)))` (non-saturating).
pub fn gan_losses(model: &GanModel, real: &Array2<f64>, zs: &Array2<f64>) -> Result<(f64, f64)> {
    if real.nrows() == 0 || zs.nrows() == 0 {
        return Err(Error::EmptyBatch("gan_losses"));
    }
    let fake = model.generator.forward(zs)?;
    let real_logits = model.discriminator.forward(real)?;
    let fake_logits = model.discriminator.forward(&fake)?;

    let mean = |a: &Array2<f64>, f: fn(f64) -> f64| -> f64 {
        a.iter().map(|&t| f(t)).sum::<f64>() / a.nrows() as f64
    };
    let d_loss = mean(&real_logits, |t| softplus(-t)) + mean(&fake_logits, softplus);
    let g_loss = mean(&fake_logits, |t| softplus(-t));
    Ok((d_loss, g_loss))
}

/// Joint gradient of `(d_loss, g_loss)` with respect to (discriminator,
/// generator) parameters, all evaluated at one snapshot.
fn joint_grads(
    generator: &Mlp,
    discriminator: &Mlp,
    real: &Array2<f64>,
    zs: &Array2<f64>,
) -> Result<(MlpParams, MlpParams, f64, f64)> {
    let n_real = real.nrows() as f64;
    let n_fake = zs.nrows() as f64;

    let gen_cache = generator.forward_cached(zs)?;
    let real_cache = discriminator.forward_cached(real)?;
    let fake_cache = discriminator.forward_cached(gen_cache.output())?;

    let d_loss = real_cache.output().iter().map(|&t| softplus(-t)).sum::<f64>() / n_real
        + fake_cache.output().iter().map(|&t| softplus(t)).sum::<f64>() / n_fake;
    let g_loss = fake_cache.output().iter().map(|&t| softplus(-t)).sum::<f64>() / n_fake;

    // Discriminator: d/dt softplus(-t) = sigma(t) - 1 on real rows,
    // d/dt softplus(t) = sigma(t) on fake rows.
    let real_seed = real_cache.output().mapv(|t| (sigmoid(t) - 1.0) / n_real);
    let fake_seed = fake_cache.output().mapv(|t| sigmoid(t) / n_fake);
    let (mut d_grads, _) = discriminator.backward(&real_cache, &real_seed)?;
    let (d_grads_fake, _) = discriminator.backward(&fake_cache, &fake_seed)?;
    d_grads.add_scaled(&d_grads_fake, 1.0);

    // Generator: d/dt softplus(-t) = -sigma(-t), pushed through the
    // discriminator to its inputs, then through the generator.
    let gen_seed = fake_cache.output().mapv(|t| -sigmoid(-t) / n_fake);
    let (_, fake_input_grads) = discriminator.backward(&fake_cache, &gen_seed)?;
    let (g_grads, _) = generator.backward(&gen_cache, &fake_input_grads)?;

    Ok((d_grads, g_grads, d_loss, g_loss))
}

/// Central finite-difference directional derivative of a gradient field:
/// `(grad_fn(theta + h*unit(v)) - grad_fn(theta - h*unit(v))) * ||v|| / (2h)`.
///
/// For a single scalar loss this is the Hessian-vector product; it is exact
/// on quadratics up to rounding. Returns zeros when `v` is exactly zero.
pub fn hvp_central_diff<F>(mut grad_fn: F, theta: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    assert_eq!(theta.len(), v.len(), "direction length mismatch");
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![0.0; theta.len()]);
    }
    let mut plus_point = theta.to_vec();
    let mut minus_point = theta.to_vec();
    for i in 0..theta.len() {
        let step = h * v[i] / norm;
        plus_point[i] += step;
        minus_point[i] -= step;
    }
    let plus = grad_fn(&plus_point)?;
    let minus = grad_fn(&minus_point)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) * norm / (2.0 * h))
        .collect())
}

/// One simultaneous consensus update of both players.
///
/// Returns `(d_loss, g_loss)` measured at the pre-update snapshot.
pub fn consensus_step(
    model: &mut GanModel,
    real: &Array2<f64>,
    zs: &Array2<f64>,
    cfg: &ConsensusConfig,
    d_opt: &mut OptimizerState,
    g_opt: &mut OptimizerState,
) -> Result<(f64, f64)> {
    if cfg.hvp_step <= 0.0 || cfg.gamma_c < 0.0 {
        return Err(Error::InvalidSpec(format!("bad consensus config: {cfg:?}")));
    }
    let (mut d_grads, mut g_grads, d_loss, g_loss) =
        joint_grads(&model.generator, &model.discriminator, real, zs)?;
    if !d_loss.is_finite() || !g_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "gan losses (d = {d_loss}, g = {g_loss})"
        )));
    }
    if !d_grads.all_finite() || !g_grads.all_finite() {
        return Err(Error::NonFinite("joint gradient".into()));
    }

    if cfg.gamma_c > 0.0 {
        // Flat layout: discriminator parameters then generator parameters.
        let d_len = d_grads.param_count();
        let mut theta = model.discriminator.params.flatten();
        theta.extend(model.generator.params.flatten());
        let mut v = d_grads.flatten();
        v.extend(g_grads.flatten());

        let correction = hvp_central_diff(
            |flat| {
                let mut disc = model.discriminator.clone();
                let mut gen = model.generator.clone();
                disc.params.assign_flat(&flat[..d_len]);
                gen.params.assign_flat(&flat[d_len..]);
                let (dg, gg, _, _) = joint_grads(&gen, &disc, real, zs)?;
                let mut out = dg.flatten();
                out.extend(gg.flatten());
                Ok(out)
            },
            &theta,
            &v,
            cfg.hvp_step,
        )?;
        if correction.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("consensus correction".into()));
        }

        let mut d_correction = MlpParams::zeros(&model.discriminator.spec);
        d_correction.assign_flat(&correction[..d_len]);
        let mut g_correction = MlpParams::zeros(&model.generator.spec);
        g_correction.assign_flat(&correction[d_len..]);
        d_grads.add_scaled(&d_correction, cfg.gamma_c);
        g_grads.add_scaled(&g_correction, cfg.gamma_c);
    }

    d_opt.step(&mut model.discriminator.params, &d_grads)?;
    g_opt.step(&mut model.generator.params, &g_grads)?;
    Ok((d_loss, g_loss))
}

/// Losses recorded once per logging interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanStepLog {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone)]
pub struct GanTrainOptions {
    pub steps: u64,
    pub batch_size: usize,
    pub consensus: ConsensusConfig,
    pub log_interval: u64,
    /// Steps after which `on_checkpoint` fires.
    pub checkpoint_at: Vec<u64>,
}

/// Trains the GAN with simultaneous consensus updates.
///
/// Each step draws `batch_size` real rows (uniformly, with replacement) and
/// a fresh latent batch. Non-finite losses abort with a diagnostic.
pub fn train_gan(
    model: &mut GanModel,
    data: &Array2<f64>,
    opts: &GanTrainOptions,
    d_opt: &mut OptimizerState,
    g_opt: &mut OptimizerState,
    rng: &mut Rng,
    mut on_checkpoint: impl FnMut(u64, &GanModel) -> Result<()>,
) -> Result<Vec<GanStepLog>> {
    if data.nrows() == 0 {
        return Err(Error::EmptyBatch("train_gan"));
    }
    if opts.batch_size == 0 || opts.log_interval == 0 {
        return Err(Error::InvalidSpec(
            "batch_size and log_interval must be positive".into(),
        ));
    }
    let mut history = Vec::new();
    let mut real = Array2::zeros((opts.batch_size, data.ncols()));
    for step in 1..=opts.steps {
        for mut row in real.rows_mut() {
            row.assign(&data.row(rng.index(data.nrows())));
        }
        let zs = sample_latent(opts.batch_size, model.latent_dim(), model.latent_dist, rng);
        let (d_loss, g_loss) =
            consensus_step(model, &real, &zs, &opts.consensus, d_opt, g_opt).map_err(|e| {
                match e {
                    Error::NonFinite(what) => {
                        Error::NonFinite(format!("{what} diverged at step {step}"))
                    }
                    other => other,
                }
            })?;
        if step % opts.log_interval == 0 || step == opts.steps {
            history.push(GanStepLog {
                step,
                d_loss,
                g_loss,
            });
        }
        if opts.checkpoint_at.contains(&step) {
            on_checkpoint(step, model)?;
        }
    }
    Ok(history)
}
