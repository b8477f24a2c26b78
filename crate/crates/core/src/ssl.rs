//! Semi-supervised GAN with a K+1-class discriminator.
//!
//! The discriminator owns K real-class logits; the "generated" class logit
//! is fixed at 0 (the usual gauge, since only probabilities are defined).
//! Its loss is `L_supervised + L_unsupervised + gamma_m * omega_manifold +
//! gamma_a * omega_ambient`; the generator trains on feature matching
//! against a designated intermediate discriminator layer. Both players'
//! gradients are evaluated at the same snapshot before either updates.
//!
//! Everything is expressed through softplus / log-sum-exp identities so
//! losses stay finite for logits up to magnitude ~1e3.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::gan::{sigmoid, softplus, LatentDist};
use crate::nn::{EmaParams, Mlp, MlpParams, OptimizerState};
use crate::reg::{omega_ambient_with_grad, omega_manifold_with_grad, RegularizerConfig};
use crate::report::LossReport;
use crate::rng::Rng;

/// K+1-class discriminator plus generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SslGanModel {
    pub discriminator: Mlp,
    pub generator: Mlp,
    /// Hidden layer whose post-activation is the feature-matching target.
    pub feature_layer: usize,
    pub latent_dist: LatentDist,
}

impl SslGanModel {
    pub fn new(
        discriminator: Mlp,
        generator: Mlp,
        feature_layer: usize,
        latent_dist: LatentDist,
    ) -> Result<Self> {
        if generator.output_dim() != discriminator.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "SslGanModel",
                expected: format!("discriminator input {}", generator.output_dim()),
                got: format!("{}", discriminator.input_dim()),
            });
        }
        if discriminator.output_dim() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                discriminator.output_dim()
            )));
        }
        if feature_layer >= discriminator.spec.num_layers() {
            return Err(Error::InvalidSpec(format!(
                "feature layer {} out of range for depth {}",
                feature_layer,
                discriminator.spec.num_layers()
            )));
        }
        Ok(Self {
            discriminator,
            generator,
            feature_layer,
            latent_dist,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.discriminator.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }
}

/// Weights of the two smoothness terms in the discriminator loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SslLossWeights {
    pub gamma_m: f64,
    pub gamma_a: f64,
}

/// `ln sum_k exp(l_k)` over one row of real-class logits.
fn logsumexp(row: ndarray::ArrayView1<f64>) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()
}

/// Softmax over one logit row, stabilized.
fn softmax_row(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = row.mapv(|l| (l - m).exp());
    let sum = out.sum();
    out.mapv_inplace(|e| e / sum);
    out
}

/// K+1 class probabilities with the generated-class logit fixed at 0:
/// `p(j) = exp(l_j) / (1 + sum exp(l_k))`, `p(K+1) = 1 / (1 + sum exp(l_k))`.
pub fn k_plus_one_probs(logits: &Array1<f64>) -> Array1<f64> {
    let m = logits.iter().cloned().fold(0.0f64, f64::max);
    let mut out = Array1::zeros(logits.len() + 1);
    let mut denom = (-m).exp();
    for (i, &l) in logits.iter().enumerate() {
        let e = (l - m).exp();
        out[i] = e;
        denom += e;
    }
    out[logits.len()] = (-m).exp();
    out.mapv_inplace(|e| e / denom);
    out
}

/// Mean negative log-probability of the true class, conditioned on the
/// example being real (softmax over the K real logits only).
pub fn loss_supervised(logits: &Array2<f64>, labels: &[i64]) -> Result<f64> {
    Ok(loss_supervised_grad(logits, labels)?.0)
}

/// [`loss_supervised`] plus its gradient with respect to the logits.
pub fn loss_supervised_grad(logits: &Array2<f64>, labels: &[i64]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() == 0 {
        return Err(Error::EmptyBatch("loss_supervised"));
    }
    if logits.nrows() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "loss_supervised",
            expected: format!("{} labels", logits.nrows()),
            got: format!("{}", labels.len()),
        });
    }
    let k = logits.ncols();
    let n = logits.nrows() as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        let label = labels[i];
        if label < 0 || label as usize >= k {
            return Err(Error::InvalidLabel { label, k });
        }
        let y = label as usize;
        total += logsumexp(row) - row[y];
        let p = softmax_row(row);
        for j in 0..k {
            grad[[i, j]] = (p[j] - if j == y { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}

/// Real/fake discrimination loss in the K+1 parameterization:
/// `-mean ln(1 - p(K+1))` on real rows plus `-mean ln p(K+1)` on fake rows,
/// computed as `softplus(-lse)` and `softplus(lse)` of the real-logit
/// log-sum-exp.
pub fn loss_unsupervised(real_logits: &Array2<f64>, fake_logits: &Array2<f64>) -> Result<f64> {
    Ok(loss_unsupervised_grad(real_logits, fake_logits)?.0)
}

/// [`loss_unsupervised`] plus gradients for the real and fake logit batches.
pub fn loss_unsupervised_grad(
    real_logits: &Array2<f64>,
    fake_logits: &Array2<f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if real_logits.nrows() == 0 || fake_logits.nrows() == 0 {
        return Err(Error::EmptyBatch("loss_unsupervised"));
    }
    let n_real = real_logits.nrows() as f64;
    let n_fake = fake_logits.nrows() as f64;

    let mut total = 0.0;
    let mut real_grad = Array2::zeros(real_logits.dim());
    for (i, row) in real_logits.rows().into_iter().enumerate() {
        let lse = logsumexp(row);
        total += softplus(-lse) / n_real;
        let scale = -sigmoid(-lse) / n_real;
        let p = softmax_row(row);
        for j in 0..row.len() {
            real_grad[[i, j]] = scale * p[j];
        }
    }
    let mut fake_grad = Array2::zeros(fake_logits.dim());
    for (i, row) in fake_logits.rows().into_iter().enumerate() {
        let lse = logsumexp(row);
        total += softplus(lse) / n_fake;
        let scale = sigmoid(lse) / n_fake;
        let p = softmax_row(row);
        for j in 0..row.len() {
            fake_grad[[i, j]] = scale * p[j];
        }
    }
    Ok((total, real_grad, fake_grad))
}

/// `|| mean h(x) - mean h(g(z)) ||_2` over the designated feature layer.
pub fn feature_matching_loss(
    model: &SslGanModel,
    real: &Array2<f64>,
    zs: &Array2<f64>,
) -> Result<f64> {
    Ok(feature_matching_grad(model, real, zs)?.0)
}

/// [`feature_matching_loss`] plus its gradient with respect to the
/// generator's parameters. The discriminator is a constant of this loss.
pub fn feature_matching_grad(
    model: &SslGanModel,
    real: &Array2<f64>,
    zs: &Array2<f64>,
) -> Result<(f64, MlpParams)> {
    if real.nrows() == 0 || zs.nrows() == 0 {
        return Err(Error::EmptyBatch("feature_matching_loss"));
    }
    let gen_cache = model.generator.forward_cached(zs)?;
    let real_cache = model.discriminator.forward_cached(real)?;
    let fake_cache = model.discriminator.forward_cached(gen_cache.output())?;

    let h_real = real_cache.activation(model.feature_layer);
    let h_fake = fake_cache.activation(model.feature_layer);
    let diff = h_real.mean_axis(Axis(0)).expect("nonempty")
        - h_fake.mean_axis(Axis(0)).expect("nonempty");
    let value = diff.iter().map(|x| x * x).sum::<f64>().sqrt();

    let n_fake = zs.nrows() as f64;
    let mut grads = MlpParams::zeros(&model.generator.spec);
    if value >= 1e-30 {
        // d value / d h_fake_row = -unit(diff) / n_fake, for every row.
        let unit = diff.mapv(|d| -d / (value * n_fake));
        let mut seed = Array2::zeros(h_fake.dim());
        for mut row in seed.rows_mut() {
            row.assign(&unit);
        }
        let (_, fake_input_grads) =
            model
                .discriminator
                .backward_from_layer(&fake_cache, model.feature_layer + 1, &seed)?;
        let (g, _) = model.generator.backward(&gen_cache, &fake_input_grads)?;
        grads = g;
    }
    Ok((value, grads))
}

/// Argmax over the K real logits, ties resolved toward the smaller index.
pub fn predict(classifier: &Mlp, points: &Array2<f64>) -> Result<Vec<i64>> {
    let logits = classifier.forward(points)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as i64
        })
        .collect())
}

/// Discriminator loss pieces and total gradient at the current snapshot.
fn discriminator_loss_and_grads(
    model: &SslGanModel,
    labeled_points: &Array2<f64>,
    labels: &[i64],
    unlabeled_points: &Array2<f64>,
    zs: &Array2<f64>,
    weights: &SslLossWeights,
    reg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<(LossReport, MlpParams)> {
    let disc = &model.discriminator;
    let labeled_cache = disc.forward_cached(labeled_points)?;
    let unlabeled_cache = disc.forward_cached(unlabeled_points)?;
    let fake = model.generator.forward(zs)?;
    let fake_cache = disc.forward_cached(&fake)?;

    let (supervised, sup_seed) = loss_supervised_grad(labeled_cache.output(), labels)?;
    let (unsupervised, real_seed, fake_seed) =
        loss_unsupervised_grad(unlabeled_cache.output(), fake_cache.output())?;

    let (mut grads, _) = disc.backward(&labeled_cache, &sup_seed)?;
    let (unl_grads, _) = disc.backward(&unlabeled_cache, &real_seed)?;
    grads.add_scaled(&unl_grads, 1.0);
    let (fake_grads, _) = disc.backward(&fake_cache, &fake_seed)?;
    grads.add_scaled(&fake_grads, 1.0);

    // Regularizers are skipped entirely at zero weight so the random stream
    // and the parameter trajectory match a build without them.
    let mut manifold = 0.0;
    if weights.gamma_m > 0.0 {
        let (eval, m_grads) = omega_manifold_with_grad(disc, &model.generator, zs, reg, rng)?;
        manifold = eval.value;
        grads.add_scaled(&m_grads, weights.gamma_m);
    }
    let mut ambient = 0.0;
    if weights.gamma_a > 0.0 {
        let union = ndarray::concatenate(
            Axis(0),
            &[labeled_points.view(), unlabeled_points.view()],
        )
        .expect("equal widths");
        let (eval, a_grads) = omega_ambient_with_grad(disc, &union, reg, rng)?;
        ambient = eval.value;
        grads.add_scaled(&a_grads, weights.gamma_a);
    }

    let report = LossReport {
        total: supervised + unsupervised + weights.gamma_m * manifold + weights.gamma_a * ambient,
        supervised,
        unsupervised,
        manifold,
        ambient,
        ..LossReport::default()
    };
    Ok((report, grads))
}

/// One simultaneous training step of the semi-supervised GAN.
///
/// The discriminator descends the combined classification loss; the
/// generator descends feature matching. Both gradients are taken at the
/// same parameter snapshot; the latent batch `zs` is shared between the
/// manifold term and feature matching. The regularizer's perturbation
/// draws come from `rng` (manifold first, then ambient).
#[allow(clippy::too_many_arguments)]
pub fn ssl_train_step(
    model: &mut SslGanModel,
    labeled_points: &Array2<f64>,
    labels: &[i64],
    unlabeled_points: &Array2<f64>,
    zs: &Array2<f64>,
    weights: &SslLossWeights,
    reg: &RegularizerConfig,
    d_opt: &mut OptimizerState,
    g_opt: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<LossReport> {
    let (mut report, d_grads) = discriminator_loss_and_grads(
        model,
        labeled_points,
        labels,
        unlabeled_points,
        zs,
        weights,
        reg,
        rng,
    )?;
    let (fm, g_grads) = feature_matching_grad(model, unlabeled_points, zs)?;
    report.feature_matching = fm;
    report.total += fm;
    if !report.is_finite() {
        return Err(Error::NonFinite(format!("ssl losses: {report:?}")));
    }

    d_opt.step(&mut model.discriminator.params, &d_grads)?;
    g_opt.step(&mut model.generator.params, &g_grads)?;
    Ok(report)
}

/// Per-interval log entry of [`train_ssl`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslStepLog {
    pub step: u64,
    pub report: LossReport,
    /// Validation error through the EMA weights, when a validation set exists.
    pub val_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SslTrainOptions {
    pub steps: u64,
    pub batch_size: usize,
    pub weights: SslLossWeights,
    pub reg: RegularizerConfig,
    pub ema_decay: f64,
    pub log_interval: u64,
}

/// Minibatch training loop over a semi-supervised split.
///
/// Labeled and unlabeled batches are drawn uniformly with replacement, one
/// latent batch per step. EMA of the discriminator weights updates after
/// every step and is what evaluation uses.
#[allow(clippy::too_many_arguments)]
pub fn train_ssl(
    model: &mut SslGanModel,
    labeled: &crate::data::LabeledSet,
    unlabeled: &crate::data::LabeledSet,
    validation: &crate::data::LabeledSet,
    opts: &SslTrainOptions,
    d_opt: &mut OptimizerState,
    g_opt: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<(EmaParams, Vec<SslStepLog>)> {
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::EmptyBatch("train_ssl"));
    }
    if opts.batch_size == 0 || opts.log_interval == 0 {
        return Err(Error::InvalidSpec(
            "batch_size and log_interval must be positive".into(),
        ));
    }
    let mut ema = EmaParams::new(model.discriminator.params.clone(), opts.ema_decay)?;
    let mut history = Vec::new();
    let b = opts.batch_size;
    let dim = labeled.dim();
    let mut labeled_batch = Array2::zeros((b, dim));
    let mut labels = vec![0i64; b];
    let mut unlabeled_batch = Array2::zeros((b, dim));

    for step in 1..=opts.steps {
        for i in 0..b {
            let idx = rng.index(labeled.len());
            labeled_batch.row_mut(i).assign(&labeled.points().row(idx));
            labels[i] = labeled.labels()[idx];
        }
        for i in 0..b {
            let idx = rng.index(unlabeled.len());
            unlabeled_batch
                .row_mut(i)
                .assign(&unlabeled.points().row(idx));
        }
        let zs = crate::gan::sample_latent(b, model.latent_dim(), model.latent_dist, rng);
        let report = ssl_train_step(
            model,
            &labeled_batch,
            &labels,
            &unlabeled_batch,
            &zs,
            &opts.weights,
            &opts.reg,
            d_opt,
            g_opt,
            rng,
        )
        .map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {step}")),
            other => other,
        })?;
        ema.update(&model.discriminator.params)?;

        if step % opts.log_interval == 0 || step == opts.steps {
            let val_error = if validation.is_empty() {
                None
            } else {
                let eval = Mlp {
                    spec: model.discriminator.spec.clone(),
                    params: ema.shadow.clone(),
                };
                let predictions = predict(&eval, validation.points())?;
                Some(crate::train::error_rate(
                    &predictions,
                    validation.eval_labels(),
                )?)
            };
            history.push(SslStepLog {
                step,
                report,
                val_error,
            });
        }
    }
    Ok((ema, history))
}
