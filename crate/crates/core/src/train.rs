//! Decoupled classifier training against a frozen generator, the
//! label-free objective, and run-level evaluation metrics.
//!
//! In the decoupled setting the loss is `cross_entropy + gamma_m * omega`
//! with the manifold term estimated through a previously trained generator;
//! unlabeled data enters only through that generator. The label-free
//! objective is `gamma_l * omega + gamma_k * ridge - gamma_h * entropy`,
//! where the ridge penalizes weight matrices (not biases) and the entropy
//! term rewards balanced predictions over the data batch.

use ndarray::{Array1, Array2};
use itertools::Itertools;

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::gan::{sample_latent, LatentDist};
use crate::nn::{init_params, EmaParams, Mlp, MlpParams, MlpSpec, OptimizerKind, OptimizerState};
use crate::reg::{omega_manifold_with_grad, RegularizerConfig};
use crate::report::LossReport;
use crate::rng::Rng;
use crate::ssl::{loss_supervised_grad, predict};

/// Configuration of a decoupled (frozen-generator) classifier run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledConfig {
    pub gamma_m: f64,
    pub reg: RegularizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub ema_decay: f64,
}

/// Which entropy enters the label-free objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    /// Entropy of the batch-mean prediction; rewards balanced class usage.
    Marginal,
    /// Mean per-sample prediction entropy.
    Conditional,
    /// Marginal minus conditional; rewards balanced *and* confident
    /// predictions.
    MutualInfo,
}

/// Configuration of the label-free objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnsupConfig {
    pub gamma_l: f64,
    pub gamma_k: f64,
    pub gamma_h: f64,
    pub reg: RegularizerConfig,
    pub entropy_mode: EntropyMode,
}

/// Per-seed error rates with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rates: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Shannon entropy of the batch-mean softmax prediction.
pub fn entropy_term(f: &Mlp, xs: &Array2<f64>) -> Result<f64> {
    Ok(entropy_with_grad(f, xs, EntropyMode::Marginal)?.0)
}

fn entropy_of(p: &Array1<f64>) -> f64 {
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum()
}

/// Entropy value and its gradient with respect to `f`'s parameters.
pub fn entropy_with_grad(
    f: &Mlp,
    xs: &Array2<f64>,
    mode: EntropyMode,
) -> Result<(f64, MlpParams)> {
    if xs.nrows() == 0 {
        return Err(Error::EmptyBatch("entropy_term"));
    }
    let n = xs.nrows() as f64;
    let k = f.output_dim();
    let cache = f.forward_cached(xs)?;

    // Per-row softmax over the K logits.
    let mut probs = cache.output().clone();
    for mut row in probs.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|l| (l - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }

    let marginal = probs.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let marginal_h = entropy_of(&marginal);
    let conditional_h =
        probs.rows().into_iter().map(|r| entropy_of(&r.to_owned())).sum::<f64>() / n;

    let value = match mode {
        EntropyMode::Marginal => marginal_h,
        EntropyMode::Conditional => conditional_h,
        EntropyMode::MutualInfo => marginal_h - conditional_h,
    };

    // Seed dH/d(logits). dH(p)/dp_k = -(ln p_k + 1) in both entropies; the
    // softmax Jacobian turns that into p_j * (s_j - sum_k s_k p_k) per row.
    let mut seed = Array2::zeros(cache.output().dim());
    let marginal_score: Vec<f64> = (0..k)
        .map(|j| {
            if marginal[j] > 0.0 {
                -(marginal[j].ln() + 1.0)
            } else {
                0.0
            }
        })
        .collect();
    for (i, p_row) in probs.rows().into_iter().enumerate() {
        let row_h = entropy_of(&p_row.to_owned());
        for j in 0..k {
            if p_row[j] <= 0.0 {
                continue;
            }
            let m_term = {
                let dot: f64 = (0..k).map(|c| marginal_score[c] * p_row[c]).sum();
                p_row[j] * (marginal_score[j] - dot) / n
            };
            let c_term = -p_row[j] * (p_row[j].ln() + row_h) / n;
            seed[[i, j]] = match mode {
                EntropyMode::Marginal => m_term,
                EntropyMode::Conditional => c_term,
                EntropyMode::MutualInfo => m_term - c_term,
            };
        }
    }
    let (grads, _) = f.backward(&cache, &seed)?;
    Ok((value, grads))
}

/// Cross-entropy on the labeled batch plus the weighted manifold term.
///
/// The generator is frozen: gradients flow into `f` only.
pub fn decoupled_loss(
    f: &Mlp,
    labeled_points: &Array2<f64>,
    labels: &[i64],
    generator: &Mlp,
    zs: &Array2<f64>,
    cfg: &DecoupledConfig,
    rng: &mut Rng,
) -> Result<(LossReport, MlpParams)> {
    let cache = f.forward_cached(labeled_points)?;
    let (supervised, seed) = loss_supervised_grad(cache.output(), labels)?;
    let (mut grads, _) = f.backward(&cache, &seed)?;

    let mut manifold = 0.0;
    if cfg.gamma_m > 0.0 {
        let (eval, m_grads) = omega_manifold_with_grad(f, generator, zs, &cfg.reg, rng)?;
        manifold = eval.value;
        grads.add_scaled(&m_grads, cfg.gamma_m);
    }
    let report = LossReport {
        total: supervised + cfg.gamma_m * manifold,
        supervised,
        manifold,
        ..LossReport::default()
    };
    Ok((report, grads))
}

/// The label-free objective and its gradient. Labels never enter here;
/// only the points of the batch matter.
pub fn unsupervised_loss(
    f: &Mlp,
    generator: &Mlp,
    zs: &Array2<f64>,
    data_points: &Array2<f64>,
    cfg: &UnsupConfig,
    rng: &mut Rng,
) -> Result<(LossReport, MlpParams)> {
    let mut grads = MlpParams::zeros(&f.spec);

    let mut manifold = 0.0;
    if cfg.gamma_l > 0.0 {
        let (eval, m_grads) = omega_manifold_with_grad(f, generator, zs, &cfg.reg, rng)?;
        manifold = eval.value;
        grads.add_scaled(&m_grads, cfg.gamma_l);
    }

    let mut ridge = 0.0;
    if cfg.gamma_k > 0.0 {
        ridge = f.params.weight_squared_norm();
        for (gw, w) in grads.weights.iter_mut().zip(&f.params.weights) {
            gw.zip_mut_with(w, |g, &w| *g += cfg.gamma_k * 2.0 * w);
        }
    }

    let mut entropy = 0.0;
    if cfg.gamma_h > 0.0 {
        let (h, h_grads) = entropy_with_grad(f, data_points, cfg.entropy_mode)?;
        entropy = h;
        grads.add_scaled(&h_grads, -cfg.gamma_h);
    }

    let report = LossReport {
        total: cfg.gamma_l * manifold + cfg.gamma_k * ridge - cfg.gamma_h * entropy,
        manifold,
        ridge,
        entropy,
        ..LossReport::default()
    };
    Ok((report, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStepLog {
    pub step: u64,
    pub report: LossReport,
    /// Error of the EMA classifier on the validation set, when present.
    pub val_error: Option<f64>,
}

/// A trained classifier with its EMA shadow and logged history.
#[derive(Debug, Clone)]
pub struct ClassifierRun {
    pub classifier: Mlp,
    pub ema: EmaParams,
    pub history: Vec<TrainStepLog>,
}

impl ClassifierRun {
    /// The evaluation network: EMA weights on the classifier's spec.
    pub fn eval_classifier(&self) -> Mlp {
        Mlp {
            spec: self.classifier.spec.clone(),
            params: self.ema.shadow.clone(),
        }
    }
}

/// Trains a classifier on labeled data with the manifold term estimated
/// through a frozen generator.
///
/// Runs `cfg.epochs` passes over the labeled set (shuffled each epoch,
/// minibatches of `cfg.batch_size`, the last one possibly short). Every step
/// draws a fresh latent batch of the same size. Evaluation happens through
/// the EMA weights.
#[allow(clippy::too_many_arguments)]
pub fn train_decoupled(
    spec: MlpSpec,
    labeled: &LabeledSet,
    validation: &LabeledSet,
    generator: &Mlp,
    latent: LatentDist,
    optimizer: OptimizerKind,
    cfg: &DecoupledConfig,
    log_interval: u64,
    rng: &mut Rng,
) -> Result<ClassifierRun> {
    if labeled.is_empty() {
        return Err(Error::EmptyBatch("train_decoupled"));
    }
    if generator.output_dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "train_decoupled",
            expected: format!("classifier input {}", generator.output_dim()),
            got: format!("{}", spec.input_dim()),
        });
    }
    if cfg.batch_size == 0 || log_interval == 0 {
        return Err(Error::InvalidSpec(
            "batch_size and log_interval must be positive".into(),
        ));
    }
    let classifier = Mlp {
        params: init_params(&spec, rng),
        spec,
    };
    let mut run = ClassifierRun {
        ema: EmaParams::new(classifier.params.clone(), cfg.ema_decay)?,
        classifier,
        history: Vec::new(),
    };
    let mut opt = OptimizerState::new(optimizer, &run.classifier.spec)?;

    let total_steps = cfg.epochs as u64 * labeled.len().div_ceil(cfg.batch_size) as u64;
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch = labeled.select(chunk);
            let zs = sample_latent(cfg.batch_size, generator.input_dim(), latent, rng);
            let (report, grads) = decoupled_loss(
                &run.classifier,
                batch.points(),
                batch.labels(),
                generator,
                &zs,
                cfg,
                rng,
            )?;
            if !report.is_finite() {
                return Err(Error::NonFinite(format!("decoupled loss at step {step}")));
            }
            opt.step(&mut run.classifier.params, &grads)?;
            run.ema.update(&run.classifier.params)?;

            if step % log_interval == 0 || step == total_steps {
                let val_error = if validation.is_empty() {
                    None
                } else {
                    let predictions = predict(&run.eval_classifier(), validation.points())?;
                    Some(error_rate(&predictions, validation.eval_labels())?)
                };
                run.history.push(TrainStepLog {
                    step,
                    report,
                    val_error,
                });
            }
        }
    }
    Ok(run)
}

/// Trains a classifier with the label-free objective; the `data` labels are
/// never read.
#[allow(clippy::too_many_arguments)]
pub fn train_unsupervised(
    spec: MlpSpec,
    data: &LabeledSet,
    generator: &Mlp,
    latent: LatentDist,
    optimizer: OptimizerKind,
    cfg: &UnsupConfig,
    steps: u64,
    batch_size: usize,
    ema_decay: f64,
    log_interval: u64,
    rng: &mut Rng,
) -> Result<ClassifierRun> {
    if data.is_empty() {
        return Err(Error::EmptyBatch("train_unsupervised"));
    }
    if batch_size == 0 || log_interval == 0 {
        return Err(Error::InvalidSpec(
            "batch_size and log_interval must be positive".into(),
        ));
    }
    let classifier = Mlp {
        params: init_params(&spec, rng),
        spec,
    };
    let mut run = ClassifierRun {
        ema: EmaParams::new(classifier.params.clone(), ema_decay)?,
        classifier,
        history: Vec::new(),
    };
    let mut opt = OptimizerState::new(optimizer, &run.classifier.spec)?;
    let mut batch = Array2::zeros((batch_size, data.dim()));

    for step in 1..=steps {
        for mut row in batch.rows_mut() {
            row.assign(&data.points().row(rng.index(data.len())));
        }
        let zs = sample_latent(batch_size, generator.input_dim(), latent, rng);
        let (report, grads) =
            unsupervised_loss(&run.classifier, generator, &zs, &batch, cfg, rng)?;
        if !report.is_finite() {
            return Err(Error::NonFinite(format!("unsupervised loss at step {step}")));
        }
        opt.step(&mut run.classifier.params, &grads)?;
        run.ema.update(&run.classifier.params)?;

        if step % log_interval == 0 || step == steps {
            run.history.push(TrainStepLog {
                step,
                report,
                val_error: None,
            });
        }
    }
    Ok(run)
}

/// Fraction of mismatched predictions.
pub fn error_rate(predictions: &[i64], truth: &[i64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyBatch("error_rate"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            context: "error_rate",
            expected: format!("{} predictions", truth.len()),
            got: format!("{}", predictions.len()),
        });
    }
    let wrong = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Mean and population standard deviation (divisor `n`) over seed runs.
pub fn summarize_runs(rates: &[f64]) -> Result<RunSummary> {
    if rates.is_empty() {
        return Err(Error::EmptyBatch("summarize_runs"));
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(RunSummary {
        rates: rates.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

/// Best accuracy over all assignments of predicted cluster ids to true
/// classes. Exhaustive over `k!` permutations; refuses `k > 8`.
pub fn cluster_agreement(predictions: &[i64], truth: &[i64], k: usize) -> Result<f64> {
    if k > 8 {
        return Err(Error::TooManyClasses(k));
    }
    if predictions.len() != truth.len() || predictions.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "cluster_agreement",
            expected: format!("{} nonempty predictions", truth.len()),
            got: format!("{}", predictions.len()),
        });
    }
    let mut best = 0.0f64;
    for perm in (0..k as i64).permutations(k) {
        let hits = predictions
            .iter()
            .zip(truth)
            .filter(|(&p, &t)| p >= 0 && (p as usize) < k && perm[p as usize] == t)
            .count();
        best = best.max(hits as f64 / predictions.len() as f64);
    }
    Ok(best)
}
