//! Stochastic finite-difference smoothness regularizers driven by a
//! generator, plus exact Jacobian oracles used to verify them.
//!
//! The directional estimator perturbs a generated point `g(z)` by a step of
//! size `epsilon` along the unit direction of `g(z + eta * unit(delta)) -
//! g(z)`, `delta ~ N(0, I)`, and averages `||f(g(z)) - f(g(z) + epsilon *
//! r)||_2` over the batch. Normalizing the difference discards the latent
//! gradient's magnitude and keeps only its direction, which avoids both
//! exploding and vanishing perturbations where the generator's Jacobian is
//! badly scaled.
//!
//! Gradients flow into the classifier `f` only; the generator and the drawn
//! directions are constants of each step.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpParams};
use crate::rng::Rng;

/// Norms below this are treated as degenerate when normalizing.
const DEGENERATE_NORM: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerVariant {
    /// Step of size epsilon along the normalized latent-difference direction.
    Directional,
    /// Plain squared finite difference `||f(g(z)) - f(g(z + eta*unit(delta)))||^2 / eta^2`.
    SquaredFirstMethod,
}

/// Step sizes and policy for the finite-difference estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerConfig {
    /// Ambient step size.
    pub epsilon: f64,
    /// Latent step size.
    pub eta: f64,
    pub variant: RegularizerVariant,
    /// Total draw attempts before a degenerate direction becomes an error.
    pub max_resample: usize,
    /// Weight attached to this regularizer by the surrounding loss; the
    /// estimator itself always returns the raw value.
    pub gamma: f64,
}

impl RegularizerConfig {
    pub fn directional(epsilon: f64, eta: f64, gamma: f64) -> Self {
        Self {
            epsilon,
            eta,
            variant: RegularizerVariant::Directional,
            max_resample: 5,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || self.eta <= 0.0 || self.max_resample < 1 || self.gamma < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "regularizer config out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A unit L2-norm vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Array1<f64>);

impl Direction {
    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }
}

/// `v / ||v||`, or a degenerate-direction error when `||v|| < 1e-30`.
pub fn unit_vector(v: &Array1<f64>) -> Result<Direction> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < DEGENERATE_NORM {
        return Err(Error::DegenerateDirection { attempts: 1 });
    }
    Ok(Direction(v / norm))
}

/// Draws the approximate manifold direction at a single latent point:
/// `unit(g(z + eta * unit(delta)) - g(z))`, redrawing `delta` until the
/// difference is non-degenerate or `max_resample` attempts are spent.
pub fn manifold_direction(
    g: &Mlp,
    z: &Array1<f64>,
    eta: f64,
    max_resample: usize,
    rng: &mut Rng,
) -> Result<Direction> {
    let z_row = z.view().insert_axis(ndarray::Axis(0)).to_owned();
    let base = g.forward(&z_row)?;
    for _ in 0..max_resample {
        let delta = rng.normal_vec(z.len());
        let Ok(unit_delta) = unit_vector(&delta) else {
            continue;
        };
        let perturbed = &z_row + &(unit_delta.as_array() * eta).insert_axis(ndarray::Axis(0));
        let moved = g.forward(&perturbed)?;
        let diff = (&moved - &base).row(0).to_owned();
        if let Ok(direction) = unit_vector(&diff) {
            return Ok(direction);
        }
    }
    Err(Error::DegenerateDirection {
        attempts: max_resample,
    })
}

/// Normalizes each row in place, once; returns indices of degenerate rows.
fn normalize_rows(m: &mut Array2<f64>) -> Vec<usize> {
    let mut degenerate = Vec::new();
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < DEGENERATE_NORM {
            degenerate.push(i);
        } else {
            row.mapv_inplace(|x| x / norm);
        }
    }
    degenerate
}

/// Generated base points `g(z)` and one unit manifold direction per row.
///
/// Perturbation draws are row-major and fresh per call; a degenerate row is
/// redrawn individually (in row order) up to `max_resample` total attempts.
pub fn generate_with_directions(
    g: &Mlp,
    zs: &Array2<f64>,
    eta: f64,
    max_resample: usize,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if zs.nrows() == 0 {
        return Err(Error::EmptyBatch("generate_with_directions"));
    }
    let base = g.forward(zs)?;
    let mut deltas = rng.normal_matrix(zs.nrows(), zs.ncols(), 1.0);
    if let Some(&row) = normalize_rows(&mut deltas).first() {
        // A zero draw from N(0, I); practically unreachable.
        return Err(Error::NonFinite(format!("latent perturbation row {row}")));
    }
    let mut directions = g.forward(&(zs + &(deltas * eta)))? - &base;

    // Rows where the generator moved nowhere are redrawn individually.
    for row in normalize_rows(&mut directions) {
        let z = zs.row(row).to_owned();
        let dir = manifold_direction(g, &z, eta, max_resample.saturating_sub(1).max(1), rng)?;
        directions.row_mut(row).assign(dir.as_array());
    }
    Ok((base, directions))
}

/// Batch-mean finite-difference estimate plus per-sample terms.
#[derive(Debug, Clone)]
pub struct OmegaEval {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

impl OmegaEval {
    fn from_per_sample(per_sample: Vec<f64>) -> Self {
        let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        OmegaEval { value, per_sample }
    }
}

/// Mean `||f(x) - f(x')||_2` over paired rows, with gradients w.r.t. `f`'s
/// parameters when requested. The norm's subgradient at zero is taken as 0.
fn paired_difference_norm(
    f: &Mlp,
    first: &Array2<f64>,
    second: &Array2<f64>,
    scale: f64,
    squared: bool,
    with_grad: bool,
) -> Result<(OmegaEval, Option<MlpParams>)> {
    let n = first.nrows();
    let cache_a = f.forward_cached(first)?;
    let cache_b = f.forward_cached(second)?;
    let diff = cache_a.output() - cache_b.output();

    let mut per_sample = Vec::with_capacity(n);
    for row in diff.rows() {
        let sq: f64 = row.iter().map(|x| x * x).sum();
        per_sample.push(if squared { sq * scale } else { sq.sqrt() * scale });
    }
    let eval = OmegaEval::from_per_sample(per_sample);

    if !with_grad {
        return Ok((eval, None));
    }

    // Seed gradients of the batch mean at both forward passes.
    let mut seed = diff.clone();
    for (i, mut row) in seed.rows_mut().into_iter().enumerate() {
        if squared {
            row.mapv_inplace(|d| 2.0 * d * scale / n as f64);
        } else {
            let norm = eval.per_sample[i] / scale;
            if norm < DEGENERATE_NORM {
                row.fill(0.0);
            } else {
                row.mapv_inplace(|d| d * scale / (norm * n as f64));
            }
        }
    }
    let (mut grads, _) = f.backward(&cache_a, &seed)?;
    let (grads_b, _) = f.backward(&cache_b, &seed.mapv(|x| -x))?;
    grads.add_scaled(&grads_b, 1.0);
    Ok((eval, Some(grads)))
}

/// Directional manifold regularizer: mean over the batch of
/// `||f(g(z)) - f(g(z) + epsilon * r)||_2` with `r` from
/// [`generate_with_directions`].
pub fn omega_manifold(
    f: &Mlp,
    g: &Mlp,
    zs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<OmegaEval> {
    Ok(omega_manifold_impl(f, g, zs, cfg, rng, false)?.0)
}

/// [`omega_manifold`] together with gradients w.r.t. `f`'s parameters.
pub fn omega_manifold_with_grad(
    f: &Mlp,
    g: &Mlp,
    zs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<(OmegaEval, MlpParams)> {
    let (eval, grads) = omega_manifold_impl(f, g, zs, cfg, rng, true)?;
    Ok((eval, grads.expect("gradients requested")))
}

fn omega_manifold_impl(
    f: &Mlp,
    g: &Mlp,
    zs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
    with_grad: bool,
) -> Result<(OmegaEval, Option<MlpParams>)> {
    cfg.validate()?;
    if zs.nrows() == 0 {
        return Err(Error::EmptyBatch("omega_manifold"));
    }
    match cfg.variant {
        RegularizerVariant::Directional => {
            let (base, dirs) = generate_with_directions(g, zs, cfg.eta, cfg.max_resample, rng)?;
            let moved = &base + &(dirs * cfg.epsilon);
            paired_difference_norm(f, &base, &moved, 1.0, false, with_grad)
        }
        RegularizerVariant::SquaredFirstMethod => {
            let base = g.forward(zs)?;
            let mut deltas = rng.normal_matrix(zs.nrows(), zs.ncols(), 1.0);
            if let Some(&row) = normalize_rows(&mut deltas).first() {
                return Err(Error::NonFinite(format!("latent perturbation row {row}")));
            }
            let moved = g.forward(&(zs + &(deltas * cfg.eta)))?;
            paired_difference_norm(f, &base, &moved, 1.0 / (cfg.eta * cfg.eta), true, with_grad)
        }
    }
}

/// First-method estimator regardless of the configured variant.
pub fn omega_manifold_first_method(
    f: &Mlp,
    g: &Mlp,
    zs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<OmegaEval> {
    let mut squared = *cfg;
    squared.variant = RegularizerVariant::SquaredFirstMethod;
    Ok(omega_manifold_impl(f, g, zs, &squared, rng, false)?.0)
}

/// Isotropic ambient regularizer: mean `||f(x) - f(x + epsilon * unit(delta))||_2`
/// with a fresh unit gaussian direction per sample.
pub fn omega_ambient(
    f: &Mlp,
    xs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<OmegaEval> {
    Ok(omega_ambient_impl(f, xs, cfg, rng, false)?.0)
}

/// [`omega_ambient`] together with gradients w.r.t. `f`'s parameters.
pub fn omega_ambient_with_grad(
    f: &Mlp,
    xs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
) -> Result<(OmegaEval, MlpParams)> {
    let (eval, grads) = omega_ambient_impl(f, xs, cfg, rng, true)?;
    Ok((eval, grads.expect("gradients requested")))
}

fn omega_ambient_impl(
    f: &Mlp,
    xs: &Array2<f64>,
    cfg: &RegularizerConfig,
    rng: &mut Rng,
    with_grad: bool,
) -> Result<(OmegaEval, Option<MlpParams>)> {
    cfg.validate()?;
    if xs.nrows() == 0 {
        return Err(Error::EmptyBatch("omega_ambient"));
    }
    let mut deltas = rng.normal_matrix(xs.nrows(), xs.ncols(), 1.0);
    if let Some(&row) = normalize_rows(&mut deltas).first() {
        return Err(Error::NonFinite(format!("ambient perturbation row {row}")));
    }
    let moved = xs + &(deltas * cfg.epsilon);
    paired_difference_norm(f, xs, &moved, 1.0, false, with_grad)
}

/// Frobenius norm of the latent-to-output Jacobian of `f(g(z))` at one
/// latent point, by central differences over every latent coordinate.
///
/// This is the exact quantity the stochastic estimators approximate; it is
/// deliberately independent of the reverse-mode path so the two can be
/// checked against each other.
pub fn jacobian_frobenius_oracle(f: &Mlp, g: &Mlp, z: &Array1<f64>, h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::InvalidSpec(format!("step must be positive, got {h}")));
    }
    let mut sum_sq = 0.0;
    for j in 0..z.len() {
        let mut plus = z.clone();
        plus[j] += h;
        let mut minus = z.clone();
        minus[j] -= h;
        let batch = ndarray::stack(
            ndarray::Axis(0),
            &[plus.view(), minus.view()],
        )
        .expect("two equal-length rows");
        let out = f.forward(&g.forward(&batch)?)?;
        for k in 0..out.ncols() {
            let d = (out[[0, k]] - out[[1, k]]) / (2.0 * h);
            sum_sq += d * d;
        }
    }
    Ok(sum_sq.sqrt())
}
