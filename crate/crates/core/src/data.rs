//! Synthetic 2D manifold datasets, semi-supervised splits, and CSV I/O.
//!
//! Noiseless generator outputs lie exactly on their defining curves, so
//! tests and evaluation can measure distances to the true manifold
//! analytically ([`moons_manifold_distance`], [`circles_manifold_distance`]).

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Label sentinel for points whose class is withheld from training.
pub const UNLABELED: i64 = -1;

/// Points with integer labels; `UNLABELED` marks withheld labels.
///
/// Splits keep the true labels of unlabeled points in a hidden side channel
/// that only evaluation reads ([`LabeledSet::eval_labels`]); training code
/// sees the sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    points: Array2<f64>,
    labels: Vec<i64>,
    hidden_truth: Option<Vec<i64>>,
}

impl LabeledSet {
    pub fn new(points: Array2<f64>, labels: Vec<i64>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "LabeledSet",
                expected: format!("{} labels", points.nrows()),
                got: format!("{}", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < UNLABELED) {
            return Err(Error::InvalidSpec(format!(
                "label {bad} below the unlabeled sentinel -1"
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset points".into()));
        }
        Ok(Self {
            points,
            labels,
            hidden_truth: None,
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Ground truth for evaluation: hidden labels when present (unlabeled
    /// splits), visible labels otherwise.
    pub fn eval_labels(&self) -> &[i64] {
        self.hidden_truth.as_deref().unwrap_or(&self.labels)
    }

    /// Number of classes among the evaluation labels.
    pub fn num_classes(&self) -> usize {
        self.eval_labels()
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        let mut points = Array2::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            points.row_mut(row).assign(&self.points.row(i));
            labels.push(self.labels[i]);
        }
        let hidden_truth = self
            .hidden_truth
            .as_ref()
            .map(|h| indices.iter().map(|&i| h[i]).collect());
        LabeledSet {
            points,
            labels,
            hidden_truth,
        }
    }
}

/// How to carve a dataset into labeled / unlabeled / validation parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub labels_per_class: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

/// Two interleaved unit-radius half circles.
///
/// Class 0 is the upper arc centered at the origin; class 1 is its
/// reflection centered at (1, 0.5). Arc parameters are an inclusive uniform
/// grid over [0, pi], so noiseless points sit exactly on the curves.
/// Gaussian noise of scale `noise_std` is added per coordinate.
pub fn two_moons(n: usize, noise_std: f64, rng: &mut Rng) -> Result<LabeledSet> {
    generate_pair(n, noise_std, rng, |m, k| {
        let t = if m == 1 {
            0.0
        } else {
            std::f64::consts::PI * k as f64 / (m - 1) as f64
        };
        ((t.cos(), t.sin()), (1.0 - t.cos(), 0.5 - t.sin()))
    })
}

/// Two concentric circles: outer radius 1 (class 0), inner radius
/// `radius_ratio` (class 1), each sampled on a uniform angle grid.
pub fn two_circles(
    n: usize,
    noise_std: f64,
    radius_ratio: f64,
    rng: &mut Rng,
) -> Result<LabeledSet> {
    if !(radius_ratio > 0.0 && radius_ratio < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "radius_ratio must be in (0, 1), got {radius_ratio}"
        )));
    }
    generate_pair(n, noise_std, rng, |m, k| {
        let t = std::f64::consts::TAU * k as f64 / m as f64;
        (
            (t.cos(), t.sin()),
            (radius_ratio * t.cos(), radius_ratio * t.sin()),
        )
    })
}

fn generate_pair(
    n: usize,
    noise_std: f64,
    rng: &mut Rng,
    point_at: impl Fn(usize, usize) -> ((f64, f64), (f64, f64)),
) -> Result<LabeledSet> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidSpec(format!(
            "dataset size must be even and positive, got {n}"
        )));
    }
    if noise_std < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "noise_std must be nonnegative, got {noise_std}"
        )));
    }
    let m = n / 2;
    let mut points = Array2::zeros((n, 2));
    let mut labels = vec![0i64; n];
    for k in 0..m {
        let ((x0, y0), (x1, y1)) = point_at(m, k);
        points[[k, 0]] = x0;
        points[[k, 1]] = y0;
        points[[m + k, 0]] = x1;
        points[[m + k, 1]] = y1;
        labels[m + k] = 1;
    }
    if noise_std > 0.0 {
        for x in points.iter_mut() {
            *x += noise_std * rng.standard_normal();
        }
    }
    LabeledSet::new(points, labels)
}

/// Distance to the arc {(cos t, sin t) : t in [0, pi]}.
fn upper_arc_distance(x: f64, y: f64) -> f64 {
    if y >= 0.0 {
        ((x * x + y * y).sqrt() - 1.0).abs()
    } else {
        let to_right = ((x - 1.0) * (x - 1.0) + y * y).sqrt();
        let to_left = ((x + 1.0) * (x + 1.0) + y * y).sqrt();
        to_right.min(to_left)
    }
}

/// Distance from a point to the noiseless two-moons manifold.
pub fn moons_manifold_distance(x: f64, y: f64) -> f64 {
    // Class 1 is the image of the upper arc under (x, y) -> (1-x, 0.5-y).
    upper_arc_distance(x, y).min(upper_arc_distance(1.0 - x, 0.5 - y))
}

/// Distance from a point to the noiseless two-circles manifold.
pub fn circles_manifold_distance(x: f64, y: f64, radius_ratio: f64) -> f64 {
    let r = (x * x + y * y).sqrt();
    (r - 1.0).abs().min((r - radius_ratio).abs())
}

/// Splits a fully labeled set into (labeled, unlabeled, validation).
///
/// Exactly `labels_per_class` examples of each class keep their labels; a
/// `validation_fraction` share of the remainder (rounded down) becomes the
/// validation set; everything else is emitted unlabeled with its true label
/// moved to the hidden evaluation channel. Row order within each part
/// follows the original set.
pub fn split_semi_supervised(
    data: &LabeledSet,
    spec: &SplitSpec,
    rng: &mut Rng,
) -> Result<(LabeledSet, LabeledSet, LabeledSet)> {
    let k = data.num_classes();
    if k == 0 {
        return Err(Error::EmptyBatch("split_semi_supervised"));
    }
    if !(0.0..1.0).contains(&spec.validation_fraction) {
        return Err(Error::InvalidSpec(format!(
            "validation_fraction must be in [0, 1), got {}",
            spec.validation_fraction
        )));
    }

    let mut labeled_idx: Vec<usize> = Vec::with_capacity(spec.labels_per_class * k);
    for class in 0..k as i64 {
        let mut members: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        if members.len() < spec.labels_per_class {
            return Err(Error::InsufficientClassMembers {
                class,
                available: members.len(),
                needed: spec.labels_per_class,
            });
        }
        rng.shuffle(&mut members);
        labeled_idx.extend_from_slice(&members[..spec.labels_per_class]);
    }

    let mut is_labeled = vec![false; data.len()];
    for &i in &labeled_idx {
        is_labeled[i] = true;
    }
    let mut rest: Vec<usize> = (0..data.len()).filter(|&i| !is_labeled[i]).collect();
    rng.shuffle(&mut rest);
    let n_val = (spec.validation_fraction * rest.len() as f64).floor() as usize;
    let mut val_idx: Vec<usize> = rest[..n_val].to_vec();
    let mut unlabeled_idx: Vec<usize> = rest[n_val..].to_vec();

    labeled_idx.sort_unstable();
    val_idx.sort_unstable();
    unlabeled_idx.sort_unstable();

    let labeled = data.select(&labeled_idx);
    let validation = data.select(&val_idx);
    let mut unlabeled = data.select(&unlabeled_idx);
    unlabeled.hidden_truth = Some(std::mem::replace(
        &mut unlabeled.labels,
        vec![UNLABELED; unlabeled_idx.len()],
    ));

    Ok((labeled, unlabeled, validation))
}

/// Writes `x0,...,x{d-1},label` rows, LF line endings, shortest
/// round-tripping decimal for every coordinate.
pub fn save_csv(set: &LabeledSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for c in 0..set.dim() {
        if c > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{c}");
    }
    out.push_str(",label\n");
    for (i, row) in set.points.rows().into_iter().enumerate() {
        for x in row.iter() {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{}", set.labels[i]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`save_csv`]; `-1` labels load as [`UNLABELED`].
pub fn load_csv(path: &Path) -> Result<LabeledSet> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let err = |line: usize, message: String| Error::Csv {
        path: display.clone(),
        line,
        message,
    };

    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| err(1, "missing header".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns.last() != Some(&"label") {
        return Err(err(
            1,
            format!(
                "expected trailing column 'label', got '{}'",
                columns.last().copied().unwrap_or("")
            ),
        ));
    }
    let dim = columns.len() - 1;
    for (c, col) in columns[..dim].iter().enumerate() {
        let expected = format!("x{c}");
        if *col != expected {
            return Err(err(1, format!("expected column '{expected}', got '{col}'")));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(err(
                lineno,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        for (c, field) in fields[..dim].iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric value '{field}' in x{c}")))?;
            if !x.is_finite() {
                return Err(err(lineno, format!("non-finite value '{field}' in x{c}")));
            }
            values.push(x);
        }
        let label: i64 = fields[dim]
            .parse()
            .map_err(|_| err(lineno, format!("non-integer label '{}'", fields[dim])))?;
        if label < UNLABELED {
            return Err(err(lineno, format!("label {label} below -1")));
        }
        labels.push(label);
    }

    let n = labels.len();
    let points = Array2::from_shape_vec((n, dim), values).expect("row-major layout");
    LabeledSet::new(points, labels)
}

#[cfg(test)]
mod tests;
