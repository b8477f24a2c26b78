//! Per-step scalar loss decomposition.

/// One training step's loss terms. Raw (unweighted) component values are
/// stored; `total` is the weighted sum actually optimized, computed by the
/// step that produced the report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub supervised: f64,
    pub unsupervised: f64,
    pub feature_matching: f64,
    pub manifold: f64,
    pub ambient: f64,
    pub entropy: f64,
    pub ridge: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.supervised,
            self.unsupervised,
            self.feature_matching,
            self.manifold,
            self.ambient,
            self.entropy,
            self.ridge,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}
