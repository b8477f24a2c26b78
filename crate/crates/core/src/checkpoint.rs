//! Versioned model checkpoints.
//!
//! A checkpoint is one JSON object: a version number, the seed and step it
//! was produced at, and the model payload (spec plus flat parameter array
//! per network, in [`MlpParams::flatten`] order). Floats serialize as
//! shortest round-tripping decimals, so save/load is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{GanModel, LatentDist};
use crate::nn::{EmaParams, Mlp, MlpParams, MlpSpec};
use crate::ssl::SslGanModel;

pub const CHECKPOINT_VERSION: u32 = 1;

/// One dense network: its spec and flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDump {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl NetDump {
    pub fn from_mlp(mlp: &Mlp) -> Self {
        Self {
            spec: mlp.spec.clone(),
            params: mlp.params.flatten(),
        }
    }

    pub fn into_mlp(self) -> Result<Mlp> {
        let spec = MlpSpec::new(
            self.spec.layer_widths.clone(),
            self.spec.hidden_activation,
            self.spec.output_activation,
        )?;
        let mut params = MlpParams::zeros(&spec);
        if self.params.len() != params.param_count() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for spec {:?}, found {}",
                params.param_count(),
                spec.layer_widths,
                self.params.len()
            )));
        }
        if self.params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        params.assign_flat(&self.params);
        Ok(Mlp { spec, params })
    }
}

/// EMA shadow parameters with their decay, flat layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaDump {
    pub decay: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDump {
    Gan {
        latent_dist: LatentDist,
        generator: NetDump,
        discriminator: NetDump,
    },
    SslGan {
        latent_dist: LatentDist,
        feature_layer: usize,
        generator: NetDump,
        discriminator: NetDump,
        ema: Option<EmaDump>,
    },
    Classifier {
        classifier: NetDump,
        ema: Option<EmaDump>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub step: u64,
    pub model: ModelDump,
}

fn ema_dump(ema: Option<&EmaParams>) -> Option<EmaDump> {
    ema.map(|e| EmaDump {
        decay: e.decay,
        params: e.shadow.flatten(),
    })
}

fn ema_restore(dump: Option<EmaDump>, reference: &Mlp) -> Result<Option<EmaParams>> {
    match dump {
        None => Ok(None),
        Some(d) => {
            let mut shadow = MlpParams::zeros(&reference.spec);
            if d.params.len() != shadow.param_count() {
                return Err(Error::Checkpoint("ema parameter count mismatch".into()));
            }
            shadow.assign_flat(&d.params);
            Ok(Some(EmaParams::new(shadow, d.decay)?))
        }
    }
}

impl Checkpoint {
    pub fn gan(model: &GanModel, seed: u64, step: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            step,
            model: ModelDump::Gan {
                latent_dist: model.latent_dist,
                generator: NetDump::from_mlp(&model.generator),
                discriminator: NetDump::from_mlp(&model.discriminator),
            },
        }
    }

    pub fn ssl_gan(model: &SslGanModel, ema: Option<&EmaParams>, seed: u64, step: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            step,
            model: ModelDump::SslGan {
                latent_dist: model.latent_dist,
                feature_layer: model.feature_layer,
                generator: NetDump::from_mlp(&model.generator),
                discriminator: NetDump::from_mlp(&model.discriminator),
                ema: ema_dump(ema),
            },
        }
    }

    pub fn classifier(classifier: &Mlp, ema: Option<&EmaParams>, seed: u64, step: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            step,
            model: ModelDump::Classifier {
                classifier: NetDump::from_mlp(classifier),
                ema: ema_dump(ema),
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn into_gan(self) -> Result<GanModel> {
        match self.model {
            ModelDump::Gan {
                latent_dist,
                generator,
                discriminator,
            } => GanModel::new(generator.into_mlp()?, discriminator.into_mlp()?, latent_dist),
            other => Err(Error::Checkpoint(format!(
                "expected a gan checkpoint, found {}",
                kind_name(&other)
            ))),
        }
    }

    pub fn into_ssl_gan(self) -> Result<(SslGanModel, Option<EmaParams>)> {
        match self.model {
            ModelDump::SslGan {
                latent_dist,
                feature_layer,
                generator,
                discriminator,
                ema,
            } => {
                let disc = discriminator.into_mlp()?;
                let ema = ema_restore(ema, &disc)?;
                let model = SslGanModel::new(disc, generator.into_mlp()?, feature_layer, latent_dist)?;
                Ok((model, ema))
            }
            other => Err(Error::Checkpoint(format!(
                "expected an ssl_gan checkpoint, found {}",
                kind_name(&other)
            ))),
        }
    }

    pub fn into_classifier(self) -> Result<(Mlp, Option<EmaParams>)> {
        match self.model {
            ModelDump::Classifier { classifier, ema } => {
                let mlp = classifier.into_mlp()?;
                let ema = ema_restore(ema, &mlp)?;
                Ok((mlp, ema))
            }
            other => Err(Error::Checkpoint(format!(
                "expected a classifier checkpoint, found {}",
                kind_name(&other)
            ))),
        }
    }

    /// The generator of a `gan` or `ssl_gan` checkpoint, with its latent
    /// distribution. Decoupled training consumes either kind.
    pub fn into_generator(self) -> Result<(Mlp, LatentDist)> {
        match self.model {
            ModelDump::Gan {
                latent_dist,
                generator,
                ..
            }
            | ModelDump::SslGan {
                latent_dist,
                generator,
                ..
            } => Ok((generator.into_mlp()?, latent_dist)),
            other => Err(Error::Checkpoint(format!(
                "checkpoint kind {} has no generator",
                kind_name(&other)
            ))),
        }
    }

    /// The classifier to evaluate with: EMA weights when stored, raw
    /// weights otherwise. Works for classifier and ssl_gan checkpoints.
    pub fn into_eval_classifier(self) -> Result<Mlp> {
        match self.model {
            ModelDump::Classifier { classifier, ema } => {
                let mlp = classifier.into_mlp()?;
                Ok(match ema_restore(ema, &mlp)? {
                    Some(e) => Mlp {
                        spec: mlp.spec,
                        params: e.shadow,
                    },
                    None => mlp,
                })
            }
            ModelDump::SslGan {
                discriminator, ema, ..
            } => {
                let mlp = discriminator.into_mlp()?;
                Ok(match ema_restore(ema, &mlp)? {
                    Some(e) => Mlp {
                        spec: mlp.spec,
                        params: e.shadow,
                    },
                    None => mlp,
                })
            }
            ModelDump::Gan { .. } => Err(Error::Checkpoint(
                "gan checkpoints hold no classifier".into(),
            )),
        }
    }
}

fn kind_name(model: &ModelDump) -> &'static str {
    match model {
        ModelDump::Gan { .. } => "gan",
        ModelDump::SslGan { .. } => "ssl_gan",
        ModelDump::Classifier { .. } => "classifier",
    }
}
