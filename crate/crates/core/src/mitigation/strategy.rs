use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::jpeg::{roundtrip, Image};
use crate::nn::{images_to_tensor, tensor_to_images, ModelKind, ParameterSet};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationKind {
    None,
    SupervisedFinetune,
    AcOffTheShelf,
    Ttac,
}

impl MitigationKind {
    pub fn uses_ac(self) -> bool {
        matches!(self, MitigationKind::AcOffTheShelf | MitigationKind::Ttac)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MitigationKind::None => "none",
            MitigationKind::SupervisedFinetune => "supervised_finetune",
            MitigationKind::AcOffTheShelf => "ac_off_the_shelf",
            MitigationKind::Ttac => "ttac",
        }
    }
}

impl fmt::Display for MitigationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MitigationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => MitigationKind::None,
            "supervised_finetune" | "finetune" => MitigationKind::SupervisedFinetune,
            "ac_off_the_shelf" | "ac" => MitigationKind::AcOffTheShelf,
            "ttac" => MitigationKind::Ttac,
            _ => return Err(Error::invalid(format!("unknown mitigation '{s}'"))),
        })
    }
}

/// Which task output the TTAC loss compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtacTarget {
    Logits,
    Features,
}

impl FromStr for TtacTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(TtacTarget::Logits),
            "features" => Ok(TtacTarget::Features),
            _ => Err(Error::invalid(format!("unknown ttac target '{s}'"))),
        }
    }
}

/// Input condition of an evaluation image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quality {
    /// Uncompressed; sorts before every JPEG quality.
    Clean,
    Jpeg(u8),
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quality::Clean => f.write_str("clean"),
            Quality::Jpeg(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "clean" {
            return Ok(Quality::Clean);
        }
        let q: u8 = s.parse().map_err(|_| Error::invalid(format!("bad quality '{s}'")))?;
        ensure!((1..=100).contains(&q), "quality {q} outside [1, 100]");
        Ok(Quality::Jpeg(q))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MitigationStrategy {
    pub kind: MitigationKind,
    pub ac_model: Option<ParameterSet>,
    pub target: Option<TtacTarget>,
    /// Pass uncompressed inputs through untouched.
    pub skip_on_uncompressed: bool,
}

impl MitigationStrategy {
    pub fn none() -> Self {
        Self { kind: MitigationKind::None, ac_model: None, target: None, skip_on_uncompressed: true }
    }

    /// The model itself was fine-tuned; images pass through as with `none`.
    pub fn supervised_finetune() -> Self {
        Self { kind: MitigationKind::SupervisedFinetune, ..Self::none() }
    }

    pub fn off_the_shelf(ac: ParameterSet) -> Self {
        Self { kind: MitigationKind::AcOffTheShelf, ac_model: Some(ac), target: None, skip_on_uncompressed: true }
    }

    pub fn ttac(ac: ParameterSet, target: TtacTarget) -> Self {
        Self { kind: MitigationKind::Ttac, ac_model: Some(ac), target: Some(target), skip_on_uncompressed: true }
    }

    pub fn with_skip(mut self, skip: bool) -> Self {
        self.skip_on_uncompressed = skip;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_ac() {
            let ac = self
                .ac_model
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("{} needs an artifact-correction model", self.kind)))?;
            ensure!(ac.descriptor().kind == ModelKind::AcNet, "ac_model must be an ac_net");
        }
        Ok(())
    }
}

/// Images per corrector forward pass.
const AC_CHUNK: usize = 16;

/// Runs the corrector over equally sized images.
pub(crate) fn correct_images(ac: &ParameterSet, images: &[Image]) -> Result<Vec<Image>> {
    let chunks: Vec<&[Image]> = images.chunks(AC_CHUNK).collect();
    let outs = par::try_map(&chunks, |chunk| {
        let refs: Vec<&Image> = chunk.iter().collect();
        let x = images_to_tensor(&refs)?;
        tensor_to_images(&ac.forward(&x)?.logits)
    })?;
    Ok(outs.into_iter().flatten().collect())
}

/// Compress (unless clean), then mitigate. The result is what the task
/// model sees.
pub fn apply_batch(strategy: &MitigationStrategy, images: &[Image], quality: Quality) -> Result<Vec<Image>> {
    strategy.validate()?;
    let decoded = match quality {
        Quality::Clean => images.to_vec(),
        Quality::Jpeg(q) => par::try_map(images, |im| roundtrip(im, q))?,
    };
    let skip = quality == Quality::Clean && strategy.skip_on_uncompressed;
    match (&strategy.ac_model, strategy.kind.uses_ac() && !skip) {
        (Some(ac), true) if !decoded.is_empty() => {
            // group by size so each corrector pass sees one shape
            if decoded.iter().all(|im| im.same_dims(&decoded[0])) {
                correct_images(ac, &decoded)
            } else {
                decoded.iter().map(|im| correct_images(ac, std::slice::from_ref(im)).map(|mut v| v.remove(0))).collect()
            }
        }
        _ => Ok(decoded),
    }
}

pub fn apply(strategy: &MitigationStrategy, image: &Image, quality: Quality) -> Result<Image> {
    Ok(apply_batch(strategy, std::slice::from_ref(image), quality)?.remove(0))
}
