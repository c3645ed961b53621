use crate::error::{ensure, Result};
use crate::jpeg::{Image, Mask};

/// Images with class labels and, optionally, per-pixel masks
/// (0 = background, `label + 1` = object).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub masks: Option<Vec<Mask>>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        images: Vec<Image>,
        labels: Vec<usize>,
        masks: Option<Vec<Mask>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        ensure!(images.len() == labels.len(), "{} images but {} labels", images.len(), labels.len());
        ensure!(!class_names.is_empty(), "dataset needs at least one class");
        ensure!(
            labels.iter().all(|&l| l < class_names.len()),
            "label out of range for {} classes",
            class_names.len()
        );
        if let Some(m) = &masks {
            ensure!(m.len() == images.len(), "{} masks for {} images", m.len(), images.len());
            for (im, mk) in images.iter().zip(m) {
                ensure!(mk.width == im.width() && mk.height == im.height(), "mask dims differ from image");
                ensure!(
                    mk.data.iter().all(|&v| (v as usize) <= class_names.len()),
                    "mask value out of range"
                );
            }
        }
        Ok(Self { id: id.into(), images, labels, masks, class_names })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Classes for segmentation, background included.
    pub fn num_seg_classes(&self) -> usize {
        self.class_names.len() + 1
    }

    /// Subset by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            id: self.id.clone(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            masks: self.masks.as_ref().map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
            class_names: self.class_names.clone(),
        }
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}
