//! Image-folder datasets.
//!
//! Layout under a root directory:
//!
//! ```text
//! classes.txt                      optional, one class name per line
//! <split>/<class>/<index>.ppm      (or .png with the `png` feature)
//! <split>_mask/<class>/<index>.pgm optional per-pixel masks
//! ```
//!
//! Labels come from the class subdirectory. Without `classes.txt` the
//! classes are ordered as the synthetic shapes if every name is one of
//! them, otherwise alphabetically. Samples load in ascending file-stem order
//! (numeric stems compare as numbers).

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::Dataset;
use super::synthetic::SHAPE_NAMES;
use crate::error::{ensure, Error, Result};
use crate::jpeg::pnm::{read_image, read_mask, write_image, write_mask};

const CLASSES_FILE: &str = "classes.txt";

fn is_image(p: &Path) -> bool {
    let ext = p.extension().and_then(|e| e.to_str());
    ext == Some("ppm") || (cfg!(feature = "png") && ext == Some("png"))
}

fn stem_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn subdirs(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(out)
}

fn class_order(root: &Path, found: Vec<String>) -> Result<Vec<String>> {
    let listed = root.join(CLASSES_FILE);
    if listed.is_file() {
        let names: Vec<String> = fs::read_to_string(&listed)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        for f in &found {
            ensure!(names.contains(f), "class directory '{f}' not listed in {CLASSES_FILE}");
        }
        return Ok(names);
    }
    let mut found = found;
    if found.iter().all(|n| SHAPE_NAMES.contains(&n.as_str())) {
        found.sort_by_key(|n| SHAPE_NAMES.iter().position(|s| s == n));
    } else {
        found.sort();
    }
    Ok(found)
}

/// Loads one split of an image-folder dataset.
pub fn load_image_folder(root: &Path, split: &str) -> Result<Dataset> {
    let dir = root.join(split);
    ensure!(dir.is_dir(), "no such dataset split: {}", dir.display());
    let classes = class_order(root, subdirs(&dir)?)?;
    ensure!(!classes.is_empty(), "no class directories under {}", dir.display());
    let mask_root = root.join(format!("{split}_mask"));
    let has_masks = mask_root.is_dir();

    let mut samples: Vec<(String, usize, PathBuf)> = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let cdir = dir.join(class);
        if !cdir.is_dir() {
            continue;
        }
        for entry in fs::read_dir(&cdir)? {
            let path = entry?.path();
            if path.is_file() && is_image(&path) {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                samples.push((stem, label, path));
            }
        }
    }
    ensure!(!samples.is_empty(), "no images under {}", dir.display());
    samples.sort_by(|a, b| stem_order(&a.0, &b.0).then(a.1.cmp(&b.1)));

    let mut images = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut masks = has_masks.then(Vec::new);
    for (stem, label, path) in samples {
        images.push(read_image(&path)?);
        labels.push(label);
        if let Some(m) = masks.as_mut() {
            let mp = mask_root.join(&classes[label]).join(format!("{stem}.pgm"));
            let mask = read_mask(&mp).map_err(|e| match e {
                Error::Io(_) => Error::invalid(format!("missing mask {}", mp.display())),
                other => other,
            })?;
            m.push(mask);
        }
    }
    let id = format!("folder:{}/{split}", root.display());
    Dataset::new(id, images, labels, masks, classes)
}

/// Writes `data` as split `split` under `root`, including `classes.txt`
/// and masks when present. Existing files with the same names are
/// replaced.
pub fn save_image_folder(data: &Dataset, root: &Path, split: &str) -> Result<()> {
    fs::create_dir_all(root)?;
    fs::write(root.join(CLASSES_FILE), data.class_names.join("\n") + "\n")?;
    for class in &data.class_names {
        fs::create_dir_all(root.join(split).join(class))?;
        if data.masks.is_some() {
            fs::create_dir_all(root.join(format!("{split}_mask")).join(class))?;
        }
    }
    for (i, (img, &label)) in data.images.iter().zip(&data.labels).enumerate() {
        let class = &data.class_names[label];
        write_image(&root.join(split).join(class).join(format!("{i:05}.ppm")), img)?;
        if let Some(m) = &data.masks {
            write_mask(&root.join(format!("{split}_mask")).join(class).join(format!("{i:05}.pgm")), &m[i])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, SyntheticDatasetSpec};

    #[test]
    fn save_load_roundtrip() {
        let spec = SyntheticDatasetSpec { n_train: 12, n_eval: 3, size: 16, ..Default::default() };
        let split = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_image_folder(&split.train, dir.path(), "train").unwrap();
        save_image_folder(&split.eval, dir.path(), "eval").unwrap();
        let back = load_image_folder(dir.path(), "train").unwrap();
        assert_eq!(back.images, split.train.images);
        assert_eq!(back.labels, split.train.labels);
        assert_eq!(back.masks, split.train.masks);
        assert_eq!(back.class_names, split.train.class_names);
        assert_eq!(load_image_folder(dir.path(), "eval").unwrap().len(), 3);
    }

    #[test]
    fn alphabetical_without_listing() {
        let dir = tempfile::tempdir().unwrap();
        let img = crate::jpeg::Image::filled(4, 4, [9, 9, 9]).unwrap();
        for c in ["zebra", "apple"] {
            fs::create_dir_all(dir.path().join("train").join(c)).unwrap();
            write_image(&dir.path().join("train").join(c).join("1.ppm"), &img).unwrap();
        }
        let d = load_image_folder(dir.path(), "train").unwrap();
        assert_eq!(d.class_names, vec!["apple", "zebra"]);
        assert_eq!(d.labels, vec![0, 1]);
        assert!(d.masks.is_none());
    }

    #[test]
    fn missing_split() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image_folder(dir.path(), "train"), Err(Error::InvalidArgument(_))));
    }
}
