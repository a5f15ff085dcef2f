use std::path::{Path, PathBuf};

use super::tensor::Tensor;
use super::train::TrainSample;
use crate::classes::Task;
use crate::error::{Error, Result};
use crate::imageio::{read_labels, read_rgb, RgbImage};

/// RGB bytes to an `H×W×3` tensor in [0, 1].
pub fn image_tensor(img: &RgbImage) -> Tensor<f32> {
    let data = img.data.iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::from_vec(img.height, img.width, 3, data)
}

/// Sorted `*.png` files in `dir`.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Directory holding ground truth for `task`: `labels_<task>/` when present,
/// otherwise `labels/`.
pub fn labels_dir(root: &Path, task: Task) -> PathBuf {
    let specific = root.join(format!("labels_{}", task.name()));
    if specific.is_dir() {
        specific
    } else {
        root.join("labels")
    }
}

#[derive(Debug, Clone)]
pub struct NamedSample {
    pub stem: String,
    pub sample: TrainSample,
}

/// Loads `images/*.png` paired by file stem with label maps for `task`.
pub fn load_dataset(root: &Path, task: Task) -> Result<Vec<NamedSample>> {
    let images = png_files(&root.join("images"))?;
    let labels = labels_dir(root, task);
    let mut out = Vec::with_capacity(images.len());
    for path in images {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let img = read_rgb(&path)?;
        let label_path = labels.join(format!("{stem}.png"));
        let lab = read_labels(&label_path)?;
        if (lab.width(), lab.height()) != (img.width, img.height) {
            return Err(Error::Shape(format!(
                "{}: labels are {}x{}, image is {}x{}",
                label_path.display(),
                lab.width(),
                lab.height(),
                img.width,
                img.height
            )));
        }
        lab.check_range(task.n_classes())?;
        out.push(NamedSample {
            stem,
            sample: TrainSample {
                image: image_tensor(&img),
                labels: lab.data().to_vec(),
            },
        });
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no images under {}", root.join("images").display())));
    }
    Ok(out)
}
