//! Pixel-wise confusion matrices and accuracy reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMap;

/// `counts[t * n + p]` pixels with ground truth `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: &[&str]) -> Self {
        let n = class_names.len();
        Self {
            n_classes: n,
            class_names: class_names.iter().map(|s| s.to_string()).collect(),
            counts: vec![0; n * n],
        }
    }

    /// Classes named `0..n`.
    pub fn unnamed(n: usize) -> Self {
        let names: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        Self {
            n_classes: n,
            class_names: names,
            counts: vec![0; n * n],
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth * self.n_classes..(truth + 1) * self.n_classes].iter().sum()
    }

    /// Entrywise sum; the matrix of a disjoint union of pixel sets.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Shape(format!(
                "cannot merge {}-class and {}-class matrices",
                self.n_classes, other.n_classes
            )));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Adds one prediction/ground-truth pair, skipping `ignore` pixels.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap, ignore: Option<u8>) -> Result<()> {
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        let n = self.n_classes;
        let mut local = vec![0u64; n * n];
        for (i, (&p, &t)) in pred.data().iter().zip(gt.data()).enumerate() {
            if Some(t) == ignore {
                continue;
            }
            if t as usize >= n || p as usize >= n {
                let (x, y) = (i % gt.width(), i / gt.width());
                return Err(Error::Label(format!(
                    "pixel ({x}, {y}): truth {t}, prediction {p}, {n} classes"
                )));
            }
            local[t as usize * n + p as usize] += 1;
        }
        self.counts.iter_mut().zip(&local).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\pred");
        for name in &self.class_names {
            write!(out, ",{name}").unwrap();
        }
        out.push('\n');
        for t in 0..self.n_classes {
            out.push_str(&self.class_names[t]);
            for p in 0..self.n_classes {
                write!(out, ",{}", self.get(t, p)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(pred: &LabelMap, gt: &LabelMap, n_classes: usize, ignore: Option<u8>) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::unnamed(n_classes);
    cm.accumulate(pred, gt, ignore)?;
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    /// Ground-truth pixels of this class.
    pub pixels: u64,
    /// `None` when the class has no ground-truth pixels.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub per_class: Vec<ClassAccuracy>,
    /// Mean recall over classes present in the ground truth.
    pub macro_average: f64,
    pub pixel_accuracy: f64,
}

pub fn accuracies(cm: &ConfusionMatrix) -> Result<Accuracies> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class: Vec<ClassAccuracy> = (0..cm.n_classes)
        .map(|t| {
            let pixels = cm.row_total(t);
            let recall = (pixels > 0).then(|| cm.get(t, t) as f64 / pixels as f64);
            if recall.is_none() {
                log::warn!("class {} has no ground-truth pixels; excluded from the average", cm.class_names[t]);
            }
            ClassAccuracy {
                class: cm.class_names[t].clone(),
                pixels,
                recall,
            }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|c| c.recall).collect();
    Ok(Accuracies {
        macro_average: present.iter().sum::<f64>() / present.len() as f64,
        pixel_accuracy: cm.trace() as f64 / total as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub pixels: u64,
    pub accuracies: Accuracies,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn new(images: usize, confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            images,
            pixels: confusion.total(),
            accuracies: accuracies(&confusion)?,
            confusion,
        })
    }

    /// Per-class table followed by the macro average and pixel accuracy.
    pub fn to_text(&self) -> String {
        let width = self.confusion.class_names.iter().map(|s| s.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>10}  {:>9}\n", "class", "pixels", "accuracy");
        for c in &self.accuracies.per_class {
            let acc = c.recall.map_or("n/a".to_string(), |r| format!("{:.1}%", 100.0 * r));
            writeln!(out, "{:<width$}  {:>10}  {:>9}", c.class, c.pixels, acc).unwrap();
        }
        writeln!(out, "average accuracy of {:.1}%", 100.0 * self.accuracies.macro_average).unwrap();
        writeln!(
            out,
            "overall pixel accuracy of {:.1}% over {} pixels in {} images",
            100.0 * self.accuracies.pixel_accuracy,
            self.pixels,
            self.images
        )
        .unwrap();
        out
    }
}
