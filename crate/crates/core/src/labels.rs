//! Per-pixel label and probability maps.

use crate::error::{Error, Result};

/// Hard per-pixel class ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "label map {width}x{height} needs {} entries, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn max_label(&self) -> Option<u8> {
        self.data.iter().copied().max()
    }

    /// Fails with a label error if any entry is `>= n_classes`.
    pub fn check_range(&self, n_classes: usize) -> Result<()> {
        match self.data.iter().position(|&l| l as usize >= n_classes) {
            Some(i) => Err(Error::Label(format!(
                "pixel ({}, {}) has label {} but only {n_classes} classes exist",
                i % self.width,
                i / self.width,
                self.data[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Per-pixel class posteriors, row-major with the class index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    n_classes: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    /// Validates non-negativity and that every pixel sums to one within 1e-6.
    pub fn new(width: usize, height: usize, n_classes: usize, data: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || data.len() != width * height * n_classes {
            return Err(Error::Shape(format!(
                "probability map {width}x{height}x{n_classes} got {} entries",
                data.len()
            )));
        }
        for (i, px) in data.chunks_exact(n_classes).enumerate() {
            let sum: f64 = px.iter().sum();
            if px.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!(
                    "pixel {i} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            n_classes,
            data,
        })
    }

    /// Softmax over the class axis of raw logits laid out like `data`.
    pub fn from_logits(width: usize, height: usize, n_classes: usize, logits: &[f64]) -> Result<Self> {
        if n_classes == 0 || logits.len() != width * height * n_classes {
            return Err(Error::Shape(format!(
                "logits for {width}x{height}x{n_classes} got {} entries",
                logits.len()
            )));
        }
        let mut data = Vec::with_capacity(logits.len());
        for px in logits.chunks_exact(n_classes) {
            let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = data.len();
            let mut sum = 0.0;
            for &z in px {
                let e = (z - max).exp();
                sum += e;
                data.push(e);
            }
            for p in &mut data[start..] {
                *p /= sum;
            }
        }
        Ok(Self {
            width,
            height,
            n_classes,
            data,
        })
    }

    /// One-hot distributions from a hard label map.
    pub fn one_hot(labels: &LabelMap, n_classes: usize) -> Result<Self> {
        labels.check_range(n_classes)?;
        let mut data = vec![0.0; labels.data().len() * n_classes];
        for (i, &l) in labels.data().iter().enumerate() {
            data[i * n_classes + l as usize] = 1.0;
        }
        Ok(Self {
            width: labels.width(),
            height: labels.height(),
            n_classes,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.n_classes;
        &self.data[i..i + self.n_classes]
    }

    pub fn argmax(&self) -> LabelMap {
        let data = self.data.chunks_exact(self.n_classes).map(|px| argmax(px) as u8).collect();
        LabelMap {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
