//! Labeled image datasets.

use crate::error::{Error, Result};
use crate::imgcore::{derive_seed, Image, Rng};

/// An immutable collection of uniformly sized images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Build a dataset, enforcing equal lengths, uniform dimensions and
    /// `label < num_classes` for every sample.
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid("dataset needs at least 2 classes"));
        }
        let dims = images[0].dims();
        if images.iter().any(|img| img.dims() != dims) {
            return Err(Error::invalid("all images must share the same dimensions"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `(height, width, channels)` shared by every image.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.images[0].dims()
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Image, usize)> {
        self.images.iter().zip(self.labels.iter().copied())
    }

    /// Seeded sample of `n` items without replacement (identity when
    /// `n >= len`). Selected indices are kept in ascending order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("subsample size must be at least 1"));
        }
        if n >= self.len() {
            return Ok(self.clone());
        }
        let mut rng = Rng::new(derive_seed(seed, "subsample", 0));
        let mut pool: Vec<usize> = (0..self.len()).collect();
        for i in 0..n {
            let j = i + rng.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut chosen = pool[..n].to_vec();
        chosen.sort_unstable();
        let images = chosen.iter().map(|&i| self.images[i].clone()).collect();
        let labels = chosen.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(images, labels, self.num_classes)
    }

    /// Replace image `i` and its label, returning a new dataset.
    pub(crate) fn with_replaced(&self, replacements: Vec<(usize, Image, usize)>) -> Result<Self> {
        let mut images = self.images.clone();
        let mut labels = self.labels.clone();
        for (i, img, label) in replacements {
            images[i] = img;
            labels[i] = label;
        }
        LabeledDataset::new(images, labels, self.num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> LabeledDataset {
        let images = (0..n)
            .map(|i| Image::filled(4, 4, 1, i as u8).unwrap())
            .collect();
        let labels = (0..n).map(|i| i % 3).collect();
        LabeledDataset::new(images, labels, 3).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        let a = Image::filled(4, 4, 1, 0).unwrap();
        let b = Image::filled(5, 4, 1, 0).unwrap();
        assert!(LabeledDataset::new(vec![], vec![], 2).is_err());
        assert!(LabeledDataset::new(vec![a.clone()], vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![a.clone(), b], vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![a], vec![5], 2).is_err());
    }

    #[test]
    fn subsample_is_deterministic_and_sized() {
        let ds = tiny(20);
        let a = ds.subsample(7, 99).unwrap();
        let b = ds.subsample(7, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        assert_eq!(ds.subsample(50, 1).unwrap().len(), 20);
    }
}
