//! A small, fully self-contained trainable classifier: flatten, two ReLU
//! hidden layers, softmax output, trained with mini-batch cross-entropy and
//! the Adadelta optimizer. It is the desk-scale stand-in for the full-size
//! convolutional models backdoor attacks usually target; trigger
//! memorization and fine-tune unlearning both manifest at this size.
//!
//! All arithmetic is in 64-bit reals. Inputs are pixel values divided by
//! 255 and centered on the sample's own mean, which keeps predictions
//! stable under global brightness shifts (gamma-space transforms move
//! image brightness a lot). Training is fully determined by
//! `(seed, data, config)`: weight initialization and every epoch's shuffle
//! order derive from the config seed.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::{derive_seed, Image, Rng};

/// Anything that can classify an image.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;
    /// Predicted class index; ties break toward the lowest index.
    fn predict(&self, img: &Image) -> Result<usize>;
}

/// A classifier that can continue training from its current weights.
pub trait TunableClassifier: Classifier + Clone {
    /// Return a fine-tuned copy; the receiver is unchanged.
    fn fine_tuned(&self, ds: &LabeledDataset, epochs: usize, cfg: &TrainConfig) -> Result<Self>;
}

/// Training hyperparameters: Adadelta constants, schedule and layer widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta denominator offset.
    pub epsilon: f64,
    /// Scale applied to every Adadelta update.
    pub lr_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Widths of the two hidden layers.
    pub hidden: (usize, usize),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rho: 0.95,
            epsilon: 1e-6,
            lr_scale: 0.05,
            epochs: 30,
            batch_size: 32,
            hidden: (256, 128),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid("rho must be in (0, 1)"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Two-hidden-layer softmax classifier over flattened pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyClassifier {
    input_dim: usize,
    num_classes: usize,
    // weights are (out x in); biases are (out)
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

/// Magic bytes of the model file.
pub const MODEL_MAGIC: [u8; 4] = *b"SWPK";
/// Model file format version.
pub const MODEL_VERSION: u32 = 1;

struct Optimizer {
    rho: f64,
    eps: f64,
    lr: f64,
    // (acc_grad, acc_delta) per tensor, same order as the weight list
    mats: Vec<(Array2<f64>, Array2<f64>)>,
    vecs: Vec<(Array1<f64>, Array1<f64>)>,
}

impl Optimizer {
    fn new(model: &TinyClassifier, cfg: &TrainConfig) -> Self {
        let zero2 = |a: &Array2<f64>| (Array2::zeros(a.raw_dim()), Array2::zeros(a.raw_dim()));
        let zero1 = |a: &Array1<f64>| (Array1::zeros(a.raw_dim()), Array1::zeros(a.raw_dim()));
        Optimizer {
            rho: cfg.rho,
            eps: cfg.epsilon,
            lr: cfg.lr_scale,
            mats: vec![zero2(&model.w1), zero2(&model.w2), zero2(&model.w3)],
            vecs: vec![zero1(&model.b1), zero1(&model.b2), zero1(&model.b3)],
        }
    }

    fn step2(&mut self, slot: usize, param: &mut Array2<f64>, grad: &Array2<f64>) {
        let (acc_g, acc_d) = &mut self.mats[slot];
        let (rho, eps, lr) = (self.rho, self.eps, self.lr);
        Zip::from(param).and(grad).and(acc_g).and(acc_d).for_each(|p, &g, ag, ad| {
            *ag = rho * *ag + (1.0 - rho) * g * g;
            let delta = -((*ad + eps).sqrt() / (*ag + eps).sqrt()) * g;
            *ad = rho * *ad + (1.0 - rho) * delta * delta;
            *p += lr * delta;
        });
    }

    fn step1(&mut self, slot: usize, param: &mut Array1<f64>, grad: &Array1<f64>) {
        let (acc_g, acc_d) = &mut self.vecs[slot];
        let (rho, eps, lr) = (self.rho, self.eps, self.lr);
        Zip::from(param).and(grad).and(acc_g).and(acc_d).for_each(|p, &g, ag, ad| {
            *ag = rho * *ag + (1.0 - rho) * g * g;
            let delta = -((*ad + eps).sqrt() / (*ag + eps).sqrt()) * g;
            *ad = rho * *ad + (1.0 - rho) * delta * delta;
            *p += lr * delta;
        });
    }
}

struct Gradients {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
    /// Loss gradient with respect to the (normalized) inputs.
    dx: Array2<f64>,
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

impl TinyClassifier {
    /// Seeded initialization: weights uniform in `(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in))` drawn row-major per layer, biases zero.
    pub fn init(input_dim: usize, hidden: (usize, usize), num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 || hidden.0 == 0 || hidden.1 == 0 {
            return Err(Error::invalid("degenerate layer dimensions"));
        }
        let mut rng = Rng::new(derive_seed(seed, "init", 0));
        let mut layer = |rows: usize, cols: usize| {
            let scale = 1.0 / (cols as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape matches")
        };
        Ok(TinyClassifier {
            input_dim,
            num_classes,
            w1: layer(hidden.0, input_dim),
            b1: Array1::zeros(hidden.0),
            w2: layer(hidden.1, hidden.0),
            b2: Array1::zeros(hidden.1),
            w3: layer(num_classes, hidden.1),
            b3: Array1::zeros(num_classes),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.w1.nrows(), self.w2.nrows())
    }

    /// Train a fresh classifier on the dataset.
    pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w, c) = ds.dims();
        let mut model = TinyClassifier::init(h * w * c, cfg.hidden, ds.num_classes(), cfg.seed)?;
        model.run_epochs(ds, cfg, cfg.epochs)?;
        Ok(model)
    }

    /// Continue training from the current weights with fresh Adadelta
    /// accumulators; the receiver is unchanged.
    pub fn fine_tune(&self, ds: &LabeledDataset, epochs: usize, cfg: &TrainConfig) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::invalid("fine-tune epochs must be >= 1"));
        }
        cfg.validate()?;
        self.check_dims(ds.dims())?;
        if ds.num_classes() != self.num_classes {
            return Err(Error::invalid(format!(
                "dataset has {} classes, model has {}",
                ds.num_classes(),
                self.num_classes
            )));
        }
        let mut tuned = self.clone();
        tuned.run_epochs(ds, cfg, epochs)?;
        Ok(tuned)
    }

    fn check_dims(&self, dims: (usize, usize, usize)) -> Result<()> {
        let (h, w, c) = dims;
        if h * w * c != self.input_dim {
            return Err(Error::invalid(format!(
                "input {}x{}x{} does not match model input dim {}",
                h, w, c, self.input_dim
            )));
        }
        Ok(())
    }

    fn run_epochs(&mut self, ds: &LabeledDataset, cfg: &TrainConfig, epochs: usize) -> Result<()> {
        let mut optimizer = Optimizer::new(self, cfg);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        for epoch in 0..epochs {
            let mut rng = Rng::new(derive_seed(cfg.seed, "shuffle", epoch as u64));
            rng.shuffle(&mut order);
            for batch in order.chunks(cfg.batch_size) {
                let x = self.batch_inputs(ds, batch);
                let y: Vec<usize> = batch.iter().map(|&i| ds.label(i)).collect();
                let grads = self.backward(&x, &y);
                optimizer.step2(0, &mut self.w1, &grads.w1);
                optimizer.step1(0, &mut self.b1, &grads.b1);
                optimizer.step2(1, &mut self.w2, &grads.w2);
                optimizer.step1(1, &mut self.b2, &grads.b2);
                optimizer.step2(2, &mut self.w3, &grads.w3);
                optimizer.step1(2, &mut self.b3, &grads.b3);
            }
        }
        Ok(())
    }

    /// Input featurization: scale to `[0, 1]` and center each sample on
    /// its own mean, so a global brightness shift does not move the
    /// representation.
    fn fill_input_row(&self, mut row: ndarray::ArrayViewMut1<f64>, img: &Image) {
        let mut mean = 0.0;
        for &v in img.data() {
            mean += v as f64;
        }
        mean /= 255.0 * self.input_dim as f64;
        for (col, &v) in img.data().iter().enumerate() {
            row[col] = v as f64 / 255.0 - mean;
        }
    }

    fn batch_inputs(&self, ds: &LabeledDataset, indices: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((indices.len(), self.input_dim));
        for (row, &i) in indices.iter().enumerate() {
            self.fill_input_row(x.row_mut(row), ds.image(i));
        }
        x
    }

    fn image_input(&self, img: &Image) -> Result<Array2<f64>> {
        self.check_dims(img.dims())?;
        let mut x = Array2::zeros((1, self.input_dim));
        self.fill_input_row(x.row_mut(0), img);
        Ok(x)
    }

    /// Forward pass returning softmax probabilities per row.
    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut a1 = x.dot(&self.w1.t()) + &self.b1;
        relu_inplace(&mut a1);
        let mut a2 = a1.dot(&self.w2.t()) + &self.b2;
        relu_inplace(&mut a2);
        let z3 = a2.dot(&self.w3.t()) + &self.b3;
        let probs = softmax_rows(z3);
        (a1, a2, probs)
    }

    /// Mean cross-entropy and full gradients for a batch.
    fn backward(&self, x: &Array2<f64>, labels: &[usize]) -> Gradients {
        let n = x.nrows();
        let (a1, a2, probs) = self.forward(x);

        // dZ3 = (P - Y) / n
        let mut dz3 = probs;
        for (row, &label) in labels.iter().enumerate() {
            dz3[[row, label]] -= 1.0;
        }
        dz3.mapv_inplace(|v| v / n as f64);

        let dw3 = dz3.t().dot(&a2);
        let db3 = dz3.sum_axis(Axis(0));
        let mut dz2 = dz3.dot(&self.w3);
        Zip::from(&mut dz2).and(&a2).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });

        let dw2 = dz2.t().dot(&a1);
        let db2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.w2);
        Zip::from(&mut dz1).and(&a1).for_each(|d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });

        let dw1 = dz1.t().dot(x);
        let db1 = dz1.sum_axis(Axis(0));
        let dx = dz1.dot(&self.w1);

        Gradients {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
            w3: dw3,
            b3: db3,
            dx,
        }
    }

    /// Softmax probabilities for one image.
    pub fn probabilities(&self, img: &Image) -> Result<Vec<f64>> {
        let x = self.image_input(img)?;
        let (_, _, probs) = self.forward(&x);
        Ok(probs.row(0).to_vec())
    }

    /// Mean gradient of the cross-entropy toward `target` with respect to
    /// raw pixel values (the 1/255 input scaling is folded in).
    pub fn input_gradient(&self, images: &[&Image], target: usize) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Err(Error::invalid("input_gradient needs at least one image"));
        }
        if target >= self.num_classes {
            return Err(Error::invalid("target class out of range"));
        }
        let mut x = Array2::zeros((images.len(), self.input_dim));
        for (row, img) in images.iter().enumerate() {
            self.check_dims(img.dims())?;
            for (col, &v) in img.data().iter().enumerate() {
                x[[row, col]] = v as f64 / 255.0;
            }
        }
        let labels = vec![target; images.len()];
        let grads = self.backward(&x, &labels);
        let mean = grads.dx.mean_axis(Axis(0)).expect("non-empty batch");
        // chain rule through the centering: g_x = (g_z - mean(g_z)) / 255
        let g_mean = mean.sum() / self.input_dim as f64;
        Ok(mean.iter().map(|v| (v - g_mean) / 255.0).collect())
    }

    /// Compare analytic gradients against central finite differences
    /// (step 1e-5) on a seeded subset of `sample_params` parameters;
    /// returns the maximum relative error.
    pub fn grad_check(&self, ds: &LabeledDataset, sample_params: usize, seed: u64) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::invalid("grad_check needs a non-empty batch"));
        }
        self.check_dims(ds.dims())?;
        let indices: Vec<usize> = (0..ds.len()).collect();
        let x = self.batch_inputs(ds, &indices);
        let labels: Vec<usize> = ds.labels().to_vec();

        let analytic = self.backward(&x, &labels);
        let flat_analytic: Vec<&[f64]> = vec![
            analytic.w1.as_slice().unwrap(),
            analytic.b1.as_slice().unwrap(),
            analytic.w2.as_slice().unwrap(),
            analytic.b2.as_slice().unwrap(),
            analytic.w3.as_slice().unwrap(),
            analytic.b3.as_slice().unwrap(),
        ];
        let total: usize = flat_analytic.iter().map(|s| s.len()).sum();

        let mut rng = Rng::new(derive_seed(seed, "gradcheck", 0));
        let step = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = self.clone();
        for _ in 0..sample_params {
            let flat = rng.below(total as u64) as usize;
            let a = {
                let mut offset = flat;
                let mut value = 0.0;
                for slice in &flat_analytic {
                    if offset < slice.len() {
                        value = slice[offset];
                        break;
                    }
                    offset -= slice.len();
                }
                value
            };
            let original = probe.get_flat(flat);
            probe.set_flat(flat, original + step);
            let up = probe.mean_loss(&x, &labels);
            probe.set_flat(flat, original - step);
            let down = probe.mean_loss(&x, &labels);
            probe.set_flat(flat, original);
            let numeric = (up - down) / (2.0 * step);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    fn mean_loss(&self, x: &Array2<f64>, labels: &[usize]) -> f64 {
        let (_, _, probs) = self.forward(x);
        let mut loss = 0.0;
        for (row, &label) in labels.iter().enumerate() {
            loss -= probs[[row, label]].max(1e-300).ln();
        }
        loss / labels.len() as f64
    }

    fn flat_slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.w3.as_slice().unwrap(),
            self.b3.as_slice().unwrap(),
        ]
    }

    fn get_flat(&self, mut flat: usize) -> f64 {
        for slice in self.flat_slices() {
            if flat < slice.len() {
                return slice[flat];
            }
            flat -= slice.len();
        }
        panic!("flat parameter index out of range");
    }

    fn set_flat(&mut self, mut flat: usize, value: f64) {
        let tensors: [&mut [f64]; 6] = [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.w3.as_slice_mut().unwrap(),
            self.b3.as_slice_mut().unwrap(),
        ];
        for slice in tensors {
            if flat < slice.len() {
                slice[flat] = value;
                return;
            }
            flat -= slice.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Serialize to the versioned binary layout: magic, version, layer
    /// dims (u32 LE), then each tensor row-major as f64 LE in the order
    /// w1, b1, w2, b2, w3, b3.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for dim in [
            self.input_dim,
            self.w1.nrows(),
            self.w2.nrows(),
            self.num_classes,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for slice in self.flat_slices() {
            for &v in slice {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 4 + 4 + 4 * 4;
        if bytes.len() < HEADER {
            return Err(Error::format("model file truncated before header"));
        }
        if bytes[..4] != MODEL_MAGIC {
            return Err(Error::format("bad model magic"));
        }
        let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = read_u32(4);
        if version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported model version {version}")));
        }
        let input_dim = read_u32(8) as usize;
        let h1 = read_u32(12) as usize;
        let h2 = read_u32(16) as usize;
        let k = read_u32(20) as usize;
        if input_dim == 0 || h1 == 0 || h2 == 0 || k < 2 {
            return Err(Error::format("degenerate dimensions in model header"));
        }
        let counts = [h1 * input_dim, h1, h2 * h1, h2, k * h2, k];
        let total: usize = counts.iter().sum();
        if bytes.len() != HEADER + total * 8 {
            return Err(Error::format(format!(
                "model file length {} does not match header (expected {})",
                bytes.len(),
                HEADER + total * 8
            )));
        }
        let mut at = HEADER;
        let mut take = |count: usize| {
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()));
                at += 8;
            }
            data
        };
        Ok(TinyClassifier {
            input_dim,
            num_classes: k,
            w1: Array2::from_shape_vec((h1, input_dim), take(counts[0])).unwrap(),
            b1: Array1::from_vec(take(counts[1])),
            w2: Array2::from_shape_vec((h2, h1), take(counts[2])).unwrap(),
            b2: Array1::from_vec(take(counts[3])),
            w3: Array2::from_shape_vec((k, h2), take(counts[4])).unwrap(),
            b3: Array1::from_vec(take(counts[5])),
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        TinyClassifier::from_bytes(&bytes)
    }
}

impl Classifier for TinyClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, img: &Image) -> Result<usize> {
        let probs = self.probabilities(img)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

impl TunableClassifier for TinyClassifier {
    fn fine_tuned(&self, ds: &LabeledDataset, epochs: usize, cfg: &TrainConfig) -> Result<Self> {
        self.fine_tune(ds, epochs, cfg)
    }
}
