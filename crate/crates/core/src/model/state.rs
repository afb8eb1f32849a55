use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{LayerSpec, NetworkSpec, PriorSpec};

/// Weights and biases of every layer. Dense weights are `d_out × d_in`,
/// convolution filters are packed as `C_out × (C_in·H_f·W_f)`, and pooling
/// layers hold empty placeholders.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

fn weight_shape(layer: &LayerSpec) -> (usize, usize) {
    match layer {
        LayerSpec::Dense {
            in_width, out_width, ..
        } => (*out_width, *in_width),
        LayerSpec::Conv(c) => (c.channels_out, c.packed_len()),
        LayerSpec::Pool(_) => (0, 0),
    }
}

fn bias_len(layer: &LayerSpec) -> usize {
    match layer {
        LayerSpec::Dense { out_width, .. } => *out_width,
        LayerSpec::Conv(c) => c.channels_out,
        LayerSpec::Pool(_) => 0,
    }
}

impl Params {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            weights: spec
                .layers
                .iter()
                .map(|l| {
                    let (r, c) = weight_shape(l);
                    DMatrix::zeros(r, c)
                })
                .collect(),
            biases: spec.layers.iter().map(|l| DVector::zeros(bias_len(l))).collect(),
        }
    }

    /// Draw from the Gaussian prior. Layers without bias keep a zero bias.
    pub fn sample_prior<R: Rng + ?Sized>(spec: &NetworkSpec, prior: &PriorSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for k in 0..spec.depth() {
            let sw = prior.lambda_w[k].recip().sqrt();
            p.weights[k].apply(|w| *w = sw * rng.sample::<f64, _>(StandardNormal));
            if spec.has_bias(k) {
                let sb = prior.lambda_b[k].recip().sqrt();
                p.biases[k].apply(|b| *b = sb * rng.sample::<f64, _>(StandardNormal));
            }
        }
        p
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        if self.weights.len() != spec.depth() || self.biases.len() != spec.depth() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers of parameters, got {} weights and {} biases",
                spec.depth(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (k, layer) in spec.layers.iter().enumerate() {
            let shape = weight_shape(layer);
            if self.weights[k].shape() != shape || self.biases[k].len() != bias_len(layer) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k}: weight {:?} (want {:?}), bias {} (want {})",
                    self.weights[k].shape(),
                    shape,
                    self.biases[k].len(),
                    bias_len(layer)
                )));
            }
        }
        Ok(())
    }

    pub fn squared_norm(&self, layer: usize) -> f64 {
        self.weights[layer].norm_squared()
    }

    /// Number of free coordinates: all weights, plus biases where enabled.
    pub fn flat_len(&self, spec: &NetworkSpec) -> usize {
        (0..self.weights.len())
            .map(|k| self.weights[k].len() + if spec.has_bias(k) { self.biases[k].len() } else { 0 })
            .sum()
    }

    /// Concatenate weights (column-major) and enabled biases, layer by layer.
    pub fn to_flat(&self, spec: &NetworkSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len(spec));
        for k in 0..self.weights.len() {
            out.extend_from_slice(self.weights[k].as_slice());
            if spec.has_bias(k) {
                out.extend_from_slice(self.biases[k].as_slice());
            }
        }
        out
    }

    /// Inverse of [`Params::to_flat`]; returns the number of values consumed.
    pub fn read_flat(&mut self, spec: &NetworkSpec, flat: &[f64]) -> usize {
        let mut at = 0;
        for k in 0..self.weights.len() {
            let n = self.weights[k].len();
            self.weights[k].as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
            if spec.has_bias(k) {
                let m = self.biases[k].len();
                self.biases[k].as_mut_slice().copy_from_slice(&flat[at..at + m]);
                at += m;
            }
        }
        at
    }
}

/// Full state of an intermediate-noise chain.
///
/// `z[k]` is the noisy output of layer `k`. Layers followed by an activation
/// feed the next layer through `x`, the noisy post-activation; in an MLP
/// `x[k] = σ(z[k]) + ε`. A layer followed by pooling feeds `z[k]` directly.
/// The last `z` is the label matrix for regression (clamped) and the latent
/// class scores for probit output.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub params: Params,
    pub x: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
}

impl ChainState {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.z[self.z.len() - 1]
    }

    /// All-zero latents and parameters. Under probit output the class scores
    /// are one-hot on the label so that the argmax constraint holds.
    pub fn zeros(spec: &NetworkSpec, n: usize, targets: &Targets) -> Result<Self> {
        let params = Params::zeros(spec);
        let x = (0..spec.depth())
            .filter(|&k| spec.activation_after(k))
            .map(|k| DMatrix::zeros(n, spec.layers[k].out_len()))
            .collect();
        let mut z: Vec<DMatrix<f64>> = spec.layers.iter().map(|l| DMatrix::zeros(n, l.out_len())).collect();
        let last = z.len() - 1;
        z[last] = initial_output(targets, spec.output_width(), n)?;
        Ok(Self { params, x, z })
    }

    pub fn check_shapes(&self, spec: &NetworkSpec, n: usize) -> Result<()> {
        self.params.check_shapes(spec)?;
        let x_count = (0..spec.depth()).filter(|&k| spec.activation_after(k)).count();
        if self.z.len() != spec.depth() || self.x.len() != x_count {
            return Err(Error::ShapeMismatch(format!(
                "state has {} z and {} x blocks, network needs {} and {}",
                self.z.len(),
                self.x.len(),
                spec.depth(),
                x_count
            )));
        }
        for (k, layer) in spec.layers.iter().enumerate() {
            if self.z[k].shape() != (n, layer.out_len()) {
                return Err(Error::ShapeMismatch(format!(
                    "z[{k}] is {:?}, want ({n}, {})",
                    self.z[k].shape(),
                    layer.out_len()
                )));
            }
            if let Some(slot) = spec.x_slot(k) {
                if self.x[slot].shape() != (n, layer.out_len()) {
                    return Err(Error::ShapeMismatch(format!("x[{slot}] has the wrong shape")));
                }
            }
        }
        Ok(())
    }

    /// Number of samples whose class scores violate the argmax constraint.
    pub fn probit_violations(&self, labels: &[usize]) -> usize {
        let out = self.output();
        labels
            .iter()
            .enumerate()
            .filter(|(mu, &y)| argmax_row(out, *mu) != y || !strict_max(out, *mu, y))
            .count()
    }
}

fn strict_max(m: &DMatrix<f64>, row: usize, y: usize) -> bool {
    (0..m.ncols()).all(|c| c == y || m[(row, c)] < m[(row, y)])
}

fn initial_output(targets: &Targets, width: usize, n: usize) -> Result<DMatrix<f64>> {
    match targets {
        Targets::Regression(y) => {
            if y.shape() != (n, width) {
                return Err(Error::ShapeMismatch(format!(
                    "targets are {:?}, want ({n}, {width})",
                    y.shape()
                )));
            }
            Ok(y.clone())
        }
        Targets::Classes(labels) => {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!("{} labels for {n} samples", labels.len())));
            }
            let mut z = DMatrix::zeros(n, width);
            for (mu, &y) in labels.iter().enumerate() {
                if y >= width {
                    return Err(Error::ShapeMismatch(format!(
                        "label {y} out of range for {width} classes"
                    )));
                }
                z[(mu, y)] = 1.0;
            }
            Ok(z)
        }
    }
}

/// Index of the largest entry of a row; ties go to the lowest index.
pub fn argmax_row(m: &DMatrix<f64>, row: usize) -> usize {
    let mut best = 0;
    for c in 1..m.ncols() {
        if m[(row, c)] > m[(row, best)] {
            best = c;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Regression(DMatrix<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.nrows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Targets::Classes(c) => Some(c),
            Targets::Regression(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub inputs: DMatrix<f64>,
    pub targets: Targets,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Option<Split>,
    /// The generating state, when the data are synthetic.
    pub teacher: Option<ChainState>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        for split in std::iter::once(&self.train).chain(self.test.as_ref()) {
            if split.inputs.ncols() != spec.input_width() {
                return Err(Error::ShapeMismatch(format!(
                    "inputs have {} columns, network expects {}",
                    split.inputs.ncols(),
                    spec.input_width()
                )));
            }
            if split.targets.len() != split.inputs.nrows() {
                return Err(Error::ShapeMismatch("input and target counts differ".into()));
            }
            match (&split.targets, spec.classes()) {
                (Targets::Classes(labels), Some(c)) => {
                    if let Some(bad) = labels.iter().find(|&&y| y >= c) {
                        return Err(Error::ShapeMismatch(format!(
                            "label {bad} out of range for {c} classes"
                        )));
                    }
                }
                (Targets::Regression(y), None) => {
                    if y.ncols() != spec.output_width() {
                        return Err(Error::ShapeMismatch("target width differs from output width".into()));
                    }
                }
                _ => return Err(Error::InvalidConfig("targets do not match the output model".into())),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, OutputModel};
    use crate::rng::RngStream;

    #[test]
    fn flat_round_trip() {
        let spec = NetworkSpec::mlp(&[3, 4, 2], Activation::Relu, OutputModel::GaussianRegression, true).unwrap();
        let prior = PriorSpec::uniform(2, 1.0, 1.0);
        let p = Params::sample_prior(&spec, &prior, &mut RngStream::new(1, 0));
        let flat = p.to_flat(&spec);
        assert_eq!(flat.len(), spec.parameter_count());
        let mut q = Params::zeros(&spec);
        assert_eq!(q.read_flat(&spec, &flat), flat.len());
        assert_eq!(p, q);
    }

    #[test]
    fn zero_state_satisfies_probit_constraint() {
        let spec = NetworkSpec::mlp(
            &[2, 3, 3],
            Activation::Relu,
            OutputModel::MultinomialProbit { classes: 3 },
            false,
        )
        .unwrap();
        let labels = vec![0, 2, 1, 2];
        let s = ChainState::zeros(&spec, 4, &Targets::Classes(labels.clone())).unwrap();
        s.check_shapes(&spec, 4).unwrap();
        assert_eq!(s.probit_violations(&labels), 0);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        let m = DMatrix::from_row_slice(1, 3, &[0.5, 0.7, 0.7]);
        assert_eq!(argmax_row(&m, 0), 1);
    }
}
