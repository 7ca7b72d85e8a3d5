//! Fully connected networks with sine or rectifier hidden activations and a
//! linear output layer, in 64-bit floats.
//!
//! Batches are column matrices: one sample per column.

mod io;
mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Vec3;

pub use io::{
    load_model, load_model_expecting, model_from_bytes, model_to_bytes, save_model,
    MODEL_FORMAT_VERSION,
};
pub use train::{evaluate, learning_rate, train, train_arrays, Adam, EpochLoss, TrainConfig};

/// Sine frequency used unless configured otherwise. With tens of training
/// Sun directions, `w0 = 30` fits the training directions but not the
/// ones in between; `10` does both.
pub const DEFAULT_SINE_W0: f64 = 10.0;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite value in input column {0}")]
    NonFiniteInput(usize),
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Format(String),
    #[error("model format version {found}, expected {MODEL_FORMAT_VERSION}")]
    Version { found: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sine,
    Rectifier,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Rectifier => "rectifier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sine" | "siren" => Some(Activation::Sine),
            "rectifier" | "relu" => Some(Activation::Rectifier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Frequency `w0` of every sine layer, `a = sin(w0 · z)`.
    pub w0: f64,
    pub init_seed: u64,
    /// Feed positions to the network unprojected at inference.
    pub raw_positions: bool,
}

impl MlpConfig {
    /// `6 -> widths -> 1` network with `w0 = DEFAULT_SINE_W0`.
    pub fn eclipse(hidden: Vec<usize>, activation: Activation, init_seed: u64) -> Self {
        Self {
            input_dim: 6,
            hidden,
            output_dim: 1,
            activation,
            w0: DEFAULT_SINE_W0,
            init_seed,
            raw_positions: false,
        }
    }

    /// Three hidden layers of 32.
    pub fn small(activation: Activation, init_seed: u64) -> Self {
        Self::eclipse(vec![32, 32, 32], activation, init_seed)
    }

    /// Four hidden layers of 128.
    pub fn large(activation: Activation, init_seed: u64) -> Self {
        Self::eclipse(vec![128, 128, 128, 128], activation, init_seed)
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(NetError::Config("layer widths must be positive".into()));
        }
        if self.activation == Activation::Sine && !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(NetError::Config(format!(
                "w0 = {} must be positive",
                self.w0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_out x fan_in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Layer>,
    /// Per-epoch losses of every training run so far.
    pub history: Vec<EpochLoss>,
}

/// Gradients with the same layout as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Row-major `W` then `b`, layer by layer (same order as [`MlpModel::params_flat`]).
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Intermediate values of a forward pass kept for backpropagation.
struct Trace {
    /// Layer inputs; `inputs[0]` is the batch itself.
    inputs: Vec<DMatrix<f64>>,
    /// Activation derivatives at each hidden pre-activation.
    slopes: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

/// Weight and bias draws for a fresh model; deterministic per `init_seed`.
pub fn init_model(config: &MlpConfig) -> Result<MlpModel, NetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut layers = Vec::new();
    for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
        let fi = fan_in as f64;
        let (w_bound, b_bound) = match config.activation {
            Activation::Sine if l == 0 => (1.0 / fi, 1.0 / fi.sqrt()),
            Activation::Sine => ((6.0 / fi).sqrt() / config.w0, 1.0 / fi.sqrt()),
            Activation::Rectifier => ((6.0 / fi).sqrt(), 0.0),
        };
        let mut w = DMatrix::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            for c in 0..fan_in {
                w[(r, c)] = rng.random_range(-w_bound..=w_bound);
            }
        }
        let b = if b_bound > 0.0 {
            DVector::from_fn(fan_out, |_, _| rng.random_range(-b_bound..=b_bound))
        } else {
            DVector::zeros(fan_out)
        };
        layers.push(Layer { w, b });
    }
    Ok(MlpModel {
        config: config.clone(),
        layers,
        history: Vec::new(),
    })
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in layers {
        for r in 0..layer.w.nrows() {
            for c in 0..layer.w.ncols() {
                out.push(layer.w[(r, c)]);
            }
        }
        out.extend(layer.b.iter());
    }
    out
}

impl MlpModel {
    /// Model with explicit parameters; shapes must match `config`.
    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self, NetError> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len() {
            return Err(NetError::Shape(format!(
                "{} layers given, configuration has {}",
                layers.len(),
                dims.len()
            )));
        }
        for (k, ((fi, fo), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.w.shape() != (*fo, *fi) || layer.b.len() != *fo {
                return Err(NetError::Shape(format!("layer {k} is not {fo}x{fi}")));
            }
        }
        if layers
            .iter()
            .any(|l| !l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
        {
            return Err(NetError::Format("non-finite parameter".into()));
        }
        Ok(Self {
            config,
            layers,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::Shape(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for r in 0..layer.w.nrows() {
                for c in 0..layer.w.ncols() {
                    layer.w[(r, c)] = it.next().unwrap();
                }
            }
            for v in layer.b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), NetError> {
        if x.nrows() != self.config.input_dim {
            return Err(NetError::Shape(format!(
                "input has {} rows, expected {}",
                x.nrows(),
                self.config.input_dim
            )));
        }
        for (c, col) in x.column_iter().enumerate() {
            if !col.iter().all(|v| v.is_finite()) {
                return Err(NetError::NonFiniteInput(c));
            }
        }
        Ok(())
    }

    fn trace(&self, x: &DMatrix<f64>) -> Trace {
        let last = self.layers.len() - 1;
        let w0 = self.config.w0;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut slopes = Vec::with_capacity(last);
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            inputs.push(a);
            if l == last {
                return Trace {
                    inputs,
                    slopes,
                    output: z,
                };
            }
            let mut slope = DMatrix::zeros(z.nrows(), z.ncols());
            match self.config.activation {
                Activation::Sine => {
                    for (v, s) in z.iter_mut().zip(slope.iter_mut()) {
                        let (sin, cos) = (w0 * *v).sin_cos();
                        *v = sin;
                        *s = w0 * cos;
                    }
                }
                Activation::Rectifier => {
                    for (v, s) in z.iter_mut().zip(slope.iter_mut()) {
                        if *v > 0.0 {
                            *s = 1.0;
                        } else {
                            *v = 0.0;
                        }
                    }
                }
            }
            slopes.push(slope);
            a = z;
        }
        unreachable!("networks have at least one layer")
    }

    /// Outputs (`output_dim x batch`) for a batch of input columns.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NetError> {
        self.check_input(x)?;
        Ok(self.trace(x).output)
    }

    /// Pre-activations of every hidden layer, for kink diagnostics.
    pub fn hidden_preactivations(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>, NetError> {
        self.check_input(x)?;
        let mut out = Vec::new();
        let mut a = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = &layer.w * &a;
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            out.push(z.clone());
            a = match self.config.activation {
                Activation::Sine => z.map(|v| (self.config.w0 * v).sin()),
                Activation::Rectifier => z.map(|v| v.max(0.0)),
            };
        }
        Ok(out)
    }

    /// Mean squared error over all outputs and its gradient.
    pub fn backward(
        &self,
        x: &DMatrix<f64>,
        targets: &DMatrix<f64>,
    ) -> Result<(Gradients, f64), NetError> {
        self.check_input(x)?;
        if x.ncols() == 0 {
            return Err(NetError::EmptyDataset);
        }
        if targets.shape() != (self.config.output_dim, x.ncols()) {
            return Err(NetError::Shape("targets do not match the batch".into()));
        }
        let trace = self.trace(x);
        let Trace {
            inputs,
            slopes,
            output,
        } = trace;
        let residual = output - targets;
        let n = residual.len() as f64;
        let loss = residual.norm_squared() / n;
        let mut delta = residual * (2.0 / n);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a_prev = &inputs[l];
            let gw = &delta * a_prev.transpose();
            let gb = delta.column_sum();
            if l > 0 {
                let mut back = self.layers[l].w.tr_mul(&delta);
                back.component_mul_assign(&slopes[l - 1]);
                delta = back;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }

    /// Batched prediction of the first output for 6-vector inputs.
    pub fn predict(&self, inputs: &[[f64; 6]]) -> Result<Vec<f64>, NetError> {
        const CHUNK: usize = 1024;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(CHUNK) {
            let x = DMatrix::from_fn(6, chunk.len(), |r, c| chunk[c][r]);
            let y = self.forward(&x)?;
            out.extend(y.row(0).iter());
        }
        Ok(out)
    }

    /// Single-sample forward pass without matrix allocation.
    pub fn predict_one(&self, input: &[f64]) -> f64 {
        let mut a: Vec<f64> = input.to_vec();
        let mut z: Vec<f64> = Vec::new();
        let last = self.layers.len() - 1;
        let w0 = self.config.w0;
        for (l, layer) in self.layers.iter().enumerate() {
            z.clear();
            z.extend(layer.b.iter());
            for (c, &ac) in a.iter().enumerate() {
                let col = layer.w.column(c);
                for (zr, wr) in z.iter_mut().zip(col.iter()) {
                    *zr += wr * ac;
                }
            }
            if l < last {
                match self.config.activation {
                    Activation::Sine => z.iter_mut().for_each(|v: &mut f64| *v = (w0 * *v).sin()),
                    Activation::Rectifier => z.iter_mut().for_each(|v: &mut f64| *v = v.max(0.0)),
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// Network input for a body-frame position and Sun direction.
    pub fn input_for(&self, position: &Vec3, s_hat: &Vec3) -> [f64; 6] {
        let p = if self.config.raw_positions {
            *position
        } else {
            position - s_hat * position.dot(s_hat)
        };
        [p.x, p.y, p.z, s_hat.x, s_hat.y, s_hat.z]
    }
}

/// Predicted `F` at `position` for Sun direction `s_hat`. Positions are
/// projected onto the plane through the origin orthogonal to `s_hat`
/// unless the model was configured with `raw_positions`.
pub fn infer_f(model: &MlpModel, position: &Vec3, s_hat: &Vec3) -> f64 {
    model.predict_one(&model.input_for(position, s_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_sizes() {
        assert_eq!(MlpConfig::small(Activation::Sine, 0).param_count(), 2369);
        assert_eq!(MlpConfig::large(Activation::Sine, 0).param_count(), 50561);
        let m = init_model(&MlpConfig::small(Activation::Rectifier, 0)).unwrap();
        assert_eq!(m.param_count(), 2369);
        assert_eq!(m.params_flat().len(), 2369);
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let cfg = MlpConfig::eclipse(vec![4, 4], Activation::Sine, 1);
        let mut m = init_model(&cfg).unwrap();
        for l in m.layers_mut() {
            l.w.fill(0.0);
        }
        m.layers_mut()[2].b[0] = 0.375;
        let x = DMatrix::from_fn(6, 5, |r, c| (r * 7 + c) as f64 * 0.1 - 1.0);
        let y = m.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.375));
    }

    #[test]
    fn single_linear_layer_by_hand() {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden: vec![],
            output_dim: 2,
            activation: Activation::Rectifier,
            w0: 30.0,
            init_seed: 0,
            raw_positions: false,
        };
        let layer = Layer {
            w: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]),
            b: DVector::from_vec(vec![0.25, -1.0]),
        };
        let m = MlpModel::from_layers(cfg, vec![layer]).unwrap();
        let y = m
            .forward(&DMatrix::from_column_slice(2, 1, &[3.0, -0.5]))
            .unwrap();
        assert_eq!(y[(0, 0)], 3.25);
        assert_eq!(y[(1, 0)], -0.5);
    }

    #[test]
    fn batch_columns_are_independent() {
        let m = init_model(&MlpConfig::small(Activation::Sine, 4)).unwrap();
        let col = [0.1, -0.2, 0.3, 0.0, 0.6, 0.8];
        let x = DMatrix::from_fn(6, 256, |r, _| col[r]);
        let y = m.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == y[(0, 0)]));
        assert!((m.predict_one(&col) - y[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = init_model(&MlpConfig::small(Activation::Sine, 4)).unwrap();
        let mut x = DMatrix::zeros(6, 3);
        x[(2, 1)] = f64::NAN;
        assert!(matches!(m.forward(&x), Err(NetError::NonFiniteInput(1))));
    }

    #[test]
    fn perfect_predictions_have_zero_gradient() {
        let m = init_model(&MlpConfig::eclipse(vec![8, 8], Activation::Sine, 2)).unwrap();
        let x = DMatrix::from_fn(6, 16, |r, c| ((r + 3 * c) as f64).sin());
        let y = m.forward(&x).unwrap();
        let (g, loss) = m.backward(&x, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn projection_removes_axial_component() {
        let m = init_model(&MlpConfig::small(Activation::Sine, 0)).unwrap();
        let s = Vec3::new(0.0, 0.6, 0.8);
        let p = Vec3::new(0.3, -0.2, 0.1);
        let a = infer_f(&m, &p, &s);
        let b = infer_f(&m, &(p + s * 2.5), &s);
        assert!((a - b).abs() < 1e-12);
    }
}
