use rand::Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A stack of dense blocks `x ↦ relu(x W + b)`, with no activation after the
/// last block.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Representations of one batch at every depth: `reps[0]` is the input,
/// `reps[ℓ]` the output of block `ℓ`, and the last entry the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub reps: Vec<Tensor>,
}

impl ActivationTrace {
    pub fn input(&self) -> &Tensor {
        &self.reps[0]
    }

    pub fn output(&self) -> &Tensor {
        self.reps.last().expect("trace is never empty")
    }

    pub fn block(&self, l: usize) -> &Tensor {
        &self.reps[l]
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::config(format!(
            "layer sizes need an input and an output dimension, all positive: {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Random initialization, uniform in `±1/√fan_in` for weights and biases.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
            weights.push(Tensor::raw(vec![fan_in, fan_out], draw(fan_in * fan_out)));
            biases.push(Tensor::raw(vec![1, fan_out], draw(fan_out)));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes.windows(2).map(|w| Tensor::zeros(&[w[0], w[1]])).collect(),
            biases: layer_sizes.windows(2).map(|w| Tensor::zeros(&[1, w[1]])).collect(),
        })
    }

    /// Assembles a network from explicit parameters. Weights are
    /// `fan_in × fan_out`, biases `1 × fan_out`.
    pub fn from_parameters(layer_sizes: &[usize], weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let blocks = layer_sizes.len() - 1;
        if weights.len() != blocks || biases.len() != blocks {
            return Err(Error::config(format!(
                "{blocks} blocks need {blocks} weights and biases, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, w) in layer_sizes.windows(2).enumerate() {
            if weights[l].shape() != [w[0], w[1]] {
                return Err(Error::Shape {
                    op: "mlp weights",
                    lhs: weights[l].shape().to_vec(),
                    rhs: vec![w[0], w[1]],
                });
            }
            if biases[l].shape() != [1, w[1]] {
                return Err(Error::Shape {
                    op: "mlp bias",
                    lhs: biases[l].shape().to_vec(),
                    rhs: vec![1, w[1]],
                });
            }
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.weights.len()
    }

    pub fn hidden_blocks(&self) -> usize {
        self.num_blocks() - 1
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Tensor::len).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if !x.is_matrix() || x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "mlp forward",
                lhs: x.shape().to_vec(),
                rhs: vec![x.rows(), self.input_dim()],
            });
        }
        Ok(())
    }

    /// Untraced forward pass, computed directly without the tape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.matmul(w)?;
            let n = z.cols();
            for row in z.data_mut().chunks_mut(n) {
                for (v, bias) in row.iter_mut().zip(b.data()) {
                    *v += bias;
                }
            }
            if l + 1 < self.num_blocks() {
                z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass recording every block's output. Runs on a throwaway tape.
    pub fn forward_traced(&self, x: &Tensor) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let tape = Tape::unchecked();
        let bound = self.bind_constant(&tape);
        let reps = bound.forward(tape.constant(x.clone()))?;
        Ok(ActivationTrace {
            reps: reps.iter().map(|v| (*v.value()).clone()).collect(),
        })
    }

    /// Registers parameters as differentiable leaves.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.leaf(b.clone())).collect(),
        }
    }

    /// Registers parameters as constants (e.g. a frozen teacher).
    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            weights: self.weights.iter().map(|w| tape.constant(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.constant(b.clone())).collect(),
        }
    }

    /// Plain gradient step `θ ← θ − lr · ∂θ`.
    pub fn sgd_step(&mut self, bound: &BoundMlp<'_>, grads: &Gradients, lr: f64) {
        let params = self.weights.iter_mut().zip(&bound.weights).chain(self.biases.iter_mut().zip(&bound.biases));
        for (p, v) in params {
            if let Some(g) = grads.get(*v) {
                for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                    *x -= lr * d;
                }
            }
        }
    }
}

/// Network parameters living on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp<'t> {
    pub weights: Vec<Var<'t>>,
    pub biases: Vec<Var<'t>>,
}

impl<'t> BoundMlp<'t> {
    /// Returns `[x⁰, x¹, …, output]`.
    pub fn forward(&self, x: Var<'t>) -> Result<Vec<Var<'t>>> {
        let tape = x.tape();
        let b = x.value().rows();
        let ones = tape.constant(Tensor::ones(&[b, 1]));
        let mut reps = Vec::with_capacity(self.weights.len() + 1);
        reps.push(x);
        let mut h = x;
        let last = self.weights.len() - 1;
        for (l, (&w, &bias)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = h.matmul(w)?.add(ones.matmul(bias)?)?;
            h = if l < last { z.relu()? } else { z };
            reps.push(h);
        }
        Ok(reps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_traces_are_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap();
        let trace = net.forward_traced(&x).unwrap();
        assert_eq!(trace.len(), 3);
        assert!(trace.reps[1..].iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_linear_block() {
        let w = Tensor::from_rows(&[[1.0, -1.0], [2.0, 0.5]]).unwrap();
        let b = Tensor::from_rows(&[[0.1, -0.2]]).unwrap();
        let net = Mlp::from_parameters(&[2, 2], vec![w], vec![b]).unwrap();
        let x = Tensor::from_rows(&[[1.0, 1.0], [0.0, -2.0]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.1, -0.7, -4.0 + 0.1, -1.0 - 0.2]);
        assert_eq!(net.forward_traced(&x).unwrap().output(), &y);
    }

    #[test]
    fn input_width_mismatch() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&Tensor::zeros(&[2, 2])), Err(Error::Shape { .. })));
    }

    #[test]
    fn initialization_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[16, 8, 2], &mut rng).unwrap();
        assert!(net.weights()[0].max_abs() <= 0.25);
        assert!(net.weights()[1].max_abs() <= 1.0 / 8f64.sqrt());
        assert_eq!(net.parameter_count(), 16 * 8 + 8 + 8 * 2 + 2);
    }
}
