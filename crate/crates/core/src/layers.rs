//! The fixed model family: stacks of affine layers and elementwise
//! nonlinearities, recorded onto a [`ComputationTape`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngState;
use crate::tape::{ComputationTape, NodeId, ParamKey};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(invalid(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Affine { inputs: usize, outputs: usize },
    Act(Activation),
}

/// An ordered layer composition. The empty stack is the identity map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for layer in &layers {
            if let Layer::Affine { inputs, outputs } = *layer {
                if let Some(w) = width {
                    if w != inputs {
                        return Err(Error::Shape {
                            context: "LayerStack::new",
                            expected: format!("affine input width {w}"),
                            actual: format!("{inputs}"),
                        });
                    }
                }
                if inputs == 0 || outputs == 0 {
                    return Err(invalid("affine layers need nonzero widths"));
                }
                width = Some(outputs);
            }
        }
        Ok(Self { layers })
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `input → hidden[0] → … → hidden[n-1]`, each affine layer followed by `act`.
    pub fn mlp(input: usize, hidden: &[usize], act: Activation) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = input;
        for &h in hidden {
            layers.push(Layer::Affine { inputs: prev, outputs: h });
            layers.push(Layer::Act(act));
            prev = h;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Width expected on input, if the stack contains an affine layer.
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Affine { inputs, .. } => Some(*inputs),
            _ => None,
        })
    }

    /// Width produced for an input of width `input`.
    pub fn output_dim(&self, input: usize) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Affine { outputs, .. } => Some(*outputs),
                _ => None,
            })
            .unwrap_or(input)
    }

    /// Shapes of the parameter blocks in registration order: `W, b` per affine layer.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| match *l {
                Layer::Affine { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
                Layer::Act(_) => vec![],
            })
            .collect()
    }

    /// Uniform `±1/√fan_in` initialization for every block.
    pub fn init_params(&self, rng: &mut RngState) -> Vec<DenseTensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Affine { inputs, outputs } = *layer {
                let bound = 1.0 / (inputs as f64).sqrt();
                let w = (0..inputs * outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
                let b = (0..outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
                out.push(DenseTensor::new(vec![outputs, inputs], w).expect("shape"));
                out.push(DenseTensor::new(vec![outputs], b).expect("shape"));
            }
        }
        out
    }

    /// Evaluate on a `rows × width` matrix without recording a tape.
    pub fn apply(&self, params: &[DenseTensor], x: &DenseTensor) -> Result<DenseTensor> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(Error::Shape {
                context: "LayerStack::apply",
                expected: format!("{shapes:?}"),
                actual: format!("{:?}", params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()),
            });
        }
        let (rows, width) = x.dims2();
        if let Some(want) = self.input_dim() {
            if want != width {
                return Err(Error::Shape {
                    context: "apply input",
                    expected: format!("[batch, {want}]"),
                    actual: format!("{:?}", x.shape()),
                });
            }
        }
        let mut h = DenseTensor::matrix(rows, width, x.data().to_vec())?;
        let mut next = 0;
        for layer in &self.layers {
            match *layer {
                Layer::Affine { inputs, outputs } => {
                    let (w, b) = (&params[next], &params[next + 1]);
                    next += 2;
                    let mut y = crate::tensor::matmul_nt(h.data(), w.data(), rows, inputs, outputs);
                    for row in y.chunks_exact_mut(outputs) {
                        for (v, bias) in row.iter_mut().zip(b.data()) {
                            *v += bias;
                        }
                    }
                    h = DenseTensor::matrix(rows, outputs, y)?;
                }
                Layer::Act(Activation::Relu) => h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
                Layer::Act(Activation::Tanh) => h.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
                Layer::Act(Activation::Identity) => {}
            }
        }
        Ok(h)
    }

    /// Record the stack onto `tape`, registering `params[j]` under
    /// `ParamKey(first_key + j)`.
    pub fn record(
        &self,
        tape: &mut ComputationTape,
        x: NodeId,
        params: &[DenseTensor],
        first_key: usize,
    ) -> Result<NodeId> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() {
            return Err(Error::Shape {
                context: "LayerStack::record",
                expected: format!("{} parameter blocks", shapes.len()),
                actual: format!("{}", params.len()),
            });
        }
        for (j, (p, s)) in params.iter().zip(&shapes).enumerate() {
            if p.shape() != s.as_slice() {
                return Err(Error::Shape {
                    context: "LayerStack::record",
                    expected: format!("block {j} with shape {s:?}"),
                    actual: format!("{:?}", p.shape()),
                });
            }
        }
        let (_, width) = tape.value(x).dims2();
        if let Some(want) = self.input_dim() {
            if want != width {
                return Err(Error::Shape {
                    context: "forward input",
                    expected: format!("[batch, {want}]"),
                    actual: format!("{:?}", tape.value(x).shape()),
                });
            }
        }
        let mut h = x;
        let mut next = 0;
        for layer in &self.layers {
            h = match *layer {
                Layer::Affine { .. } => {
                    let w = tape.param(ParamKey(first_key + next), params[next].clone());
                    let b = tape.param(ParamKey(first_key + next + 1), params[next + 1].clone());
                    next += 2;
                    tape.affine(h, w, b)?
                }
                Layer::Act(Activation::Relu) => tape.relu(h),
                Layer::Act(Activation::Tanh) => tape.tanh(h),
                Layer::Act(Activation::Identity) => h,
            };
        }
        Ok(h)
    }
}

/// Evaluate `stack` on a batch (`rows × width`, or a single vector).
/// Returns the output and the tape holding every intermediate.
pub fn forward(
    params: &[DenseTensor],
    stack: &LayerStack,
    input: &DenseTensor,
) -> Result<(DenseTensor, ComputationTape)> {
    let mut tape = ComputationTape::new();
    let (rows, cols) = input.dims2();
    let x = tape.input(DenseTensor::matrix(rows, cols, input.data().to_vec())?);
    let out = stack.record(&mut tape, x, params, 0)?;
    let mut value = tape.value(out).clone();
    if input.shape().len() == 1 {
        value = DenseTensor::from_vec(value.into_data());
    }
    Ok((value, tape))
}
