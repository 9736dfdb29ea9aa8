//! Runs a network graph on the autodiff tape with named parameter storage.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LayerOp, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{BnState, Mode, Tape, Tensor, TensorId};
use crate::volume::{Grid3, Volume};

/// Learnable state of a network, keyed by graph node name.
///
/// `tensors` holds `<node>.w` / `<node>.b` for (transposed) convolutions and
/// `<node>.scale` / `<node>.shift` for batch norm; `bn_states` holds the
/// running statistics per batch-norm node. BTreeMap keeps every iteration
/// order deterministic.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub tensors: BTreeMap<String, Tensor>,
    pub bn_states: BTreeMap<String, BnState>,
}

impl NetworkParams {
    /// Total learnable scalars currently stored.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }
}

/// He-normal fan-in of a layer: input connections per output element.
fn he_fan_in(op: &LayerOp) -> usize {
    match op {
        LayerOp::Conv { c_in, kernel, .. } => c_in * kernel.pow(3),
        // kernel = stride is non-overlapping: one tap per input channel
        LayerOp::TransposedConv { c_in, .. } => *c_in,
        _ => 0,
    }
}

/// Initializes all parameters: He-normal weights, zero biases, unit batch
/// norm; draws in node order, so one seed fixes the whole network.
pub fn init_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> NetworkParams {
    let mut tensors = BTreeMap::new();
    let mut bn_states = BTreeMap::new();
    for node in &spec.nodes {
        match &node.op {
            LayerOp::Conv { c_in, c_out, kernel } => {
                let std = (2.0 / he_fan_in(&node.op) as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                let shape = vec![*c_out, *c_in, *kernel, *kernel, *kernel];
                let n: usize = shape.iter().product();
                let data: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
                tensors.insert(
                    format!("{}.w", node.name),
                    Tensor::new(shape, data).expect("shape matches data"),
                );
                tensors.insert(format!("{}.b", node.name), Tensor::zeros(vec![*c_out]));
            }
            LayerOp::TransposedConv { c_in, c_out, stride } => {
                let std = (2.0 / he_fan_in(&node.op) as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                // weight spatial dims follow the tape's [z, y, x] layout
                let shape = vec![*c_in, *c_out, stride[2], stride[1], stride[0]];
                let n: usize = shape.iter().product();
                let data: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
                tensors.insert(
                    format!("{}.w", node.name),
                    Tensor::new(shape, data).expect("shape matches data"),
                );
                tensors.insert(format!("{}.b", node.name), Tensor::zeros(vec![*c_out]));
            }
            LayerOp::BatchNorm { channels } => {
                tensors.insert(
                    format!("{}.scale", node.name),
                    Tensor::filled(vec![*channels], 1.0),
                );
                tensors.insert(
                    format!("{}.shift", node.name),
                    Tensor::zeros(vec![*channels]),
                );
                bn_states.insert(node.name.clone(), BnState::new(*channels));
            }
            _ => {}
        }
    }
    NetworkParams { tensors, bn_states }
}

/// One recorded forward execution: the tape, the output node, and the tape
/// id of every named parameter (for gradient lookup after backward).
pub struct ForwardPass {
    pub tape: Tape,
    pub output: TensorId,
    pub param_ids: BTreeMap<String, TensorId>,
}

fn missing(name: &str) -> Error {
    Error::InvalidConfig(format!("parameters lack tensor '{name}'"))
}

/// Records one forward pass of `spec` through the tape.
///
/// `inputs` follow stream order; `mode` switches batch norm and dropout and
/// decides whether parameters are registered as differentiable. Batch-norm
/// running statistics in `params` are updated in train mode.
pub fn forward(
    spec: &NetworkSpec,
    params: &mut NetworkParams,
    inputs: &[Tensor],
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardPass> {
    let s_count = spec.config.variant.stream_count();
    if inputs.len() != s_count {
        return Err(Error::ShapeMismatch(format!(
            "{} streams need {} inputs, got {}",
            s_count,
            s_count,
            inputs.len()
        )));
    }
    let mut tape = Tape::new();
    let input_ids: Vec<TensorId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), false))
        .collect();
    let train = mode == Mode::Train;
    let mut param_ids = BTreeMap::new();
    let param = |tape: &mut Tape,
                     param_ids: &mut BTreeMap<String, TensorId>,
                     params: &NetworkParams,
                     name: String|
     -> Result<TensorId> {
        let t = params.tensors.get(&name).ok_or_else(|| missing(&name))?;
        let id = tape.leaf(t.clone(), train);
        param_ids.insert(name, id);
        Ok(id)
    };

    let mut ids: Vec<TensorId> = Vec::with_capacity(spec.nodes.len());
    for node in &spec.nodes {
        let ins: Vec<TensorId> = node.inputs.iter().map(|&i| ids[i]).collect();
        let out = match &node.op {
            LayerOp::Input { stream } => input_ids[*stream],
            LayerOp::Conv { .. } => {
                let w = param(&mut tape, &mut param_ids, params, format!("{}.w", node.name))?;
                let b = param(&mut tape, &mut param_ids, params, format!("{}.b", node.name))?;
                tape.conv3d(ins[0], w, b)?
            }
            LayerOp::MaxPool { pool } => {
                // graph pools are (x, y, z); the tape works on [z, y, x]
                tape.maxpool3d(ins[0], [pool[2], pool[1], pool[0]])?
            }
            LayerOp::Upsample { factor } => {
                tape.upsample_trilinear(ins[0], [factor[2], factor[1], factor[0]])?
            }
            LayerOp::TransposedConv { stride, .. } => {
                let w = param(&mut tape, &mut param_ids, params, format!("{}.w", node.name))?;
                let b = param(&mut tape, &mut param_ids, params, format!("{}.b", node.name))?;
                tape.transposed_conv3d(ins[0], w, b, [stride[2], stride[1], stride[0]])?
            }
            LayerOp::Concat => tape.concat_channels(&ins)?,
            LayerOp::Relu => tape.relu(ins[0]),
            LayerOp::Sigmoid => tape.sigmoid(ins[0]),
            LayerOp::BatchNorm { .. } => {
                let scale = param(
                    &mut tape,
                    &mut param_ids,
                    params,
                    format!("{}.scale", node.name),
                )?;
                let shift = param(
                    &mut tape,
                    &mut param_ids,
                    params,
                    format!("{}.shift", node.name),
                )?;
                let state = params
                    .bn_states
                    .get_mut(&node.name)
                    .ok_or_else(|| missing(&node.name))?;
                tape.batchnorm(ins[0], scale, shift, state, mode)?
            }
            LayerOp::Dropout { rate } => tape.dropout(ins[0], *rate, mode, rng)?,
        };
        ids.push(out);
    }
    Ok(ForwardPass {
        tape,
        output: *ids.last().expect("graph nonempty"),
        param_ids,
    })
}

/// Reinterprets a volume as a [1, 1, z, y, x] tensor (same buffer order).
pub fn volume_to_tensor(v: &Volume) -> Tensor {
    let [nx, ny, nz] = v.grid.dims;
    Tensor::new(vec![1, 1, nz, ny, nx], v.samples.clone())
        .expect("volume buffer length matches its grid")
}

/// Reinterprets a [1, 1, z, y, x] tensor as a volume on `grid`.
pub fn tensor_to_volume(t: &Tensor, grid: Grid3) -> Result<Volume> {
    let [n, c, d0, d1, d2] = t.dims5()?;
    if n != 1 || c != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected a single-channel tensor, got [{n}, {c}, ...]"
        )));
    }
    if [d2, d1, d0] != grid.dims {
        return Err(Error::ShapeMismatch(format!(
            "tensor spatial dims (x,y,z) = [{d2}, {d1}, {d0}] do not match grid {:?}",
            grid.dims
        )));
    }
    Volume::new(grid, t.data().to_vec())
}

/// Random tensor for smoke tests and gradient checks, values in [-1, 1).
pub fn random_input(dims_xyz: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor {
    let [nx, ny, nz] = dims_xyz;
    let data: Vec<f64> = (0..nx * ny * nz).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![1, 1, nz, ny, nx], data).expect("shape matches data")
}
