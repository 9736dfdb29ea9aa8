//! Multi-stream anisotropic U-Net: declarative graph construction, shape
//! inference, parameter counting, and execution.
//!
//! The network has four resolution levels. Each input stream keeps its
//! acquisition axes, so its thick (low-resolution) axis differs; the two
//! branch-level poolings downsample only the thin axes, which equalizes all
//! stream shapes at the level-3 concatenation. The decoder runs on isotropic
//! grids up to the high-resolution output; skip connections from the
//! anisotropic branch levels insert thick-axis upsampling nodes.
//!
//! Spatial triples in this module are in (x, y, z) axis order, matching the
//! volume grid convention; the conversion to the tensor engine's [z, y, x]
//! layout happens only inside the executor.

pub mod checkpoint;
pub mod exec;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Acquisition orientation of one input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Axial,
    Sagittal,
    Coronal,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Axial => "axial",
            Orientation::Sagittal => "sagittal",
            Orientation::Coronal => "coronal",
        }
    }

    /// Index of the thick (slice-direction) axis in (x, y, z).
    pub fn thick_axis(self) -> usize {
        match self {
            Orientation::Axial => 2,
            Orientation::Sagittal => 0,
            Orientation::Coronal => 1,
        }
    }

    /// Per-axis anisotropy of the preprocessed stream grid.
    pub fn anisotropy(self, ratio: usize) -> [usize; 3] {
        let mut a = [1, 1, 1];
        a[self.thick_axis()] = ratio;
        a
    }

    /// Branch-level pool size (x, y, z): thin axes halved, thick kept.
    pub fn standard_pool(self) -> [usize; 3] {
        let mut p = [2, 2, 2];
        p[self.thick_axis()] = 1;
        p
    }
}

/// Number of input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneVariant {
    Single,
    Dual,
    Triple,
}

impl PlaneVariant {
    pub fn orientations(self) -> &'static [Orientation] {
        match self {
            PlaneVariant::Single => &[Orientation::Axial],
            PlaneVariant::Dual => &[Orientation::Axial, Orientation::Sagittal],
            PlaneVariant::Triple => &[
                Orientation::Axial,
                Orientation::Sagittal,
                Orientation::Coronal,
            ],
        }
    }

    pub fn stream_count(self) -> usize {
        self.orientations().len()
    }
}

/// Anisotropy ratio of the preprocessed grids (thick / thin spacing).
pub const ANISOTROPY_RATIO: usize = 4;

/// Stream layout: variant plus per-stream pool sizes for branch levels 1-2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneConfig {
    pub variant: PlaneVariant,
    /// Per stream: pool size (x, y, z) at branch level 1 and level 2.
    pub stream_pools: Vec<[[usize; 3]; 2]>,
}

impl PlaneConfig {
    /// Standard pools: thin axes halved at both branch levels.
    pub fn standard(variant: PlaneVariant) -> PlaneConfig {
        let stream_pools = variant
            .orientations()
            .iter()
            .map(|o| [o.standard_pool(), o.standard_pool()])
            .collect();
        PlaneConfig { variant, stream_pools }
    }

    /// Checks the axial pool rule and the shape-equalization condition.
    pub fn validate(&self) -> Result<()> {
        let orientations = self.variant.orientations();
        if self.stream_pools.len() != orientations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} streams need {} pool pairs, got {}",
                orientations.len(),
                orientations.len(),
                self.stream_pools.len()
            )));
        }
        if self.stream_pools[0] != [[2, 2, 1], [2, 2, 1]] {
            return Err(Error::InvalidConfig(
                "axial stream must pool 2x2x1 at both branch levels".into(),
            ));
        }
        for (s, (pools, o)) in self.stream_pools.iter().zip(orientations).enumerate() {
            let aniso = o.anisotropy(ANISOTROPY_RATIO);
            for a in 0..3 {
                let p1 = pools[0][a];
                let p2 = pools[1][a];
                if p1 == 0 || p2 == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "stream {s}: zero pool factor"
                    )));
                }
                if aniso[a] * p1 * p2 != ANISOTROPY_RATIO {
                    return Err(Error::InvalidConfig(format!(
                        "stream {s} axis {a}: anisotropy {} x pools {p1}x{p2} != {} \
                         — streams cannot equalize before concatenation",
                        aniso[a], ANISOTROPY_RATIO
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How decoder and skip upsampling is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpsamplingMode {
    Trilinear,
    Transposed,
}

/// Architecture hyperparameters searched by HPO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub dropout_rate: f64,
    pub use_batchnorm: bool,
    pub upsampling_mode: UpsamplingMode,
}

impl HyperParams {
    /// Hyperparameters the search selected for each variant.
    pub fn tuned(variant: PlaneVariant) -> HyperParams {
        match variant {
            PlaneVariant::Single => HyperParams {
                dropout_rate: 0.6,
                use_batchnorm: false,
                upsampling_mode: UpsamplingMode::Trilinear,
            },
            PlaneVariant::Dual => HyperParams {
                dropout_rate: 0.2,
                use_batchnorm: false,
                upsampling_mode: UpsamplingMode::Transposed,
            },
            PlaneVariant::Triple => HyperParams {
                dropout_rate: 0.2,
                use_batchnorm: true,
                upsampling_mode: UpsamplingMode::Transposed,
            },
        }
    }
}

/// The dropout grid the search draws from.
pub const DROPOUT_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// One layer in the network graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerOp {
    /// Stream input (1 channel).
    Input { stream: usize },
    /// Same-shape convolution, kernel 1 or 3 per side.
    Conv { c_in: usize, c_out: usize, kernel: usize },
    /// Non-overlapping max pool, (x, y, z).
    MaxPool { pool: [usize; 3] },
    /// Trilinear upsampling by integer factors, (x, y, z).
    Upsample { factor: [usize; 3] },
    /// Transposed convolution with kernel = stride, (x, y, z).
    TransposedConv { c_in: usize, c_out: usize, stride: [usize; 3] },
    /// Channel concatenation of all inputs.
    Concat,
    Relu,
    Sigmoid,
    BatchNorm { channels: usize },
    Dropout { rate: f64 },
}

impl LayerOp {
    /// Learnable scalar count of this layer.
    pub fn parameter_count(&self) -> usize {
        match self {
            LayerOp::Conv { c_in, c_out, kernel } => {
                c_in * c_out * kernel.pow(3) + c_out
            }
            LayerOp::TransposedConv { c_in, c_out, stride } => {
                c_in * c_out * stride[0] * stride[1] * stride[2] + c_out
            }
            LayerOp::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }
}

/// Named node with edges to earlier nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub name: String,
    pub op: LayerOp,
    pub inputs: Vec<usize>,
}

/// Complete network description; nodes are in topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub config: PlaneConfig,
    pub base_width: usize,
    pub hp: HyperParams,
    pub nodes: Vec<LayerNode>,
}

/// Default base width, calibrated so the single/dual/triple configurations
/// land within 10% of 1.4M / 1.6M / 1.7M parameters.
pub const DEFAULT_BASE_WIDTH: usize = 13;

struct GraphBuilder {
    nodes: Vec<LayerNode>,
}

impl GraphBuilder {
    fn push(&mut self, name: impl Into<String>, op: LayerOp, inputs: Vec<usize>) -> usize {
        let name = name.into();
        debug_assert!(
            inputs.iter().all(|&i| i < self.nodes.len()),
            "edges must point backwards"
        );
        self.nodes.push(LayerNode { name, op, inputs });
        self.nodes.len() - 1
    }

    /// conv -> (batchnorm) -> relu; returns the relu node.
    fn conv_block(
        &mut self,
        prefix: &str,
        input: usize,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        use_bn: bool,
    ) -> usize {
        let conv = self.push(
            format!("{prefix}_conv"),
            LayerOp::Conv { c_in, c_out, kernel },
            vec![input],
        );
        let pre_act = if use_bn {
            self.push(
                format!("{prefix}_bn"),
                LayerOp::BatchNorm { channels: c_out },
                vec![conv],
            )
        } else {
            conv
        };
        self.push(format!("{prefix}_relu"), LayerOp::Relu, vec![pre_act])
    }

    fn upsample(
        &mut self,
        name: &str,
        input: usize,
        channels: usize,
        factor: [usize; 3],
        mode: UpsamplingMode,
    ) -> usize {
        match mode {
            UpsamplingMode::Trilinear => {
                self.push(name, LayerOp::Upsample { factor }, vec![input])
            }
            UpsamplingMode::Transposed => self.push(
                name,
                LayerOp::TransposedConv {
                    c_in: channels,
                    c_out: channels,
                    stride: factor,
                },
                vec![input],
            ),
        }
    }
}

/// Builds the multi-stream U-Net graph for a stream layout and width.
pub fn build_multistream(
    config: &PlaneConfig,
    base_width: usize,
    hp: HyperParams,
) -> Result<NetworkSpec> {
    config.validate()?;
    if base_width < 1 {
        return Err(Error::InvalidConfig("base_width must be >= 1".into()));
    }
    if !DROPOUT_GRID.contains(&hp.dropout_rate) {
        return Err(Error::InvalidConfig(format!(
            "dropout_rate {} not in the searched grid {:?}",
            hp.dropout_rate, DROPOUT_GRID
        )));
    }
    let w = base_width;
    let orientations = config.variant.orientations();
    let s_count = orientations.len();
    let bn = hp.use_batchnorm;
    let mut g = GraphBuilder { nodes: Vec::new() };

    // analysis path: per-stream branches on levels 1-2
    let mut skip1 = Vec::new();
    let mut skip2 = Vec::new();
    let mut branch_out = Vec::new();
    for (s, pools) in config.stream_pools.iter().enumerate() {
        let input = g.push(format!("s{s}_input"), LayerOp::Input { stream: s }, vec![]);
        let a1 = g.conv_block(&format!("s{s}_l1_a"), input, 1, w, 3, bn);
        let b1 = g.conv_block(&format!("s{s}_l1_b"), a1, w, 2 * w, 3, bn);
        skip1.push(b1);
        let p1 = g.push(
            format!("s{s}_l1_pool"),
            LayerOp::MaxPool { pool: pools[0] },
            vec![b1],
        );
        let a2 = g.conv_block(&format!("s{s}_l2_a"), p1, 2 * w, 2 * w, 3, bn);
        let b2 = g.conv_block(&format!("s{s}_l2_b"), a2, 2 * w, 4 * w, 3, bn);
        skip2.push(b2);
        let p2 = g.push(
            format!("s{s}_l2_pool"),
            LayerOp::MaxPool { pool: pools[1] },
            vec![b2],
        );
        branch_out.push(p2);
    }

    // merge streams at the level-3 entry (degenerate for a single stream)
    let merged = if s_count == 1 {
        branch_out[0]
    } else {
        g.push("concat_streams", LayerOp::Concat, branch_out.clone())
    };

    // shared trunk: level 3 and the bottom level
    let l3a = g.conv_block("l3_a", merged, 4 * w * s_count, 4 * w, 3, bn);
    let l3b = g.conv_block("l3_b", l3a, 4 * w, 8 * w, 3, bn);
    let skip3 = l3b;
    let p3 = g.push(
        "l3_pool",
        LayerOp::MaxPool { pool: [2, 2, 2] },
        vec![l3b],
    );
    let bot_a = g.conv_block("bottom_a", p3, 8 * w, 8 * w, 3, bn);
    let bot_b = g.conv_block("bottom_b", bot_a, 8 * w, 8 * w, 3, bn);

    // synthesis path
    let mode = hp.upsampling_mode;
    let add_dropout = |g: &mut GraphBuilder, name: String, input: usize| -> usize {
        if hp.dropout_rate > 0.0 {
            g.push(name, LayerOp::Dropout { rate: hp.dropout_rate }, vec![input])
        } else {
            input
        }
    };

    // decoder level 3 (concat-entry resolution)
    let d3_up = g.upsample("d3_up", bot_b, 8 * w, [2, 2, 2], mode);
    let d3_cat = g.push("d3_concat", LayerOp::Concat, vec![d3_up, skip3]);
    let d3a = g.conv_block("d3_a", d3_cat, 16 * w, 4 * w, 3, bn);
    let d3b = g.conv_block("d3_b", d3a, 4 * w, 4 * w, 3, bn);
    let d3 = add_dropout(&mut g, "d3_dropout".into(), d3b);

    // decoder level 2 (half resolution): thick-axis skip upsampling
    let d2_up = g.upsample("d2_up", d3, 4 * w, [2, 2, 2], mode);
    let mut d2_cat_in = vec![d2_up];
    for (s, (pools, o)) in config.stream_pools.iter().zip(orientations).enumerate() {
        let aniso = o.anisotropy(ANISOTROPY_RATIO);
        let mut factor = [0usize; 3];
        for a in 0..3 {
            let num = aniso[a] * pools[0][a];
            if num % 2 != 0 {
                return Err(Error::InvalidConfig(format!(
                    "stream {s} axis {a}: level-2 skip needs factor {num}/2, not an integer"
                )));
            }
            factor[a] = num / 2;
        }
        d2_cat_in.push(g.upsample(&format!("s{s}_skip2_up"), skip2[s], 4 * w, factor, mode));
    }
    let d2_cat = g.push("d2_concat", LayerOp::Concat, d2_cat_in);
    let d2a = g.conv_block("d2_a", d2_cat, 4 * w + 4 * w * s_count, 2 * w, 3, bn);
    let d2b = g.conv_block("d2_b", d2a, 2 * w, 2 * w, 3, bn);
    let d2 = add_dropout(&mut g, "d2_dropout".into(), d2b);

    // decoder level 1 (full resolution)
    let d1_up = g.upsample("d1_up", d2, 2 * w, [2, 2, 2], mode);
    let mut d1_cat_in = vec![d1_up];
    for (s, o) in orientations.iter().enumerate() {
        let factor = o.anisotropy(ANISOTROPY_RATIO);
        d1_cat_in.push(g.upsample(&format!("s{s}_skip1_up"), skip1[s], 2 * w, factor, mode));
    }
    let d1_cat = g.push("d1_concat", LayerOp::Concat, d1_cat_in);
    let d1a = g.conv_block("d1_a", d1_cat, 2 * w + 2 * w * s_count, w, 3, bn);
    let d1b = g.conv_block("d1_b", d1a, w, w, 3, bn);
    let d1 = add_dropout(&mut g, "d1_dropout".into(), d1b);

    // output head at the high-resolution grid
    let out_conv = g.push(
        "out_conv",
        LayerOp::Conv { c_in: w, c_out: 1, kernel: 1 },
        vec![d1],
    );
    g.push("out_sigmoid", LayerOp::Sigmoid, vec![out_conv]);

    Ok(NetworkSpec {
        config: config.clone(),
        base_width,
        hp,
        nodes: g.nodes,
    })
}

/// Exact number of learnable scalars in the network.
pub fn count_parameters(spec: &NetworkSpec) -> usize {
    spec.nodes.iter().map(|n| n.op.parameter_count()).sum()
}

/// Shape annotation of one node: channels plus spatial dims (x, y, z).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeShape {
    pub name: String,
    pub channels: usize,
    pub dims: [usize; 3],
}

/// Full shape trace with parameter total and concat-entry shapes per stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub node_shapes: Vec<NodeShape>,
    pub total_parameters: usize,
    /// Spatial shape each stream presents at the level-3 merge.
    pub concat_entry_dims: Vec<[usize; 3]>,
    /// Spatial shape of the final output.
    pub output_dims: [usize; 3],
}

/// Propagates shapes through the graph, pinpointing any offending node.
pub fn infer_shapes(spec: &NetworkSpec, input_dims: &[[usize; 3]]) -> Result<ShapeReport> {
    let s_count = spec.config.variant.stream_count();
    if input_dims.len() != s_count {
        return Err(Error::ShapeMismatch(format!(
            "{s_count} streams need {s_count} input dims, got {}",
            input_dims.len()
        )));
    }
    let fail = |node: &LayerNode, reason: String| Error::ShapeInference {
        node: node.name.clone(),
        reason,
    };
    let mut shapes: Vec<(usize, [usize; 3])> = Vec::with_capacity(spec.nodes.len());
    let mut branch_exit: Vec<[usize; 3]> = vec![[0; 3]; s_count];
    for node in &spec.nodes {
        let input_shapes: Vec<(usize, [usize; 3])> =
            node.inputs.iter().map(|&i| shapes[i]).collect();
        let out = match &node.op {
            LayerOp::Input { stream } => (1, input_dims[*stream]),
            LayerOp::Conv { c_in, c_out, .. } => {
                let (c, d) = input_shapes[0];
                if c != *c_in {
                    return Err(fail(node, format!("expects {c_in} channels, got {c}")));
                }
                (*c_out, d)
            }
            LayerOp::MaxPool { pool } => {
                let (c, d) = input_shapes[0];
                let mut out = [0; 3];
                for a in 0..3 {
                    if d[a] % pool[a] != 0 {
                        return Err(fail(
                            node,
                            format!("dims {d:?} not divisible by pool {pool:?}"),
                        ));
                    }
                    out[a] = d[a] / pool[a];
                }
                (c, out)
            }
            LayerOp::Upsample { factor } => {
                let (c, d) = input_shapes[0];
                (c, [d[0] * factor[0], d[1] * factor[1], d[2] * factor[2]])
            }
            LayerOp::TransposedConv { c_in, c_out, stride } => {
                let (c, d) = input_shapes[0];
                if c != *c_in {
                    return Err(fail(node, format!("expects {c_in} channels, got {c}")));
                }
                (*c_out, [d[0] * stride[0], d[1] * stride[1], d[2] * stride[2]])
            }
            LayerOp::Concat => {
                let (_, d0) = input_shapes[0];
                for (_, d) in &input_shapes {
                    if *d != d0 {
                        return Err(fail(
                            node,
                            format!("spatial dims differ across inputs: {input_shapes:?}"),
                        ));
                    }
                }
                (input_shapes.iter().map(|(c, _)| c).sum(), d0)
            }
            LayerOp::Relu | LayerOp::Sigmoid | LayerOp::Dropout { .. } => input_shapes[0],
            LayerOp::BatchNorm { channels } => {
                let (c, d) = input_shapes[0];
                if c != *channels {
                    return Err(fail(node, format!("expects {channels} channels, got {c}")));
                }
                (c, d)
            }
        };
        // record what each stream presents at the level-3 merge
        if let Some(rest) = node.name.strip_prefix('s') {
            if let Some(stream) = rest
                .strip_suffix("_l2_pool")
                .and_then(|s| s.parse::<usize>().ok())
            {
                branch_exit[stream] = out.1;
            }
        }
        shapes.push(out);
    }
    let node_shapes = spec
        .nodes
        .iter()
        .zip(&shapes)
        .map(|(n, &(channels, dims))| NodeShape {
            name: n.name.clone(),
            channels,
            dims,
        })
        .collect();
    Ok(ShapeReport {
        node_shapes,
        total_parameters: count_parameters(spec),
        concat_entry_dims: branch_exit,
        output_dims: shapes.last().expect("graph nonempty").1,
    })
}
