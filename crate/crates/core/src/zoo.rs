//! Built-in model corpus: small graphs covering chains, residual blocks,
//! multi-branch cells and the data-movement operators.

use crate::error::Result;
use crate::ir::{NodeId, OpAttrs, OpKind, ParamTensor, PoolType, TensorShape, XGraph};

/// Incremental graph builder with deterministic synthetic parameters.
pub struct Builder {
    pub g: XGraph,
    state: u64,
}

impl Builder {
    pub fn new(name: &str) -> Self {
        let seed = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        Builder { g: XGraph::new(name), state: seed }
    }

    /// Uniform value in `[-1, 1)` from a splitmix64 sequence.
    fn next(&mut self) -> f32 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    }

    fn param(&mut self, name: String, shape: Vec<usize>, scale: f32, offset: f32) -> String {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.next() * scale + offset).collect();
        self.g.params.insert(name.clone(), ParamTensor::new(shape, data));
        name
    }

    pub fn input(&mut self, name: &str, h: usize, w: usize, c: usize) -> NodeId {
        self.g.add_input(name, TensorShape::new(h, w, c))
    }

    fn conv_like(&mut self, name: &str, kind: OpKind, x: NodeId, attrs: OpAttrs) -> Result<NodeId> {
        let ic = self.g.tensor_shape(x).c;
        let oc = attrs.out_channels;
        let wic = if kind == OpKind::DepthwiseConv { 1 } else { ic };
        let fan_in = (attrs.kernel_h * attrs.kernel_w * wic) as f32;
        let w = self.param(format!("{name}.w"), vec![oc, attrs.kernel_w, attrs.kernel_h, wic], 1.5 / fan_in.sqrt(), 0.0);
        let b = self.param(format!("{name}.b"), vec![oc], 0.1, 0.0);
        self.g.add(name, kind, attrs, &[x], &[&w, &b])
    }

    /// Convolution, followed by a separate ReLU vertex when `relu` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(&mut self, name: &str, x: NodeId, k: usize, s: usize, p: usize, oc: usize, relu: bool) -> Result<NodeId> {
        let c = self.conv_like(name, OpKind::Conv, x, OpAttrs::conv(k, s, p, oc))?;
        if relu {
            self.relu(&format!("{name}.relu"), c)
        } else {
            Ok(c)
        }
    }

    pub fn deconv(&mut self, name: &str, x: NodeId, k: usize, s: usize, p: usize, oc: usize) -> Result<NodeId> {
        self.conv_like(name, OpKind::Deconv, x, OpAttrs::conv(k, s, p, oc))
    }

    pub fn depthwise(&mut self, name: &str, x: NodeId, k: usize, s: usize, p: usize) -> Result<NodeId> {
        let c = self.g.tensor_shape(x).c;
        self.conv_like(name, OpKind::DepthwiseConv, x, OpAttrs::conv(k, s, p, c))
    }

    pub fn dilated(&mut self, name: &str, x: NodeId, k: usize, d: usize, oc: usize) -> Result<NodeId> {
        let pad = (k - 1) * d / 2;
        self.conv_like(name, OpKind::DilatedConv, x, OpAttrs::conv(k, 1, pad, oc).with_dilation(d))
    }

    pub fn batchnorm(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let c = self.g.tensor_shape(x).c;
        let mean = self.param(format!("{name}.mean"), vec![c], 0.1, 0.0);
        let var = self.param(format!("{name}.var"), vec![c], 0.2, 1.0);
        let gamma = self.param(format!("{name}.gamma"), vec![c], 0.2, 1.0);
        let beta = self.param(format!("{name}.beta"), vec![c], 0.1, 0.0);
        self.g.add(name, OpKind::BatchNorm, OpAttrs::default(), &[x], &[&mean, &var, &gamma, &beta])
    }

    pub fn relu(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.g.add(name, OpKind::ReLU, OpAttrs::default(), &[x], &[])
    }

    pub fn pool(&mut self, name: &str, x: NodeId, t: PoolType, k: usize, s: usize, p: usize) -> Result<NodeId> {
        self.g.add(name, OpKind::Pool(t), OpAttrs::pool(k, s, p), &[x], &[])
    }

    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId, relu: bool) -> Result<NodeId> {
        let attrs = OpAttrs { relu, ..OpAttrs::default() };
        self.g.add(name, OpKind::EltwiseAdd, attrs, &[a, b], &[])
    }

    pub fn concat(&mut self, name: &str, xs: &[NodeId]) -> Result<NodeId> {
        self.g.add(name, OpKind::Concat, OpAttrs::default(), xs, &[])
    }

    pub fn upsample(&mut self, name: &str, x: NodeId, f: usize) -> Result<NodeId> {
        let attrs = OpAttrs { scale: f, ..OpAttrs::default() };
        self.g.add(name, OpKind::Upsample, attrs, &[x], &[])
    }

    pub fn reorg(&mut self, name: &str, x: NodeId, s: usize) -> Result<NodeId> {
        let attrs = OpAttrs { stride_h: s, stride_w: s, ..OpAttrs::default() };
        self.g.add(name, OpKind::Reorg, attrs, &[x], &[])
    }

    pub fn finish(mut self) -> Result<XGraph> {
        self.g.add_missing_outputs();
        self.g.validate()?;
        Ok(self.g)
    }
}

/// Plain chain of conv/pool stages.
pub fn vgg_like() -> Result<XGraph> {
    let mut b = Builder::new("vgg_like");
    let x = b.input("data", 32, 32, 3);
    let c = b.conv("conv1_1", x, 3, 1, 1, 16, true)?;
    let c = b.conv("conv1_2", c, 3, 1, 1, 16, true)?;
    let p = b.pool("pool1", c, PoolType::Max, 2, 2, 0)?;
    let c = b.conv("conv2_1", p, 3, 1, 1, 32, false)?;
    let c = b.batchnorm("bn2_1", c)?;
    let c = b.relu("relu2_1", c)?;
    let c = b.conv("conv2_2", c, 3, 1, 1, 32, true)?;
    let p = b.pool("pool2", c, PoolType::Max, 2, 2, 0)?;
    let c = b.conv("conv3_1", p, 3, 1, 1, 64, true)?;
    let c = b.conv("conv3_2", c, 3, 1, 1, 64, true)?;
    let c = b.conv("conv3_3", c, 1, 1, 0, 64, true)?;
    b.pool("pool3", c, PoolType::Avg, 2, 2, 0)?;
    b.finish()
}

/// Two residual blocks: an identity shortcut, then a projection shortcut.
pub fn residual() -> Result<XGraph> {
    let mut b = Builder::new("residual");
    let x = b.input("data", 16, 16, 8);
    let stem = b.conv("stem", x, 3, 1, 1, 16, true)?;
    let a = b.conv("res1_a", stem, 3, 1, 1, 16, true)?;
    let a = b.conv("res1_b", a, 3, 1, 1, 16, false)?;
    let r1 = b.add("res1_add", a, stem, true)?;
    let a = b.conv("res2_a", r1, 3, 1, 1, 32, true)?;
    let a = b.conv("res2_b", a, 3, 1, 1, 32, false)?;
    let proj = b.conv("res2_proj", r1, 1, 1, 0, 32, false)?;
    let r2 = b.add("res2_add", a, proj, true)?;
    b.pool("pool", r2, PoolType::Max, 2, 2, 0)?;
    b.finish()
}

/// Multi-branch cell whose branches are joined by a concat.
pub fn inception() -> Result<XGraph> {
    let mut b = Builder::new("inception");
    let x = b.input("data", 16, 16, 16);
    let stem = b.conv("stem", x, 3, 1, 1, 32, true)?;
    let b1 = b.conv("b1_1x1", stem, 1, 1, 0, 16, true)?;
    let b2 = b.conv("b2_1x1", stem, 1, 1, 0, 12, true)?;
    let b2 = b.conv("b2_3x3", b2, 3, 1, 1, 16, true)?;
    let b3 = b.conv("b3_1x1", stem, 1, 1, 0, 8, true)?;
    let b3 = b.conv("b3_5x5", b3, 5, 1, 2, 8, true)?;
    let b4 = b.pool("b4_pool", stem, PoolType::Max, 3, 1, 1)?;
    let b4 = b.conv("b4_1x1", b4, 1, 1, 0, 8, true)?;
    let cat = b.concat("concat", &[b1, b2, b3, b4])?;
    let c = b.conv("head", cat, 3, 2, 1, 32, true)?;
    b.pool("gap", c, PoolType::Avg, 2, 2, 0)?;
    b.finish()
}

/// Detection-style tail exercising reorg, upsample, deconvolution,
/// depthwise and dilated convolutions, and a concat that must be copied.
pub fn detector() -> Result<XGraph> {
    let mut b = Builder::new("detector");
    let x = b.input("data", 16, 16, 8);
    let c = b.conv("c1", x, 3, 1, 1, 16, true)?;
    let dw = b.depthwise("dw", c, 3, 1, 1)?;
    let dl = b.dilated("dil", dw, 3, 2, 16)?;
    let r = b.reorg("reorg", dl, 2)?;
    let c2 = b.conv("c2", r, 1, 1, 0, 16, true)?;
    let up = b.upsample("up", c2, 2)?;
    let cat = b.concat("cat", &[c, up])?;
    let c3 = b.conv("c3", cat, 3, 2, 1, 16, true)?;
    let d = b.deconv("deconv", c3, 4, 2, 1, 8)?;
    b.pool("avg", d, PoolType::Avg, 3, 1, 1)?;
    b.finish()
}

pub fn corpus() -> Result<Vec<XGraph>> {
    Ok(vec![vgg_like()?, residual()?, inception()?, detector()?])
}

pub fn by_name(name: &str) -> Result<XGraph> {
    match name {
        "vgg_like" => vgg_like(),
        "residual" => residual(),
        "inception" => inception(),
        "detector" => detector(),
        _ => Err(crate::Error::Schema(format!("unknown built-in model `{name}`"))),
    }
}

pub const MODEL_NAMES: [&str; 4] = ["vgg_like", "residual", "inception", "detector"];
