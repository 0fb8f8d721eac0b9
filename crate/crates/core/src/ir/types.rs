use std::fmt;

use serde::{Deserialize, Serialize};

/// Feature-map shape in NHWC order. All extents are element counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        TensorShape { n: 1, h, w, c }
    }

    pub fn elements(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn is_valid(&self) -> bool {
        self.n == 1 && self.h >= 1 && self.w >= 1 && self.c >= 1
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.h, self.w, self.c)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum PoolType {
    #[default]
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Input,
    Conv,
    Deconv,
    DepthwiseConv,
    DilatedConv,
    Pool(PoolType),
    EltwiseAdd,
    ReLU,
    BatchNorm,
    Scale,
    Concat,
    Flatten,
    Reorg,
    Upsample,
    FullyConnected,
    Output,
}

impl OpKind {
    pub fn parse(s: &str) -> Option<OpKind> {
        Some(match s.to_ascii_lowercase().as_str() {
            "input" => OpKind::Input,
            "conv" | "convolution" | "conv2d" => OpKind::Conv,
            "deconv" | "deconvolution" => OpKind::Deconv,
            "depthwiseconv" | "depthwise_conv" | "dwconv" => OpKind::DepthwiseConv,
            "dilatedconv" | "dilated_conv" => OpKind::DilatedConv,
            "pool" | "maxpool" | "pool_max" => OpKind::Pool(PoolType::Max),
            "avgpool" | "pool_avg" => OpKind::Pool(PoolType::Avg),
            "eltwiseadd" | "eltwise_add" | "add" | "eltwise" => OpKind::EltwiseAdd,
            "relu" => OpKind::ReLU,
            "batchnorm" | "bn" => OpKind::BatchNorm,
            "scale" => OpKind::Scale,
            "concat" => OpKind::Concat,
            "flatten" => OpKind::Flatten,
            "reorg" => OpKind::Reorg,
            "upsample" => OpKind::Upsample,
            "fullyconnected" | "fc" | "innerproduct" => OpKind::FullyConnected,
            "output" => OpKind::Output,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "Input",
            OpKind::Conv => "Conv",
            OpKind::Deconv => "Deconv",
            OpKind::DepthwiseConv => "DepthwiseConv",
            OpKind::DilatedConv => "DilatedConv",
            OpKind::Pool(PoolType::Max) => "MaxPool",
            OpKind::Pool(PoolType::Avg) => "AvgPool",
            OpKind::EltwiseAdd => "EltwiseAdd",
            OpKind::ReLU => "ReLU",
            OpKind::BatchNorm => "BatchNorm",
            OpKind::Scale => "Scale",
            OpKind::Concat => "Concat",
            OpKind::Flatten => "Flatten",
            OpKind::Reorg => "Reorg",
            OpKind::Upsample => "Upsample",
            OpKind::FullyConnected => "FullyConnected",
            OpKind::Output => "Output",
        }
    }

    /// Conv, Deconv, DepthwiseConv and DilatedConv share the CONV engine.
    pub fn is_conv_family(&self) -> bool {
        matches!(
            self,
            OpKind::Conv | OpKind::Deconv | OpKind::DepthwiseConv | OpKind::DilatedConv
        )
    }

    pub fn is_pool(&self) -> bool {
        matches!(self, OpKind::Pool(_))
    }

    /// Executed on the host CPU; never fused, never lowered.
    pub fn is_host(&self) -> bool {
        matches!(self, OpKind::FullyConnected)
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, OpKind::Input | OpKind::Output)
    }

    /// A vertex the accelerator executes and the strategy search partitions.
    pub fn is_computation(&self) -> bool {
        !self.is_sentinel() && !self.is_host()
    }

    /// Kinds usable in injective fusion chains.
    pub fn is_injective(&self) -> bool {
        self.is_conv_family()
            || self.is_pool()
            || matches!(self, OpKind::ReLU | OpKind::Upsample | OpKind::Reorg)
    }

    pub fn has_weights(&self) -> bool {
        self.is_conv_family() || self.is_host()
    }

    pub fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Input => Some(0),
            OpKind::EltwiseAdd => Some(2),
            OpKind::Concat => None,
            _ => Some(1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operation attributes. Fields irrelevant to a kind keep their defaults.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpAttrs {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub relu: bool,
    /// Upsample factor.
    pub scale: usize,
}

impl Default for OpAttrs {
    fn default() -> Self {
        OpAttrs {
            kernel_h: 1,
            kernel_w: 1,
            stride_h: 1,
            stride_w: 1,
            pad_top: 0,
            pad_bottom: 0,
            pad_left: 0,
            pad_right: 0,
            out_channels: 0,
            dilation: 1,
            relu: false,
            scale: 1,
        }
    }
}

impl OpAttrs {
    pub fn conv(k: usize, stride: usize, pad: usize, out_channels: usize) -> Self {
        OpAttrs {
            kernel_h: k,
            kernel_w: k,
            stride_h: stride,
            stride_w: stride,
            pad_top: pad,
            pad_bottom: pad,
            pad_left: pad,
            pad_right: pad,
            out_channels,
            ..OpAttrs::default()
        }
    }

    pub fn pool(k: usize, stride: usize, pad: usize) -> Self {
        OpAttrs::conv(k, stride, pad, 0)
    }

    pub fn with_relu(mut self) -> Self {
        self.relu = true;
        self
    }

    pub fn with_dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    /// Effective kernel span along height once dilation is applied.
    pub fn span_h(&self) -> usize {
        self.dilation * (self.kernel_h - 1) + 1
    }

    pub fn span_w(&self) -> usize {
        self.dilation * (self.kernel_w - 1) + 1
    }
}
