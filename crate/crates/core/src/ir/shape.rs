//! Output-shape inference and the output-range to input-range maps used by
//! tiling and lowering.

use super::types::{OpAttrs, OpKind, TensorShape};

fn conv_out(inp: usize, pad: usize, span: usize, stride: usize) -> Option<usize> {
    let padded = inp + pad;
    if padded < span || stride == 0 {
        return None;
    }
    Some((padded - span) / stride + 1)
}

/// Output shape of `kind` applied to `inputs`, or a reason why the
/// combination is invalid.
pub fn infer_shape(
    kind: OpKind,
    attrs: &OpAttrs,
    inputs: &[TensorShape],
) -> Result<TensorShape, String> {
    if let Some(arity) = kind.arity() {
        if inputs.len() != arity {
            return Err(format!(
                "{kind} expects {arity} input(s), got {}",
                inputs.len()
            ));
        }
    } else if inputs.is_empty() {
        return Err(format!("{kind} expects at least one input"));
    }
    if attrs.kernel_h == 0 || attrs.kernel_w == 0 || attrs.stride_h == 0 || attrs.stride_w == 0 {
        return Err("kernel and stride must be >= 1".into());
    }
    let first = inputs.first().copied();
    let shape = match kind {
        OpKind::Input => return Err("Input shape is declared, not inferred".into()),
        OpKind::Conv | OpKind::DilatedConv | OpKind::DepthwiseConv => {
            let i = first.unwrap();
            let h = conv_out(i.h, attrs.pad_top + attrs.pad_bottom, attrs.span_h(), attrs.stride_h)
                .ok_or("kernel larger than padded input height")?;
            let w = conv_out(i.w, attrs.pad_left + attrs.pad_right, attrs.span_w(), attrs.stride_w)
                .ok_or("kernel larger than padded input width")?;
            let c = if kind == OpKind::DepthwiseConv {
                if attrs.out_channels != 0 && attrs.out_channels != i.c {
                    return Err("depthwise conv must preserve channel count".into());
                }
                i.c
            } else {
                if attrs.out_channels == 0 {
                    return Err("out_channels must be >= 1".into());
                }
                attrs.out_channels
            };
            TensorShape::new(h, w, c)
        }
        OpKind::Deconv => {
            let i = first.unwrap();
            if attrs.dilation != 1 {
                return Err("dilated deconvolution is not supported".into());
            }
            if attrs.out_channels == 0 {
                return Err("out_channels must be >= 1".into());
            }
            let full_h = (i.h - 1) * attrs.stride_h + attrs.kernel_h;
            let full_w = (i.w - 1) * attrs.stride_w + attrs.kernel_w;
            let ph = attrs.pad_top + attrs.pad_bottom;
            let pw = attrs.pad_left + attrs.pad_right;
            if full_h <= ph || full_w <= pw {
                return Err("deconvolution padding consumes the whole output".into());
            }
            TensorShape::new(full_h - ph, full_w - pw, attrs.out_channels)
        }
        OpKind::Pool(_) => {
            let i = first.unwrap();
            if attrs.pad_top >= attrs.kernel_h || attrs.pad_left >= attrs.kernel_w {
                return Err("pool padding must be smaller than the kernel".into());
            }
            let h = conv_out(i.h, attrs.pad_top + attrs.pad_bottom, attrs.kernel_h, attrs.stride_h)
                .ok_or("pool kernel larger than padded input height")?;
            let w = conv_out(i.w, attrs.pad_left + attrs.pad_right, attrs.kernel_w, attrs.stride_w)
                .ok_or("pool kernel larger than padded input width")?;
            TensorShape::new(h, w, i.c)
        }
        OpKind::EltwiseAdd => {
            if inputs[0] != inputs[1] {
                return Err(format!(
                    "eltwise operands differ: {} vs {}",
                    inputs[0], inputs[1]
                ));
            }
            inputs[0]
        }
        OpKind::ReLU | OpKind::BatchNorm | OpKind::Scale | OpKind::Output => first.unwrap(),
        OpKind::Concat => {
            let i = first.unwrap();
            let mut c = 0;
            for s in inputs {
                if s.h != i.h || s.w != i.w {
                    return Err("concat inputs must agree on height and width".into());
                }
                c += s.c;
            }
            TensorShape::new(i.h, i.w, c)
        }
        OpKind::Flatten => TensorShape::new(1, 1, first.unwrap().elements()),
        OpKind::Reorg => {
            let i = first.unwrap();
            let s = attrs.stride_h;
            if s != attrs.stride_w {
                return Err("reorg stride must be square".into());
            }
            if i.h % s != 0 || i.w % s != 0 {
                return Err("reorg stride must divide height and width".into());
            }
            TensorShape::new(i.h / s, i.w / s, i.c * s * s)
        }
        OpKind::Upsample => {
            let i = first.unwrap();
            if attrs.scale == 0 {
                return Err("upsample scale must be >= 1".into());
            }
            TensorShape::new(i.h * attrs.scale, i.w * attrs.scale, i.c)
        }
        OpKind::FullyConnected => {
            if attrs.out_channels == 0 {
                return Err("out_channels must be >= 1".into());
            }
            TensorShape::new(1, 1, attrs.out_channels)
        }
    };
    Ok(shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    H,
    W,
}

/// Input rows (or columns) needed to produce output range `[lo, hi)`.
///
/// Returns the clamped input range and the tile-local offset: for conv and
/// pool an output position `o` reads local input `o * stride + k * dilation
/// - offset`; for deconv an input position `i` feeds local output
/// `i * stride + k - offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputRange {
    pub lo: usize,
    pub hi: usize,
    pub offset: i64,
}

impl InputRange {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

pub fn input_range(
    kind: OpKind,
    attrs: &OpAttrs,
    axis: Axis,
    lo: usize,
    hi: usize,
    in_len: usize,
) -> InputRange {
    debug_assert!(lo < hi);
    let (k, s, pad, span) = match axis {
        Axis::H => (attrs.kernel_h, attrs.stride_h, attrs.pad_top, attrs.span_h()),
        Axis::W => (attrs.kernel_w, attrs.stride_w, attrs.pad_left, attrs.span_w()),
    };
    let (lo, hi, pad) = (lo as i64, hi as i64, pad as i64);
    let (s, k, span, n) = (s as i64, k as i64, span as i64, in_len as i64);
    match kind {
        OpKind::Conv | OpKind::DilatedConv | OpKind::DepthwiseConv | OpKind::Pool(_) => {
            let raw_lo = lo * s - pad;
            let raw_hi = (hi - 1) * s - pad + span;
            let a = raw_lo.max(0);
            let b = raw_hi.min(n);
            InputRange {
                lo: a as usize,
                hi: b.max(a) as usize,
                offset: a - raw_lo,
            }
        }
        OpKind::Deconv => {
            let a = (lo + pad - k + 1).max(0);
            let a = (a + s - 1) / s;
            let b = ((hi - 1 + pad) / s + 1).min(n);
            let a = a.min(b);
            InputRange {
                lo: a as usize,
                hi: b as usize,
                offset: pad + lo - a * s,
            }
        }
        OpKind::Upsample => {
            let f = attrs.scale as i64;
            InputRange {
                lo: (lo / f) as usize,
                hi: ((hi - 1) / f + 1) as usize,
                offset: 0,
            }
        }
        OpKind::Reorg => InputRange {
            lo: (lo * s) as usize,
            hi: (hi * s).min(n) as usize,
            offset: 0,
        },
        _ => InputRange {
            lo: lo as usize,
            hi: hi as usize,
            offset: 0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shape_same_padding() {
        let s = infer_shape(
            OpKind::Conv,
            &OpAttrs::conv(3, 1, 1, 8),
            &[TensorShape::new(4, 4, 3)],
        )
        .unwrap();
        assert_eq!(s, TensorShape::new(4, 4, 8));
    }

    #[test]
    fn pool_and_reorg_and_deconv_shapes() {
        let p = infer_shape(
            OpKind::Pool(Default::default()),
            &OpAttrs::pool(2, 2, 0),
            &[TensorShape::new(8, 6, 5)],
        )
        .unwrap();
        assert_eq!(p, TensorShape::new(4, 3, 5));
        let a = OpAttrs { stride_h: 2, stride_w: 2, ..OpAttrs::default() };
        let r = infer_shape(OpKind::Reorg, &a, &[TensorShape::new(8, 6, 5)]).unwrap();
        assert_eq!(r, TensorShape::new(4, 3, 20));
        let d = infer_shape(
            OpKind::Deconv,
            &OpAttrs::conv(4, 2, 1, 3),
            &[TensorShape::new(5, 5, 2)],
        )
        .unwrap();
        assert_eq!(d, TensorShape::new(10, 10, 3));
    }

    #[test]
    fn conv_range_interior_and_border() {
        let a = OpAttrs::conv(3, 1, 1, 1);
        let r = input_range(OpKind::Conv, &a, Axis::H, 0, 4, 8);
        assert_eq!((r.lo, r.hi, r.offset), (0, 5, 1));
        let r = input_range(OpKind::Conv, &a, Axis::H, 4, 8, 8);
        assert_eq!((r.lo, r.hi, r.offset), (3, 8, 0));
    }

    #[test]
    fn deconv_range_covers_contributors() {
        let a = OpAttrs::conv(4, 2, 1, 1);
        let in_len = 5;
        for lo in 0..10 {
            for hi in lo + 1..=10 {
                let r = input_range(OpKind::Deconv, &a, Axis::H, lo, hi, in_len);
                // every (i, k) with i*s - pad + k in [lo, hi) must have i in range
                for i in 0..in_len as i64 {
                    for k in 0..4 {
                        let y = i * 2 - 1 + k;
                        if y >= lo as i64 && y < hi as i64 {
                            assert!(i >= r.lo as i64 && i < r.hi as i64);
                            // local output index agrees
                            let local = (i - r.lo as i64) * 2 + k - r.offset;
                            assert_eq!(local, y - lo as i64);
                        }
                    }
                }
            }
        }
    }
}
