//! Tile-size selection under on-chip buffer constraints.
//!
//! The height, output-channel and input-channel tile sizes are pinned to the
//! hardware parallelism; the width tile is the largest value for which every
//! member of the group satisfies
//!
//! ```text
//! t_w * t_h * t_oc              <= B_out
//! t_ic * K_w * K_h * t_oc       <= B_weights
//! t_ic * F^-1(t_w) * G^-1(t_h)  <= B_in
//! ```
//!
//! with extents propagated backward through the group. Elements are 8-bit, so
//! element counts equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{NodeId, OpAttrs, OpKind, TensorShape, XGraph};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HwConfig {
    pub name: String,
    pub inc_p: usize,
    pub oc_p: usize,
    pub h_p: usize,
    pub b_in: usize,
    pub b_weights: usize,
    pub b_out: usize,
    pub onchip_bytes: usize,
    pub freq_mhz: u32,
    /// No published figure exists; presets ship a placeholder to calibrate.
    pub ddr_bytes_per_cycle: u64,
    #[serde(default = "default_overhead")]
    pub issue_overhead: u64,
}

fn default_overhead() -> u64 {
    32
}

/// Default split of on-chip memory across the three buffers, in percent.
pub const DEFAULT_SPLIT: (usize, usize, usize) = (40, 40, 20);

impl HwConfig {
    pub fn with_split(
        name: &str,
        inc_p: usize,
        oc_p: usize,
        h_p: usize,
        onchip_bytes: usize,
        freq_mhz: u32,
    ) -> Self {
        let (i, w, o) = DEFAULT_SPLIT;
        HwConfig {
            name: name.into(),
            inc_p,
            oc_p,
            h_p,
            b_in: onchip_bytes * i / 100,
            b_weights: onchip_bytes * w / 100,
            b_out: onchip_bytes * o / 100,
            onchip_bytes,
            freq_mhz,
            ddr_bytes_per_cycle: 4,
            issue_overhead: default_overhead(),
        }
    }

    /// ZU2: 0.66 MB on chip, parallelism (24, 12, 4) at 330 MHz.
    pub fn zu2() -> Self {
        HwConfig::with_split("zu2", 24, 12, 4, 692_060, 330)
    }

    /// ZU9: 4 MB on chip, parallelism (32, 16, 8) at 330 MHz.
    pub fn zu9() -> Self {
        HwConfig::with_split("zu9", 32, 16, 8, 4 << 20, 330)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "zu2" => Some(Self::zu2()),
            "zu9" => Some(Self::zu9()),
            _ => None,
        }
    }

    /// Resolves a preset name, or reads a JSON file holding either a single
    /// config or `{"presets": {name: config}}` (first entry wins).
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(p) = Self::preset(spec) {
            return Ok(p);
        }
        let text = std::fs::read_to_string(Path::new(spec))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let hw: HwConfig = match v.get("presets").and_then(|p| p.as_object()) {
            Some(map) => {
                let (_, first) = map
                    .iter()
                    .next()
                    .ok_or_else(|| Error::Schema("empty presets file".into()))?;
                serde_json::from_value(first.clone())?
            }
            None => serde_json::from_value(v)?,
        };
        hw.check()?;
        Ok(hw)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            self.inc_p,
            self.oc_p,
            self.h_p,
            self.b_in,
            self.b_weights,
            self.b_out,
            self.ddr_bytes_per_cycle as usize,
            self.freq_mhz as usize,
        ];
        if positive.contains(&0) {
            return Err(Error::Schema(format!("hardware config `{}` has a zero field", self.name)));
        }
        if self.b_in + self.b_weights + self.b_out > self.onchip_bytes {
            return Err(Error::Schema(format!(
                "hardware config `{}`: buffers exceed on-chip memory",
                self.name
            )));
        }
        Ok(())
    }

    pub fn presets_json() -> serde_json::Value {
        serde_json::json!({ "presets": { "zu2": Self::zu2(), "zu9": Self::zu9() } })
    }
}

/// Receptive extent of `out_extent` outputs of a sliding window.
pub fn input_extent(out_extent: usize, kernel: usize, stride: usize) -> usize {
    (out_extent - 1) * stride + kernel
}

/// One member of a group as the tiler sees it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSpec {
    pub kind: OpKind,
    pub attrs: OpAttrs,
    pub in_shape: TensorShape,
    pub out_shape: TensorShape,
    /// Index of the in-group stage producing the primary input, if any.
    pub from_stage: Option<usize>,
    /// Number of operands read from DDR besides the primary one.
    pub extra_ddr_inputs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    pub stages: Vec<StageSpec>,
    pub horizontal: bool,
}

impl GroupSpec {
    /// Builds the tiler's view of `members` (a chain in dataflow order, or
    /// horizontal siblings).
    pub fn from_graph(g: &XGraph, members: &[NodeId], horizontal: bool) -> Self {
        let stages = members
            .iter()
            .map(|&id| {
                let n = g.node(id);
                let from_stage = if horizontal {
                    None
                } else {
                    n.inputs
                        .iter()
                        .find_map(|&t| members.iter().position(|&m| m == t && g.node(m).save.is_none()))
                };
                let primary = match from_stage {
                    Some(i) => members[i],
                    None => n.inputs[0],
                };
                StageSpec {
                    kind: n.kind,
                    attrs: n.attrs.clone(),
                    in_shape: g.tensor_shape(primary),
                    out_shape: n.output_shape,
                    from_stage,
                    extra_ddr_inputs: n.inputs.len() - 1,
                }
            })
            .collect();
        GroupSpec { stages, horizontal }
    }

    pub fn single(g: &XGraph, id: NodeId) -> Self {
        Self::from_graph(g, &[id], false)
    }

    pub fn out_shape(&self) -> TensorShape {
        self.stages.last().unwrap().out_shape
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileConfig {
    pub t_w: usize,
    pub t_h: usize,
    pub t_oc: usize,
    pub t_ic: usize,
    /// Output extent (w, h) each stage must produce per tile, interior case.
    pub stage_extents: Vec<(usize, usize)>,
}

/// Worst-case input extent needed for `out` outputs along one axis.
pub fn op_input_extent(kind: OpKind, attrs: &OpAttrs, vertical: bool, out: usize) -> usize {
    let (k, s, span) = if vertical {
        (attrs.kernel_h, attrs.stride_h, attrs.span_h())
    } else {
        (attrs.kernel_w, attrs.stride_w, attrs.span_w())
    };
    match kind {
        OpKind::Conv | OpKind::DilatedConv | OpKind::DepthwiseConv | OpKind::Pool(_) => {
            input_extent(out, span, s)
        }
        OpKind::Deconv => (out + k - 2) / s + 1,
        OpKind::Upsample => (out - 1) / attrs.scale + 2,
        OpKind::Reorg => out * s,
        _ => out,
    }
}

/// Channels of the primary input resident per pass when read from DDR.
pub fn input_chunk(kind: OpKind, in_channels: usize, hw: &HwConfig) -> usize {
    match kind {
        OpKind::Conv | OpKind::DilatedConv | OpKind::Deconv => hw.inc_p,
        OpKind::Reorg => in_channels,
        _ => hw.oc_p,
    }
}

/// Weight bytes one (oc, ic) pass keeps resident.
pub fn weight_tile(kind: OpKind, attrs: &OpAttrs, hw: &HwConfig) -> usize {
    match kind {
        OpKind::Conv | OpKind::DilatedConv | OpKind::Deconv => {
            hw.inc_p * attrs.kernel_w * attrs.kernel_h * hw.oc_p
        }
        OpKind::DepthwiseConv => attrs.kernel_w * attrs.kernel_h * hw.oc_p,
        _ => 0,
    }
}

/// Per-stage resident byte counts `(in, weights, out)` for width tile `t_w`.
pub fn stage_usage(group: &GroupSpec, hw: &HwConfig, t_w: usize) -> Vec<(usize, usize, usize, (usize, usize))> {
    let n = group.stages.len();
    let mut ext = vec![(0usize, 0usize); n];
    // consumers come after producers, so walk backward
    for i in (0..n).rev() {
        let consumer = (i + 1..n).find(|&j| group.stages[j].from_stage == Some(i));
        ext[i] = match (group.horizontal, consumer) {
            (false, Some(j)) => {
                let s = &group.stages[j];
                let (w, h) = ext[j];
                (
                    op_input_extent(s.kind, &s.attrs, false, w),
                    op_input_extent(s.kind, &s.attrs, true, h),
                )
            }
            _ => (t_w, hw.h_p),
        };
    }
    group
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (w, h) = ext[i];
            let in_w = op_input_extent(s.kind, &s.attrs, false, w);
            let in_h = op_input_extent(s.kind, &s.attrs, true, h).max(h);
            let primary = match s.from_stage {
                Some(_) => s.in_shape.c,
                None => input_chunk(s.kind, s.in_shape.c, hw),
            };
            let extra = s.extra_ddr_inputs * hw.oc_p * w * h;
            let b_in = primary * in_w * in_h + extra;
            let b_w = weight_tile(s.kind, &s.attrs, hw);
            let b_out = w * h * hw.oc_p;
            (b_in, b_w, b_out, (w, h))
        })
        .collect()
}

pub fn fits(group: &GroupSpec, hw: &HwConfig, t_w: usize) -> bool {
    stage_usage(group, hw, t_w)
        .iter()
        .all(|&(i, w, o, _)| i <= hw.b_in && w <= hw.b_weights && o <= hw.b_out)
}

/// Largest feasible width tile, or `None` when even `t_w = 1` overflows.
pub fn solve_tile_config(group: &GroupSpec, hw: &HwConfig) -> Option<TileConfig> {
    let width = if group.horizontal {
        group.stages.iter().map(|s| s.out_shape.w).max()?
    } else {
        group.stages.last()?.out_shape.w
    };
    if !fits(group, hw, 1) {
        return None;
    }
    // the constraints grow monotonically with t_w
    let (mut lo, mut hi) = (1, width);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if fits(group, hw, mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let stage_extents = stage_usage(group, hw, lo).iter().map(|u| u.3).collect();
    Some(TileConfig {
        t_w: lo,
        t_h: hw.h_p,
        t_oc: hw.oc_p,
        t_ic: hw.inc_p,
        stage_extents,
    })
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Number of output tiles; input-channel passes are not counted.
pub fn tile_count(shape: &TensorShape, tile: &TileConfig) -> usize {
    ceil_div(shape.w, tile.t_w) * ceil_div(shape.h, tile.t_h) * ceil_div(shape.c, tile.t_oc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_stage(in_shape: TensorShape, k: usize, s: usize, p: usize, oc: usize) -> StageSpec {
        let attrs = OpAttrs::conv(k, s, p, oc);
        let out_shape = crate::ir::infer_shape(OpKind::Conv, &attrs, &[in_shape]).unwrap();
        StageSpec {
            kind: OpKind::Conv,
            attrs,
            in_shape,
            out_shape,
            from_stage: None,
            extra_ddr_inputs: 0,
        }
    }

    #[test]
    fn input_extent_examples() {
        assert_eq!(input_extent(28, 5, 1), 32);
        assert_eq!(input_extent(1, 3, 2), 3);
        // T_h = h_p = 4 rows at stride 2 with a 4-row kernel
        assert_eq!(input_extent(4, 4, 2), 10);
    }

    #[test]
    fn unconstrained_conv_takes_full_width() {
        let g = GroupSpec {
            stages: vec![conv_stage(TensorShape::new(16, 16, 8), 3, 1, 1, 8)],
            horizontal: false,
        };
        let t = solve_tile_config(&g, &HwConfig::zu9()).unwrap();
        assert_eq!((t.t_w, t.t_h, t.t_oc, t.t_ic), (16, 8, 16, 32));
    }

    #[test]
    fn oversized_weights_are_infeasible() {
        let mut hw = HwConfig::zu2();
        hw.b_weights = 24 * 12 * 9 - 1;
        let g = GroupSpec {
            stages: vec![conv_stage(TensorShape::new(8, 8, 24), 3, 1, 1, 12)],
            horizontal: false,
        };
        assert!(solve_tile_config(&g, &hw).is_none());
    }

    #[test]
    fn zu2_reference_conv_is_maximal() {
        let g = GroupSpec {
            stages: vec![conv_stage(TensorShape::new(28, 28, 32), 5, 1, 2, 256)],
            horizontal: false,
        };
        let hw = HwConfig::zu2();
        let t = solve_tile_config(&g, &hw).unwrap();
        for w in 1..=28 {
            assert_eq!(fits(&g, &hw, w), w <= t.t_w);
        }
        assert!(t.t_w == 28 || !fits(&g, &hw, t.t_w + 1));
    }

    #[test]
    fn tile_count_examples() {
        let t = TileConfig {
            t_w: 28,
            t_h: 4,
            t_oc: 12,
            t_ic: 24,
            stage_extents: vec![],
        };
        assert_eq!(tile_count(&TensorShape::new(28, 28, 256), &t), 154);
        let whole = TileConfig { t_w: 8, t_h: 8, t_oc: 64, ..t };
        assert_eq!(tile_count(&TensorShape::new(8, 8, 64), &whole), 1);
    }

    #[test]
    fn presets_fit_on_chip() {
        for hw in [HwConfig::zu2(), HwConfig::zu9()] {
            hw.check().unwrap();
        }
        assert_eq!(HwConfig::zu9().inc_p, 32);
    }
}
