//! Instruction set: LOAD, SAVE, CONV, POOL and MISC, with a line-oriented
//! text form and a TLV binary form.
//!
//! Binary record: `opcode: u8`, `payload_len: u8`, then the payload. The
//! payload holds the opcode's fields in the order listed by [`schema`], each
//! little-endian at its documented width, followed by `ndeps: u8` and
//! `ndeps` little-endian `u32` predecessor indices.
//!
//! Text line: `<seq> <MNEMONIC> key=value ... deps=a,b,c`, keys in schema
//! order. Signed fields print as signed decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUF_IN: u8 = 0;
pub const BUF_WGT: u8 = 1;
pub const BUF_BIAS: u8 = 2;
pub const BUF_OUT: u8 = 3;
pub const BUF_ACC: u8 = 4;
/// First bank holding fused intermediates and secondary operands.
pub const BUF_MID0: u8 = 5;
pub const NUM_MID: u8 = 8;
pub const BIAS_CAPACITY: usize = 4096;

pub fn buffer_name(b: u8) -> String {
    match b {
        BUF_IN => "IN".into(),
        BUF_WGT => "WGT".into(),
        BUF_BIAS => "BIAS".into(),
        BUF_OUT => "OUT".into(),
        BUF_ACC => "ACC".into(),
        m => format!("MID{}", m - BUF_MID0),
    }
}

/// Bytes per element: accumulators are 32-bit, everything else 8-bit.
pub fn elem_bytes(buf: u8) -> usize {
    if buf == BUF_ACC {
        4
    } else {
        1
    }
}

/// A 3-D NHWC window inside an on-chip buffer. Strides are in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Region {
    pub buf: u8,
    /// Element offset of the first channel of the first pixel.
    pub off: u32,
    pub h: u16,
    pub w: u16,
    pub c: u16,
    pub pix: u16,
    pub row: u32,
}

impl Region {
    pub fn dense(buf: u8, off: usize, h: usize, w: usize, c: usize) -> Self {
        Region {
            buf,
            off: off as u32,
            h: h as u16,
            w: w as u16,
            c: c as u16,
            pix: c as u16,
            row: (w * c) as u32,
        }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> usize {
        self.off as usize + y * self.row as usize + x * self.pix as usize + c
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0 || self.w == 0 || self.c == 0
    }

    /// Element span `[lo, hi)` touched by the region.
    pub fn span(&self) -> (usize, usize) {
        if self.is_empty() {
            return (self.off as usize, self.off as usize);
        }
        (self.off as usize, self.at(self.h as usize - 1, self.w as usize - 1, self.c as usize - 1) + 1)
    }
}

/// Strided DDR <-> buffer copy of `n2 * n1` runs of `len` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Transfer {
    pub ddr: u32,
    pub buf: u8,
    pub boff: u32,
    pub len: u32,
    pub n1: u16,
    pub ds1: u32,
    pub bs1: u32,
    pub n2: u16,
    pub ds2: u32,
    pub bs2: u32,
}

impl Transfer {
    pub fn bytes(&self) -> u64 {
        self.len as u64 * self.n1 as u64 * self.n2 as u64
    }

    fn span(base: u32, len: u32, n1: u16, s1: u32, n2: u16, s2: u32) -> (usize, usize) {
        if len == 0 || n1 == 0 || n2 == 0 {
            return (base as usize, base as usize);
        }
        let last = base as usize + (n2 as usize - 1) * s2 as usize + (n1 as usize - 1) * s1 as usize;
        (base as usize, last + len as usize)
    }

    pub fn ddr_span(&self) -> (usize, usize) {
        Self::span(self.ddr, self.len, self.n1, self.ds1, self.n2, self.ds2)
    }

    pub fn buf_span(&self) -> (usize, usize) {
        Self::span(self.boff, self.len, self.n1, self.bs1, self.n2, self.bs2)
    }

    /// Visits `(ddr_addr, buf_addr)` of every run.
    pub fn runs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n2 as usize).flat_map(move |j| {
            (0..self.n1 as usize).map(move |i| {
                (
                    self.ddr as usize + j * self.ds2 as usize + i * self.ds1 as usize,
                    self.boff as usize + j * self.bs2 as usize + i * self.bs1 as usize,
                )
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ConvVariant {
    Standard = 0,
    Deconv = 1,
    Depthwise = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvOp {
    pub variant: ConvVariant,
    pub kh: u8,
    pub kw: u8,
    pub sh: u8,
    pub sw: u8,
    pub dil: u8,
    /// Tile-local padding; may be negative when the tile starts inside the map.
    pub pad_t: i16,
    pub pad_l: i16,
    pub relu: bool,
    /// Start a fresh accumulation instead of adding to ACC.
    pub init: bool,
    /// Add bias, requantize and write `out` after accumulating.
    pub fin: bool,
    /// Add the bias vector at `bias_off` when finishing.
    pub bias: bool,
    pub bias_shift: i8,
    pub out_shift: i8,
    pub input: Region,
    pub wgt_off: u32,
    /// Element stride between consecutive (kx, ky) weight rows.
    pub wgt_ic: u16,
    pub bias_off: u32,
    pub acc: Region,
    pub out: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolOp {
    pub max: bool,
    pub kh: u8,
    pub kw: u8,
    pub sh: u8,
    pub sw: u8,
    pub pad_t: i16,
    pub pad_l: i16,
    pub input: Region,
    pub out: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MiscKind {
    Start = 0,
    End = 1,
    Eltwise = 2,
    Relu = 3,
    Upsample = 4,
    Reorg = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MiscOp {
    pub kind: MiscKind,
    pub relu: bool,
    /// Upsample factor or reorg stride.
    pub factor: u8,
    pub shift_a: i8,
    pub shift_b: i8,
    pub out_shift: i8,
    pub pad_t: i16,
    pub pad_l: i16,
    /// First output channel produced (reorg).
    pub ch0: u16,
    pub a: Region,
    pub b: Region,
    pub out: Region,
}

impl MiscOp {
    pub fn marker(kind: MiscKind) -> Self {
        MiscOp {
            kind,
            relu: false,
            factor: 0,
            shift_a: 0,
            shift_b: 0,
            out_shift: 0,
            pad_t: 0,
            pad_l: 0,
            ch0: 0,
            a: Region::default(),
            b: Region::default(),
            out: Region::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Load(Transfer),
    Save(Transfer),
    Conv(ConvOp),
    Pool(PoolOp),
    Misc(MiscOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Engine {
    Load,
    Save,
    Conv,
    Pool,
    Misc,
}

impl Engine {
    pub const ALL: [Engine; 5] = [Engine::Load, Engine::Save, Engine::Conv, Engine::Pool, Engine::Misc];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["LOAD", "SAVE", "CONV", "POOL", "MISC"][self as usize]
    }
}

impl Op {
    pub fn engine(&self) -> Engine {
        match self {
            Op::Load(_) => Engine::Load,
            Op::Save(_) => Engine::Save,
            Op::Conv(_) => Engine::Conv,
            Op::Pool(_) => Engine::Pool,
            Op::Misc(_) => Engine::Misc,
        }
    }

    pub fn opcode(&self) -> u8 {
        match self {
            Op::Load(_) => 0x01,
            Op::Save(_) => 0x02,
            Op::Conv(_) => 0x03,
            Op::Pool(_) => 0x04,
            Op::Misc(_) => 0x05,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        self.engine().name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub op: Op,
    /// Stream indices this instruction waits on, ascending.
    pub deps: Vec<u32>,
}

impl Instruction {
    pub fn new(op: Op) -> Self {
        Instruction { op, deps: vec![] }
    }
}

/// Field names and byte widths per opcode; negative width means signed.
pub fn schema(opcode: u8) -> Option<Vec<(&'static str, i8)>> {
    const XFER: [(&str, i8); 10] = [
        ("ddr", 4),
        ("buf", 1),
        ("boff", 4),
        ("len", 4),
        ("n1", 2),
        ("ds1", 4),
        ("bs1", 4),
        ("n2", 2),
        ("ds2", 4),
        ("bs2", 4),
    ];
    let region = |p: &'static [&'static str; 7]| -> Vec<(&'static str, i8)> {
        vec![(p[0], 1), (p[1], 4), (p[2], 2), (p[3], 2), (p[4], 2), (p[5], 2), (p[6], 4)]
    };
    const IN: [&str; 7] = ["in.buf", "in.off", "in.h", "in.w", "in.c", "in.pix", "in.row"];
    const ACC: [&str; 7] = ["acc.buf", "acc.off", "acc.h", "acc.w", "acc.c", "acc.pix", "acc.row"];
    const OUT: [&str; 7] = ["out.buf", "out.off", "out.h", "out.w", "out.c", "out.pix", "out.row"];
    const A: [&str; 7] = ["a.buf", "a.off", "a.h", "a.w", "a.c", "a.pix", "a.row"];
    const B: [&str; 7] = ["b.buf", "b.off", "b.h", "b.w", "b.c", "b.pix", "b.row"];
    Some(match opcode {
        0x01 | 0x02 => XFER.to_vec(),
        0x03 => {
            let mut v = vec![
                ("variant", 1),
                ("kh", 1),
                ("kw", 1),
                ("sh", 1),
                ("sw", 1),
                ("dil", 1),
                ("pad_t", -2),
                ("pad_l", -2),
                ("flags", 1),
                ("bias_shift", -1),
                ("out_shift", -1),
            ];
            v.extend(region(&IN));
            v.extend([("wgt_off", 4), ("wgt_ic", 2), ("bias_off", 4)]);
            v.extend(region(&ACC));
            v.extend(region(&OUT));
            v
        }
        0x04 => {
            let mut v = vec![
                ("max", 1),
                ("kh", 1),
                ("kw", 1),
                ("sh", 1),
                ("sw", 1),
                ("pad_t", -2),
                ("pad_l", -2),
            ];
            v.extend(region(&IN));
            v.extend(region(&OUT));
            v
        }
        0x05 => {
            let mut v = vec![
                ("kind", 1),
                ("relu", 1),
                ("factor", 1),
                ("shift_a", -1),
                ("shift_b", -1),
                ("out_shift", -1),
                ("pad_t", -2),
                ("pad_l", -2),
                ("ch0", 2),
            ];
            v.extend(region(&A));
            v.extend(region(&B));
            v.extend(region(&OUT));
            v
        }
        _ => return None,
    })
}

fn region_fields(r: &Region) -> [i64; 7] {
    [r.buf as i64, r.off as i64, r.h as i64, r.w as i64, r.c as i64, r.pix as i64, r.row as i64]
}

fn region_from(f: &[i64]) -> Region {
    Region {
        buf: f[0] as u8,
        off: f[1] as u32,
        h: f[2] as u16,
        w: f[3] as u16,
        c: f[4] as u16,
        pix: f[5] as u16,
        row: f[6] as u32,
    }
}

/// Field values in schema order.
pub fn fields(op: &Op) -> Vec<i64> {
    match op {
        Op::Load(t) | Op::Save(t) => vec![
            t.ddr as i64,
            t.buf as i64,
            t.boff as i64,
            t.len as i64,
            t.n1 as i64,
            t.ds1 as i64,
            t.bs1 as i64,
            t.n2 as i64,
            t.ds2 as i64,
            t.bs2 as i64,
        ],
        Op::Conv(c) => {
            let flags = c.relu as i64 | (c.init as i64) << 1 | (c.fin as i64) << 2 | (c.bias as i64) << 3;
            let mut v = vec![
                c.variant as i64,
                c.kh as i64,
                c.kw as i64,
                c.sh as i64,
                c.sw as i64,
                c.dil as i64,
                c.pad_t as i64,
                c.pad_l as i64,
                flags,
                c.bias_shift as i64,
                c.out_shift as i64,
            ];
            v.extend(region_fields(&c.input));
            v.extend([c.wgt_off as i64, c.wgt_ic as i64, c.bias_off as i64]);
            v.extend(region_fields(&c.acc));
            v.extend(region_fields(&c.out));
            v
        }
        Op::Pool(p) => {
            let mut v = vec![
                p.max as i64,
                p.kh as i64,
                p.kw as i64,
                p.sh as i64,
                p.sw as i64,
                p.pad_t as i64,
                p.pad_l as i64,
            ];
            v.extend(region_fields(&p.input));
            v.extend(region_fields(&p.out));
            v
        }
        Op::Misc(m) => {
            let mut v = vec![
                m.kind as i64,
                m.relu as i64,
                m.factor as i64,
                m.shift_a as i64,
                m.shift_b as i64,
                m.out_shift as i64,
                m.pad_t as i64,
                m.pad_l as i64,
                m.ch0 as i64,
            ];
            v.extend(region_fields(&m.a));
            v.extend(region_fields(&m.b));
            v.extend(region_fields(&m.out));
            v
        }
    }
}

fn op_from_fields(opcode: u8, f: &[i64]) -> std::result::Result<Op, String> {
    Ok(match opcode {
        0x01 | 0x02 => {
            let t = Transfer {
                ddr: f[0] as u32,
                buf: f[1] as u8,
                boff: f[2] as u32,
                len: f[3] as u32,
                n1: f[4] as u16,
                ds1: f[5] as u32,
                bs1: f[6] as u32,
                n2: f[7] as u16,
                ds2: f[8] as u32,
                bs2: f[9] as u32,
            };
            if opcode == 0x01 {
                Op::Load(t)
            } else {
                Op::Save(t)
            }
        }
        0x03 => Op::Conv(ConvOp {
            variant: match f[0] {
                0 => ConvVariant::Standard,
                1 => ConvVariant::Deconv,
                2 => ConvVariant::Depthwise,
                v => return Err(format!("bad conv variant {v}")),
            },
            kh: f[1] as u8,
            kw: f[2] as u8,
            sh: f[3] as u8,
            sw: f[4] as u8,
            dil: f[5] as u8,
            pad_t: f[6] as i16,
            pad_l: f[7] as i16,
            relu: f[8] & 1 != 0,
            init: f[8] & 2 != 0,
            fin: f[8] & 4 != 0,
            bias: f[8] & 8 != 0,
            bias_shift: f[9] as i8,
            out_shift: f[10] as i8,
            input: region_from(&f[11..18]),
            wgt_off: f[18] as u32,
            wgt_ic: f[19] as u16,
            bias_off: f[20] as u32,
            acc: region_from(&f[21..28]),
            out: region_from(&f[28..35]),
        }),
        0x04 => Op::Pool(PoolOp {
            max: f[0] != 0,
            kh: f[1] as u8,
            kw: f[2] as u8,
            sh: f[3] as u8,
            sw: f[4] as u8,
            pad_t: f[5] as i16,
            pad_l: f[6] as i16,
            input: region_from(&f[7..14]),
            out: region_from(&f[14..21]),
        }),
        0x05 => Op::Misc(MiscOp {
            kind: match f[0] {
                0 => MiscKind::Start,
                1 => MiscKind::End,
                2 => MiscKind::Eltwise,
                3 => MiscKind::Relu,
                4 => MiscKind::Upsample,
                5 => MiscKind::Reorg,
                v => return Err(format!("bad misc kind {v}")),
            },
            relu: f[1] != 0,
            factor: f[2] as u8,
            shift_a: f[3] as i8,
            shift_b: f[4] as i8,
            out_shift: f[5] as i8,
            pad_t: f[6] as i16,
            pad_l: f[7] as i16,
            ch0: f[8] as u16,
            a: region_from(&f[9..16]),
            b: region_from(&f[16..23]),
            out: region_from(&f[23..30]),
        }),
        o => return Err(format!("unknown opcode {o:#04x}")),
    })
}

fn opcode_of(mnemonic: &str) -> Option<u8> {
    Some(match mnemonic {
        "LOAD" => 0x01,
        "SAVE" => 0x02,
        "CONV" => 0x03,
        "POOL" => 0x04,
        "MISC" => 0x05,
        _ => return None,
    })
}

/// Encodes a stream. Fails if a record's payload exceeds 255 bytes.
pub fn encode_binary(stream: &[Instruction]) -> Result<Vec<u8>> {
    let mut out = vec![];
    for (seq, ins) in stream.iter().enumerate() {
        let opcode = ins.op.opcode();
        let mut payload = vec![];
        for ((_, width), v) in schema(opcode).unwrap().iter().zip(fields(&ins.op)) {
            let bytes = v.to_le_bytes();
            payload.extend_from_slice(&bytes[..width.unsigned_abs() as usize]);
        }
        let too_long = |why: &str| Error::Decode { offset: seq, reason: why.into() };
        payload.push(u8::try_from(ins.deps.len()).map_err(|_| too_long("too many deps"))?);
        for d in &ins.deps {
            payload.extend_from_slice(&d.to_le_bytes());
        }
        out.push(opcode);
        out.push(u8::try_from(payload.len()).map_err(|_| too_long("payload over 255 bytes"))?);
        out.extend(payload);
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<Instruction>> {
    let mut stream = vec![];
    let mut pos = 0;
    let err = |offset: usize, reason: String| Error::Decode { offset, reason };
    while pos < bytes.len() {
        let start = pos;
        if pos + 2 > bytes.len() {
            return Err(err(start, "truncated record header".into()));
        }
        let opcode = bytes[pos];
        let len = bytes[pos + 1] as usize;
        pos += 2;
        let payload = bytes.get(pos..pos + len).ok_or_else(|| err(start, "truncated payload".into()))?;
        pos += len;
        let sch = schema(opcode).ok_or_else(|| err(start, format!("unknown opcode {opcode:#04x}")))?;
        let mut p = 0;
        let mut vals = vec![];
        for (_, width) in &sch {
            let w = width.unsigned_abs() as usize;
            let raw = payload.get(p..p + w).ok_or_else(|| err(start, "short payload".into()))?;
            let mut buf = [0u8; 8];
            buf[..w].copy_from_slice(raw);
            let mut v = i64::from_le_bytes(buf);
            if *width < 0 {
                let bits = 64 - 8 * w as u32;
                v = (v << bits) >> bits;
            }
            vals.push(v);
            p += w;
        }
        let nd = *payload.get(p).ok_or_else(|| err(start, "missing dep count".into()))? as usize;
        p += 1;
        if payload.len() != p + 4 * nd {
            return Err(err(start, "payload length disagrees with dep count".into()));
        }
        let deps = payload[p..]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let op = op_from_fields(opcode, &vals).map_err(|r| err(start, r))?;
        stream.push(Instruction { op, deps });
    }
    Ok(stream)
}

pub fn encode_text(stream: &[Instruction]) -> String {
    let mut s = String::new();
    for (seq, ins) in stream.iter().enumerate() {
        let opcode = ins.op.opcode();
        write!(s, "{seq:05} {}", ins.op.mnemonic()).unwrap();
        for ((name, _), v) in schema(opcode).unwrap().iter().zip(fields(&ins.op)) {
            write!(s, " {name}={v}").unwrap();
        }
        let deps: Vec<String> = ins.deps.iter().map(|d| d.to_string()).collect();
        writeln!(s, " deps={}", deps.join(",")).unwrap();
    }
    s
}

pub fn decode_text(text: &str) -> Result<Vec<Instruction>> {
    let mut stream = vec![];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse { line: lineno + 1, reason };
        let mut toks = line.split_whitespace();
        let seq: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("missing sequence number".into()))?;
        if seq != stream.len() {
            return Err(err(format!("expected sequence {}, found {seq}", stream.len())));
        }
        let mn = toks.next().ok_or_else(|| err("missing mnemonic".into()))?;
        let opcode = opcode_of(mn).ok_or_else(|| err(format!("unknown mnemonic `{mn}`")))?;
        let sch = schema(opcode).unwrap();
        let mut vals = Vec::with_capacity(sch.len());
        let mut deps = vec![];
        for (i, tok) in toks.enumerate() {
            let (k, v) = tok.split_once('=').ok_or_else(|| err(format!("bad token `{tok}`")))?;
            if i == sch.len() {
                if k != "deps" {
                    return Err(err(format!("expected deps, found `{k}`")));
                }
                for d in v.split(',').filter(|d| !d.is_empty()) {
                    deps.push(d.parse().map_err(|_| err(format!("bad dep `{d}`")))?);
                }
                continue;
            }
            let (name, _) = sch.get(i).ok_or_else(|| err("too many fields".into()))?;
            if k != *name {
                return Err(err(format!("expected field `{name}`, found `{k}`")));
            }
            vals.push(v.parse::<i64>().map_err(|_| err(format!("bad value `{v}`")))?);
        }
        if vals.len() != sch.len() {
            return Err(err("missing fields".into()));
        }
        let op = op_from_fields(opcode, &vals).map_err(err)?;
        stream.push(Instruction { op, deps });
    }
    Ok(stream)
}

/// Reads either encoding, sniffing the first byte.
pub fn decode_any(bytes: &[u8]) -> Result<Vec<Instruction>> {
    match bytes.first() {
        Some(b) if b.is_ascii_digit() => decode_text(
            std::str::from_utf8(bytes).map_err(|e| Error::Decode { offset: e.valid_up_to(), reason: "bad utf-8".into() })?,
        ),
        _ => decode_binary(bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Instruction> {
        let load = Transfer { ddr: 16, buf: BUF_IN, len: 24, n1: 1, n2: 1, ..Default::default() };
        let conv = ConvOp {
            variant: ConvVariant::Standard,
            kh: 1,
            kw: 1,
            sh: 1,
            sw: 1,
            dil: 1,
            pad_t: -3,
            pad_l: 0,
            relu: true,
            init: true,
            fin: true,
            bias: true,
            bias_shift: -2,
            out_shift: 5,
            input: Region::dense(BUF_IN, 0, 1, 1, 24),
            wgt_off: 0,
            wgt_ic: 24,
            bias_off: 0,
            acc: Region::dense(BUF_ACC, 0, 1, 1, 12),
            out: Region::dense(BUF_OUT, 0, 1, 1, 12),
        };
        vec![
            Instruction::new(Op::Misc(MiscOp::marker(MiscKind::Start))),
            Instruction::new(Op::Load(load)),
            Instruction { op: Op::Conv(conv), deps: vec![1] },
            Instruction { op: Op::Save(load), deps: vec![0, 2] },
        ]
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        assert_eq!(decode_binary(&encode_binary(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn text_round_trip() {
        let s = sample();
        assert_eq!(decode_text(&encode_text(&s)).unwrap(), s);
        assert_eq!(decode_any(encode_text(&s).as_bytes()).unwrap(), s);
    }

    #[test]
    fn markers_encode_compactly() {
        let s = vec![
            Instruction::new(Op::Misc(MiscOp::marker(MiscKind::Start))),
            Instruction::new(Op::Misc(MiscOp::marker(MiscKind::End))),
        ];
        let b = encode_binary(&s).unwrap();
        assert_eq!(b[0], 0x05);
        assert_eq!(b[1] as usize + 2, b.len() / 2);
        assert_eq!(b[2], MiscKind::Start as u8);
        assert_eq!(b[b.len() / 2 + 2], MiscKind::End as u8);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let b = encode_binary(&sample()).unwrap();
        assert!(matches!(decode_binary(&b[..b.len() - 1]), Err(Error::Decode { .. })));
    }
}
