//! Fusion templates: small pattern graphs with per-vertex and per-edge
//! predicates, plus the built-in kernel-fusion catalog.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{NodeId, OpKind, XGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateClass {
    Intrinsic,
    Pointwise,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateShape {
    Chain,
    ChainEltwise,
    /// Siblings reading one tensor; member order carries no meaning.
    Horizontal,
}

/// Which vertices a query vertex may map to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindClass {
    Exact(OpKind),
    ConvFamily,
    AnyPool,
    Injective,
    Any,
}

impl KindClass {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "conv" | "conv_family" => KindClass::ConvFamily,
            "pool" => KindClass::AnyPool,
            "injective" => KindClass::Injective,
            "any" | "*" => KindClass::Any,
            other => KindClass::Exact(OpKind::parse(other)?),
        })
    }

    pub fn label(&self) -> String {
        match self {
            KindClass::Exact(k) => k.name().to_string(),
            KindClass::ConvFamily => "conv".into(),
            KindClass::AnyPool => "pool".into(),
            KindClass::Injective => "injective".into(),
            KindClass::Any => "any".into(),
        }
    }

    pub fn accepts(&self, k: OpKind) -> bool {
        k.is_computation()
            && match self {
                KindClass::Exact(e) => *e == k,
                KindClass::ConvFamily => k.is_conv_family(),
                KindClass::AnyPool => k.is_pool(),
                KindClass::Injective => k.is_injective(),
                KindClass::Any => true,
            }
    }
}

impl Serialize for KindClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for KindClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        KindClass::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVertex {
    pub kind: KindClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 2]>,
}

impl QueryVertex {
    pub fn of(kind: KindClass) -> Self {
        QueryVertex { kind, kernel: None, stride: None }
    }

    pub fn matches(&self, g: &XGraph, id: NodeId) -> bool {
        let n = g.node(id);
        self.kind.accepts(n.kind)
            && self.kernel.is_none_or(|[h, w]| n.attrs.kernel_h == h && n.attrs.kernel_w == w)
            && self.stride.is_none_or(|[h, w]| n.attrs.stride_h == h && n.attrs.stride_w == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeType {
    /// `to` reads the unshared output of `from` directly.
    #[default]
    Flow,
    /// `to` reads a shared tensor `from` saves into.
    Shared,
    /// Both read the same primary input and produce equal spatial extents.
    Sibling,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEdge {
    pub from: usize,
    pub to: usize,
    #[serde(default, rename = "type")]
    pub ty: EdgeType,
}

impl QueryEdge {
    pub fn holds(&self, g: &XGraph, a: NodeId, b: NodeId) -> bool {
        let (na, nb) = (g.node(a), g.node(b));
        match self.ty {
            EdgeType::Flow => g.is_exclusive_edge(a, b),
            EdgeType::Shared => na.save.is_some_and(|s| nb.inputs.contains(&s.tensor)),
            EdgeType::Sibling => {
                a != b
                    && !na.inputs.is_empty()
                    && nb.inputs.first() == na.inputs.first()
                    && na.output_shape.h == nb.output_shape.h
                    && na.output_shape.w == nb.output_shape.w
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionTemplate {
    pub id: String,
    #[serde(default = "kernel_class")]
    pub class: TemplateClass,
    #[serde(default = "chain_shape")]
    pub shape: TemplateShape,
    pub vertices: Vec<QueryVertex>,
    pub edges: Vec<QueryEdge>,
}

fn kernel_class() -> TemplateClass {
    TemplateClass::Kernel
}

fn chain_shape() -> TemplateShape {
    TemplateShape::Chain
}

impl FusionTemplate {
    fn chain(id: &str, kinds: &[KindClass], shape: TemplateShape) -> Self {
        FusionTemplate {
            id: id.into(),
            class: TemplateClass::Kernel,
            shape,
            vertices: kinds.iter().map(|&k| QueryVertex::of(k)).collect(),
            edges: (1..kinds.len())
                .map(|i| QueryEdge { from: i - 1, to: i, ty: EdgeType::Flow })
                .collect(),
        }
    }

    fn horizontal(k: usize) -> Self {
        FusionTemplate {
            id: format!("horizontal{k}"),
            class: TemplateClass::Kernel,
            shape: TemplateShape::Horizontal,
            vertices: vec![QueryVertex::of(KindClass::ConvFamily); k],
            edges: (1..k)
                .map(|i| QueryEdge { from: i - 1, to: i, ty: EdgeType::Sibling })
                .collect(),
        }
    }

    pub fn unordered(&self) -> bool {
        self.shape == TemplateShape::Horizontal
    }

    /// Query vertices adjacent to `v`, ignoring direction.
    pub fn neighbours(&self, v: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter_map(|e| match (e.from == v, e.to == v) {
                (true, _) => Some(e.to),
                (_, true) => Some(e.from),
                _ => None,
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.vertices.len();
        let bad = |why: &str| Err(Error::Schema(format!("template `{}`: {why}", self.id)));
        if n == 0 {
            return bad("no vertices");
        }
        if self.edges.iter().any(|e| e.from >= n || e.to >= n || e.from == e.to) {
            return bad("edge endpoint out of range");
        }
        let mut seen = BTreeSet::from([0]);
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            for u in self.neighbours(v) {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        if seen.len() != n {
            return bad("pattern graph is disconnected");
        }
        // flow edges must be acyclic
        let mut indeg = vec![0; n];
        let flow: Vec<_> = self.edges.iter().filter(|e| e.ty != EdgeType::Sibling).collect();
        flow.iter().for_each(|e| indeg[e.to] += 1);
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut done = 0;
        while let Some(v) = ready.pop() {
            done += 1;
            for e in flow.iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    ready.push(e.to);
                }
            }
        }
        if done != n {
            return bad("pattern graph has a cycle");
        }
        Ok(())
    }
}

/// Kernel-class templates shipped with the compiler, in priority order.
pub fn builtin_catalog() -> Vec<FusionTemplate> {
    use KindClass::*;
    let chain = TemplateShape::Chain;
    vec![
        FusionTemplate::chain("conv_pool", &[ConvFamily, AnyPool], chain),
        FusionTemplate::chain("conv_conv", &[ConvFamily, ConvFamily], chain),
        FusionTemplate::chain(
            "conv_eltwise",
            &[ConvFamily, Exact(OpKind::EltwiseAdd)],
            TemplateShape::ChainEltwise,
        ),
        FusionTemplate::chain("injective2", &[Injective, Injective], chain),
        FusionTemplate::chain("injective3", &[Injective, Injective, Injective], chain),
        FusionTemplate::horizontal(2),
        FusionTemplate::horizontal(3),
        FusionTemplate::horizontal(4),
    ]
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateFile {
    templates: Vec<FusionTemplate>,
}

pub fn parse_templates(text: &str) -> Result<Vec<FusionTemplate>> {
    let f: TemplateFile = serde_json::from_str(text)?;
    let mut ids = BTreeSet::new();
    for t in &f.templates {
        t.check()?;
        if !ids.insert(t.id.clone()) {
            return Err(Error::Schema(format!("duplicate template id `{}`", t.id)));
        }
    }
    Ok(f.templates)
}

pub fn load_templates(path: &Path) -> Result<Vec<FusionTemplate>> {
    parse_templates(&std::fs::read_to_string(path)?)
}

pub fn templates_json(templates: &[FusionTemplate]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "templates": templates })).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_well_formed_and_round_trips() {
        let cat = builtin_catalog();
        for t in &cat {
            t.check().unwrap();
        }
        assert_eq!(parse_templates(&templates_json(&cat)).unwrap(), cat);
    }

    #[test]
    fn rejects_disconnected_pattern() {
        let text = r#"{"templates":[{"id":"x","vertices":[{"kind":"conv"},{"kind":"pool"}],"edges":[]}]}"#;
        assert!(matches!(parse_templates(text), Err(Error::Schema(_))));
    }

    #[test]
    fn kernel_constraint_parses() {
        let text = r#"{"templates":[{"id":"c3p","vertices":[{"kind":"Conv","kernel":[3,3]},{"kind":"maxpool"}],"edges":[{"from":0,"to":1}]}]}"#;
        let t = &parse_templates(text).unwrap()[0];
        assert_eq!(t.vertices[0].kernel, Some([3, 3]));
        assert_eq!(t.vertices[1].kind, KindClass::Exact(OpKind::Pool(crate::ir::PoolType::Max)));
    }
}
