//! Turns embeddings into fusible candidate groups and checks on-chip fit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::matcher::{match_all, Embedding};
use super::template::{FusionTemplate, TemplateShape};
use crate::ir::{NodeId, XGraph};
use crate::search::is_barrier;
use crate::tiling::{solve_tile_config, GroupSpec, HwConfig, TileConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub embedding: Embedding,
    /// Chains in dataflow order; siblings ascending.
    pub members: Vec<NodeId>,
    pub horizontal: bool,
    pub fits_onchip: bool,
    pub tile: Option<TileConfig>,
}

/// Orders `ids` so each chain member follows the one it reads from, or
/// returns `None` if they do not form a simple path.
pub fn chain_order(g: &XGraph, ids: &[NodeId]) -> Option<Vec<NodeId>> {
    let set: BTreeSet<NodeId> = ids.iter().copied().collect();
    let in_group = |id: NodeId| -> Vec<NodeId> {
        g.node(id).inputs.iter().copied().filter(|t| set.contains(t)).collect()
    };
    let heads: Vec<NodeId> = ids.iter().copied().filter(|&id| in_group(id).is_empty()).collect();
    if heads.len() != 1 {
        return None;
    }
    let mut order = vec![heads[0]];
    while order.len() < ids.len() {
        let last = *order.last().unwrap();
        let next: Vec<NodeId> =
            ids.iter().copied().filter(|&id| in_group(id) == vec![last]).collect();
        if next.len() != 1 {
            return None;
        }
        order.push(next[0]);
    }
    Some(order)
}

/// Structural rules a group must obey to run as one on-chip kernel: a chain
/// whose intermediates never leave the group, with barriers only at the
/// tail; or non-barrier siblings reading one tensor.
pub fn is_fusible(g: &XGraph, members: &[NodeId], horizontal: bool) -> bool {
    if members.len() < 2 || members.iter().collect::<BTreeSet<_>>().len() != members.len() {
        return members.len() == 1;
    }
    if members.iter().any(|&m| !g.node(m).kind.is_computation()) {
        return false;
    }
    if horizontal {
        let src = g.node(members[0]).inputs.first();
        return members.iter().all(|&m| {
            let n = g.node(m);
            !is_barrier(g, m) && n.inputs.len() == 1 && n.inputs.first() == src
        });
    }
    let Some(order) = chain_order(g, members) else { return false };
    if order != members {
        return false;
    }
    order.windows(2).all(|w| {
        let (p, c) = (w[0], w[1]);
        !is_barrier(g, p)
            && g.node(p).save.is_none()
            && g.succs(p) == vec![c]
            && g.node(c).inputs.iter().filter(|&&t| t == p).count() == 1
    })
}

/// Solves a tile for the group; `None` means it cannot fit at any width.
pub fn check_onchip_fit(g: &XGraph, members: &[NodeId], horizontal: bool, hw: &HwConfig) -> Option<TileConfig> {
    solve_tile_config(&GroupSpec::from_graph(g, members, horizontal), hw)
}

/// All fusible multi-vertex candidates from every template, with duplicate
/// member sets collapsed onto the first template that produced them.
pub fn enumerate_candidates(g: &XGraph, templates: &[FusionTemplate], hw: &HwConfig) -> Vec<CandidateGroup> {
    let mut seen = BTreeSet::new();
    let mut out = vec![];
    for e in match_all(templates, g) {
        let t = templates.iter().find(|t| t.id == e.template).unwrap();
        let horizontal = t.shape == TemplateShape::Horizontal;
        let members = if horizontal {
            let mut m = e.mapping.clone();
            m.sort_unstable();
            m
        } else {
            match chain_order(g, &e.mapping) {
                Some(m) => m,
                None => continue,
            }
        };
        if members.len() < 2 || !is_fusible(g, &members, horizontal) {
            continue;
        }
        let key: BTreeSet<NodeId> = members.iter().copied().collect();
        if !seen.insert(key) {
            continue;
        }
        let tile = check_onchip_fit(g, &members, horizontal, hw);
        out.push(CandidateGroup {
            embedding: e,
            members,
            horizontal,
            fits_onchip: tile.is_some(),
            tile,
        });
    }
    out
}
