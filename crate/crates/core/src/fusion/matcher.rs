//! Complete subgraph-isomorphism enumeration of a template in an XGraph.
//!
//! Candidates are filtered per query vertex, the search starts from the
//! query vertex with the fewest candidates, and grows the partial mapping in
//! breadth-first order over the pattern, refining each step's candidates by
//! adjacency to an already-matched neighbour.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::template::{EdgeType, FusionTemplate};
use crate::ir::{NodeId, XGraph};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Embedding {
    pub template: String,
    /// `mapping[v]` is the graph vertex query vertex `v` maps to.
    pub mapping: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn filter_candidates(q: &FusionTemplate, g: &XGraph, v: usize) -> Vec<NodeId> {
    g.nodes.keys().copied().filter(|&id| q.vertices[v].matches(g, id)).collect()
}

/// Query vertex with the smallest candidate set; ties go to the earliest.
pub fn define_start_point(candidates: &[Vec<NodeId>]) -> usize {
    (0..candidates.len()).min_by_key(|&v| (candidates[v].len(), v)).unwrap_or(0)
}

fn bfs_order(q: &FusionTemplate, start: usize) -> Vec<(usize, Option<usize>)> {
    let mut order = vec![];
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([(start, None)]);
    while let Some((v, parent)) = queue.pop_front() {
        order.push((v, parent));
        for u in q.neighbours(v) {
            if seen.insert(u) {
                queue.push_back((u, Some(v)));
            }
        }
    }
    order
}

/// Graph vertices standing in relation to matched vertex `m` the way query
/// vertex `v` relates to query vertex `parent`.
fn refine(q: &FusionTemplate, g: &XGraph, parent: usize, m: NodeId, v: usize) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for e in &q.edges {
        if e.from == parent && e.to == v {
            match e.ty {
                EdgeType::Sibling => {
                    if let Some(&t) = g.node(m).inputs.first() {
                        out.extend(g.consumers(t));
                    }
                }
                _ => out.extend(g.succs(m)),
            }
        } else if e.to == parent && e.from == v {
            match e.ty {
                EdgeType::Sibling => {
                    if let Some(&t) = g.node(m).inputs.first() {
                        out.extend(g.consumers(t));
                    }
                }
                _ => out.extend(g.preds(m)),
            }
        }
    }
    out
}

fn consistent(q: &FusionTemplate, g: &XGraph, mapping: &[Option<NodeId>], v: usize, c: NodeId) -> bool {
    q.edges.iter().all(|e| {
        let resolve = |x: usize| if x == v { Some(c) } else { mapping[x] };
        match (resolve(e.from), resolve(e.to)) {
            (Some(a), Some(b)) if e.from == v || e.to == v => e.holds(g, a, b),
            _ => true,
        }
    })
}

struct Search<'a> {
    q: &'a FusionTemplate,
    g: &'a XGraph,
    candidates: Vec<BTreeSet<NodeId>>,
    order: Vec<(usize, Option<usize>)>,
    mapping: Vec<Option<NodeId>>,
    used: BTreeSet<NodeId>,
    found: BTreeSet<Vec<NodeId>>,
}

impl Search<'_> {
    fn recurse(&mut self, depth: usize) {
        if depth == self.order.len() {
            let mut m: Vec<NodeId> = self.mapping.iter().map(|x| x.unwrap()).collect();
            if self.q.unordered() {
                m.sort_unstable();
            }
            self.found.insert(m);
            return;
        }
        let (v, parent) = self.order[depth];
        let pool: Vec<NodeId> = match parent {
            None => self.candidates[v].iter().copied().collect(),
            Some(p) => refine(self.q, self.g, p, self.mapping[p].unwrap(), v)
                .intersection(&self.candidates[v])
                .copied()
                .collect(),
        };
        for c in pool {
            if self.used.contains(&c) || !consistent(self.q, self.g, &self.mapping, v, c) {
                continue;
            }
            self.mapping[v] = Some(c);
            self.used.insert(c);
            self.recurse(depth + 1);
            self.used.remove(&c);
            self.mapping[v] = None;
        }
    }
}

/// Every distinct embedding of `q` in `g`, ordered lexicographically by
/// mapped ids. Sibling permutations collapse to ascending order.
pub fn subgraph_search(q: &FusionTemplate, g: &XGraph) -> Vec<Embedding> {
    let candidates: Vec<Vec<NodeId>> =
        (0..q.vertices.len()).map(|v| filter_candidates(q, g, v)).collect();
    if candidates.iter().any(|c| c.is_empty()) {
        return vec![];
    }
    let start = define_start_point(&candidates);
    let mut s = Search {
        q,
        g,
        candidates: candidates.into_iter().map(|c| c.into_iter().collect()).collect(),
        order: bfs_order(q, start),
        mapping: vec![None; q.vertices.len()],
        used: BTreeSet::new(),
        found: BTreeSet::new(),
    };
    s.recurse(0);
    s.found
        .into_iter()
        .map(|mapping| Embedding {
            template: q.id.clone(),
            edges: q.edges.iter().map(|e| (mapping[e.from], mapping[e.to])).collect(),
            mapping,
        })
        .collect()
}

pub fn match_all(templates: &[FusionTemplate], g: &XGraph) -> Vec<Embedding> {
    templates.iter().flat_map(|q| subgraph_search(q, g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::template::builtin_catalog;
    use crate::ir::{OpAttrs, OpKind, TensorShape};

    fn by_id<'a>(id: &str, cat: &'a [FusionTemplate]) -> &'a FusionTemplate {
        cat.iter().find(|t| t.id == id).unwrap()
    }

    #[test]
    fn two_conv_pool_pairs() {
        let mut g = XGraph::new("t");
        let x = g.add_input("x", TensorShape::new(8, 8, 4));
        for _ in 0..2 {
            let c = g.add("c", OpKind::Conv, OpAttrs::conv(3, 1, 1, 4), &[x], &[]).unwrap();
            g.add("p", OpKind::Pool(crate::ir::PoolType::Max), OpAttrs::pool(2, 2, 0), &[c], &[])
                .unwrap();
        }
        g.add_missing_outputs();
        let cat = builtin_catalog();
        let e = subgraph_search(by_id("conv_pool", &cat), &g);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].mapping, vec![1, 2]);
        assert_eq!(e[1].mapping, vec![3, 4]);
        // the two convs share an input and are horizontal siblings
        assert_eq!(subgraph_search(by_id("horizontal2", &cat), &g).len(), 1);
    }

    #[test]
    fn overlapping_chain_embeddings_are_all_reported() {
        let mut g = XGraph::new("t");
        let mut t = g.add_input("x", TensorShape::new(8, 8, 4));
        for _ in 0..3 {
            t = g.add("c", OpKind::Conv, OpAttrs::conv(3, 1, 1, 4), &[t], &[]).unwrap();
        }
        g.add_missing_outputs();
        let cat = builtin_catalog();
        let e: Vec<_> = subgraph_search(by_id("conv_conv", &cat), &g)
            .into_iter()
            .map(|e| e.mapping)
            .collect();
        assert_eq!(e, vec![vec![1, 2], vec![2, 3]]);
    }

    #[test]
    fn start_point_is_smallest_set() {
        assert_eq!(define_start_point(&[vec![1; 7], vec![1; 3], vec![1; 9]]), 1);
        assert_eq!(define_start_point(&[vec![1], vec![2], vec![3]]), 0);
    }
}
