//! Fusion-template catalog, template matching and candidate filtering.

pub mod candidate;
pub mod matcher;
pub mod template;

pub use candidate::{check_onchip_fit, enumerate_candidates, is_fusible, CandidateGroup};
pub use matcher::{define_start_point, filter_candidates, match_all, subgraph_search, Embedding};
pub use template::{builtin_catalog, load_templates, parse_templates, templates_json, FusionTemplate};
