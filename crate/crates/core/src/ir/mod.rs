//! The XGraph intermediate representation, its importer and the
//! normalization passes.

pub mod graph;
pub mod import;
pub mod normalize;
pub mod params;
pub mod shape;
pub mod types;

pub use graph::{NodeId, SaveSlot, SharedTensor, TensorId, XGraph, XNode};
pub use import::{import_files, import_model, import_str, to_manifest, Manifest};
pub use normalize::{fold_bn_scale, fuse_pointwise, normalize, prune_dim_transforms, save_stride};
pub use params::{load_blob_store, save_blob_store, ParamStore, ParamTensor};
pub use shape::{infer_shape, input_range, Axis, InputRange};
pub use types::{OpAttrs, OpKind, PoolType, TensorShape};
