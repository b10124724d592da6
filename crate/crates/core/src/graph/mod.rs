//! Non-local patch graph: features, patches, exact k-NN and attentional
//! aggregation.

mod attention;
mod features;
mod knn;
mod patches;
mod relate;

pub use attention::{aggregate, attention_weights, attentional_aggregate, AttentionNet};
pub use features::{extract_features, FeatureExtractor, FeatureMap, ScaleTag};
pub use knn::{knn_search, knn_search_self, KnnGraph};
pub use patches::{img2patch, patch2img, patchify, unpatchify, PatchLayout, PatchSet};
pub use relate::{graph_relate, GraphModel, KeySource, QueryPatches};
