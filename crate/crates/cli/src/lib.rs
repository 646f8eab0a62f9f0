//! Batch front end of `cwass`: pairwise distance runs, MDS embeddings and
//! correspondence export.

pub mod mds;
pub mod report;

pub use mds::{mds_embed, silhouette, Embedding};
pub use report::{
    export_correspondence, load_input, load_pair, run, DistanceMatrixReport, Method, PairResult, RunManifest, RunOutput,
};
