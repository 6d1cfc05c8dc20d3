//! Joint community detection and node embedding.
//!
//! Each node carries a distribution over communities and each community a
//! distribution over nodes; an edge `(w, c)` is generated by picking a
//! community for `w` and emitting `c` from it. Both distributions are softmax
//! models over learned embeddings, trained by maximizing a variational lower
//! bound with straight-through Gumbel-Softmax gradients and an optional
//! Jaccard-weighted smoothness penalty.

pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};
pub use graph::{generate_sbm, load_edge_list, CommunitySet, Graph, NoiseDistribution};
pub use model::{AssignMode, MembershipVector, ModelParams};
pub use training::{train, TrainConfig, TrainedModel};
