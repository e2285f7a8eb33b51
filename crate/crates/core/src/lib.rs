//! Performance modeling for deep-learning computational graphs: load operator
//! DAGs, extract performance-feature graphs, and train graph-network models
//! that predict execution time, memory usage, and compute-unit utilization.

pub mod dataset;
pub mod features;
pub mod graph;
pub mod nn;
pub mod pcgrad;
pub mod seernet;
pub mod synth;
pub mod trainer;

pub use features::{build_perfgraph, normalize, NormStats, PerfGraph, Phase};
pub use graph::{CompGraph, GraphError, GraphFormat, OpKind, OpNode, TensorShape};
pub use seernet::{SeerNet, SeerNetConfig};
pub use trainer::{evaluate, train, MetricsReport, TrainConfig};
