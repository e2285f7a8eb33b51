//! Labeled training samples: one featurized graph per (graph, phase) row.

use std::collections::BTreeMap;
use std::path::Path;

use crate::features::{build_perfgraph, PerfGraph, Phase};
use crate::synth::{read_dataset, LabeledGraph, SynthError};

/// One training sample: a raw (unnormalized) feature graph plus its labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graph_id: String,
    pub phase: Phase,
    pub pg: PerfGraph,
    pub labels: BTreeMap<String, f64>,
}

/// Featurizes labeled graphs into samples, one per requested phase.
pub fn samples_from_labeled(
    graphs: &[LabeledGraph],
    phases: &[Phase],
) -> Result<Vec<Sample>, SynthError> {
    let mut out = Vec::with_capacity(graphs.len() * phases.len());
    for lg in graphs {
        for &phase in phases {
            let labels = match phase {
                Phase::Infer => lg.labels_infer,
                Phase::Train => lg.labels_train,
            };
            out.push(Sample {
                graph_id: lg.id.clone(),
                phase,
                pg: build_perfgraph(&lg.graph, phase)?,
                labels: labels.to_map(),
            });
        }
    }
    Ok(out)
}

/// Loads a dataset directory (graphs/ + labels.csv) into samples.
pub fn load_samples(dir: &Path, phases: &[Phase]) -> Result<Vec<Sample>, SynthError> {
    let labeled = read_dataset(dir)?;
    samples_from_labeled(&labeled, phases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_labeled, DatasetSpec};

    #[test]
    fn one_sample_per_graph_phase_pair() {
        let graphs = gen_labeled(&DatasetSpec::mixed(1), 4).unwrap();
        let both = samples_from_labeled(&graphs, &[Phase::Infer, Phase::Train]).unwrap();
        assert_eq!(both.len(), 8);
        let infer_only = samples_from_labeled(&graphs, &[Phase::Infer]).unwrap();
        assert_eq!(infer_only.len(), 4);
        assert!(infer_only.iter().all(|s| s.phase == Phase::Infer));
        assert!(infer_only.iter().all(|s| s.pg.global.phase == 0.0));
    }
}
