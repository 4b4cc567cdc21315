//! Shared fixtures for the benchmarks.

use masknet::data::{gen_synthetic, Dataset, EncodedInstance, SyntheticConfig};
use masknet::model::{Model, ModelSpec, Topology};

/// Default-sized synthetic data (8 fields, 50 categories each).
pub fn dataset(instances: usize) -> Dataset {
    gen_synthetic(&SyntheticConfig {
        instances,
        ..SyntheticConfig::default()
    })
    .expect("synthetic data")
}

pub fn model(topology: Topology, data: &Dataset) -> Model {
    let spec = ModelSpec::default().with_topology(topology);
    Model::new(&spec, data.schema.clone()).expect("model")
}

pub fn batch(data: &Dataset, size: usize) -> Vec<&EncodedInstance> {
    data.instances.iter().take(size).collect()
}
