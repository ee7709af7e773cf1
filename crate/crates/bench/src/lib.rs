//! Workloads shared by the criterion benches.

use newsgraph::fixtures::{random_hetero, random_tensor};
use newsgraph::gnn::{AnyGraph, ConvType, GraphInput, Model, ModelConfig, GraphMode, Schema};
use newsgraph::numkit::{ParamSet, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn square_pair(n: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_tensor(&mut rng, n, n), random_tensor(&mut rng, n, n))
}

pub struct ModelWorkload {
    pub model: Model,
    pub params: ParamSet,
    pub graphs: Vec<GraphInput>,
}

impl ModelWorkload {
    /// `batch` article graphs with up to 40 tweets and users each, D = 64.
    pub fn new(conv: ConvType, hidden: usize, batch: usize, seed: u64) -> Self {
        let d = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = Schema::hetero([d, d, d]);
        let mut config = ModelConfig::new(conv, GraphMode::Hetero);
        config.hidden_dim = hidden;
        let model = Model::new(config, schema).expect("valid config");
        let params = model.init_params(seed);
        let graphs = (0..batch)
            .map(|i| {
                let g = random_hetero(&mut rng, 20 + i % 21, 10 + (i * 7) % 31, [d, d, d]);
                model.prepare(AnyGraph::Hetero(&g)).expect("schema matches")
            })
            .collect();
        ModelWorkload { model, params, graphs }
    }

    pub fn batch(&self) -> Vec<&GraphInput> {
        self.graphs.iter().collect()
    }
}
