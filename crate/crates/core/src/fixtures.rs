//! Random graph generators shared by tests and benchmarks.

use rand::Rng;

use crate::hetgraph::{HeteroGraph, Label, NodeType, Relation};
use crate::numkit::Tensor;

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

fn empty_graph(rng: &mut impl Rng, tweets: usize, users: usize, dims: [usize; 3]) -> HeteroGraph {
    let label = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
    let mut g = HeteroGraph::new("random", label, random_tensor(rng, 1, dims[0]).into_data());
    g.set_features(NodeType::Tweet, random_tensor(rng, tweets, dims[1]));
    g.set_features(NodeType::User, random_tensor(rng, users, dims[2]));
    g
}

/// A valid undirected article graph: every tweet cites the news node with
/// probability 0.8 (the first always does), gets a random author with probability
/// 0.8, and retweets an earlier tweet with probability 0.3.
pub fn random_hetero(rng: &mut impl Rng, tweets: usize, users: usize, dims: [usize; 3]) -> HeteroGraph {
    let mut g = empty_graph(rng, tweets, users, dims);
    for t in 0..tweets {
        if t == 0 || rng.random_bool(0.8) {
            g.add_relation_edge(Relation::Cites, t, 0);
        }
        if users > 0 && rng.random_bool(0.8) {
            g.add_relation_edge(Relation::Posts, rng.random_range(0..users), t);
        }
        if t > 0 && rng.random_bool(0.3) {
            g.add_relation_edge(Relation::Retweets, t, rng.random_range(0..t));
        }
    }
    g.make_undirected().expect("directed input")
}

/// A directed graph in which every node receives edges through at most one
/// relation: news <- citing tweets, citing tweets <- retweets, timeline tweets
/// <- users. Per-relation sums then coincide with a single neighborhood mean.
pub fn random_single_inbound(rng: &mut impl Rng, dim: usize) -> HeteroGraph {
    let citing = rng.random_range(1..=5);
    let retweets = rng.random_range(0..=4);
    let timeline = rng.random_range(0..=4);
    let users = rng.random_range(1..=4);
    let mut g = empty_graph(rng, citing + retweets + timeline, users, [dim; 3]);
    for t in 0..citing {
        g.add_relation_edge(Relation::Cites, t, 0);
    }
    for k in 0..retweets {
        g.add_relation_edge(Relation::Retweets, citing + k, rng.random_range(0..citing));
    }
    for k in 0..timeline {
        g.add_relation_edge(Relation::Posts, rng.random_range(0..users), citing + retweets + k);
    }
    g
}
