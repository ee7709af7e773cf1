use serde::{Deserialize, Serialize};

use super::config::GraphMode;
use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, HomoGraph, NodeType, Relation};
use crate::numkit::Tensor;

pub const HOMO_NODE_TYPE: &str = "node";
pub const HOMO_RELATION: &str = "edge";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelSpec {
    pub name: String,
    pub src: usize,
    pub dst: usize,
}

/// Node types, their input widths and the typed relations a model is built for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub node_types: Vec<String>,
    pub input_dims: Vec<usize>,
    pub relations: Vec<RelSpec>,
}

impl Schema {
    /// News, tweet and user types with all forward and reversed relations.
    pub fn hetero(input_dims: [usize; 3]) -> Self {
        Self {
            node_types: NodeType::ALL.iter().map(|t| t.name().to_string()).collect(),
            input_dims: input_dims.to_vec(),
            relations: Relation::ALL
                .iter()
                .map(|r| {
                    let (s, d) = r.signature();
                    RelSpec {
                        name: r.name().to_string(),
                        src: s.index(),
                        dst: d.index(),
                    }
                })
                .collect(),
        }
    }

    pub fn homo(input_dim: usize) -> Self {
        Self {
            node_types: vec![HOMO_NODE_TYPE.to_string()],
            input_dims: vec![input_dim],
            relations: vec![RelSpec {
                name: HOMO_RELATION.to_string(),
                src: 0,
                dst: 0,
            }],
        }
    }

    pub fn of_hetero(g: &HeteroGraph) -> Self {
        Self::hetero(NodeType::ALL.map(|t| g.feature_dim(t)))
    }

    pub fn of_homo(g: &HomoGraph) -> Self {
        Self::homo(g.features.cols())
    }

    pub fn mode(&self) -> GraphMode {
        if self.node_types.len() == 1 {
            GraphMode::Homo
        } else {
            GraphMode::Hetero
        }
    }

    pub fn num_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_types.is_empty() || self.node_types.len() != self.input_dims.len() {
            return Err(Error::Config("schema needs one input width per node type".into()));
        }
        if self.input_dims.contains(&0) {
            return Err(Error::Config("input widths must be positive".into()));
        }
        let n = self.node_types.len();
        if self.relations.iter().any(|r| r.src >= n || r.dst >= n) {
            return Err(Error::Config("relation refers to an unknown node type".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelEdges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl RelEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        Self {
            src: pairs.iter().map(|p| p.0).collect(),
            dst: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

/// A graph laid out against a [`Schema`]: one feature block per node type and one
/// edge list per schema relation.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub article_id: String,
    pub label: usize,
    pub features: Vec<Tensor>,
    pub edges: Vec<RelEdges>,
    /// `(type, row)` of the news node.
    pub news: (usize, usize),
}

impl GraphInput {
    pub fn from_hetero(g: &HeteroGraph, schema: &Schema) -> Result<Self> {
        if schema.mode() != GraphMode::Hetero || schema.num_types() != NodeType::ALL.len() {
            return Err(Error::Contract("heterogeneous graph given to a homogeneous model".into()));
        }
        let mut edges = vec![RelEdges::default(); schema.relations.len()];
        for (et, pairs) in g.edges() {
            let slot = schema
                .relations
                .iter()
                .position(|r| r.name == et.relation.name() && r.src == et.src.index() && r.dst == et.dst.index())
                .ok_or_else(|| Error::Contract(format!("edge type {} is not part of the model schema", et.key())))?;
            edges[slot] = RelEdges::from_pairs(pairs);
        }
        let input = Self {
            article_id: g.article_id.clone(),
            label: g.label.class(),
            features: NodeType::ALL.iter().map(|&t| g.features(t).clone()).collect(),
            edges,
            news: (NodeType::News.index(), g.news_index()),
        };
        input.check(schema)?;
        Ok(input)
    }

    pub fn from_homo(g: &HomoGraph, schema: &Schema) -> Result<Self> {
        if schema.mode() != GraphMode::Homo {
            return Err(Error::Contract("homogeneous graph given to a heterogeneous model".into()));
        }
        let input = Self {
            article_id: g.article_id.clone(),
            label: g.label.class(),
            features: vec![g.features.clone()],
            edges: vec![RelEdges::from_pairs(&g.edges)],
            news: (0, g.news_index),
        };
        input.check(schema)?;
        Ok(input)
    }

    pub fn num_nodes(&self, node_type: usize) -> usize {
        self.features[node_type].rows()
    }

    pub fn total_nodes(&self) -> usize {
        self.features.iter().map(Tensor::rows).sum()
    }

    /// Checks dims and index ranges against `schema`.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        if self.features.len() != schema.num_types() || self.edges.len() != schema.relations.len() {
            return Err(Error::Contract("graph layout does not match the model schema".into()));
        }
        for (t, f) in self.features.iter().enumerate() {
            if f.cols() != schema.input_dims[t] {
                return Err(Error::dim(
                    "graph input",
                    format!("{} features are {} wide, model expects {}", schema.node_types[t], f.cols(), schema.input_dims[t]),
                ));
            }
        }
        for (r, e) in schema.relations.iter().zip(&self.edges) {
            let (ns, nd) = (self.num_nodes(r.src), self.num_nodes(r.dst));
            if e.src.iter().any(|&s| s >= ns) || e.dst.iter().any(|&d| d >= nd) {
                return Err(Error::index("graph input", format!("edge endpoint out of range in {}", r.name)));
            }
        }
        if self.news.0 >= self.features.len() || self.news.1 >= self.num_nodes(self.news.0) {
            return Err(Error::index("graph input", "news node out of range"));
        }
        Ok(())
    }
}
