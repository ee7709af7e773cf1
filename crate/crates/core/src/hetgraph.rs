//! Per-article heterogeneous graphs: news, tweet and user nodes joined by
//! typed edges, plus the flattening into a single-typed graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Number of count features appended to tweet rows (retweets, favorites).
pub const TWEET_COUNT_FEATURES: usize = 2;
/// Number of count features appended to user rows (followers, friends, favorites, statuses).
pub const USER_COUNT_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    News,
    Tweet,
    User,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::News, NodeType::Tweet, NodeType::User];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::News => "news",
            NodeType::Tweet => "tweet",
            NodeType::User => "user",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown node type {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// tweet → news
    Cites,
    /// user → tweet
    Posts,
    /// retweet → original tweet
    Retweets,
    RevCites,
    RevPosts,
    RevRetweets,
}

impl Relation {
    pub const FORWARD: [Relation; 3] = [Relation::Cites, Relation::Posts, Relation::Retweets];
    pub const ALL: [Relation; 6] = [
        Relation::Cites,
        Relation::Posts,
        Relation::Retweets,
        Relation::RevCites,
        Relation::RevPosts,
        Relation::RevRetweets,
    ];

    /// `(source type, target type)` required by this relation.
    pub fn signature(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            Relation::Cites => (Tweet, News),
            Relation::Posts => (User, Tweet),
            Relation::Retweets => (Tweet, Tweet),
            Relation::RevCites => (News, Tweet),
            Relation::RevPosts => (Tweet, User),
            Relation::RevRetweets => (Tweet, Tweet),
        }
    }

    pub fn is_reversed(self) -> bool {
        matches!(self, Relation::RevCites | Relation::RevPosts | Relation::RevRetweets)
    }

    pub fn reversed(self) -> Relation {
        match self {
            Relation::Cites => Relation::RevCites,
            Relation::Posts => Relation::RevPosts,
            Relation::Retweets => Relation::RevRetweets,
            Relation::RevCites => Relation::Cites,
            Relation::RevPosts => Relation::Posts,
            Relation::RevRetweets => Relation::Retweets,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Cites => "cites",
            Relation::Posts => "posts",
            Relation::Retweets => "retweets",
            Relation::RevCites => "rev_cites",
            Relation::RevPosts => "rev_posts",
            Relation::RevRetweets => "rev_retweets",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown relation {s:?}")))
    }
}

/// A `(source type, relation, target type)` triple. Well-formed graphs only use
/// triples matching [`Relation::signature`], but malformed ones stay representable
/// so that [`HeteroGraph::validate`] can report them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType {
    pub src: NodeType,
    pub relation: Relation,
    pub dst: NodeType,
}

impl EdgeType {
    pub fn of(relation: Relation) -> Self {
        let (src, dst) = relation.signature();
        Self { src, relation, dst }
    }

    pub fn is_well_typed(self) -> bool {
        self.relation.signature() == (self.src, self.dst)
    }

    pub fn key(self) -> String {
        format!("{}__{}__{}", self.src, self.relation, self.dst)
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    /// Accepts either `src__relation__dst` or a bare relation name.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split("__").collect();
        match parts.as_slice() {
            [rel] => Ok(EdgeType::of(rel.parse()?)),
            [src, rel, dst] => Ok(EdgeType {
                src: src.parse()?,
                relation: rel.parse()?,
                dst: dst.parse()?,
            }),
            _ => Err(Error::Input(format!("bad edge type key {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(c: usize) -> Option<Label> {
        match c {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "0" => Ok(Label::Real),
            "fake" | "1" => Ok(Label::Fake),
            other => Err(Error::Input(format!("unknown label {other:?}"))),
        }
    }
}

/// A single validation failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NewsCount(usize),
    RelationSignature(EdgeType),
    EdgeOutOfRange { edge_type: EdgeType, src: usize, dst: usize },
    DuplicateEdge { edge_type: EdgeType, src: usize, dst: usize },
    FeatureDim { node_type: NodeType, found: usize, expected: String },
    NodeIdCount { node_type: NodeType, ids: usize, rows: usize },
    NonFinite(NodeType),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NewsCount(n) => write!(f, "|V_N| != 1 (found {n})"),
            Violation::RelationSignature(t) => write!(f, "relation signature violated by {}", t.key()),
            Violation::EdgeOutOfRange { edge_type, src, dst } => {
                write!(f, "edge ({src}, {dst}) out of range for {}", edge_type.key())
            }
            Violation::DuplicateEdge { edge_type, src, dst } => {
                write!(f, "duplicate edge ({src}, {dst}) in {}", edge_type.key())
            }
            Violation::FeatureDim {
                node_type,
                found,
                expected,
            } => write!(f, "{node_type} feature dim {found}, expected {expected}"),
            Violation::NodeIdCount { node_type, ids, rows } => {
                write!(f, "{node_type}: {ids} node ids for {rows} feature rows")
            }
            Violation::NonFinite(t) => write!(f, "{t} features contain non-finite values"),
        }
    }
}

/// Node and edge counts of a graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub nodes: BTreeMap<NodeType, usize>,
    pub edges: BTreeMap<Relation, usize>,
}

/// One article's social-context graph.
///
/// Feature rows of each node type form a block; the news block always has one
/// row, so the news node is index 0 of its block.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    pub article_id: String,
    pub label: Label,
    features: [Tensor; 3],
    node_ids: [Vec<String>; 3],
    edges: BTreeMap<EdgeType, Vec<(usize, usize)>>,
}

impl HeteroGraph {
    /// A graph with only its news node.
    pub fn new(article_id: impl Into<String>, label: Label, news_features: Vec<f64>) -> Self {
        let dim = news_features.len();
        Self {
            article_id: article_id.into(),
            label,
            features: [
                Tensor::from_vec(1, dim, news_features).expect("single news row"),
                Tensor::zeros(0, dim),
                Tensor::zeros(0, dim),
            ],
            node_ids: [Vec::new(), Vec::new(), Vec::new()],
            edges: BTreeMap::new(),
        }
    }

    /// Builds a graph from explicit blocks without validating it.
    pub fn from_parts(
        article_id: impl Into<String>,
        label: Label,
        features: [Tensor; 3],
        edges: BTreeMap<EdgeType, Vec<(usize, usize)>>,
    ) -> Self {
        Self {
            article_id: article_id.into(),
            label,
            features,
            node_ids: [Vec::new(), Vec::new(), Vec::new()],
            edges,
        }
    }

    pub fn with_node_ids(mut self, ids: [Vec<String>; 3]) -> Self {
        self.node_ids = ids;
        self
    }

    /// Sets the full feature block of a node type, replacing any existing rows.
    pub fn set_features(&mut self, node_type: NodeType, features: Tensor) {
        self.features[node_type.index()] = features;
    }

    pub fn features(&self, node_type: NodeType) -> &Tensor {
        &self.features[node_type.index()]
    }

    pub fn node_ids(&self, node_type: NodeType) -> &[String] {
        &self.node_ids[node_type.index()]
    }

    pub fn num_nodes(&self, node_type: NodeType) -> usize {
        self.features[node_type.index()].rows()
    }

    pub fn total_nodes(&self) -> usize {
        NodeType::ALL.iter().map(|&t| self.num_nodes(t)).sum()
    }

    pub fn feature_dim(&self, node_type: NodeType) -> usize {
        self.features[node_type.index()].cols()
    }

    /// Width of the text embedding, taken from the news block.
    pub fn text_dim(&self) -> usize {
        self.feature_dim(NodeType::News)
    }

    /// The news node's index within its block.
    pub fn news_index(&self) -> usize {
        0
    }

    pub fn edges(&self) -> &BTreeMap<EdgeType, Vec<(usize, usize)>> {
        &self.edges
    }

    pub fn edges_of(&self, relation: Relation) -> &[(usize, usize)] {
        self.edges
            .get(&EdgeType::of(relation))
            .map_or(&[], Vec::as_slice)
    }

    pub fn total_edges(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn add_edge(&mut self, edge_type: EdgeType, src: usize, dst: usize) {
        self.edges.entry(edge_type).or_default().push((src, dst));
    }

    pub fn add_relation_edge(&mut self, relation: Relation, src: usize, dst: usize) {
        self.add_edge(EdgeType::of(relation), src, dst);
    }

    pub fn is_undirected(&self) -> bool {
        self.edges.keys().any(|t| t.relation.is_reversed())
    }

    /// Whether tweet and user rows carry count features beyond the text embedding.
    pub fn has_social_features(&self) -> bool {
        self.feature_dim(NodeType::User) == self.text_dim() + USER_COUNT_FEATURES
            && self.feature_dim(NodeType::Tweet) == self.text_dim() + TWEET_COUNT_FEATURES
    }

    /// All constraint violations; an empty list means the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_news = self.num_nodes(NodeType::News);
        if n_news != 1 {
            out.push(Violation::NewsCount(n_news));
        }

        let d = self.text_dim();
        let tweet_dim = self.feature_dim(NodeType::Tweet);
        let user_dim = self.feature_dim(NodeType::User);
        let social = tweet_dim == d + TWEET_COUNT_FEATURES && user_dim == d + USER_COUNT_FEATURES;
        let text_only = tweet_dim == d && user_dim == d;
        if !social && !text_only {
            if tweet_dim != d && tweet_dim != d + TWEET_COUNT_FEATURES {
                out.push(Violation::FeatureDim {
                    node_type: NodeType::Tweet,
                    found: tweet_dim,
                    expected: format!("{d} or {}", d + TWEET_COUNT_FEATURES),
                });
            } else {
                let expected = if tweet_dim == d { d } else { d + USER_COUNT_FEATURES };
                out.push(Violation::FeatureDim {
                    node_type: NodeType::User,
                    found: user_dim,
                    expected: expected.to_string(),
                });
            }
        }

        for t in NodeType::ALL {
            if !self.features(t).is_finite() {
                out.push(Violation::NonFinite(t));
            }
            let ids = self.node_ids(t).len();
            if ids != 0 && ids != self.num_nodes(t) {
                out.push(Violation::NodeIdCount {
                    node_type: t,
                    ids,
                    rows: self.num_nodes(t),
                });
            }
        }

        for (&edge_type, pairs) in &self.edges {
            if !edge_type.is_well_typed() {
                out.push(Violation::RelationSignature(edge_type));
            }
            let (ns, nd) = (self.num_nodes(edge_type.src), self.num_nodes(edge_type.dst));
            let mut seen = BTreeSet::new();
            for &(src, dst) in pairs {
                if src >= ns || dst >= nd {
                    out.push(Violation::EdgeOutOfRange { edge_type, src, dst });
                }
                if !seen.insert((src, dst)) {
                    out.push(Violation::DuplicateEdge { edge_type, src, dst });
                }
            }
        }
        out
    }

    /// Adds a reversed edge of the reversed relation for every edge.
    pub fn make_undirected(&self) -> Result<HeteroGraph> {
        if self.is_undirected() {
            return Err(Error::Contract(format!(
                "graph {} already has reversed relations",
                self.article_id
            )));
        }
        let mut g = self.clone();
        for (&edge_type, pairs) in &self.edges {
            let rev = EdgeType {
                src: edge_type.dst,
                relation: edge_type.relation.reversed(),
                dst: edge_type.src,
            };
            g.edges
                .insert(rev, pairs.iter().map(|&(s, d)| (d, s)).collect());
        }
        Ok(g)
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let nodes = NodeType::ALL.iter().map(|&t| (t, self.num_nodes(t))).collect();
        let mut edges: BTreeMap<Relation, usize> = BTreeMap::new();
        for (t, pairs) in &self.edges {
            if !pairs.is_empty() {
                *edges.entry(t.relation).or_default() += pairs.len();
            }
        }
        DegreeStats { nodes, edges }
    }

    /// Row offset of each node-type block in the flattened node order
    /// (News, Tweet, User).
    pub fn block_offsets(&self) -> [usize; 3] {
        let n = self.num_nodes(NodeType::News);
        let t = self.num_nodes(NodeType::Tweet);
        [0, n, n + t]
    }

    /// Collapses node and relation types into one node set and one edge list.
    pub fn flatten(&self, mode: FlattenMode) -> HomoGraph {
        let d = self.text_dim();
        let width = match mode {
            FlattenMode::Truncate => d,
            FlattenMode::Pad => d + USER_COUNT_FEATURES,
        };
        let offsets = self.block_offsets();
        let mut features = Tensor::zeros(self.total_nodes(), width);
        let mut row = 0;
        for t in NodeType::ALL {
            let block = self.features(t);
            for r in 0..block.rows() {
                let src = block.row(r);
                let n = src.len().min(width);
                features.row_mut(row)[..n].copy_from_slice(&src[..n]);
                row += 1;
            }
        }
        let mut edges = Vec::with_capacity(self.total_edges());
        for (t, pairs) in &self.edges {
            let (os, od) = (offsets[t.src.index()], offsets[t.dst.index()]);
            edges.extend(pairs.iter().map(|&(s, d)| (s + os, d + od)));
        }
        HomoGraph {
            article_id: self.article_id.clone(),
            label: self.label,
            features,
            edges,
            news_index: offsets[NodeType::News.index()] + self.news_index(),
            offsets,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlattenMode {
    /// Keep only the first `text_dim` columns of each row.
    Truncate,
    /// Zero-pad every row to `text_dim + 4` columns.
    Pad,
}

/// A flattened graph with a single node type and a single edge relation.
#[derive(Clone, Debug, PartialEq)]
pub struct HomoGraph {
    pub article_id: String,
    pub label: Label,
    pub features: Tensor,
    pub edges: Vec<(usize, usize)>,
    pub news_index: usize,
    /// Start row of the News, Tweet and User blocks.
    pub offsets: [usize; 3],
}

impl HomoGraph {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

// ---- JSON snapshot format ----

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    article_id: String,
    label: Label,
    nodes: BTreeMap<String, Vec<Vec<f64>>>,
    edges: BTreeMap<String, Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    feature_dims: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    node_ids: BTreeMap<String, Vec<String>>,
}

impl Serialize for HeteroGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut doc = GraphDoc {
            article_id: self.article_id.clone(),
            label: self.label,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            feature_dims: BTreeMap::new(),
            node_ids: BTreeMap::new(),
        };
        for t in NodeType::ALL {
            doc.nodes.insert(t.name().into(), self.features(t).to_rows());
            doc.feature_dims.insert(t.name().into(), self.feature_dim(t));
            if !self.node_ids(t).is_empty() {
                doc.node_ids.insert(t.name().into(), self.node_ids(t).to_vec());
            }
        }
        for (t, pairs) in &self.edges {
            let key = if t.is_well_typed() {
                t.relation.name().to_string()
            } else {
                t.key()
            };
            doc.edges
                .insert(key, pairs.iter().map(|&(s, d)| [s, d]).collect());
        }
        doc.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HeteroGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = GraphDoc::deserialize(deserializer)?;
        let mut features: [Tensor; 3] = [Tensor::zeros(0, 0), Tensor::zeros(0, 0), Tensor::zeros(0, 0)];
        let mut node_ids: [Vec<String>; 3] = Default::default();
        for t in NodeType::ALL {
            let rows = doc.nodes.get(t.name()).cloned().unwrap_or_default();
            let cols = doc
                .feature_dims
                .get(t.name())
                .copied()
                .or_else(|| rows.first().map(Vec::len))
                .unwrap_or(0);
            features[t.index()] = Tensor::from_rows(&rows, cols).map_err(D::Error::custom)?;
            node_ids[t.index()] = doc.node_ids.get(t.name()).cloned().unwrap_or_default();
        }
        let mut edges = BTreeMap::new();
        for (key, pairs) in doc.edges {
            let t: EdgeType = key.parse().map_err(D::Error::custom)?;
            edges.insert(t, pairs.into_iter().map(|[s, d]| (s, d)).collect());
        }
        Ok(HeteroGraph {
            article_id: doc.article_id,
            label: doc.label,
            features,
            node_ids,
            edges,
        })
    }
}
