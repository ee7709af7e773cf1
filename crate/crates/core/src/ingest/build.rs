//! Per-article graph construction under the incremental context setups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, NodeType, Relation};
use crate::numkit::Tensor;

use super::corpus::{ArticleContext, CorpusIndex, TweetRecord, UserRecord};
use super::embed::TextEmbedder;

/// How much social context goes into a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setup {
    /// News plus citing tweets.
    S1Tweets,
    /// S1 plus the authors of citing tweets.
    S2PlusUsers,
    /// S2 plus the latest timeline tweets of those authors.
    S3PlusTimeline,
    /// S2 plus retweets of citing tweets and their authors.
    S4PlusRetweets,
    /// Union of S3 and S4.
    S5All,
}

impl Setup {
    pub const ALL: [Setup; 5] = [
        Setup::S1Tweets,
        Setup::S2PlusUsers,
        Setup::S3PlusTimeline,
        Setup::S4PlusRetweets,
        Setup::S5All,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Result<Setup> {
        Setup::ALL
            .get(usize::from(n).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Config(format!("setup must be 1..=5, got {n}")))
    }

    pub fn includes_users(self) -> bool {
        self != Setup::S1Tweets
    }

    pub fn includes_timeline(self) -> bool {
        matches!(self, Setup::S3PlusTimeline | Setup::S5All)
    }

    pub fn includes_retweets(self) -> bool {
        matches!(self, Setup::S4PlusRetweets | Setup::S5All)
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

// Setups serialise as their number (1..=5).
impl Serialize for Setup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Setup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        Setup::from_number(n).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "text")]
    TextOnly,
    #[serde(rename = "text+social")]
    TextPlusSocial,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "text_only" => Ok(FeatureMode::TextOnly),
            "text+social" | "text_plus_social" => Ok(FeatureMode::TextPlusSocial),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::TextOnly => "text",
            FeatureMode::TextPlusSocial => "text+social",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountScaling {
    #[default]
    Log1p,
    Raw,
}

impl CountScaling {
    pub fn apply(self, count: u64) -> f64 {
        match self {
            CountScaling::Log1p => (count as f64).ln_1p(),
            CountScaling::Raw => count as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub feature_mode: FeatureMode,
    pub count_scaling: CountScaling,
    pub timeline_cap: usize,
    /// Minimum number of tweet nodes, and of user nodes when users are included.
    pub min_nodes_per_type: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            feature_mode: FeatureMode::TextOnly,
            count_scaling: CountScaling::Log1p,
            timeline_cap: 5,
            min_nodes_per_type: 5,
        }
    }
}

impl BuildOptions {
    pub fn with_features(feature_mode: FeatureMode) -> Self {
        Self {
            feature_mode,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    UnknownArticle,
    NewsMissing,
    TooSmall { setup: u8, tweets: usize, users: usize },
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::UnknownArticle => f.write_str("unknown article"),
            SkipReason::NewsMissing => f.write_str("news missing"),
            SkipReason::TooSmall { setup, tweets, users } => {
                write!(f, "too small (S{setup}: {tweets} tweets, {users} users)")
            }
        }
    }
}

/// Node and edge selection for one article before any embedding work.
#[derive(Clone, Debug)]
pub struct GraphPlan<'a> {
    pub setup: Setup,
    pub article: &'a ArticleContext,
    pub tweets: Vec<&'a TweetRecord>,
    pub users: Vec<&'a UserRecord>,
    pub edges: Vec<(Relation, usize, usize)>,
}

impl GraphPlan<'_> {
    pub fn tweet_count(&self) -> usize {
        self.tweets.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }
}

/// Orders timeline tweets newest first: by timestamp when both have one,
/// otherwise by numeric id (platform ids grow over time), then lexically.
fn latest_first(a: &TweetRecord, b: &TweetRecord) -> std::cmp::Ordering {
    if let (Some(x), Some(y)) = (a.created_at, b.created_at) {
        if x != y {
            return y.cmp(&x);
        }
    }
    match (a.tweet_id.parse::<u128>(), b.tweet_id.parse::<u128>()) {
        (Ok(x), Ok(y)) => y.cmp(&x),
        _ => b.tweet_id.cmp(&a.tweet_id),
    }
}

struct PlanBuilder<'a> {
    tweets: Vec<&'a TweetRecord>,
    tweet_index: BTreeMap<&'a str, usize>,
    users: Vec<&'a UserRecord>,
    user_index: BTreeMap<&'a str, usize>,
    edges: Vec<(Relation, usize, usize)>,
    edge_set: BTreeSet<(Relation, usize, usize)>,
}

impl<'a> PlanBuilder<'a> {
    fn tweet(&mut self, t: &'a TweetRecord) -> usize {
        if let Some(&i) = self.tweet_index.get(t.tweet_id.as_str()) {
            return i;
        }
        self.tweets.push(t);
        self.tweet_index.insert(&t.tweet_id, self.tweets.len() - 1);
        self.tweets.len() - 1
    }

    fn user(&mut self, u: &'a UserRecord) -> usize {
        if let Some(&i) = self.user_index.get(u.user_id.as_str()) {
            return i;
        }
        self.users.push(u);
        self.user_index.insert(&u.user_id, self.users.len() - 1);
        self.users.len() - 1
    }

    fn edge(&mut self, r: Relation, s: usize, d: usize) {
        if self.edge_set.insert((r, s, d)) {
            self.edges.push((r, s, d));
        }
    }
}

/// Selects nodes and forward edges for `setup` without embedding any text.
pub fn plan_graph<'a>(article: &'a ArticleContext, setup: Setup, timeline_cap: usize) -> std::result::Result<GraphPlan<'a>, SkipReason> {
    if article.news.is_none() {
        return Err(SkipReason::NewsMissing);
    }
    let mut b = PlanBuilder {
        tweets: Vec::new(),
        tweet_index: BTreeMap::new(),
        users: Vec::new(),
        user_index: BTreeMap::new(),
        edges: Vec::new(),
        edge_set: BTreeSet::new(),
    };

    for t in &article.citing {
        let ti = b.tweet(t);
        b.edge(Relation::Cites, ti, 0);
    }

    if setup.includes_users() {
        for t in &article.citing {
            if let Some(u) = article.user(&t.user_id) {
                let ui = b.user(u);
                let ti = b.tweet_index[t.tweet_id.as_str()];
                b.edge(Relation::Posts, ui, ti);
            }
        }
    }

    if setup.includes_timeline() {
        let authors: Vec<&'a UserRecord> = b.users.clone();
        for u in authors {
            let Some(timeline) = article.timelines.get(&u.user_id) else {
                continue;
            };
            let mut sorted: Vec<&TweetRecord> = timeline.iter().collect();
            sorted.sort_by(|x, y| latest_first(x, y));
            let ui = b.user_index[u.user_id.as_str()];
            for t in sorted.into_iter().take(timeline_cap) {
                let ti = b.tweet(t);
                b.edge(Relation::Posts, ui, ti);
            }
        }
    }

    if setup.includes_retweets() {
        for rt in &article.retweets {
            let super::corpus::TweetKind::RetweetOf(of) = &rt.kind else {
                continue;
            };
            let Some(&orig) = b.tweet_index.get(of.as_str()) else {
                continue;
            };
            let ri = b.tweet(rt);
            b.edge(Relation::Retweets, ri, orig);
            if let Some(u) = article.user(&rt.user_id) {
                let ui = b.user(u);
                b.edge(Relation::Posts, ui, ri);
            }
        }
    }

    Ok(GraphPlan {
        setup,
        article,
        tweets: b.tweets,
        users: b.users,
        edges: b.edges,
    })
}

/// At least `min` tweet nodes, and at least `min` user nodes when the setup
/// includes users. The single news node is exempt.
pub fn passes_min_size(tweets: usize, users: usize, setup: Setup, min: usize) -> bool {
    tweets >= min && (!setup.includes_users() || users >= min)
}

pub fn min_size_filter(g: &HeteroGraph, setup: Setup, min: usize) -> bool {
    passes_min_size(g.num_nodes(NodeType::Tweet), g.num_nodes(NodeType::User), setup, min)
}

fn feature_block(
    texts_and_counts: impl Iterator<Item = (String, Vec<u64>)>,
    n_counts: usize,
    opts: &BuildOptions,
    embedder: &dyn TextEmbedder,
) -> Result<Tensor> {
    let social = opts.feature_mode == FeatureMode::TextPlusSocial;
    let width = embedder.dim() + if social { n_counts } else { 0 };
    let mut rows = Vec::new();
    for (text, counts) in texts_and_counts {
        let mut row = embedder.embed(&text)?;
        if row.len() != embedder.dim() {
            return Err(Error::dim("embed_text", format!("{} values, expected {}", row.len(), embedder.dim())));
        }
        if social {
            row.extend(counts.into_iter().map(|c| opts.count_scaling.apply(c)));
        }
        rows.push(row);
    }
    Tensor::from_rows(&rows, width)
}

/// Embeds a plan into a validated, undirected graph.
pub fn materialize(plan: &GraphPlan<'_>, opts: &BuildOptions, embedder: &dyn TextEmbedder) -> Result<HeteroGraph> {
    let news = plan.article.news.as_ref().expect("planned articles have news");
    let mut g = HeteroGraph::new(plan.article.article_id.clone(), news.label, embedder.embed(&news.text)?);
    if g.text_dim() != embedder.dim() {
        return Err(Error::dim("embed_text", "news embedding width differs from embedder dim"));
    }
    g.set_features(
        NodeType::Tweet,
        feature_block(
            plan.tweets
                .iter()
                .map(|t| (t.text.clone(), vec![t.retweet_count, t.favorite_count])),
            2,
            opts,
            embedder,
        )?,
    );
    g.set_features(
        NodeType::User,
        feature_block(
            plan.users.iter().map(|u| {
                (
                    u.description.clone(),
                    vec![u.followers, u.friends, u.favorites, u.statuses],
                )
            }),
            4,
            opts,
            embedder,
        )?,
    );
    for &(r, s, d) in &plan.edges {
        g.add_relation_edge(r, s, d);
    }
    let g = g.with_node_ids([
        vec![plan.article.article_id.clone()],
        plan.tweets.iter().map(|t| t.tweet_id.clone()).collect(),
        plan.users.iter().map(|u| u.user_id.clone()).collect(),
    ]);
    let violations = g.validate();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::Contract(format!(
            "built graph {} is invalid: {}",
            g.article_id,
            text.join("; ")
        )));
    }
    g.make_undirected()
}

#[derive(Debug)]
pub enum BuildOutcome {
    Built(HeteroGraph),
    Skipped(SkipReason),
}

/// Builds one article's graph, applying the availability and size filters of
/// `setup` only.
pub fn build_graph(
    article_id: &str,
    setup: Setup,
    opts: &BuildOptions,
    corpus: &CorpusIndex,
    embedder: &dyn TextEmbedder,
) -> Result<BuildOutcome> {
    let Some(article) = corpus.get(article_id) else {
        return Ok(BuildOutcome::Skipped(SkipReason::UnknownArticle));
    };
    let plan = match plan_graph(article, setup, opts.timeline_cap) {
        Ok(p) => p,
        Err(reason) => return Ok(BuildOutcome::Skipped(reason)),
    };
    if !passes_min_size(plan.tweet_count(), plan.user_count(), setup, opts.min_nodes_per_type) {
        return Ok(BuildOutcome::Skipped(SkipReason::TooSmall {
            setup: setup.number(),
            tweets: plan.tweet_count(),
            users: plan.user_count(),
        }));
    }
    Ok(BuildOutcome::Built(materialize(&plan, opts, embedder)?))
}

/// Articles that are available and pass the size filter under every setup,
/// in ascending id order, plus the reason each other article was dropped.
pub fn kept_articles(corpus: &CorpusIndex, opts: &BuildOptions) -> (Vec<String>, Vec<(String, SkipReason)>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    'articles: for (id, article) in &corpus.articles {
        if article.label.is_none() || article.news.is_none() {
            skipped.push((id.clone(), SkipReason::NewsMissing));
            continue;
        }
        for setup in Setup::ALL {
            let plan = match plan_graph(article, setup, opts.timeline_cap) {
                Ok(p) => p,
                Err(reason) => {
                    skipped.push((id.clone(), reason));
                    continue 'articles;
                }
            };
            if !passes_min_size(plan.tweet_count(), plan.user_count(), setup, opts.min_nodes_per_type) {
                skipped.push((
                    id.clone(),
                    SkipReason::TooSmall {
                        setup: setup.number(),
                        tweets: plan.tweet_count(),
                        users: plan.user_count(),
                    },
                ));
                continue 'articles;
            }
        }
        kept.push(id.clone());
    }
    (kept, skipped)
}

/// Graphs for one setup over the shared kept-article set.
#[derive(Debug)]
pub struct BuiltDataset {
    pub setup: Setup,
    pub options: BuildOptions,
    pub graphs: Vec<HeteroGraph>,
    pub skipped: Vec<(String, SkipReason)>,
}

impl BuiltDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label.class()).collect()
    }
}

pub fn build_dataset(
    corpus: &CorpusIndex,
    setup: Setup,
    opts: &BuildOptions,
    embedder: &dyn TextEmbedder,
) -> Result<BuiltDataset> {
    let (kept, skipped) = kept_articles(corpus, opts);
    if kept.is_empty() {
        return Err(Error::Input(format!(
            "no article of {} passes the availability and size filters",
            corpus.root.display()
        )));
    }
    let mut graphs = Vec::with_capacity(kept.len());
    for id in &kept {
        let article = &corpus.articles[id];
        let plan = plan_graph(article, setup, opts.timeline_cap).expect("kept articles plan cleanly");
        graphs.push(materialize(&plan, opts, embedder)?);
    }
    Ok(BuiltDataset {
        setup,
        options: *opts,
        graphs,
        skipped,
    })
}
