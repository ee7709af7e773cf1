//! Corpus loading, text embedding and per-article graph construction.

mod build;
mod corpus;
mod embed;

pub use build::{
    build_dataset, build_graph, kept_articles, materialize, min_size_filter, passes_min_size, plan_graph,
    BuildOptions, BuildOutcome, BuiltDataset, CountScaling, FeatureMode, GraphPlan, Setup, SkipReason,
};
pub use corpus::{load_corpus, ArticleContext, CorpusIndex, NewsRecord, TweetKind, TweetRecord, UserRecord};
pub use embed::{
    content_key, embed_text, tokenize, EmbedderSpec, HashingEmbedder, MissPolicy, PrecomputedEmbedder, TextEmbedder,
};
