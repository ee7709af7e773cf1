//! Loading of crawl-shaped corpora from a directory of JSON files.
//!
//! ```text
//! manifest.json          {"articles": [{"id", "label", "dataset"}]}
//! news/<id>.json         {"id", "title", "text"}
//! tweets/<id>.json       [{"tweet_id", "text", "retweet_count", "favorite_count", "user_id", "created_at"}]
//! retweets/<id>.json     [{... , "of_tweet_id"}]
//! users/<id>.json        [{"user_id", "description", "followers", "friends", "favorites", "statuses"}]
//! timelines/<id>.json    {"<user_id>": [tweet objects]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hetgraph::Label;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsRecord {
    pub article_id: String,
    pub label: Label,
    /// Title and body joined by a space.
    pub text: String,
    pub dataset: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TweetKind {
    Citing,
    RetweetOf(String),
    Timeline,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub text: String,
    pub retweet_count: u64,
    pub favorite_count: u64,
    pub user_id: String,
    pub kind: TweetKind,
    /// Seconds since the Unix epoch, when the crawl recorded a parseable timestamp.
    pub created_at: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub description: String,
    pub followers: u64,
    pub friends: u64,
    pub favorites: u64,
    pub statuses: u64,
}

/// Everything loaded for one manifest entry.
#[derive(Clone, Debug, Default)]
pub struct ArticleContext {
    pub article_id: String,
    pub label: Option<Label>,
    pub dataset: String,
    /// `None` when the news content file is missing or unreadable.
    pub news: Option<NewsRecord>,
    pub citing: Vec<TweetRecord>,
    pub retweets: Vec<TweetRecord>,
    users: Vec<UserRecord>,
    user_index: BTreeMap<String, usize>,
    pub timelines: BTreeMap<String, Vec<TweetRecord>>,
}

impl ArticleContext {
    pub fn is_available(&self) -> bool {
        self.news.is_some()
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.user_index.get(user_id).map(|&i| &self.users[i])
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }
}

/// Parsed corpus keyed by article id.
#[derive(Clone, Debug, Default)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub articles: BTreeMap<String, ArticleContext>,
    pub warnings: Vec<String>,
}

impl CorpusIndex {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }

    pub fn get(&self, article_id: &str) -> Option<&ArticleContext> {
        self.articles.get(article_id)
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn news_count(&self) -> usize {
        self.articles.values().filter(|a| a.is_available()).count()
    }
}

// ---- raw JSON shapes ----

/// Ids appear as strings or as JSON numbers depending on the crawler.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Str(String),
    Num(u64),
}

impl From<RawId> for String {
    fn from(id: RawId) -> String {
        match id {
            RawId::Str(s) => s,
            RawId::Num(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct RawManifest {
    articles: Vec<Value>,
}

#[derive(Deserialize)]
struct RawManifestEntry {
    id: RawId,
    label: String,
    #[serde(default)]
    dataset: String,
}

#[derive(Deserialize)]
struct RawNews {
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct RawTweet {
    tweet_id: RawId,
    #[serde(default)]
    text: String,
    #[serde(default)]
    retweet_count: u64,
    #[serde(default)]
    favorite_count: u64,
    user_id: RawId,
    #[serde(default)]
    created_at: Option<Value>,
    #[serde(default)]
    of_tweet_id: Option<RawId>,
}

#[derive(Deserialize)]
struct RawUser {
    user_id: RawId,
    #[serde(default)]
    description: String,
    #[serde(default)]
    followers: u64,
    #[serde(default)]
    friends: u64,
    #[serde(default)]
    favorites: u64,
    #[serde(default)]
    statuses: u64,
}

fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => chrono::DateTime::parse_from_rfc3339(s)
            .or_else(|_| chrono::DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y"))
            .map(|t| t.timestamp())
            .ok(),
        _ => None,
    }
}

struct Loader {
    warnings: Vec<String>,
}

impl Loader {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Reads a JSON file; `Ok(None)` when it does not exist.
    fn read_json(&mut self, path: &Path) -> Option<Value> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                self.warn(format!("{}: {e}", path.display()));
                return None;
            }
        };
        match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                self.warn(format!("{}: malformed JSON: {e}", path.display()));
                None
            }
        }
    }

    fn tweet(&mut self, v: Value, kind: TweetKind, origin: &str) -> Option<(TweetRecord, Option<String>)> {
        match serde_json::from_value::<RawTweet>(v) {
            Ok(raw) => {
                let created_at = raw.created_at.as_ref().and_then(parse_timestamp);
                Some((
                    TweetRecord {
                        tweet_id: raw.tweet_id.into(),
                        text: raw.text,
                        retweet_count: raw.retweet_count,
                        favorite_count: raw.favorite_count,
                        user_id: raw.user_id.into(),
                        kind,
                        created_at,
                    },
                    raw.of_tweet_id.map(String::from),
                ))
            }
            Err(e) => {
                self.warn(format!("{origin}: skipping malformed tweet: {e}"));
                None
            }
        }
    }

    fn array(&mut self, v: Option<Value>, origin: &str) -> Vec<Value> {
        match v {
            None => Vec::new(),
            Some(Value::Array(items)) => items,
            Some(_) => {
                self.warn(format!("{origin}: expected a JSON array"));
                Vec::new()
            }
        }
    }
}

fn safe_file_stem(id: &str) -> bool {
    !id.is_empty() && !id.contains(['/', '\\']) && id != "." && id != ".."
}

/// Loads and indexes a corpus directory. Individual malformed records are
/// skipped and counted in [`CorpusIndex::warnings`]; a missing root or manifest
/// is fatal.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<CorpusIndex> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Input(format!("corpus root {} is not a directory", root.display())));
    }
    let manifest_path = root.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: RawManifest = serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;

    let mut loader = Loader { warnings: Vec::new() };
    let mut articles = BTreeMap::new();
    for entry in manifest.articles {
        let entry: RawManifestEntry = match serde_json::from_value(entry) {
            Ok(e) => e,
            Err(e) => {
                loader.warn(format!("manifest: skipping malformed entry: {e}"));
                continue;
            }
        };
        let id: String = entry.id.into();
        if !safe_file_stem(&id) {
            loader.warn(format!("manifest: unusable article id {id:?}"));
            continue;
        }
        if articles.contains_key(&id) {
            loader.warn(format!("manifest: duplicate article {id}"));
            continue;
        }
        let label = match entry.label.parse::<Label>() {
            Ok(l) => Some(l),
            Err(_) => {
                loader.warn(format!("manifest: article {id} has unknown label {:?}", entry.label));
                None
            }
        };
        let ctx = load_article(&mut loader, root, id.clone(), label, entry.dataset);
        articles.insert(id, ctx);
    }
    Ok(CorpusIndex {
        root: root.to_path_buf(),
        articles,
        warnings: loader.warnings,
    })
}

fn load_article(loader: &mut Loader, root: &Path, id: String, label: Option<Label>, dataset: String) -> ArticleContext {
    let file = format!("{id}.json");
    let mut ctx = ArticleContext {
        article_id: id.clone(),
        label,
        dataset: dataset.clone(),
        ..Default::default()
    };

    if let (Some(v), Some(label)) = (loader.read_json(&root.join("news").join(&file)), label) {
        match serde_json::from_value::<RawNews>(v) {
            Ok(raw) => {
                let text = match (raw.title.is_empty(), raw.text.is_empty()) {
                    (false, false) => format!("{} {}", raw.title, raw.text),
                    (false, true) => raw.title,
                    _ => raw.text,
                };
                ctx.news = Some(NewsRecord {
                    article_id: id.clone(),
                    label,
                    text,
                    dataset,
                });
            }
            Err(e) => loader.warn(format!("news/{file}: malformed news record: {e}")),
        }
    }

    let mut seen_tweets = BTreeSet::new();

    let raw = loader.read_json(&root.join("tweets").join(&file));
    for v in loader.array(raw, &format!("tweets/{file}")) {
        if let Some((t, _)) = loader.tweet(v, TweetKind::Citing, &format!("tweets/{file}")) {
            if seen_tweets.insert(t.tweet_id.clone()) {
                ctx.citing.push(t);
            } else {
                loader.warn(format!("tweets/{file}: duplicate tweet {} ignored", t.tweet_id));
            }
        }
    }
    let citing_ids: BTreeSet<String> = ctx.citing.iter().map(|t| t.tweet_id.clone()).collect();

    let raw = loader.read_json(&root.join("retweets").join(&file));
    for v in loader.array(raw, &format!("retweets/{file}")) {
        let Some((mut t, of)) = loader.tweet(v, TweetKind::Citing, &format!("retweets/{file}")) else {
            continue;
        };
        let Some(of) = of else {
            loader.warn(format!("retweets/{file}: retweet {} lacks of_tweet_id", t.tweet_id));
            continue;
        };
        if !citing_ids.contains(&of) {
            loader.warn(format!(
                "retweets/{file}: retweet {} references unknown tweet {of}",
                t.tweet_id
            ));
            continue;
        }
        if !seen_tweets.insert(t.tweet_id.clone()) {
            loader.warn(format!("retweets/{file}: duplicate tweet {} ignored", t.tweet_id));
            continue;
        }
        t.kind = TweetKind::RetweetOf(of);
        ctx.retweets.push(t);
    }

    let raw = loader.read_json(&root.join("users").join(&file));
    for v in loader.array(raw, &format!("users/{file}")) {
        match serde_json::from_value::<RawUser>(v) {
            Ok(raw) => {
                let user = UserRecord {
                    user_id: raw.user_id.into(),
                    description: raw.description,
                    followers: raw.followers,
                    friends: raw.friends,
                    favorites: raw.favorites,
                    statuses: raw.statuses,
                };
                if ctx.user_index.contains_key(&user.user_id) {
                    loader.warn(format!("users/{file}: duplicate user {} ignored", user.user_id));
                } else {
                    ctx.user_index.insert(user.user_id.clone(), ctx.users.len());
                    ctx.users.push(user);
                }
            }
            Err(e) => loader.warn(format!("users/{file}: skipping malformed user: {e}")),
        }
    }

    match loader.read_json(&root.join("timelines").join(&file)) {
        None => {}
        Some(Value::Object(map)) => {
            for (user_id, tweets) in map {
                let origin = format!("timelines/{file}[{user_id}]");
                let mut list = Vec::new();
                for v in loader.array(Some(tweets), &origin) {
                    if let Some((t, _)) = loader.tweet(v, TweetKind::Timeline, &origin) {
                        if seen_tweets.insert(t.tweet_id.clone()) {
                            list.push(t);
                        } else {
                            loader.warn(format!("{origin}: duplicate tweet {} ignored", t.tweet_id));
                        }
                    }
                }
                ctx.timelines.insert(user_id, list);
            }
        }
        Some(_) => loader.warn(format!("timelines/{file}: expected a JSON object")),
    }
    ctx
}
