//! Synthetic corpora in the on-disk layout read by [`crate::ingest::load_corpus`].
//!
//! Fake articles get more retweets and a bag-of-words bias toward a fixed topic word
//! set, so a classifier has something to learn. Every generated count is also written
//! to `bookkeeping.json`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::Label;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub const fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }
}

/// Per-label count distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelProfile {
    /// Mean citing tweets per article; the count is `5 + Poisson(lambda - 5)`.
    pub citing_lambda: f64,
    /// Mean retweets per citing tweet (negative binomial).
    pub retweet_mean: f64,
    pub followers: LogNormalParams,
    pub friends: LogNormalParams,
    pub statuses: LogNormalParams,
    pub favorites: LogNormalParams,
}

impl LabelProfile {
    pub fn real() -> Self {
        Self {
            citing_lambda: 8.0,
            retweet_mean: 1.0,
            followers: LogNormalParams::new(6.0, 1.5),
            friends: LogNormalParams::new(5.5, 1.0),
            statuses: LogNormalParams::new(7.0, 1.5),
            favorites: LogNormalParams::new(6.0, 1.5),
        }
    }

    pub fn fake() -> Self {
        Self {
            retweet_mean: 2.0,
            followers: LogNormalParams::new(5.0, 1.5),
            statuses: LogNormalParams::new(7.5, 1.5),
            ..Self::real()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_articles: usize,
    pub fake_fraction: f64,
    pub seed: u64,
    pub real: LabelProfile,
    pub fake: LabelProfile,
    /// Negative-binomial shape; smaller is more overdispersed.
    pub retweet_dispersion: f64,
    pub vocab_size: usize,
    pub topic_words: usize,
    /// Probability that a word of a fake article or of its tweets is a topic word.
    pub beta: f64,
    pub news_words: usize,
    pub tweet_words: usize,
    /// Timeline lengths are uniform on `0..=timeline_max`.
    pub timeline_max: usize,
    /// Probability that a retweet is authored by one of the article's citing users.
    pub retweet_author_reuse: f64,
    /// Embedding width the corpus is meant to be built with; recorded only.
    pub d_text: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_articles: 200,
            fake_fraction: 0.5,
            seed: 0,
            real: LabelProfile::real(),
            fake: LabelProfile::fake(),
            retweet_dispersion: 2.0,
            vocab_size: 500,
            topic_words: 20,
            beta: 0.6,
            news_words: 40,
            tweet_words: 12,
            timeline_max: 8,
            retweet_author_reuse: 0.2,
            d_text: 64,
        }
    }
}

impl SynthConfig {
    /// Labels carry no information: no topic bias and identical count distributions.
    pub fn null_signal() -> Self {
        Self {
            beta: 0.0,
            fake: LabelProfile::real(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_articles < 2 {
            return bad("n_articles must be at least 2");
        }
        if !(self.fake_fraction > 0.0 && self.fake_fraction < 1.0) {
            return bad("fake_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.retweet_author_reuse) {
            return bad("beta and retweet_author_reuse must lie in [0, 1]");
        }
        if !(self.retweet_dispersion > 0.0 && self.retweet_dispersion.is_finite()) {
            return bad("retweet_dispersion must be positive");
        }
        if self.vocab_size == 0 || self.topic_words == 0 || self.topic_words > self.vocab_size {
            return bad("need 0 < topic_words <= vocab_size");
        }
        if self.news_words == 0 || self.tweet_words == 0 {
            return bad("text lengths must be positive");
        }
        for (name, p) in [("real", &self.real), ("fake", &self.fake)] {
            if !(p.citing_lambda >= 5.0 && p.citing_lambda.is_finite()) {
                return Err(Error::Config(format!("{name}.citing_lambda must be at least 5")));
            }
            if !(p.retweet_mean > 0.0 && p.retweet_mean.is_finite()) {
                return Err(Error::Config(format!("{name}.retweet_mean must be positive")));
            }
            for ln in [p.followers, p.friends, p.statuses, p.favorites] {
                if !(ln.sigma > 0.0 && ln.mu.is_finite() && ln.sigma.is_finite()) {
                    return Err(Error::Config(format!("{name}: log-normal sigma must be positive")));
                }
            }
        }
        Ok(())
    }

    fn profile(&self, label: Label) -> &LabelProfile {
        match label {
            Label::Real => &self.real,
            Label::Fake => &self.fake,
        }
    }
}

/// True per-article counts of a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleBook {
    pub article_id: String,
    pub label: Label,
    pub citing_tweets: usize,
    pub retweets: usize,
    pub users: usize,
    pub timeline_tweets: usize,
    /// Topic-word tokens over the news text and citing tweets.
    pub topic_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub config: SynthConfig,
    pub articles: Vec<ArticleBook>,
}

impl Bookkeeping {
    pub fn load(corpus_dir: &Path) -> Result<Self> {
        let path = corpus_dir.join("bookkeeping.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }

    pub fn mean_retweets(&self, label: Label) -> Option<f64> {
        let counts: Vec<usize> = self.articles.iter().filter(|a| a.label == label).map(|a| a.retweets).collect();
        (!counts.is_empty()).then(|| counts.iter().sum::<usize>() as f64 / counts.len() as f64)
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    label: &'static str,
    dataset: &'static str,
}

#[derive(Serialize)]
struct NewsOut<'a> {
    id: &'a str,
    title: String,
    text: String,
}

#[derive(Serialize)]
struct TweetOut {
    tweet_id: u64,
    text: String,
    retweet_count: u64,
    favorite_count: u64,
    user_id: u64,
    created_at: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    of_tweet_id: Option<u64>,
}

#[derive(Serialize)]
struct UserOut {
    user_id: u64,
    description: String,
    followers: u64,
    friends: u64,
    favorites: u64,
    statuses: u64,
}

struct Generator<'c> {
    cfg: &'c SynthConfig,
    rng: ChaCha8Rng,
    next_tweet: u64,
    next_user: u64,
    clock: i64,
}

impl Generator<'_> {
    fn tweet_id(&mut self) -> u64 {
        self.next_tweet += 1;
        self.next_tweet
    }

    fn user_id(&mut self) -> u64 {
        self.next_user += 1;
        self.next_user
    }

    fn tick(&mut self) -> i64 {
        self.clock += self.rng.random_range(1..=600);
        self.clock
    }

    /// Topic words are `w0..w{topic_words}`; returns the text and its topic-token count.
    fn words(&mut self, n: usize, beta: f64) -> (String, usize) {
        let mut out = Vec::with_capacity(n);
        let mut topical = 0;
        for _ in 0..n {
            let w = if beta > 0.0 && self.rng.random_bool(beta) {
                self.rng.random_range(0..self.cfg.topic_words)
            } else {
                self.rng.random_range(0..self.cfg.vocab_size)
            };
            topical += usize::from(w < self.cfg.topic_words);
            out.push(format!("w{w}"));
        }
        (out.join(" "), topical)
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("positive rate").sample(&mut self.rng) as u64
    }

    fn neg_binomial(&mut self, mean: f64) -> u64 {
        let r = self.cfg.retweet_dispersion;
        let rate = Gamma::new(r, mean / r).expect("positive shape and scale").sample(&mut self.rng);
        self.poisson(rate)
    }

    fn lognormal(&mut self, p: LogNormalParams) -> u64 {
        let x: f64 = LogNormal::new(p.mu, p.sigma).expect("positive sigma").sample(&mut self.rng);
        x.round().min(1e12) as u64
    }

    fn user(&mut self, id: u64, label: Label) -> UserOut {
        let p = self.cfg.profile(label).clone();
        let (description, _) = self.words(8, 0.0);
        UserOut {
            user_id: id,
            description,
            followers: self.lognormal(p.followers),
            friends: self.lognormal(p.friends),
            favorites: self.lognormal(p.favorites),
            statuses: self.lognormal(p.statuses),
        }
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a corpus under `out` and returns its bookkeeping.
pub fn generate_corpus(config: &SynthConfig, out: &Path) -> Result<Bookkeeping> {
    config.validate()?;
    let mut g = Generator {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        next_tweet: 1_000_000,
        next_user: 5_000_000,
        clock: 1_500_000_000,
    };
    let mut manifest = Vec::with_capacity(config.n_articles);
    let mut books = Vec::with_capacity(config.n_articles);
    let ids: Vec<String> = (0..config.n_articles).map(|i| format!("synth-{i:05}")).collect();

    for id in &ids {
        let label = if g.rng.random_bool(config.fake_fraction) { Label::Fake } else { Label::Real };
        let profile = config.profile(label).clone();
        let beta = if label == Label::Fake { config.beta } else { 0.0 };

        let (title, t1) = g.words(8, beta);
        let (body, t2) = g.words(config.news_words, beta);
        let mut topic_tokens = t1 + t2;
        write_json(&out.join("news").join(format!("{id}.json")), &NewsOut { id, title, text: body })?;

        let n_citing = 5 + g.poisson(profile.citing_lambda - 5.0) as usize;
        let mut citing = Vec::with_capacity(n_citing);
        let mut users = Vec::new();
        let mut retweets = Vec::new();
        for _ in 0..n_citing {
            let uid = g.user_id();
            users.push(g.user(uid, label));
            let (text, t) = g.words(config.tweet_words, beta);
            topic_tokens += t;
            let tweet = TweetOut {
                tweet_id: g.tweet_id(),
                text,
                retweet_count: g.neg_binomial(profile.retweet_mean),
                favorite_count: g.poisson(2.0),
                user_id: uid,
                created_at: g.tick(),
                of_tweet_id: None,
            };
            citing.push(tweet);
        }
        let citing_authors: Vec<u64> = citing.iter().map(|t| t.user_id).collect();
        for k in 0..citing.len() {
            for _ in 0..citing[k].retweet_count {
                let author = if g.rng.random_bool(config.retweet_author_reuse) {
                    citing_authors[g.rng.random_range(0..citing_authors.len())]
                } else {
                    let uid = g.user_id();
                    users.push(g.user(uid, label));
                    uid
                };
                let (text, _) = g.words(config.tweet_words, 0.0);
                retweets.push(TweetOut {
                    tweet_id: g.tweet_id(),
                    text,
                    retweet_count: 0,
                    favorite_count: 0,
                    user_id: author,
                    created_at: g.tick(),
                    of_tweet_id: Some(citing[k].tweet_id),
                });
            }
        }
        let mut timelines = std::collections::BTreeMap::new();
        let mut timeline_tweets = 0;
        for &uid in &citing_authors {
            let len = g.rng.random_range(0..=config.timeline_max);
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let (text, _) = g.words(config.tweet_words, 0.0);
                list.push(TweetOut {
                    tweet_id: g.tweet_id(),
                    text,
                    retweet_count: g.poisson(1.0),
                    favorite_count: g.poisson(2.0),
                    user_id: uid,
                    created_at: g.tick(),
                    of_tweet_id: None,
                });
            }
            timeline_tweets += len;
            timelines.insert(uid.to_string(), list);
        }

        write_json(&out.join("tweets").join(format!("{id}.json")), &citing)?;
        write_json(&out.join("retweets").join(format!("{id}.json")), &retweets)?;
        write_json(&out.join("users").join(format!("{id}.json")), &users)?;
        write_json(&out.join("timelines").join(format!("{id}.json")), &timelines)?;

        manifest.push(ManifestEntry {
            id,
            label: match label {
                Label::Real => "real",
                Label::Fake => "fake",
            },
            dataset: "synthetic",
        });
        books.push(ArticleBook {
            article_id: id.clone(),
            label,
            citing_tweets: citing.len(),
            retweets: retweets.len(),
            users: users.len(),
            timeline_tweets,
            topic_tokens,
        });
    }

    write_json(&out.join("manifest.json"), &serde_json::json!({ "articles": manifest }))?;
    let book = Bookkeeping {
        config: config.clone(),
        articles: books,
    };
    write_json(&out.join("bookkeeping.json"), &book)?;
    Ok(book)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::load_corpus;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_articles: 30,
            seed,
            ..SynthConfig::default()
        }
    }

    fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(root).unwrap().display().to_string();
                    out.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_corpus(&small(7), a.path()).unwrap();
        generate_corpus(&small(7), b.path()).unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));

        let c = tempfile::tempdir().unwrap();
        generate_corpus(&small(8), c.path()).unwrap();
        assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
    }

    #[test]
    fn too_few_articles_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_articles: 1,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_corpus(&cfg, dir.path()), Err(Error::Config(_))));
        let low = SynthConfig {
            real: LabelProfile {
                citing_lambda: 3.0,
                ..LabelProfile::real()
            },
            ..SynthConfig::default()
        };
        assert!(low.validate().is_err());
        assert!(SynthConfig { fake_fraction: 1.0, ..SynthConfig::default() }.validate().is_err());
    }

    #[test]
    fn loads_cleanly_and_matches_bookkeeping() {
        let dir = tempfile::tempdir().unwrap();
        let book = generate_corpus(&small(3), dir.path()).unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.warning_count(), 0, "{:?}", corpus.warnings);
        assert_eq!(corpus.len(), 30);
        assert_eq!(Bookkeeping::load(dir.path()).unwrap(), book);
        for b in &book.articles {
            let a = corpus.get(&b.article_id).unwrap();
            assert!(a.is_available());
            assert_eq!(a.label, Some(b.label));
            assert_eq!(a.citing.len(), b.citing_tweets);
            assert_eq!(a.retweets.len(), b.retweets);
            assert_eq!(a.users().len(), b.users);
            assert_eq!(a.timelines.values().map(Vec::len).sum::<usize>(), b.timeline_tweets);
            assert!(b.citing_tweets >= 5);
        }
    }

    #[test]
    fn fake_articles_carry_more_topic_words() {
        let dir = tempfile::tempdir().unwrap();
        let book = generate_corpus(&small(11), dir.path()).unwrap();
        let rate = |l: Label| {
            let (tok, n): (usize, usize) = book
                .articles
                .iter()
                .filter(|a| a.label == l)
                .fold((0, 0), |(t, n), a| (t + a.topic_tokens, n + 48 + 12 * a.citing_tweets));
            tok as f64 / n as f64
        };
        // real text hits the topic set only by uniform chance (20/500)
        assert!(rate(Label::Real) < 0.1);
        assert!(rate(Label::Fake) > 0.5);
    }

    #[test]
    fn null_signal_has_no_topic_bias() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_articles: 20,
            ..SynthConfig::null_signal()
        };
        let book = generate_corpus(&cfg, dir.path()).unwrap();
        for a in &book.articles {
            assert!((a.topic_tokens as f64) < 0.2 * (48 + 12 * a.citing_tweets) as f64);
        }
        assert_eq!(cfg.real, cfg.fake);
    }
}
