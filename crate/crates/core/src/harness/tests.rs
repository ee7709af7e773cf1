use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gnn::{ConvType, Model, ModelConfig, Schema};
use crate::hetgraph::{HeteroGraph, Label, NodeType, Relation};
use crate::ingest::{load_corpus, FeatureMode, Setup};
use crate::numkit::Tensor;
use crate::synth::{generate_corpus, SynthConfig};

// ---- folds ----

#[test]
fn balanced_ten_gives_one_of_each_per_fold() {
    let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let s = stratified_kfold(&labels, 5, 3).unwrap();
    s.check_partition(10).unwrap();
    for f in &s.folds {
        assert_eq!(f.len(), 2);
        assert_eq!(f.iter().filter(|&&i| labels[i] == 1).count(), 1);
    }
    assert_eq!(s, stratified_kfold(&labels, 5, 3).unwrap());
}

#[test]
fn full_corpus_counts_split_within_one() {
    let mut labels = vec![0; 10_302];
    labels.extend(vec![1; 2_395]);
    let s = stratified_kfold(&labels, 5, 0).unwrap();
    s.check_partition(12_697).unwrap();
    for f in &s.folds {
        let fake = f.iter().filter(|&&i| labels[i] == 1).count();
        let real = f.len() - fake;
        assert!(real.abs_diff(2_060) <= 1, "{real}");
        assert!(fake.abs_diff(479) <= 1, "{fake}");
    }
    // remainders continue round-robin across classes, so fold sizes differ by at most one
    let sizes: Vec<usize> = s.folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn fold_errors() {
    assert!(stratified_kfold(&[0, 0, 0, 0, 0, 1, 1, 1, 1], 5, 0).is_err());
    assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    assert!(stratified_kfold(&[], 5, 0).is_err());
}

#[test]
fn train_and_test_complement() {
    let labels: Vec<usize> = (0..23).map(|i| usize::from(i % 3 == 0)).collect();
    let s = stratified_kfold(&labels, 5, 9).unwrap();
    for f in 0..5 {
        let mut all = s.train(f);
        all.extend_from_slice(s.test(f));
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }
    assert_ne!(s.fingerprint(), stratified_kfold(&labels, 5, 10).unwrap().fingerprint());
}

proptest! {
    #[test]
    fn folds_partition_and_stratify(labels in prop::collection::vec(0usize..2, 10..120), seed in any::<u64>()) {
        let n1 = labels.iter().filter(|&&l| l == 1).count();
        let n0 = labels.len() - n1;
        prop_assume!(n0 >= 5 && n1 >= 5);
        let s = stratified_kfold(&labels, 5, seed).unwrap();
        prop_assert!(s.check_partition(labels.len()).is_ok());
        for f in &s.folds {
            let c1 = f.iter().filter(|&&i| labels[i] == 1).count();
            prop_assert!(c1 == n1 / 5 || c1 == n1 / 5 + 1);
            prop_assert!(f.len() - c1 == n0 / 5 || f.len() - c1 == n0 / 5 + 1);
        }
    }
}

#[test]
fn class_weight_examples() {
    assert_eq!(class_weights(&[0, 1, 1, 0]).unwrap(), [1.0, 1.0]);
    let mut gossip = vec![0; 10_067];
    gossip.extend(vec![1; 2_147]);
    let w = class_weights(&gossip).unwrap();
    assert!((w[0] - 12_214.0 / 20_134.0).abs() < 1e-15);
    assert!((w[0] - 0.607).abs() < 1e-3 && (w[1] - 2.844).abs() < 1e-3);
    assert_eq!(class_weights(&[0, 0, 0, 1]).unwrap(), [2.0 / 3.0, 2.0]);
    assert!(class_weights(&[1, 1, 1]).is_err());
}

// ---- metrics ----

#[test]
fn perfect_predictions() {
    let m = compute_metrics(&[0, 1, 1, 0, 1], &[0, 1, 1, 0, 1]).unwrap();
    assert_eq!((m.precision, m.recall, m.macro_f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    assert!(!m.zero_division);
}

#[test]
fn worked_confusion_example() {
    // preds [fake, fake, real, real] vs labels [fake, real, real, real]
    let m = compute_metrics(&[1, 0, 0, 0], &[1, 1, 0, 0]).unwrap();
    assert_eq!(m.accuracy, 0.75);
    assert_eq!(m.confusion, [[2, 1], [0, 1]]);
    // real: tp 2, fp 0, fn 1 -> 4/5; fake: tp 1, fp 1, fn 0 -> 2/3
    assert!((m.per_class_f1[0] - 0.8).abs() < 1e-15);
    assert!((m.per_class_f1[1] - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-15);
    assert!((m.precision - 0.75).abs() < 1e-15);
    assert!((m.recall - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn single_class_predictions_zero_the_minority() {
    let labels = [0, 0, 0, 1];
    let m = compute_metrics(&labels, &[0, 0, 0, 0]).unwrap();
    assert_eq!(m.per_class_f1[1], 0.0);
    assert!((m.macro_f1 - m.per_class_f1[0] / 2.0).abs() < 1e-15);
    assert!(m.zero_division);
}

#[test]
fn ties_predict_real() {
    assert_eq!(argmax([0.3, 0.3]), 0);
    assert_eq!(argmax([0.3, 0.31]), 1);
    assert_eq!(argmax([1.0, -1.0]), 0);
}

/// Counts every (label, prediction) case separately and uses the harmonic mean.
fn brute_force(labels: &[usize], preds: &[usize]) -> (f64, f64, f64, f64) {
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    for c in 0..2 {
        let tp = labels.iter().zip(preds).filter(|(l, p)| **l == c && **p == c).count() as f64;
        let predicted = preds.iter().filter(|p| **p == c).count() as f64;
        let actual = labels.iter().filter(|l| **l == c).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        p_sum += p;
        r_sum += r;
        f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let acc = labels.iter().zip(preds).filter(|(l, p)| l == p).count() as f64 / labels.len() as f64;
    (p_sum / 2.0, r_sum / 2.0, f_sum / 2.0, acc)
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let bias = rng.random_range(0.0..1.0);
        let labels: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(bias))).collect();
        let preds: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.5))).collect();
        let m = compute_metrics(&labels, &preds).unwrap();
        let (p, r, f, a) = brute_force(&labels, &preds);
        assert!((m.precision - p).abs() < 1e-12);
        assert!((m.recall - r).abs() < 1e-12);
        assert!((m.macro_f1 - f).abs() < 1e-12, "{labels:?} {preds:?}");
        assert!((m.accuracy - a).abs() < 1e-12);
    }
}

#[test]
fn metric_input_errors() {
    assert!(compute_metrics(&[], &[]).is_err());
    assert!(compute_metrics(&[0, 1], &[0]).is_err());
    assert!(compute_metrics(&[2], &[0]).is_err());
}

// ---- significance ----

#[test]
fn t_test_matches_reference_values() {
    // reference values from scipy.stats.ttest_rel
    let (t, p) = paired_t_test(&[3.0, 4.0, 6.0, 8.0, 10.0], &[2.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert!((t.unwrap() - 4.242640687119285).abs() < 1e-12);
    assert!((p - 0.013235599563682695).abs() < 1e-9);
    let (t, p) = paired_t_test(&[0.8, 0.7, 0.9, 0.75, 0.85], &[0.7, 0.72, 0.8, 0.7, 0.78]).unwrap();
    assert!((t.unwrap() - 2.7105237087157534).abs() < 1e-9);
    assert!((p - 0.053508296850918124).abs() < 1e-9);
    // symmetric in sign
    let (t2, p2) = paired_t_test(&[0.7, 0.72, 0.8, 0.7, 0.78], &[0.8, 0.7, 0.9, 0.75, 0.85]).unwrap();
    assert!((t2.unwrap() + 2.7105237087157534).abs() < 1e-9);
    assert!((p2 - p).abs() < 1e-15);
}

#[test]
fn t_test_degenerate_cases() {
    let a = [0.9, 0.8, 0.85, 0.7, 0.9];
    let s = compare_folds("a", &a, "b", &a, 1).unwrap();
    assert_eq!(s.p_value, 1.0);
    assert!(!s.significant);
    assert!(s.note.as_deref().unwrap().contains("no difference"));

    let s = compare_folds("a", &[0.9, 0.91, 0.9, 0.92, 0.9], "b", &[0.6, 0.61, 0.6, 0.62, 0.6], 1).unwrap();
    assert!(s.p_value < 0.001);
    assert!(s.significant);

    assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    assert!(paired_t_test(&[1.0], &[1.0]).is_err());
}

#[test]
fn bonferroni_threshold() {
    assert!(!bonferroni_significant(0.02, 10));
    assert!(bonferroni_significant(0.02, 1));
    assert!(bonferroni_significant(0.004, 10));
}

// ---- training ----

fn tiny_graph(label: Label, signal: f64) -> HeteroGraph {
    let mut g = HeteroGraph::new(format!("{label:?}{signal}"), label, vec![signal, -signal, 0.5]);
    g.set_features(NodeType::Tweet, Tensor::filled(2, 3, signal));
    g.set_features(NodeType::User, Tensor::zeros(0, 3));
    g.add_relation_edge(Relation::Cites, 0, 0);
    g.add_relation_edge(Relation::Cites, 1, 0);
    g.make_undirected().unwrap()
}

#[test]
fn nan_loss_aborts_with_diagnostic() {
    let mut g = tiny_graph(Label::Fake, 1.0);
    g.set_features(NodeType::Tweet, Tensor::filled(2, 3, f64::NAN));
    let graphs = [g, tiny_graph(Label::Real, -1.0)];
    let (schema, inputs) = prepare_inputs(&graphs, InputMode::Hetero).unwrap();
    let model = Model::new(ModelConfig::new(ConvType::Sage, schema.mode()).with_hidden(4, 1), schema).unwrap();
    let refs: Vec<_> = inputs.iter().collect();
    let err = train_fold(&model, &refs, &TrainConfig::default(), 0).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    assert!(err.to_string().contains("epoch 0"));
}

#[test]
fn training_is_deterministic_and_runs_every_step() {
    let graphs: Vec<HeteroGraph> = (0..20)
        .map(|i| {
            let l = if i % 2 == 0 { Label::Fake } else { Label::Real };
            tiny_graph(l, if i % 2 == 0 { 1.0 } else { -1.0 } + 0.01 * i as f64)
        })
        .collect();
    let (schema, inputs) = prepare_inputs(&graphs, InputMode::Hetero).unwrap();
    let refs: Vec<_> = inputs.iter().collect();
    for conv in ConvType::ALL {
        let model = Model::new(ModelConfig::new(conv, schema.mode()).with_hidden(8, 2), schema.clone()).unwrap();
        let cfg = TrainConfig::default();
        let a = train_fold(&model, &refs, &cfg, 4).unwrap();
        assert_eq!(a, train_fold(&model, &refs, &cfg, 4).unwrap());
        assert_eq!(a.epoch_losses.len(), 20);
        assert_eq!(a.steps, 20 * 2);
        assert_ne!(a.params, train_fold(&model, &refs, &cfg, 5).unwrap().params);
        // a separable toy task: loss goes down even at the small default rate
        assert!(a.final_loss() < a.epoch_losses[0]);
    }
    assert!(train_fold(
        &Model::new(ModelConfig::new(ConvType::Sage, schema.mode()), schema.clone()).unwrap(),
        &[],
        &TrainConfig::default(),
        0
    )
    .is_err());
}

// ---- matrix ----

fn small_corpus(n: usize) -> (tempfile::TempDir, crate::ingest::CorpusIndex) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_articles: n,
        seed: 5,
        ..SynthConfig::default()
    };
    generate_corpus(&cfg, dir.path()).unwrap();
    let corpus = load_corpus(dir.path()).unwrap();
    (dir, corpus)
}

fn quick_matrix() -> MatrixConfig {
    MatrixConfig {
        train: TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        model: ModelOptions {
            hidden_dim: 8,
            ..ModelOptions::default()
        },
        embedder: crate::ingest::EmbedderSpec::hashing(16),
        ..MatrixConfig::default()
    }
}

#[test]
fn single_cell_matrix_has_one_report() {
    let (_d, corpus) = small_corpus(30);
    let cfg = MatrixConfig {
        setups: vec![Setup::S1Tweets],
        convs: vec![ConvType::Sage],
        graph_modes: vec![InputMode::Hetero],
        ..quick_matrix()
    };
    let r = run_matrix(&corpus, &cfg).unwrap();
    assert_eq!(r.reports.len(), 1);
    let rep = &r.reports[0];
    assert_eq!(rep.folds.len(), 5);
    assert!(rep.significance.is_empty());
    assert!(rep.wall_clock_secs.is_none());
    let mean = MeanMetrics::of(&rep.folds);
    assert_eq!(rep.mean, mean);
    let manual = rep.folds.iter().map(|f| f.metrics.macro_f1).sum::<f64>() / 5.0;
    assert!((rep.mean.macro_f1 - manual).abs() < 1e-12);
    for f in &rep.folds {
        for v in [f.metrics.precision, f.metrics.recall, f.metrics.macro_f1, f.metrics.accuracy] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert_eq!(r.split.len(), r.article_ids.len());
}

#[test]
fn matrix_cells_share_split_and_get_compared() {
    let (_d, corpus) = small_corpus(30);
    let cfg = MatrixConfig {
        setups: vec![Setup::S1Tweets, Setup::S2PlusUsers],
        feature_modes: vec![FeatureMode::TextOnly, FeatureMode::TextPlusSocial],
        convs: vec![ConvType::Sage],
        ..quick_matrix()
    };
    let r = run_matrix(&corpus, &cfg).unwrap();
    assert_eq!(r.reports.len(), 2 * 2 * 3);
    assert!(r.reports.iter().all(|x| x.split_fingerprint == r.split_fingerprint));
    let hetero: Vec<_> = r.reports.iter().filter(|x| x.cell.mode == InputMode::Hetero).collect();
    assert_eq!(hetero.len(), 4);
    for h in hetero {
        assert_eq!(h.significance.len(), 2);
        for s in &h.significance {
            assert_eq!(s.n_comparisons, 8);
            assert!((0.0..=1.0).contains(&s.p_value));
        }
    }
    let table = results_table(&r);
    assert_eq!(table.lines().count(), 1 + 12 + 1);
    assert!(table.contains("homo_pad"));
}

#[test]
fn mismatched_splits_are_rejected() {
    let (_d, corpus) = small_corpus(30);
    let cfg = MatrixConfig {
        setups: vec![Setup::S1Tweets],
        convs: vec![ConvType::Sage],
        graph_modes: vec![InputMode::Hetero, InputMode::HomoPad],
        ..quick_matrix()
    };
    let mut r = run_matrix(&corpus, &cfg).unwrap();
    for rep in &mut r.reports {
        rep.significance.clear();
    }
    r.reports[1].split_fingerprint = "other".into();
    assert!(matches!(attach_significance(&mut r.reports), Err(crate::Error::Contract(_))));
}

#[test]
fn matrix_config_reads_yaml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let yaml = dir.path().join("m.yaml");
    std::fs::write(
        &yaml,
        "setups: [1, 5]\nfeature_modes: [text, text+social]\nconvs: [sage, hgt]\ngraph_modes: [hetero, homo_pad]\ntrain:\n  epochs: 3\n",
    )
    .unwrap();
    let c = MatrixConfig::load(&yaml).unwrap();
    assert_eq!(c.setups, vec![Setup::S1Tweets, Setup::S5All]);
    assert_eq!(c.train.epochs, 3);
    assert_eq!(c.train.batch_size, 16);
    assert_eq!(c.graph_modes, vec![InputMode::Hetero, InputMode::HomoPad]);
    let json = dir.path().join("m.json");
    std::fs::write(&json, serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(MatrixConfig::load(&json).unwrap(), c);
    assert_eq!("homo-truncate".parse::<InputMode>().unwrap(), InputMode::HomoTruncate);
}

#[test]
fn train_config_defaults() {
    let c = TrainConfig::default();
    assert_eq!((c.epochs, c.batch_size, c.learning_rate), (20, 16, 8e-5));
    assert!(c.use_class_weights);
    let _ = Schema::homo(3);
}
