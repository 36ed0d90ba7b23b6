use std::path::PathBuf;

use hasoc_core::classifier::{self, ClassifierError, Featurizer, HeadConfig, Mode, TrainedModel};
use hasoc_core::corpus::{self, CorpusError, Task};
use hasoc_core::embedkit::{Embedder, EmbeddingBackendSpec};
use hasoc_core::exec::Execution;
use hasoc_core::textprep::{Language, RawPost};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load(lang: Language, split: &str) -> corpus::LabeledDataset {
    corpus::load_dataset(fixture(&format!("{}_{split}.csv", lang.code())), lang).unwrap()
}

fn featurizer(seed: u64) -> Featurizer {
    Featurizer::new(
        Embedder::new(EmbeddingBackendSpec::hash(16, seed)).unwrap(),
        8,
        seed,
    )
}

fn quick(task: Task) -> HeadConfig {
    HeadConfig {
        hidden_dim: 16,
        lr: 1e-2,
        batch_size: 8,
        max_epochs: 8,
        patience: 3,
        task,
        ..HeadConfig::default()
    }
}

#[test]
fn fixtures_load_with_expected_shape() {
    let en = load(Language::En, "train");
    assert_eq!(en.provenance.delimiters, vec![',']);
    assert!(
        en.rows.iter().any(|r| r.text.contains('\n')),
        "quoted newline survives"
    );
    let mr = load(Language::Mr, "train");
    assert_eq!(mr.provenance.delimiters, vec!['\t']);
    assert!(mr.rows.iter().all(|r| r.task_2.is_none()));
    let stats = corpus::class_stats(&mr);
    assert_eq!(stats.to_string().lines().next(), Some("HOF 7 / NOT 5"));
}

#[test]
fn write_then_load_round_trips() {
    let en = load(Language::En, "train");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.csv");
    corpus::write_dataset(&en, std::fs::File::create(&path).unwrap()).unwrap();
    let back = corpus::load_dataset(&path, Language::En).unwrap();
    assert_eq!(back.rows, en.rows);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad_label = dir.path().join("a.csv");
    std::fs::write(&bad_label, "_id,tweet_id,text,task_1\nx,1,hello,MAYBE\n").unwrap();
    assert!(matches!(
        corpus::load_dataset(&bad_label, Language::En),
        Err(CorpusError::BadLabel { .. })
    ));

    let no_text = dir.path().join("b.csv");
    std::fs::write(&no_text, "_id,tweet_id,task_1\nx,1,HOF\n").unwrap();
    assert!(matches!(
        corpus::load_dataset(&no_text, Language::En),
        Err(CorpusError::MissingColumn(_))
    ));

    let latin1 = dir.path().join("c.csv");
    std::fs::write(&latin1, b"_id,tweet_id,text,task_1\nx,1,caf\xe9,HOF\n").unwrap();
    assert!(matches!(
        corpus::load_dataset(&latin1, Language::En),
        Err(CorpusError::EncodingError { .. })
    ));

    let missing = dir.path().join("nope.csv");
    assert!(matches!(
        corpus::load_dataset(&missing, Language::En),
        Err(CorpusError::Io { .. })
    ));
}

#[test]
fn sequential_and_parallel_featurization_agree() {
    let rows = corpus::combine(&[
        load(Language::En, "train"),
        load(Language::Hi, "train"),
        load(Language::Mr, "train"),
    ]);
    let mut f = featurizer(3);
    f.exec = Execution::Sequential;
    let seq = f.featurize_rows(&rows.rows).unwrap();
    f.exec = Execution::Parallel;
    assert_eq!(f.featurize_rows(&rows.rows).unwrap(), seq);
}

#[test]
fn multilingual_model_trains_saves_and_predicts() {
    let sets = [
        load(Language::En, "train"),
        load(Language::Hi, "train"),
        load(Language::Mr, "train"),
    ];
    let f = featurizer(5);
    let model = classifier::train(&sets, Mode::Multi, &quick(Task::Task1A), &f).unwrap();
    assert_eq!(model.languages.len(), 3);
    assert!(model.best_epoch < model.history.len());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    assert_eq!(loaded.to_json(), model.to_json());

    let report = classifier::evaluate(&loaded, &load(Language::Mr, "test"), &f, "hash").unwrap();
    assert_eq!(report.confusion.total(), 7);
    let p = classifier::predict(
        &loaded,
        &RawPost::new("संघ सामना 😡", Language::Mr).unwrap(),
        &f,
    )
    .unwrap();
    assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn fine_grained_task_refuses_marathi() {
    let f = featurizer(1);
    let r = classifier::train(
        &[load(Language::Mr, "train")],
        Mode::Mono,
        &quick(Task::Task1B),
        &f,
    );
    assert!(
        matches!(r, Err(ClassifierError::UnsupportedLanguage(Language::Mr))),
        "{r:?}"
    );

    let model = classifier::train(
        &[load(Language::Hi, "train")],
        Mode::Mono,
        &quick(Task::Task1B),
        &f,
    )
    .unwrap();
    assert_eq!(model.labels, ["NONE", "HATE", "OFFN", "PRFN"]);
}
