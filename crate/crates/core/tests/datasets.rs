//! The checked-in dataset fixtures load with their documented label balance.

use std::path::{Path, PathBuf};

use factdebate::eval::{load_dataset, sample_balanced, DatasetFormat};
use factdebate::TaskKind;

fn datasets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/datasets")
}

#[test]
fn factool_fixture_is_23_hallucinated_of_50() {
    let samples = load_dataset(datasets().join("factool_qa.jsonl"), DatasetFormat::FactoolQa).unwrap();
    assert_eq!(samples.len(), 50);
    assert_eq!(samples.iter().filter(|s| s.is_positive()).count(), 23);
    for s in &samples {
        assert_eq!(s.sample.task_kind, TaskKind::Qa);
        assert!(s.sample.question.is_some());
        let claims = s.gold_claims.as_ref().expect("factool records carry claim labels");
        // A response is hallucinated exactly when one of its claims is.
        assert_eq!(
            s.gold_factual,
            claims.iter().all(|c| c.factual),
            "{}",
            s.sample.response_id
        );
    }
}

#[test]
fn halueval_dialogue_fixture_supports_a_balanced_draw() {
    let samples = load_dataset(
        datasets().join("halueval_dialogue.jsonl"),
        DatasetFormat::HaluEvalDialogue,
    )
    .unwrap();
    assert_eq!(samples.len(), 150);
    assert_eq!(samples.iter().filter(|s| s.is_positive()).count(), 80);
    assert!(samples
        .iter()
        .all(|s| s.sample.dialogue_history.is_some() && s.gold_claims.is_none()));
    let drawn = sample_balanced(&samples, 100, 0.5, 11).unwrap();
    assert_eq!(drawn, sample_balanced(&samples, 100, 0.5, 11).unwrap());
    let mut ids: Vec<_> = drawn.iter().map(|s| s.sample.response_id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 100, "draws are without replacement");
}
