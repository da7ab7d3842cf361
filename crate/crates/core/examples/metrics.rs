//! Scores a handful of predictions with every metric and prints the
//! aggregate table and a method-by-model comparison.

use cov_core::metrics::{comparison_table, llm_match, ScoreItem, ScoreReport};

fn main() {
    let rows = [
        ("q1", "red", "red", 5),
        ("q2", "a wooden chair", "chair", 4),
        ("q3", "the sofa in the east room", "sofa", 3),
        ("q4", "blue", "green", 1),
    ];
    let items: Vec<ScoreItem> = rows
        .iter()
        .map(|(id, pred, gt, g)| ScoreItem {
            episode_id: id.to_string(),
            prediction: pred.to_string(),
            ground_truth: gt.to_string(),
            extras: vec![],
            gamma: Some(*g),
            judge_failure: false,
            episode_failed: false,
        })
        .collect();
    let report = ScoreReport::compute(&items);
    for q in &report.per_question {
        println!(
            "{}  gamma {:?}  em {}  bleu {:.3}  rouge {:.3}  cider {:.3}",
            q.episode_id, q.gamma, q.em, q.bleu4, q.rouge_l, q.cider
        );
    }
    println!("\n{}", report.table());
    println!("llm_match([3, 5, 1]) = {}", llm_match(&[3, 5, 1]).unwrap());
    println!(
        "\n{}",
        comparison_table(&[
            ("Baseline".into(), "model-a".into(), 40.0),
            ("CoV-1".into(), "model-a".into(), 46.5),
            ("Baseline".into(), "model-b".into(), 35.2),
            ("CoV-1".into(), "model-b".into(), 39.0),
        ])
    );
}
