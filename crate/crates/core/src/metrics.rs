//! Answer scoring: LLM-Match through a judge model, plus EM@1, BLEU-4,
//! ROUGE-L and CIDEr.
//!
//! Text metrics share one tokenizer: lowercase, drop ASCII punctuation,
//! split on whitespace. CIDEr is plain TF-IDF cosine (no length penalty or
//! count clipping), with document frequencies taken over the references
//! of the scored run.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Phase, Transcript};
use crate::gateway::{latest_user_text, ChatBackend, ChatMessage, GatewayError};
use crate::prompts::{render_judge, JudgeOptions, PromptError, TemplateSet, NO_ANSWER};
use crate::protocol::parse_judge_score;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no scores to aggregate")]
    EmptyInput,
    #[error("score {0} outside 1..=5")]
    OutOfRange(u8),
}

/// Mean of `(gamma - 1) / 4`, as a percentage.
pub fn llm_match(gammas: &[u8]) -> Result<f64, MetricError> {
    if gammas.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if let Some(g) = gammas.iter().find(|g| !(1..=5).contains(*g)) {
        return Err(MetricError::OutOfRange(*g));
    }
    let sum: f64 = gammas.iter().map(|&g| f64::from(g - 1) / 4.0).sum();
    Ok(sum / gammas.len() as f64 * 100.0)
}

fn strip_punct(s: &str) -> String {
    s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect()
}

/// Normalization for exact match: lowercase, strip ASCII punctuation,
/// collapse whitespace, drop one leading article.
pub fn normalize_answer(s: &str) -> String {
    let cleaned = strip_punct(s);
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    if words.len() > 1 && matches!(words[0], "a" | "an" | "the") {
        words.remove(0);
    }
    words.join(" ")
}

pub fn tokenize(s: &str) -> Vec<String> {
    strip_punct(s).split_whitespace().map(str::to_string).collect()
}

pub fn em_at_1(prediction: &str, ground_truth: &str, extras: &[String]) -> u8 {
    let p = normalize_answer(prediction);
    let hit = std::iter::once(ground_truth)
        .chain(extras.iter().map(String::as_str))
        .any(|r| normalize_answer(r) == p);
    u8::from(hit)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with uniform weights over 1- to 4-grams, clipped counts,
/// brevity penalty against the closest reference length (shorter on ties),
/// and add-one smoothing for orders n >= 2 with no matches.
pub fn bleu4(prediction: &str, references: &[String]) -> f64 {
    let cand = tokenize(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = counts
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln() / 4.0;
    }
    let c = cand.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - cand.len() as i64).abs(), l))
        .unwrap() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

/// LCS F-measure with beta 1.2, maximized over references.
pub fn rouge_l(prediction: &str, references: &[String]) -> f64 {
    let cand = tokenize(prediction);
    if cand.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|r| {
            let r = tokenize(r);
            let l = lcs_len(&cand, &r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / cand.len() as f64;
            let rec = l / r.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderScores {
    pub per_item: Vec<f64>,
    pub mean: f64,
    /// The corpus had fewer than two items and IDF was taken as 1.
    pub uniform_idf: bool,
}

/// CIDEr over a whole run. Each item is (prediction, references).
pub fn cider(items: &[(String, Vec<String>)]) -> CiderScores {
    let n_items = items.len();
    let uniform_idf = n_items < 2;
    if uniform_idf {
        log::warn!("CIDEr corpus has {n_items} item(s); using uniform IDF");
    }
    let toks: Vec<(Vec<String>, Vec<Vec<String>>)> = items
        .iter()
        .map(|(p, rs)| (tokenize(p), rs.iter().map(|r| tokenize(r)).collect()))
        .collect();
    let mut per_item = vec![0.0; n_items];
    for n in 1..=4 {
        let mut df: HashMap<&[String], usize> = HashMap::new();
        for (_, refs) in &toks {
            let mut seen: Vec<&[String]> = refs.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let idf = |g: &[String]| -> f64 {
            if uniform_idf {
                1.0
            } else {
                (n_items as f64 / df.get(g).copied().unwrap_or(0).max(1) as f64).ln()
            }
        };
        fn weighted<'a>(t: &'a [String], n: usize, idf: &dyn Fn(&[String]) -> f64) -> HashMap<&'a [String], f64> {
            ngram_counts(t, n)
                .into_iter()
                .map(|(g, c)| (g, c as f64 * idf(g)))
                .collect()
        }
        for (i, (cand, refs)) in toks.iter().enumerate() {
            if refs.is_empty() {
                continue;
            }
            let vc = weighted(cand, n, &idf);
            let nc = vc.values().map(|v| v * v).sum::<f64>().sqrt();
            let mut acc = 0.0;
            for r in refs {
                let vr = weighted(r, n, &idf);
                let nr = vr.values().map(|v| v * v).sum::<f64>().sqrt();
                if nc > 0.0 && nr > 0.0 {
                    let dot: f64 = vc.iter().map(|(g, v)| v * vr.get(g).copied().unwrap_or(0.0)).sum();
                    acc += dot / (nc * nr);
                }
            }
            per_item[i] += acc / refs.len() as f64 / 4.0 * 10.0;
        }
    }
    let mean = if n_items == 0 {
        0.0
    } else {
        per_item.iter().sum::<f64>() / n_items as f64
    };
    CiderScores {
        per_item,
        mean,
        uniform_idf,
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("judge backend failure: {0}")]
    Backend(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub gamma: u8,
    /// The judge never produced a usable score; `gamma` is 1.
    pub judge_failure: bool,
}

/// Scores one prediction with a judge model, retrying once on an
/// unparseable reply.
#[allow(clippy::too_many_arguments)]
pub fn judge(
    templates: &TemplateSet,
    question: &str,
    ground_truth: &str,
    extras: &[String],
    category: Option<&str>,
    prediction: &str,
    backend: &dyn ChatBackend,
    opts: JudgeOptions,
    log: &mut Transcript,
) -> Result<JudgeVerdict, JudgeError> {
    let mut messages = render_judge(templates, question, ground_truth, extras, category, prediction, opts)?;
    for attempt in 0..2 {
        let reply = log.call(backend, Phase::Judge, 0, &messages).map_err(|e| match e {
            crate::agent::AgentError::Backend { source, .. } => JudgeError::Backend(source),
            other => JudgeError::Backend(GatewayError::TransportFailure(other.to_string())),
        })?;
        if let Ok(g) = parse_judge_score(&reply) {
            return Ok(JudgeVerdict {
                gamma: g,
                judge_failure: false,
            });
        }
        if attempt == 0 {
            messages.push(ChatMessage::assistant(reply));
            messages.push(ChatMessage::user_text(templates.render("judge_retry", &[])?));
        }
    }
    Ok(JudgeVerdict {
        gamma: 1,
        judge_failure: true,
    })
}

/// Deterministic judge: 5 when the normalized response equals the
/// normalized answer or an extra answer, 1 otherwise.
///
/// Reads the `Answer:`, `Other acceptable answers:` and `Response:` lines
/// of the builtin judge template.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl ChatBackend for RuleJudge {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let text = latest_user_text(messages);
        let field = |name: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(name))
                .map(str::trim)
                .map(str::to_string)
        };
        let (Some(answer), Some(response)) = (field("Answer:"), field("Response:")) else {
            return Err(GatewayError::MalformedResponse(
                "rule judge: prompt lacks Answer:/Response: lines".into(),
            ));
        };
        if response == NO_ANSWER {
            return Ok("1".into());
        }
        let extras: Vec<String> = field("Other acceptable answers:")
            .map(|s| s.split(';').map(|x| x.trim().to_string()).collect())
            .unwrap_or_default();
        Ok(if em_at_1(&response, &answer, &extras) == 1 { "5" } else { "1" }.into())
    }

    fn describe(&self) -> String {
        "rule-judge".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub episode_id: String,
    /// Absent when no judge was run.
    pub gamma: Option<u8>,
    pub judge_failure: bool,
    /// The episode itself failed; all scores are zero.
    pub episode_failed: bool,
    pub em: u8,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    /// Not computed; kept so the column exists.
    pub meteor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub llm_match_pct: Option<f64>,
    pub em_pct: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub meteor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_question: Vec<QuestionScore>,
    pub aggregate: Aggregate,
    pub n: usize,
    pub cider_uniform_idf: bool,
}

/// Inputs for scoring one answered question.
#[derive(Debug, Clone)]
pub struct ScoreItem {
    pub episode_id: String,
    pub prediction: String,
    pub ground_truth: String,
    pub extras: Vec<String>,
    pub gamma: Option<u8>,
    pub judge_failure: bool,
    pub episode_failed: bool,
}

impl ScoreReport {
    pub fn compute(items: &[ScoreItem]) -> Self {
        let corpus: Vec<(String, Vec<String>)> = items
            .iter()
            .map(|it| {
                let mut refs = vec![it.ground_truth.clone()];
                refs.extend(it.extras.iter().cloned());
                (it.prediction.clone(), refs)
            })
            .collect();
        let c = cider(&corpus);
        let per_question = items
            .iter()
            .zip(&corpus)
            .zip(&c.per_item)
            .map(|((it, (pred, refs)), cid)| {
                if it.episode_failed {
                    return QuestionScore {
                        episode_id: it.episode_id.clone(),
                        gamma: it.gamma.map(|_| 1),
                        judge_failure: it.judge_failure,
                        episode_failed: true,
                        em: 0,
                        bleu4: 0.0,
                        rouge_l: 0.0,
                        cider: 0.0,
                        meteor: None,
                    };
                }
                QuestionScore {
                    episode_id: it.episode_id.clone(),
                    gamma: it.gamma,
                    judge_failure: it.judge_failure,
                    episode_failed: false,
                    em: em_at_1(pred, &it.ground_truth, &it.extras),
                    bleu4: bleu4(pred, refs),
                    rouge_l: rouge_l(pred, refs),
                    cider: *cid,
                    meteor: None,
                }
            })
            .collect();
        Self::from_rows(per_question, c.uniform_idf)
    }

    pub fn from_rows(per_question: Vec<QuestionScore>, cider_uniform_idf: bool) -> Self {
        let aggregate = aggregate_rows(&per_question);
        ScoreReport {
            n: per_question.len(),
            per_question,
            aggregate,
            cider_uniform_idf,
        }
    }

    /// Whether the stored aggregate equals one recomputed from the rows.
    pub fn is_consistent(&self) -> bool {
        let again = aggregate_rows(&self.per_question);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        self.n == self.per_question.len()
            && opt(again.llm_match_pct, self.aggregate.llm_match_pct)
            && close(again.em_pct, self.aggregate.em_pct)
            && close(again.bleu4, self.aggregate.bleu4)
            && close(again.rouge_l, self.aggregate.rouge_l)
            && close(again.cider, self.aggregate.cider)
    }

    /// Aligned two-column table of the aggregate metrics.
    pub fn table(&self) -> String {
        let a = &self.aggregate;
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let rows = [
            ("N", self.n.to_string()),
            ("LLM-Match (%)", fmt(a.llm_match_pct)),
            ("EM@1 (%)", fmt(Some(a.em_pct))),
            ("BLEU-4 (x100)", fmt(Some(a.bleu4 * 100.0))),
            ("ROUGE-L (x100)", fmt(Some(a.rouge_l * 100.0))),
            ("CIDEr (x100)", fmt(Some(a.cider * 100.0))),
            ("METEOR", fmt(a.meteor)),
        ];
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<w$}  {v:>8}\n")).collect()
    }
}

fn aggregate_rows(rows: &[QuestionScore]) -> Aggregate {
    let n = rows.len().max(1) as f64;
    let gammas: Vec<u8> = rows.iter().filter_map(|r| r.gamma).collect();
    let mean = |f: &dyn Fn(&QuestionScore) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Aggregate {
        llm_match_pct: llm_match(&gammas).ok(),
        em_pct: mean(&|r| f64::from(r.em)) * 100.0,
        bleu4: mean(&|r| r.bleu4),
        rouge_l: mean(&|r| r.rouge_l),
        cider: mean(&|r| r.cider),
        meteor: None,
    }
}

/// Method rows by model columns, one value per cell; missing cells show
/// `-`. Row and column order follow first appearance.
pub fn comparison_table(cells: &[(String, String, f64)]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for (m, c, _) in cells {
        if !methods.contains(&m.as_str()) {
            methods.push(m);
        }
        if !models.contains(&c.as_str()) {
            models.push(c);
        }
    }
    let w0 = methods.iter().map(|m| m.len()).max().unwrap_or(0).max("Method".len());
    let widths: Vec<usize> = models.iter().map(|m| m.len().max(8)).collect();
    let mut out = format!("{:<w0$}", "Method");
    for (m, w) in models.iter().zip(&widths) {
        out.push_str(&format!("  {m:>w$}"));
    }
    out.push('\n');
    for method in &methods {
        out.push_str(&format!("{method:<w0$}"));
        for (model, w) in models.iter().zip(&widths) {
            let v = cells
                .iter()
                .find(|(a, b, _)| a == method && b == model)
                .map_or_else(|| "-".to_string(), |(_, _, v)| format!("{v:.2}"));
            out.push_str(&format!("  {v:>w$}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn llm_match_values() {
        assert_eq!(llm_match(&[5, 5, 5]), Ok(100.0));
        assert_eq!(llm_match(&[1]), Ok(0.0));
        assert_eq!(llm_match(&[3, 5, 1]), Ok(50.0));
        assert_eq!(llm_match(&[]), Err(MetricError::EmptyInput));
        assert_eq!(llm_match(&[0]), Err(MetricError::OutOfRange(0)));
        assert_eq!(llm_match(&[6]), Err(MetricError::OutOfRange(6)));
    }

    #[test]
    fn exact_match() {
        assert_eq!(em_at_1("Chair.", "chair", &[]), 1);
        assert_eq!(em_at_1("two chairs", "chair", &[]), 0);
        assert_eq!(em_at_1("the sofa", "couch", &s(&["sofa"])), 1);
        assert_eq!(normalize_answer("  The   Red,  Chair! "), "red chair");
        assert_eq!(normalize_answer("a"), "a");
    }

    #[test]
    fn bleu_and_rouge_edges() {
        let r = s(&["the cat sat on the mat"]);
        assert!((bleu4("the cat sat on the mat", &r) - 1.0).abs() < 1e-12);
        assert_eq!(bleu4("", &r), 0.0);
        assert_eq!(bleu4("dog", &r), 0.0);
        assert!((rouge_l("the cat sat on the mat", &r) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l("x y z", &r), 0.0);
        // Hand computation: LCS("a b c d", "a c d") = 3, P = 3/4, R = 1.
        let (p, rec, b2) = (0.75, 1.0, 1.44);
        let f = (1.0 + b2) * p * rec / (rec + b2 * p);
        assert!((rouge_l("a b c d", &s(&["a c d"])) - f).abs() < 1e-12);
    }

    #[test]
    fn short_prediction_bleu_closed_form() {
        // c = 3, r = 6: every present order matches fully, order 4 has no
        // candidate n-grams and smooths to 1/1, so only the brevity
        // penalty exp(1 - 6/3) remains.
        let b = bleu4("the cat sat", &s(&["the cat sat on the mat"]));
        assert!((b - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn cider_three_item_closed_form() {
        let items = [
            ("a b c".to_string(), s(&["a b"])),
            ("a c".to_string(), s(&["a c"])),
            ("x".to_string(), s(&["d e"])),
        ];
        let got = cider(&items);
        // Reference document frequencies: a 2, b 1, c 1, "a b" 1; unseen
        // n-grams count as 1.
        let (l2, l3) = ((1.5f64).ln(), 3f64.ln());
        let uni = (l2 * l2 + l3 * l3).sqrt() / (l2 * l2 + 2.0 * l3 * l3).sqrt();
        let bi = 1.0 / 2f64.sqrt();
        assert!((got.per_item[0] - 2.5 * (uni + bi)).abs() < 1e-9);
        assert!((got.per_item[1] - 5.0).abs() < 1e-9);
        assert_eq!(got.per_item[2], 0.0);
    }

    #[test]
    fn cider_edges() {
        let one = cider(&[("a red chair by the wall".into(), s(&["a red chair by the wall"]))]);
        assert!(one.uniform_idf);
        assert!((one.mean - 10.0).abs() < 1e-12);
        let disjoint = cider(&[("x y".into(), s(&["a b"])), ("p q".into(), s(&["c d"]))]);
        assert_eq!(disjoint.mean, 0.0);
        assert!(!disjoint.uniform_idf);
    }

    #[test]
    fn judge_parses_and_retries() {
        let set = TemplateSet::builtin();
        let mut log = Transcript::default();
        let b = ScriptedBackend::from_replies(["5"]);
        let v = judge(&set, "q", "chair", &[], None, "chair", &b, JudgeOptions::default(), &mut log).unwrap();
        assert_eq!(v, JudgeVerdict { gamma: 5, judge_failure: false });
        let b = ScriptedBackend::from_replies(["maybe", "maybe"]);
        let v = judge(&set, "q", "chair", &[], None, "chair", &b, JudgeOptions::default(), &mut log).unwrap();
        assert_eq!(v, JudgeVerdict { gamma: 1, judge_failure: true });
        assert_eq!(b.served(), 2);
    }

    #[test]
    fn rule_judge() {
        let set = TemplateSet::builtin();
        let mut log = Transcript::default();
        let g = |pred: &str, extras: &[String], log: &mut Transcript| {
            judge(&set, "q", "The chair", extras, None, pred, &RuleJudge, JudgeOptions::default(), log)
                .unwrap()
                .gamma
        };
        assert_eq!(g("chair", &[], &mut log), 5);
        assert_eq!(g("table", &[], &mut log), 1);
        assert_eq!(g("seat", &s(&["seat"]), &mut log), 5);
        assert_eq!(g("", &[], &mut log), 1);
    }

    #[test]
    fn report_is_self_consistent_and_failed_rows_score_zero() {
        let item = |id: &str, pred: &str, gamma: u8, failed: bool| ScoreItem {
            episode_id: id.into(),
            prediction: pred.into(),
            ground_truth: "red chair".into(),
            extras: vec![],
            gamma: Some(gamma),
            judge_failure: false,
            episode_failed: failed,
        };
        let r = ScoreReport::compute(&[item("a", "red chair", 5, false), item("b", "red chair", 5, true), item("c", "blue", 3, false)]);
        assert!(r.is_consistent());
        assert_eq!(r.per_question[1].em, 0);
        assert_eq!(r.per_question[1].gamma, Some(1));
        assert!((r.aggregate.llm_match_pct.unwrap() - 50.0).abs() < 1e-12);
        assert!((r.aggregate.em_pct - 100.0 / 3.0).abs() < 1e-9);
        assert!(r.table().contains("LLM-Match"));
        let mut bad = r.clone();
        bad.aggregate.em_pct += 1.0;
        assert!(!bad.is_consistent());
    }

    #[test]
    fn comparison_layout() {
        let t = comparison_table(&[
            ("Baseline".into(), "model-a".into(), 40.0),
            ("CoV-1".into(), "model-a".into(), 45.5),
            ("Baseline".into(), "model-b".into(), 30.0),
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("model-a") && lines[0].contains("model-b"));
        assert!(lines[2].starts_with("CoV-1") && lines[2].ends_with('-'));
    }

    proptest! {
        #[test]
        fn llm_match_is_affine(gs in proptest::collection::vec(1u8..5, 1..20), i in 0usize..20) {
            let i = i % gs.len();
            let base = llm_match(&gs).unwrap();
            let mut up = gs.clone();
            up[i] += 1;
            let step = llm_match(&up).unwrap() - base;
            prop_assert!((step - 25.0 / gs.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn text_metrics_bounded_and_order_invariant(p in "[a-d ]{0,20}", r1 in "[a-d ]{1,20}", r2 in "[a-d ]{1,20}") {
            let refs = vec![r1.clone(), r2.clone()];
            let rev = vec![r2, r1];
            let b = bleu4(&p, &refs);
            let r = rouge_l(&p, &refs);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
            prop_assert!((b - bleu4(&p, &rev)).abs() < 1e-12);
            prop_assert!((r - rouge_l(&p, &rev)).abs() < 1e-12);
            let spaced = format!("  {}  ", p.split_whitespace().collect::<Vec<_>>().join("   "));
            prop_assert!((b - bleu4(&spaced, &refs)).abs() < 1e-12);
            let c = cider(&[(p.clone(), refs.clone()), (p, rev)]);
            prop_assert!(c.mean >= 0.0);
        }
    }
}
