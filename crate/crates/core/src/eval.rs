//! Filtered ranking metrics, per-step inference traces and memory
//! attention reports for KBC models.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kbc::KbcModel;
use crate::kgdata::{FilterIndex, Query, Triple, Vocab};

/// `1 +` the number of entities scoring strictly above gold, skipping
/// entities known to be true answers of the same `(subject, relation)`.
pub fn filtered_rank(query: &Query, scores: &[f64], filter: &FilterIndex) -> Result<usize> {
    let gold = query.object;
    if gold >= scores.len() {
        return Err(Error::contract(
            "filtered_rank",
            format!("gold id {gold} outside {} scores", scores.len()),
        ));
    }
    let g = scores[gold];
    let known = filter.objects(query.subject, query.relation);
    let above = scores
        .iter()
        .enumerate()
        .filter(|&(e, &s)| s > g && e != gold && !known.is_some_and(|k| k.contains(&e)))
        .count();
    Ok(1 + above)
}

/// `1 +` the number of entities scoring strictly above `gold`.
pub fn raw_rank(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores.iter().filter(|&&s| s > g).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub ranks: Vec<usize>,
    pub mean_rank: f64,
    pub hits_at_10: f64,
}

impl RankingResult {
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Empty("evaluation query set".into()));
        }
        let n = ranks.len() as f64;
        let mean_rank = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
        let hits_at_10 = ranks.iter().filter(|&&r| r <= 10).count() as f64 / n;
        Ok(RankingResult {
            ranks,
            mean_rank,
            hits_at_10,
        })
    }
}

/// Filtered ranks of `queries`, scored in parallel and reduced in query
/// order.
pub fn evaluate_queries(model: &KbcModel, queries: &[Query], filter: &FilterIndex) -> Result<RankingResult> {
    let ranks = queries
        .par_iter()
        .map(|q| {
            let scores = model.score_all_entities(q)?;
            filtered_rank(q, &scores, filter)
        })
        .collect::<Result<Vec<usize>>>()?;
    RankingResult::from_ranks(ranks)
}

/// Evaluates both prediction directions of every triple in `split`.
pub fn evaluate(
    model: &KbcModel,
    store: &crate::kgdata::TripleStore,
    split: &[Triple],
    filter: &FilterIndex,
) -> Result<RankingResult> {
    if split.is_empty() {
        return Err(Error::Empty("evaluation split".into()));
    }
    evaluate_queries(model, &store.eval_queries(split), filter)
}

/// One line of a machine-readable metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub split: String,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(metric: &str, split: &str, value: f64) -> Self {
        MetricRecord {
            metric: metric.into(),
            split: split.into(),
            value,
        }
    }
}

pub fn ranking_records(split: &str, r: &RankingResult) -> Vec<MetricRecord> {
    vec![
        MetricRecord::new("mean_rank", split, r.mean_rank),
        MetricRecord::new("hits@10", split, r.hits_at_10),
        MetricRecord::new("queries", split, r.ranks.len() as f64),
    ]
}

/// Writes `records` as a JSON array.
pub fn write_report(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(records)
        .map_err(|e| Error::Format(format!("cannot encode report: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

// ---- traces ---------------------------------------------------------------

/// Encoded `s_1` of every distinct training `(head, relation)` input.
pub struct InputIndex {
    pairs: Vec<(usize, usize)>,
    encodings: Vec<Vec<f64>>,
}

impl InputIndex {
    pub fn build(model: &KbcModel, train: &[Triple]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut pairs = Vec::new();
        for t in train {
            if seen.insert((t.head, t.relation)) {
                pairs.push((t.head, t.relation));
            }
        }
        let encodings = pairs
            .iter()
            .map(|&(h, r)| {
                model.encode_values(&Query {
                    subject: h,
                    relation: r,
                    object: h,
                    direction: crate::kgdata::Direction::Original,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InputIndex { pairs, encodings })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The `k` inputs closest to `state` in L2 distance, nearest first;
    /// ties keep index order.
    pub fn nearest(&self, state: &[f64], k: usize) -> Vec<NearInput> {
        let mut all: Vec<NearInput> = self
            .pairs
            .iter()
            .zip(&self.encodings)
            .map(|(&(head, relation), enc)| NearInput {
                head,
                relation,
                distance: enc
                    .iter()
                    .zip(state)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            })
            .collect();
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        all.truncate(k);
        all
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NearInput {
    pub head: usize,
    pub relation: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub termination_prob: f64,
    /// Unfiltered rank of the gold entity under this step's prediction.
    pub gold_rank: usize,
    pub top_entities: Vec<(usize, f64)>,
    pub nearest_inputs: Vec<NearInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceTrace {
    pub subject: usize,
    pub relation: usize,
    pub gold: usize,
    pub steps: Vec<TraceStep>,
}

fn top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, scores[i])).collect()
}

/// Per-step termination probability, gold rank, top-3 predictions and the
/// top-3 training inputs nearest to the step's state.
pub fn trace_inference(model: &KbcModel, query: &Query, inputs: &InputIndex) -> Result<InferenceTrace> {
    let tr = model.trace(query)?;
    let steps = tr
        .steps
        .steps
        .iter()
        .zip(&tr.step_scores)
        .enumerate()
        .map(|(t, (step, scores))| TraceStep {
            step: t + 1,
            termination_prob: step.gate_prob,
            gold_rank: raw_rank(scores, query.object),
            top_entities: top_k(scores, 3),
            nearest_inputs: inputs.nearest(&step.state, 3),
        })
        .collect();
    Ok(InferenceTrace {
        subject: query.subject,
        relation: query.relation,
        gold: query.object,
        steps,
    })
}

impl InferenceTrace {
    pub fn render(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "query: ({}, {}, ?)  gold: {}",
            vocab.entity_name(self.subject),
            vocab.relation_name(self.relation),
            vocab.entity_name(self.gold)
        );
        let _ = writeln!(out, "step\tterm_prob\trank\ttop-3 predictions\tnearest [h, r] inputs");
        for s in &self.steps {
            let preds: Vec<&str> = s.top_entities.iter().map(|&(e, _)| vocab.entity_name(e)).collect();
            let near: Vec<String> = s
                .nearest_inputs
                .iter()
                .map(|n| {
                    format!(
                        "[{}, {}] ({:.3})",
                        vocab.entity_name(n.head),
                        vocab.relation_name(n.relation),
                        n.distance
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                "{}\t{:.3}\t{}\t{}\t{}",
                s.step,
                s.termination_prob,
                s.gold_rank,
                preds.join(", "),
                near.join("; ")
            );
        }
        out
    }
}

// ---- memory report --------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationScore {
    pub relation: usize,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryCell {
    pub cell: usize,
    pub top: Vec<RelationScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryReport {
    pub cells: Vec<MemoryCell>,
    /// `averages[r][i]`: mean attention of relation `r`'s queries on cell
    /// `i`, `None` when relation `r` contributed no attention steps.
    pub averages: Vec<Option<Vec<f64>>>,
}

/// Average attention of each relation's queries on each memory cell, over
/// every step that reads memory, with the top `k` relations per cell.
pub fn memory_report(model: &KbcModel, queries: &[Query], k: usize) -> Result<MemoryReport> {
    let traces = queries
        .par_iter()
        .map(|q| model.trace(q).map(|t| (q.relation, t.steps)))
        .collect::<Result<Vec<_>>>()?;
    let cells = model.config.memory_size;
    let nr = model.config.num_relations;
    let mut sums = vec![vec![0.0; cells]; nr];
    let mut counts = vec![0usize; nr];
    for (rel, steps) in &traces {
        for a in steps.steps.iter().filter_map(|s| s.attention.as_ref()) {
            for (acc, v) in sums[*rel].iter_mut().zip(a) {
                *acc += v;
            }
            counts[*rel] += 1;
        }
    }
    let averages: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let cells = (0..cells)
        .map(|i| {
            let mut rels: Vec<RelationScore> = averages
                .iter()
                .enumerate()
                .filter_map(|(r, a)| {
                    a.as_ref().map(|a| RelationScore {
                        relation: r,
                        average: a[i],
                    })
                })
                .collect();
            rels.sort_by(|a, b| b.average.total_cmp(&a.average).then(a.relation.cmp(&b.relation)));
            rels.truncate(k);
            MemoryCell { cell: i, top: rels }
        })
        .collect();
    Ok(MemoryReport { cells, averages })
}

impl MemoryReport {
    pub fn render(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let rels: Vec<String> = c
                .top
                .iter()
                .map(|r| format!("{} ({:.4})", vocab.relation_name(r.relation), r.average))
                .collect();
            let _ = writeln!(out, "cell {}\t{}", c.cell, rels.join(", "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgdata::Direction;

    fn q(s: usize, r: usize, o: usize) -> Query {
        Query {
            subject: s,
            relation: r,
            object: o,
            direction: Direction::Original,
        }
    }

    #[test]
    fn rank_examples() {
        let f = FilterIndex::default();
        assert_eq!(filtered_rank(&q(0, 0, 1), &[0.1, 0.9, 0.3], &f).unwrap(), 1);
        assert_eq!(filtered_rank(&q(0, 0, 1), &[0.95, 0.9, 0.3], &f).unwrap(), 2);
        assert!(filtered_rank(&q(0, 0, 3), &[0.1, 0.9, 0.3], &f).is_err());
    }

    #[test]
    fn known_answers_are_skipped_and_ties_favour_gold() {
        let mut f = FilterIndex::default();
        f.insert(0, 0, 0);
        f.insert(0, 0, 2);
        let scores = [0.9, 0.5, 0.8, 0.5, 0.7];
        // entity 4 is above gold and unfiltered; 3 ties with gold.
        assert_eq!(filtered_rank(&q(0, 0, 1), &scores, &f).unwrap(), 2);
        assert_eq!(raw_rank(&scores, 1), 4);
    }

    #[test]
    fn aggregate_examples() {
        let r = RankingResult::from_ranks(vec![1, 1, 1]).unwrap();
        assert_eq!((r.mean_rank, r.hits_at_10), (1.0, 1.0));
        let r = RankingResult::from_ranks(vec![1, 21]).unwrap();
        assert_eq!((r.mean_rank, r.hits_at_10), (11.0, 0.5));
        assert!(RankingResult::from_ranks(vec![]).is_err());
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        assert_eq!(top_k(&[0.2, 0.5, 0.5, 0.1], 3), vec![(1, 0.5), (2, 0.5), (0, 0.2)]);
    }

    #[test]
    fn report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let recs = ranking_records("test", &RankingResult::from_ranks(vec![1, 3]).unwrap());
        write_report(&p, &recs).unwrap();
        assert_eq!(read_report(&p).unwrap(), recs);
    }
}
