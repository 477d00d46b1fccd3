//! Triplet extraction and scene-graph metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::Vocab;
use crate::ksgn::Model;
use crate::numeric::{sigmoid, NumericError, ParamStore, Tensor};
use crate::scene::{SceneError, SceneSample, SrGraph};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relative improvement needs a positive baseline, got {0}")]
    Domain(f64),
    #[error("invalid evaluation input: {0}")]
    Input(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Class indices sorted by descending logit; equal logits keep the lower
/// index first.
pub fn rank_classes(logits: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletPrediction {
    pub subject_id: u32,
    pub object_id: u32,
    /// Segment indices within the scene.
    pub subject_index: usize,
    pub object_index: usize,
    pub subject_class: usize,
    pub object_class: usize,
    pub subject_ranking: Vec<usize>,
    pub object_ranking: Vec<usize>,
    /// Predicates whose probability exceeds the threshold, ascending.
    pub predicates: Vec<usize>,
    /// Probability of every predicate.
    pub scores: Vec<f64>,
}

/// One prediction per relation instance of `graph`; a predicate belongs to
/// the set when `σ(logit) > tau`.
pub fn extract(
    object_logits: &Tensor,
    predicate_logits: Option<&Tensor>,
    graph: &SrGraph,
    segment_ids: &[u32],
    tau: f64,
) -> Vec<TripletPrediction> {
    let rankings: Vec<Vec<usize>> = (0..object_logits.rows()).map(|i| rank_classes(object_logits.row(i))).collect();
    let Some(pl) = predicate_logits else { return Vec::new() };
    graph
        .instances
        .iter()
        .enumerate()
        .map(|(k, &(s, o))| {
            let scores: Vec<f64> = pl.row(k).iter().map(|&z| sigmoid(z)).collect();
            TripletPrediction {
                subject_id: segment_ids[s],
                object_id: segment_ids[o],
                subject_index: s,
                object_index: o,
                subject_class: rankings[s][0],
                object_class: rankings[o][0],
                subject_ranking: rankings[s].clone(),
                object_ranking: rankings[o].clone(),
                predicates: (0..scores.len()).filter(|&p| scores[p] > tau).collect(),
                scores,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCounts {
    /// Ordered pairs with at least one gt predicate.
    pub n_pairs: usize,
    pub re_hits: usize,
    pub re_single_hits: usize,
    /// Gt pairs that had no relation instance; counted as misses.
    pub missing_instances: usize,
}

impl RecallCounts {
    pub fn add(&mut self, other: &RecallCounts) {
        self.n_pairs += other.n_pairs;
        self.re_hits += other.re_hits;
        self.re_single_hits += other.re_single_hits;
        self.missing_instances += other.missing_instances;
    }

    pub fn re(&self) -> f64 {
        ratio(self.re_hits, self.n_pairs)
    }

    pub fn re_single(&self) -> f64 {
        ratio(self.re_single_hits, self.n_pairs)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Exact-set and non-empty-intersection recall over the scene's gt pairs.
/// Both top-1 classes must also be correct.
pub fn recall(preds: &[TripletPrediction], scene: &SceneSample) -> RecallCounts {
    let by_pair: BTreeMap<(usize, usize), &TripletPrediction> =
        preds.iter().map(|p| ((p.subject_index, p.object_index), p)).collect();
    let classes = scene.gt_classes();
    let mut c = RecallCounts::default();
    for ((s, o), gt) in scene.gt_pairs() {
        c.n_pairs += 1;
        let Some(p) = by_pair.get(&(s, o)) else {
            c.missing_instances += 1;
            continue;
        };
        if classes[s] != Some(p.subject_class) || classes[o] != Some(p.object_class) {
            continue;
        }
        let predicted: BTreeSet<usize> = p.predicates.iter().copied().collect();
        if predicted == gt {
            c.re_hits += 1;
        }
        if predicted.intersection(&gt).next().is_some() {
            c.re_single_hits += 1;
        }
    }
    c
}

/// `(hits, labeled segments)` where a hit has its gt class among the `k`
/// highest logits.
pub fn obj_at_k_counts(object_logits: &Tensor, gt: &[Option<usize>], k: usize) -> (usize, usize) {
    let mut hits = 0;
    let mut n = 0;
    for (i, g) in gt.iter().enumerate() {
        if let Some(g) = *g {
            n += 1;
            if rank_classes(object_logits.row(i)).iter().take(k).any(|&c| c == g) {
                hits += 1;
            }
        }
    }
    (hits, n)
}

pub fn obj_at_k(object_logits: &Tensor, gt: &[Option<usize>], k: usize) -> f64 {
    let (h, n) = obj_at_k_counts(object_logits, gt, k);
    ratio(h, n)
}

/// `100 · (a − b) / b`.
pub fn relative_improvement(a: f64, b: f64) -> Result<f64, EvalError> {
    if !(b > 0.0) {
        return Err(EvalError::Domain(b));
    }
    Ok(100.0 * (a - b) / b)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub gt: usize,
    pub predicted: usize,
    pub gt_name: String,
    pub predicted_name: String,
    pub count: usize,
}

/// Counts of `(gt, top-1 prediction)` for misclassified segments.
pub fn confusion_counts(object_logits: &Tensor, gt: &[Option<usize>]) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for (i, g) in gt.iter().enumerate() {
        if let Some(g) = *g {
            let p = rank_classes(object_logits.row(i))[0];
            if p != g {
                *counts.entry((g, p)).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Most frequent confusions, by count and then class-index order.
pub fn rank_confusions(counts: &BTreeMap<(usize, usize), usize>, top_n: usize, vocab: &Vocab) -> Vec<ConfusionPair> {
    let mut v: Vec<_> = counts.iter().map(|(&(g, p), &c)| (g, p, c)).collect();
    v.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    v.into_iter()
        .take(top_n)
        .map(|(g, p, count)| ConfusionPair {
            gt: g,
            predicted: p,
            gt_name: vocab.objects()[g].clone(),
            predicted_name: vocab.objects()[p].clone(),
            count,
        })
        .collect()
}

pub fn confusion_pairs(object_logits: &Tensor, gt: &[Option<usize>], top_n: usize, vocab: &Vocab) -> Vec<ConfusionPair> {
    rank_confusions(&confusion_counts(object_logits, gt), top_n, vocab)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub re: f64,
    pub re_single: f64,
    /// Keys are K values.
    pub obj_at: BTreeMap<usize, f64>,
    pub n_pairs: usize,
    pub n_segments: usize,
    pub missing_instances: usize,
    pub confusion_pairs: Vec<ConfusionPair>,
}

impl MetricsReport {
    /// Aligned table with the RE, RE_single, Obj@1 and Obj@5 columns.
    pub fn table(&self) -> String {
        let get = |k| self.obj_at.get(&k).copied().unwrap_or(f64::NAN);
        let mut s = format!("{:>8} {:>10} {:>8} {:>8}\n", "RE", "RE_single", "Obj@1", "Obj@5");
        s.push_str(&format!("{:>8.3} {:>10.3} {:>8.3} {:>8.3}\n", self.re, self.re_single, get(1), get(5)));
        s
    }
}

/// Pair- and segment-weighted aggregation over scenes.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    ks: Vec<usize>,
    recall: RecallCounts,
    obj_hits: BTreeMap<usize, usize>,
    n_segments: usize,
    confusions: BTreeMap<(usize, usize), usize>,
}

impl MetricsAccumulator {
    pub fn new(ks: &[usize]) -> Self {
        MetricsAccumulator { ks: ks.to_vec(), ..Default::default() }
    }

    pub fn add_scene(&mut self, scene: &SceneSample, object_logits: &Tensor, preds: &[TripletPrediction]) {
        self.recall.add(&recall(preds, scene));
        let gt = scene.gt_classes();
        for &k in &self.ks {
            let (h, n) = obj_at_k_counts(object_logits, &gt, k);
            *self.obj_hits.entry(k).or_insert(0) += h;
            if k == self.ks[0] {
                self.n_segments += n;
            }
        }
        if self.ks.is_empty() {
            self.n_segments += gt.iter().flatten().count();
        }
        for (key, c) in confusion_counts(object_logits, &gt) {
            *self.confusions.entry(key).or_insert(0) += c;
        }
    }

    pub fn report(&self, top_n: usize, vocab: &Vocab) -> MetricsReport {
        MetricsReport {
            re: self.recall.re(),
            re_single: self.recall.re_single(),
            obj_at: self.obj_hits.iter().map(|(&k, &h)| (k, ratio(h, self.n_segments))).collect(),
            n_pairs: self.recall.n_pairs,
            n_segments: self.n_segments,
            missing_instances: self.recall.missing_instances,
            confusion_pairs: rank_confusions(&self.confusions, top_n, vocab),
        }
    }
}

/// Default K values reported for object accuracy.
pub const DEFAULT_KS: [usize; 2] = [1, 5];

/// Predictions for one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePrediction {
    pub object_logits: Tensor,
    pub graph: SrGraph,
    pub triplets: Vec<TripletPrediction>,
}

/// Runs the model on one scene; `seed` fixes the point resampling.
pub fn predict_scene(
    model: &Model,
    store: &ParamStore,
    scene: &SceneSample,
    tau: f64,
    seed: u64,
) -> Result<ScenePrediction, EvalError> {
    scene.validate_vocab(&model.kg.vocab, "<scene>")?;
    let prepared = model.prepare(scene, seed)?;
    let out = model.predict(store, &prepared)?;
    let ids: Vec<u32> = scene.segments.iter().map(|s| s.id).collect();
    let triplets = extract(&out.object_logits, out.predicate_logits.as_ref(), &prepared.graph, &ids, tau);
    Ok(ScenePrediction { object_logits: out.object_logits, graph: prepared.graph, triplets })
}

/// Evaluates every scene with resampling seeds from `seed_for(index)`.
pub fn evaluate_corpus(
    model: &Model,
    store: &ParamStore,
    scenes: &[SceneSample],
    tau: f64,
    ks: &[usize],
    top_n: usize,
    seed_for: impl Fn(usize) -> u64,
) -> Result<MetricsReport, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::Input("evaluation corpus is empty".into()));
    }
    if ks.contains(&0) {
        return Err(EvalError::Input("K must be at least 1".into()));
    }
    let mut acc = MetricsAccumulator::new(ks);
    for (i, scene) in scenes.iter().enumerate() {
        let p = predict_scene(model, store, scene, tau, seed_for(i))?;
        acc.add_scene(scene, &p.object_logits, &p.triplets);
    }
    Ok(acc.report(top_n, &model.kg.vocab))
}
