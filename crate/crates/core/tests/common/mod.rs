//! Shared helpers and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ksgn::evaluation::{extract, MetricsAccumulator, MetricsReport};
use ksgn::knowledge::{assemble, default_category_groups, write_kg_dir, KgMode, KgSources, KnowledgeGraph, Vocab};
use ksgn::numeric::Tensor;
use ksgn::scene::{build_sr_graph, SceneSample, Segment, Triplet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn kg_from(scenes: &[SceneSample], dim: usize, seed: u64, mode: KgMode) -> KnowledgeGraph {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocab::synthetic();
    write_kg_dir(dir.path(), scenes, &vocab, dim, seed).unwrap();
    let sources = KgSources::from_dir(dir.path(), default_category_groups(&vocab));
    assemble(&vocab, &sources, mode).unwrap().0
}

/// Centroid, population std, extents, longest extent and volume, computed
/// with the one-pass moment formula.
pub fn context_oracle(points: &[[f64; 3]]) -> [f64; 11] {
    let n = points.len() as f64;
    let mut out = [0.0; 11];
    for a in 0..3 {
        let s: f64 = points.iter().map(|p| p[a]).sum();
        let s2: f64 = points.iter().map(|p| p[a] * p[a]).sum();
        let mean = s / n;
        let lo = points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        out[a] = mean;
        out[3 + a] = (s2 / n - mean * mean).max(0.0).sqrt();
        out[6 + a] = hi - lo;
    }
    out[9] = out[6].max(out[7]).max(out[8]);
    out[10] = out[6] * out[7] * out[8];
    out
}

pub fn oracle_vocab() -> Vocab {
    let objects = ["floor", "table", "chair", "lamp", "box"].map(String::from).to_vec();
    let predicates = ["near", "on", "under"].map(String::from).to_vec();
    Vocab::new("oracle", objects, predicates).unwrap()
}

/// A scene together with model outputs for every ordered segment pair.
pub struct OracleCase {
    pub scene: SceneSample,
    pub object_logits: Vec<Vec<f64>>,
    pub pair_logits: BTreeMap<(usize, usize), Vec<f64>>,
}

fn pick(rng: &mut ChaCha8Rng, choices: &[f64]) -> f64 {
    choices[rng.random_range(0..choices.len())]
}

pub fn random_case(rng: &mut ChaCha8Rng, n_objects: usize, n_predicates: usize) -> OracleCase {
    let n = rng.random_range(2..=4);
    let segments: Vec<Segment> = (0..n)
        .map(|i| {
            let origin = [0, 1, 2].map(|_| rng.random_range(0.0..1.5));
            let size = rng.random_range(0.05..0.6);
            let k = rng.random_range(1..6);
            let pts = (0..k).map(|_| origin.map(|o| o + rng.random_range(0.0..size))).collect();
            let class = if rng.random_bool(0.1) { None } else { Some(rng.random_range(0..n_objects)) };
            Segment::new(10 * i as u32 + 3, pts, class).unwrap()
        })
        .collect();
    let mut triplets = Vec::new();
    let mut gt: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for s in 0..n {
        for o in 0..n {
            if s != o && rng.random_bool(0.5) {
                for p in 0..n_predicates {
                    if rng.random_bool(0.4) {
                        triplets.push(Triplet { subject: segments[s].id, predicate: p, object: segments[o].id });
                        gt.entry((s, o)).or_default().insert(p);
                    }
                }
            }
        }
    }
    let ties = [-1.0, 0.0, 1.0, 2.0];
    let object_logits = segments
        .iter()
        .map(|seg| {
            let mut row: Vec<f64> = (0..n_objects).map(|_| pick(rng, &ties)).collect();
            if let (Some(c), true) = (seg.gt_class, rng.random_bool(0.6)) {
                row[c] = 3.0;
            }
            row
        })
        .collect();
    let levels = [-2.0, 0.0, 0.3, 1.0, 4.0];
    let mut pair_logits = BTreeMap::new();
    for s in 0..n {
        for o in 0..n {
            if s == o {
                continue;
            }
            let truth = gt.get(&(s, o)).cloned().unwrap_or_default();
            let copy = rng.random_bool(0.5);
            let row = (0..n_predicates)
                .map(|p| match (copy, truth.contains(&p)) {
                    (true, true) => 4.0,
                    (true, false) => -2.0,
                    _ => pick(rng, &levels),
                })
                .collect();
            pair_logits.insert((s, o), row);
        }
    }
    let scene = SceneSample::new("oracle", segments, triplets).unwrap();
    OracleCase { scene, object_logits, pair_logits }
}

/// Runs the library evaluator on the cases.
pub fn library_metrics(cases: &[OracleCase], threshold: f64, tau: f64, ks: &[usize], top_n: usize, vocab: &Vocab) -> MetricsReport {
    let mut acc = MetricsAccumulator::new(ks);
    for c in cases {
        let graph = build_sr_graph(&c.scene, threshold).unwrap();
        let obj = Tensor::from_rows(&c.object_logits).unwrap();
        let rows: Vec<Vec<f64>> = graph.instances.iter().map(|p| c.pair_logits[p].clone()).collect();
        let pred = if rows.is_empty() { None } else { Some(Tensor::from_rows(&rows).unwrap()) };
        let ids: Vec<u32> = c.scene.segments.iter().map(|s| s.id).collect();
        let triplets = extract(&obj, pred.as_ref(), &graph, &ids, tau);
        acc.add_scene(&c.scene, &obj, &triplets);
    }
    acc.report(top_n, vocab)
}

#[derive(Debug, PartialEq)]
pub struct OracleMetrics {
    pub re: f64,
    pub re_single: f64,
    pub obj_at: BTreeMap<usize, f64>,
    pub n_pairs: usize,
    pub n_segments: usize,
    pub missing_instances: usize,
    /// `(gt, predicted, count)`.
    pub confusions: Vec<(usize, usize, usize)>,
}

fn box_gap(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let lo = |p: &[[f64; 3]], ax: usize| p.iter().map(|q| q[ax]).fold(f64::INFINITY, f64::min);
    let hi = |p: &[[f64; 3]], ax: usize| p.iter().map(|q| q[ax]).fold(f64::NEG_INFINITY, f64::max);
    let mut sq = 0.0;
    for ax in 0..3 {
        let d = (lo(b, ax) - hi(a, ax)).max(0.0) + (lo(a, ax) - hi(b, ax)).max(0.0);
        sq += d * d;
    }
    sq.sqrt()
}

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..row.len() {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn in_top_k(row: &[f64], g: usize, k: usize) -> bool {
    let ahead = (0..row.len()).filter(|&c| row[c] > row[g] || (row[c] == row[g] && c < g)).count();
    ahead < k
}

fn rate(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Exhaustive evaluator working straight from the definitions.
pub fn brute_force(cases: &[OracleCase], threshold: f64, tau: f64, ks: &[usize], top_n: usize) -> OracleMetrics {
    let (mut pairs, mut exact, mut single, mut missing, mut segs) = (0, 0, 0, 0, 0);
    let mut hits = vec![0usize; ks.len()];
    let mut conf: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for c in cases {
        let segments = &c.scene.segments;
        let index_of = |id: u32| segments.iter().position(|s| s.id == id).unwrap();
        for (i, seg) in segments.iter().enumerate() {
            let Some(g) = seg.gt_class else { continue };
            segs += 1;
            for (h, &k) in hits.iter_mut().zip(ks) {
                if in_top_k(&c.object_logits[i], g, k) {
                    *h += 1;
                }
            }
            let p = argmax_first(&c.object_logits[i]);
            if p != g {
                *conf.entry((g, p)).or_default() += 1;
            }
        }
        for s in 0..segments.len() {
            for o in 0..segments.len() {
                let gt: Vec<usize> = c
                    .scene
                    .gt_triplets
                    .iter()
                    .filter(|t| index_of(t.subject) == s && index_of(t.object) == o)
                    .map(|t| t.predicate)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                if gt.is_empty() {
                    continue;
                }
                pairs += 1;
                if box_gap(&segments[s].points, &segments[o].points) > threshold {
                    missing += 1;
                    continue;
                }
                let classes_ok = segments[s].gt_class == Some(argmax_first(&c.object_logits[s]))
                    && segments[o].gt_class == Some(argmax_first(&c.object_logits[o]));
                if !classes_ok {
                    continue;
                }
                let predicted: Vec<usize> = (0..c.pair_logits[&(s, o)].len())
                    .filter(|&p| 1.0 / (1.0 + (-c.pair_logits[&(s, o)][p]).exp()) > tau)
                    .collect();
                if predicted == gt {
                    exact += 1;
                }
                if predicted.iter().any(|p| gt.contains(p)) {
                    single += 1;
                }
            }
        }
    }
    let mut confusions: Vec<(usize, usize, usize)> = conf.into_iter().map(|((g, p), n)| (g, p, n)).collect();
    confusions.sort_by_key(|&(g, p, n)| (std::cmp::Reverse(n), g, p));
    confusions.truncate(top_n);
    OracleMetrics {
        re: rate(exact, pairs),
        re_single: rate(single, pairs),
        obj_at: ks.iter().zip(&hits).map(|(&k, &h)| (k, rate(h, segs))).collect(),
        n_pairs: pairs,
        n_segments: segs,
        missing_instances: missing,
        confusions,
    }
}

pub fn as_oracle(r: &MetricsReport) -> OracleMetrics {
    OracleMetrics {
        re: r.re,
        re_single: r.re_single,
        obj_at: r.obj_at.clone(),
        n_pairs: r.n_pairs,
        n_segments: r.n_segments,
        missing_instances: r.missing_instances,
        confusions: r.confusion_pairs.iter().map(|c| (c.gt, c.predicted, c.count)).collect(),
    }
}

/// Compares the library evaluator with the brute-force one on `n` random
/// cases; returns the first disagreement.
pub fn oracle_agreement(seed: u64, n: usize) -> Result<usize, String> {
    let vocab = oracle_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (threshold, tau, ks, top_n) = (0.5, 0.5, [1, 2, 5], 4);
    let mut pairs = 0;
    for i in 0..n {
        let case = random_case(&mut rng, vocab.n_objects(), vocab.n_predicates());
        let cases = std::slice::from_ref(&case);
        let lib = as_oracle(&library_metrics(cases, threshold, tau, &ks, top_n, &vocab));
        let bf = brute_force(cases, threshold, tau, &ks, top_n);
        if lib != bf {
            return Err(format!("scene {i}: library {lib:?} vs brute force {bf:?}"));
        }
        pairs += bf.n_pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<OracleCase> = (0..n).map(|_| random_case(&mut rng, vocab.n_objects(), vocab.n_predicates())).collect();
    let lib = as_oracle(&library_metrics(&all, threshold, tau, &ks, top_n, &vocab));
    let bf = brute_force(&all, threshold, tau, &ks, top_n);
    if lib != bf {
        return Err(format!("corpus: library {lib:?} vs brute force {bf:?}"));
    }
    Ok(pairs)
}
