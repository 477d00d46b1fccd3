//! Acceptance checks; prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::ops::ControlFlow;
use std::time::Instant;

use ksgn::encoders::pointnet_encode;
use ksgn::evaluation::{evaluate_corpus, relative_improvement, MetricsReport};
use ksgn::knowledge::{KgMode, KnowledgeGraph, MatrixKind};
use ksgn::numeric::{grad_check, softmax_rows, NumericError, Tape, Tensor, Var};
use ksgn::scene::{contextual_vector, generate_synthetic_corpus, SceneSample, Segment, SynthSpec, Triplet};
use ksgn::training::{loss, scene_seed, train, train_with, Optimizer, TrainConfig, TrainingScene};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn small(epochs: usize) -> TrainConfig {
    TrainConfig {
        d_h: 32,
        d_p: 32,
        pointnet_hidden: [16, 32],
        n_points: 32,
        steps: 2,
        optimizer: Optimizer::Adam,
        epochs,
        ..TrainConfig::default()
    }
}

fn metric_arithmetic() -> Outcome {
    let a = relative_improvement(0.130, 0.113).map_err(|e| e.to_string())?;
    let b = relative_improvement(0.122, 0.113).map_err(|e| e.to_string())?;
    check(
        (a - 15.0).abs() <= 0.1 && (b - 7.96).abs() <= 0.01,
        format!("0.130 vs 0.113 -> {a:.3}%, 0.122 vs 0.113 -> {b:.3}%"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cube = |id, origin: [f64; 3], side: f64, class| {
        let pts = (0..20).map(|_| origin.map(|o| o + rng.random_range(0.0..side))).collect();
        Segment::new(id, pts, Some(class)).unwrap()
    };
    let segments = vec![cube(0, [0.0; 3], 0.6, 0), cube(1, [0.1, 0.1, 0.6], 0.3, 2), cube(2, [0.9, 0.0, 0.0], 0.4, 4)];
    let t = |s, p, o| Triplet { subject: s, predicate: p, object: o };
    let scene = SceneSample::new(ksgn::knowledge::SYNTHETIC_VOCAB, segments, vec![t(1, 0, 0), t(2, 3, 0), t(1, 1, 0)]).unwrap();
    let kg = common::kg_from(&generate_synthetic_corpus(5, &SynthSpec::new(6)).unwrap(), 6, 2, KgMode::External);
    let cfg = TrainConfig { d_h: 8, d_p: 8, pointnet_hidden: [8, 8], n_points: 16, steps: 2, ..TrainConfig::default() };
    let model = ksgn::ksgn::Model::new(cfg.model_config().unwrap(), kg).unwrap();
    let mut store = model.init_params(3);
    for (name, p) in store.iter_mut() {
        if name.ends_with("bias") {
            p.values_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let ts = TrainingScene::new(&model, &scene, 7).map_err(|e| e.to_string())?;
    let gt = scene.gt_classes();
    let report = grad_check(&store, 1e-6, |tape: &mut Tape, s| -> Result<Var, NumericError> {
        let logits = model.forward(tape, s, &ts.prepared, None)?;
        Ok(loss(tape, &logits, &gt, ts.targets.as_ref(), cfg.lambda_obj)?.total)
    })
    .map_err(|e| e.to_string())?;
    check(
        report.max_rel_error < 1e-4,
        format!(
            "{} entries, max relative error {:.2e} ({}[{}])",
            report.entries_checked, report.max_rel_error, report.worst_param, report.worst_index
        ),
    )
}

fn overfit(reports: &mut Vec<MetricsReport>) -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec::new(5);
    let scenes = generate_synthetic_corpus(1, &spec).map_err(|e| e.to_string())?;
    let max_segments = scenes.iter().map(|s| s.segments.len()).max().unwrap_or(0);
    let kg = common::kg_from(&generate_synthetic_corpus(1000, &SynthSpec::new(20)).unwrap(), 16, 1, KgMode::External);
    let cfg = TrainConfig { learning_rate: 0.001, lambda_obj: 0.5, ..small(2000) };
    let out = train_with(&scenes, &kg, &cfg, |r, _| if r.total < 0.05 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
        .map_err(|e| e.to_string())?;
    let last = out.history.last().unwrap();
    let model = out.checkpoint.model().map_err(|e| e.to_string())?;
    let rep = evaluate_corpus(&model, &out.checkpoint.params, &scenes, 0.5, &[1, 5], 5, |i| scene_seed(cfg.seed, i))
        .map_err(|e| e.to_string())?;
    let ok = max_segments <= 8
        && kg.vocab.n_objects() == 8
        && kg.vocab.n_predicates() == 5
        && last.total < 0.05
        && rep.re_single >= 0.9
        && rep.obj_at[&1] == 1.0;
    let detail = format!(
        "loss {:.4} after {} epochs, RE_single {:.3}, Obj@1 {:.3} ({:.0}s)",
        last.total,
        last.epoch,
        rep.re_single,
        rep.obj_at[&1],
        start.elapsed().as_secs_f64()
    );
    reports.push(rep);
    check(ok, detail)
}

fn knowledge_convergence(reports: &mut Vec<MetricsReport>, kg_out: &mut Option<KnowledgeGraph>) -> Outcome {
    let start = Instant::now();
    let scenes = generate_synthetic_corpus(10, &SynthSpec::new(40)).map_err(|e| e.to_string())?;
    let held = generate_synthetic_corpus(20, &SynthSpec::new(20)).map_err(|e| e.to_string())?;
    let test = generate_synthetic_corpus(30, &SynthSpec::new(20)).map_err(|e| e.to_string())?;
    let kg = common::kg_from(&held, 16, 1, KgMode::External);
    let mut wins = 0;
    let (mut ext_re, mut int_re) = (0.0, 0.0);
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let mut epochs = [usize::MAX; 2];
        for (m, mode) in [KgMode::External, KgMode::Internal].into_iter().enumerate() {
            let cfg = TrainConfig { seed, kg_mode: mode, batch_size: 10, learning_rate: 0.001, ..small(100) };
            let mut hit = None;
            let out = train_with(&scenes, &kg, &cfg, |r, _| {
                if hit.is_none() && r.total <= 0.3 {
                    hit = Some(r.epoch);
                }
                ControlFlow::Continue(())
            })
            .map_err(|e| e.to_string())?;
            epochs[m] = hit.unwrap_or(usize::MAX);
            let model = out.checkpoint.model().map_err(|e| e.to_string())?;
            let rep = evaluate_corpus(&model, &out.checkpoint.params, &test, 0.5, &[1, 5], 5, |i| scene_seed(seed + 1000, i))
                .map_err(|e| e.to_string())?;
            if m == 0 {
                ext_re += rep.re_single / 5.0;
            } else {
                int_re += rep.re_single / 5.0;
            }
            reports.push(rep);
        }
        if epochs[0] <= epochs[1] {
            wins += 1;
        }
        let show = |e: usize| if e == usize::MAX { "-".to_string() } else { e.to_string() };
        lines.push(format!("{}/{}", show(epochs[0]), show(epochs[1])));
    }
    *kg_out = Some(kg);
    check(
        wins >= 4 && ext_re >= int_re,
        format!(
            "epochs to loss<=0.3 external/zero per seed [{}], {wins}/5 seeds; held-out RE_single {ext_re:.3} vs {int_re:.3} ({:.0}s)",
            lines.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn oracle() -> Outcome {
    common::oracle_agreement(5, 100).map(|pairs| format!("100 scenes, {pairs} gt pairs, all metrics identical"))
}

fn invariants(reports: &[MetricsReport], kg: Option<&KnowledgeGraph>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = ksgn::encoders::PointNetConfig { widths: [3, 16, 16, 8] };
    let mut store = ksgn::numeric::ParamStore::new();
    cfg.init(&mut store, &mut rng);
    let mut failures = Vec::new();

    for _ in 0..20 {
        let n = rng.random_range(1..60);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-3.0..3.0))).collect();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng);
        if pointnet_encode(&pts, &cfg, &store).unwrap() != pointnet_encode(&shuffled, &cfg, &store).unwrap() {
            failures.push("PointNet output depends on point order".to_string());
            break;
        }
    }

    let mut ctx_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..50);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-4.0..4.0))).collect();
        let got = contextual_vector(&Segment::new(0, pts.clone(), None).unwrap()).unwrap().to_array();
        let want = common::context_oracle(&pts);
        ctx_err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(ctx_err, f64::max);
    }
    if ctx_err >= 1e-9 {
        failures.push(format!("contextual vector error {ctx_err:.2e}"));
    }

    let logits = Tensor::new(vec![50, 7], (0..350).map(|_| rng.random_range(-50.0..50.0)).collect()).unwrap();
    let sm = softmax_rows(&logits);
    let sm_err = (0..50).map(|i| (sm.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    if sm_err >= 1e-12 {
        failures.push(format!("softmax row sum error {sm_err:.2e}"));
    }

    match kg {
        Some(kg) => {
            for m in &kg.matrices {
                let w = &m.weights;
                if !w.values().iter().all(|v| (0.0..=1.0).contains(v)) {
                    failures.push(format!("{} has weights outside [0, 1]", m.name()));
                }
                if matches!(m.kind, MatrixKind::Category | MatrixKind::Wup) && *w != w.transpose() {
                    failures.push(format!("{} is not symmetric", m.name()));
                }
            }
        }
        None => failures.push("no knowledge graph to inspect".into()),
    }

    let scenes = generate_synthetic_corpus(3, &SynthSpec::new(3)).unwrap();
    let kg0 = common::kg_from(&scenes, 8, 4, KgMode::External);
    let tcfg = TrainConfig { d_h: 8, d_p: 8, pointnet_hidden: [8, 8], n_points: 16, steps: 3, ..TrainConfig::default() };
    let model = ksgn::ksgn::Model::new(tcfg.model_config().unwrap(), kg0).unwrap();
    let params = model.init_params(5);
    let mut bridge_err: f64 = 0.0;
    for (i, s) in scenes.iter().enumerate() {
        let prepared = model.prepare(s, i as u64).unwrap();
        let mut trace = Vec::new();
        model.forward(&mut Tape::new(), &params, &prepared, Some(&mut trace)).unwrap();
        for step in &trace {
            bridge_err = bridge_err.max(step.bridges.max_row_error().unwrap_or(0.0));
        }
    }
    if bridge_err >= 1e-9 {
        failures.push(format!("bridge row sum error {bridge_err:.2e}"));
    }

    let bad_recall = reports.iter().filter(|r| r.re > r.re_single).count();
    if bad_recall > 0 || reports.is_empty() {
        failures.push(format!("RE > RE_single in {bad_recall} of {} runs", reports.len()));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "context err {ctx_err:.1e}, softmax err {sm_err:.1e}, bridge err {bridge_err:.1e}, RE <= RE_single in {} runs",
                reports.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let mut spec = SynthSpec::new(4);
    spec.max_segments = 6;
    let scenes = generate_synthetic_corpus(8, &spec).unwrap();
    let kg = common::kg_from(&scenes, 8, 3, KgMode::External);
    let cfg = TrainConfig { d_h: 16, d_p: 16, pointnet_hidden: [8, 16], n_points: 24, epochs: 15, batch_size: 3, seed: 42, ..TrainConfig::default() };
    let runs: Vec<_> = (0..2).map(|_| train(&scenes, &kg, &cfg)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let bits = |h: &[ksgn::training::EpochRecord]| {
        h.iter().flat_map(|r| [r.total.to_bits(), r.object.to_bits(), r.predicate.to_bits()]).collect::<Vec<_>>()
    };
    let same_history = bits(&runs[0].history) == bits(&runs[1].history);
    let same_checkpoint = runs[0].checkpoint.to_json() == runs[1].checkpoint.to_json();
    check(
        same_history && same_checkpoint,
        format!("{} epochs, histories identical: {same_history}, checkpoints identical: {same_checkpoint}", cfg.epochs),
    )
}

fn main() {
    let mut reports = Vec::new();
    let mut kg = None;
    let results = [
        ("1 metric arithmetic", metric_arithmetic()),
        ("2 gradient check", gradient_check()),
        ("3 overfit capacity", overfit(&mut reports)),
        ("4 knowledge speeds convergence", knowledge_convergence(&mut reports, &mut kg)),
        ("5 oracle equivalence", oracle()),
        ("6 structural invariants", {
            let o = oracle_reports();
            reports.extend(o);
            invariants(&reports, kg.as_ref())
        }),
        ("7 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Reports from the oracle's random scenes, for the recall-ordering check.
fn oracle_reports() -> Vec<MetricsReport> {
    let vocab = common::oracle_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..100)
        .map(|_| {
            let case = common::random_case(&mut rng, vocab.n_objects(), vocab.n_predicates());
            common::library_metrics(std::slice::from_ref(&case), 0.5, 0.5, &[1, 5], 5, &vocab)
        })
        .collect()
}
