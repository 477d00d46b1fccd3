use super::*;
use crate::knowledge::{assemble, default_category_groups, write_kg_dir, KgSources, Vocab};
use crate::scene::{generate_synthetic_corpus, Segment, SynthSpec, Triplet};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        steps: 2,
        d_h: 8,
        d_p: 8,
        pointnet_hidden: [8, 8],
        n_points: 16,
        ..TrainConfig::default()
    }
}

fn corpus(n: usize, seed: u64) -> Vec<SceneSample> {
    let mut spec = SynthSpec::new(n);
    spec.max_segments = 5;
    generate_synthetic_corpus(seed, &spec).unwrap()
}

fn kg_from(scenes: &[SceneSample], mode: KgMode) -> KnowledgeGraph {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocab::synthetic();
    write_kg_dir(dir.path(), scenes, &vocab, 6, 1).unwrap();
    let sources = KgSources::from_dir(dir.path(), default_category_groups(&vocab));
    assemble(&vocab, &sources, mode).unwrap().0
}

fn logits_on(tape: &mut Tape, obj: Vec<Vec<f64>>, pred: Option<Vec<Vec<f64>>>) -> Logits {
    let object = tape.constant(Tensor::from_rows(&obj).unwrap());
    let predicate = pred.map(|p| tape.constant(Tensor::from_rows(&p).unwrap()));
    Logits { object, predicate }
}

#[test]
fn peaked_logits_give_small_loss() {
    let mut tape = Tape::new();
    let l = logits_on(
        &mut tape,
        vec![vec![20.0, -20.0, -20.0], vec![-20.0, -20.0, 20.0]],
        Some(vec![vec![20.0, -20.0]]),
    );
    let targets = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let v = loss(&mut tape, &l, &[Some(0), Some(2)], Some(&targets), 0.5).unwrap();
    assert!(tape.scalar_value(v.total) < 0.01);
}

#[test]
fn hand_computed_two_segment_loss() {
    let mut tape = Tape::new();
    let l = logits_on(&mut tape, vec![vec![1.0, 0.0], vec![0.0, 2.0]], Some(vec![vec![0.5, -1.0]]));
    let targets = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let v = loss(&mut tape, &l, &[Some(0), Some(0)], Some(&targets), 0.5).unwrap();
    let ce0 = (1f64.exp() + 1.0).ln() - 1.0;
    let ce1 = (1.0 + 2f64.exp()).ln();
    let obj = (ce0 + ce1) / 2.0;
    let bce0 = (1.0 + (-0.5f64).exp()).ln();
    let bce1 = (1.0 + (-1f64).exp()).ln();
    let pred = (bce0 + bce1) / 2.0;
    assert!((tape.scalar_value(v.object) - obj).abs() < 1e-9);
    assert!((tape.scalar_value(v.predicate) - pred).abs() < 1e-9);
    assert!((tape.scalar_value(v.total) - (0.5 * obj + pred)).abs() < 1e-9);
}

#[test]
fn lambda_zero_and_linearity() {
    let objs = vec![vec![0.3, -1.0, 2.0], vec![1.5, 0.0, -0.5]];
    let preds = Some(vec![vec![0.2, -0.7], vec![1.1, 0.4]]);
    let targets = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let eval = |lambda: f64| {
        let mut tape = Tape::new();
        let l = logits_on(&mut tape, objs.clone(), preds.clone());
        let v = loss(&mut tape, &l, &[Some(2), None], Some(&targets), lambda).unwrap();
        (tape.scalar_value(v.total), tape.scalar_value(v.object), tape.scalar_value(v.predicate))
    };
    let (t0, _, p0) = eval(0.0);
    assert_eq!(t0, p0);
    let (t1, o1, _) = eval(1.0);
    let (t3, _, _) = eval(3.0);
    assert_eq!(t1, o1 + p0);
    assert_eq!(t3, 3.0 * o1 + p0);
}

#[test]
fn out_of_range_class_is_a_label_error() {
    let mut tape = Tape::new();
    let l = logits_on(&mut tape, vec![vec![0.0, 0.0]], None);
    let err = loss(&mut tape, &l, &[Some(5)], None, 0.5).unwrap_err();
    assert_eq!(err, NumericError::Label { index: 5, classes: 2 });
}

#[test]
fn targets_mark_gt_predicates_of_instances() {
    let seg = |id, x: f64| Segment::new(id, vec![[x, 0.0, 0.0], [x + 0.2, 0.2, 0.2]], Some(0)).unwrap();
    let t = |s, p, o| Triplet { subject: s, predicate: p, object: o };
    let scene = SceneSample::new("v", vec![seg(0, 0.0), seg(1, 0.3), seg(2, 9.0)], vec![t(0, 1, 1), t(0, 2, 1), t(0, 0, 2)])
        .unwrap();
    let graph = crate::scene::build_sr_graph(&scene, 0.5).unwrap();
    let targets = predicate_targets(&graph, &scene, 3).unwrap();
    assert_eq!(graph.instances, vec![(0, 1), (1, 0)]);
    assert_eq!(targets.to_rows(), vec![vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]]);
}

#[test]
fn training_decreases_loss_and_is_deterministic() {
    let scenes = corpus(5, 3);
    let kg = kg_from(&corpus(6, 99), KgMode::External);
    let cfg = TrainConfig { epochs: 200, ..tiny_config() };
    let a = train(&scenes, &kg, &cfg).unwrap();
    assert!(a.history[199].total < a.history[0].total, "{:?} {:?}", a.history[0], a.history[199]);
    let cfg = TrainConfig { epochs: 10, ..tiny_config() };
    let b = train(&scenes, &kg, &cfg).unwrap();
    let c = train(&scenes, &kg, &cfg).unwrap();
    let bits = |h: &[EpochRecord]| h.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&b.history), bits(&c.history));
    assert_eq!(b.checkpoint.to_json(), c.checkpoint.to_json());
    let threaded = train(&scenes, &kg, &TrainConfig { deterministic: false, ..cfg }).unwrap();
    assert_eq!(bits(&threaded.history), bits(&b.history));
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let scenes = corpus(3, 4);
    let kg = kg_from(&scenes, KgMode::External);
    for optimizer in [Optimizer::Sgd, Optimizer::Adam] {
        let out = train(&scenes, &kg, &TrainConfig { learning_rate: 0.0, optimizer, ..tiny_config() }).unwrap();
        assert!(out.history.iter().all(|r| r.total == out.history[0].total));
    }
}

#[test]
fn tiny_step_does_not_increase_loss() {
    let scenes = corpus(1, 5);
    let kg = kg_from(&scenes, KgMode::External);
    let cfg = TrainConfig { learning_rate: 1e-5, epochs: 2, ..tiny_config() };
    let out = train(&scenes, &kg, &cfg).unwrap();
    assert!(out.history[1].total <= out.history[0].total);
}

#[test]
fn internal_mode_matches_all_zero_external_kg() {
    let scenes = corpus(3, 6);
    let kg = kg_from(&scenes, KgMode::External).zeroed();
    let mut external = kg.clone();
    external.mode = KgMode::External;
    let cfg = tiny_config();
    let a = train(&scenes, &external, &cfg).unwrap();
    let b = train(&scenes, &kg, &TrainConfig { kg_mode: KgMode::Internal, ..cfg }).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn huge_step_reports_divergence() {
    let scenes = corpus(2, 7);
    let kg = kg_from(&scenes, KgMode::External);
    let cfg = TrainConfig { learning_rate: 1e300, epochs: 20, ..tiny_config() };
    match train(&scenes, &kg, &cfg) {
        Err(TrainError::Diverged { epoch }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainConfig { learning_rate: -1.0, ..tiny_config() },
        TrainConfig { lambda_obj: -0.1, ..tiny_config() },
        TrainConfig { predicate_threshold: 1.0, ..tiny_config() },
        TrainConfig { d_h: 0, ..tiny_config() },
    ] {
        assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
    }
}

#[test]
fn checkpoint_round_trip_and_rejections() {
    let scenes = corpus(2, 8);
    let kg = kg_from(&scenes, KgMode::External);
    let out = train(&scenes, &kg, &tiny_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&out.checkpoint, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.checkpoint);
    for ((_, a), (_, b)) in back.params.iter().zip(out.checkpoint.params.iter()) {
        let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    back.model().unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(CheckpointError::Format { .. })));

    let old = dir.path().join("old.json");
    std::fs::write(&old, text.replacen("\"version\":1", "\"version\":7", 1)).unwrap();
    assert!(matches!(load_checkpoint(&old), Err(CheckpointError::Version { found: 7, .. })));

    let other = Vocab::new("other", vec!["a".into(), "b".into()], vec!["p".into()]).unwrap();
    assert!(matches!(back.check_vocab(&other), Err(CheckpointError::VocabMismatch { .. })));
    back.check_vocab(&Vocab::synthetic()).unwrap();
}
