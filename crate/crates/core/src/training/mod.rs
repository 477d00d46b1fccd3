//! Loss, optimizers, the training loop and checkpoints.

mod checkpoint;

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{PointNetConfig, PreparedScene, DEFAULT_N_POINTS};
use crate::knowledge::{KgMode, KnowledgeGraph};
use crate::ksgn::{Logits, Model, ModelConfig, ModelError, DEFAULT_HIDDEN, DEFAULT_STEPS};
use crate::numeric::{NumericError, ParamStore, Tape, Tensor, Var};
use crate::scene::{SceneError, SceneSample, SrGraph, DEFAULT_THRESHOLD};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Fixed-step gradient descent.
    #[default]
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda_obj: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Message-passing steps.
    pub steps: usize,
    pub d_h: usize,
    /// Point-encoder output width.
    pub d_p: usize,
    /// Hidden widths of the point encoder.
    pub pointnet_hidden: [usize; 2],
    pub n_points: usize,
    pub predicate_threshold: f64,
    pub distance_threshold: f64,
    pub kg_mode: KgMode,
    /// Scenes are processed strictly in order on one thread.
    pub deterministic: bool,
    pub optimizer: Optimizer,
    /// Scenes per update; 0 means the whole corpus.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            lambda_obj: 0.5,
            epochs: 200,
            seed: 0,
            steps: DEFAULT_STEPS,
            d_h: DEFAULT_HIDDEN,
            d_p: 64,
            pointnet_hidden: [32, 64],
            n_points: DEFAULT_N_POINTS,
            predicate_threshold: 0.5,
            distance_threshold: DEFAULT_THRESHOLD,
            kg_mode: KgMode::External,
            deterministic: true,
            optimizer: Optimizer::Sgd,
            batch_size: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.lambda_obj >= 0.0 && self.lambda_obj.is_finite()) {
            return bad(format!("lambda_obj must be finite and non-negative, got {}", self.lambda_obj));
        }
        if !(self.predicate_threshold > 0.0 && self.predicate_threshold < 1.0) {
            return bad(format!("predicate_threshold must lie in (0, 1), got {}", self.predicate_threshold));
        }
        self.model_config()?;
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig, TrainError> {
        let [h1, h2] = self.pointnet_hidden;
        let pointnet = PointNetConfig { widths: [3, h1, h2, self.d_p] };
        pointnet.validate().map_err(TrainError::Config)?;
        if self.n_points == 0 || self.d_h == 0 || self.steps == 0 {
            return Err(TrainError::Config("n_points, d_h and steps must be at least 1".into()));
        }
        Ok(ModelConfig {
            pointnet,
            d_h: self.d_h,
            steps: self.steps,
            n_points: self.n_points,
            threshold: self.distance_threshold,
        })
    }

    /// Knowledge graph actually used for this run.
    pub fn effective_kg(&self, kg: &KnowledgeGraph) -> KnowledgeGraph {
        match self.kg_mode {
            KgMode::External => kg.clone(),
            KgMode::Internal => kg.zeroed(),
        }
    }
}

/// Resampling seed for the scene at `index`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Multi-hot `[n_sp, n_predicates]` targets: row `k` marks every gt
/// predicate of the ordered pair behind predicate node `k`. Ground-truth
/// pairs without a predicate node are not represented.
pub fn predicate_targets(graph: &SrGraph, scene: &SceneSample, n_predicates: usize) -> Result<Tensor, NumericError> {
    let mut t = Tensor::zeros(&[graph.n_sp(), n_predicates]);
    for ((s, o), preds) in scene.gt_pairs() {
        if let Some(k) = graph.instance_index(s, o) {
            for p in preds {
                if p >= n_predicates {
                    return Err(NumericError::Label { index: p, classes: n_predicates });
                }
                t.set(k, p, 1.0);
            }
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossVars {
    pub total: Var,
    pub object: Var,
    /// Zero when the scene has no predicate nodes.
    pub predicate: Var,
}

/// `λ · L_obj + L_pred`: mean softmax cross-entropy over labeled entity rows
/// plus mean per-entry binary cross-entropy over predicate nodes.
pub fn loss(
    tape: &mut Tape,
    logits: &Logits,
    gt_classes: &[Option<usize>],
    targets: Option<&Tensor>,
    lambda: f64,
) -> Result<LossVars, NumericError> {
    let object = tape.softmax_ce(logits.object, gt_classes)?;
    let predicate = match (logits.predicate, targets) {
        (Some(p), Some(t)) => tape.binary_ce(p, t)?,
        (None, _) => tape.constant(Tensor::scalar(0.0)),
        (Some(p), None) => {
            return Err(NumericError::Dimension { op: "loss", left: tape.value(p).shape().to_vec(), right: vec![0] })
        }
    };
    let weighted = tape.scale(object, lambda);
    let total = tape.add(weighted, predicate)?;
    Ok(LossVars { total, object, predicate })
}

/// A prepared scene with its loss targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingScene {
    pub prepared: PreparedScene,
    pub targets: Option<Tensor>,
}

impl TrainingScene {
    pub fn new(model: &Model, scene: &SceneSample, seed: u64) -> Result<Self, TrainError> {
        scene.validate_vocab(&model.kg.vocab, "<corpus>")?;
        let prepared = model.prepare(scene, seed)?;
        let targets = if prepared.graph.n_sp() > 0 {
            Some(predicate_targets(&prepared.graph, scene, model.kg.vocab.n_predicates())?)
        } else {
            None
        };
        Ok(TrainingScene { prepared, targets })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub object: f64,
    pub predicate: f64,
}

/// Loss values and parameter gradients of one scene.
pub fn scene_gradients(
    model: &Model,
    store: &ParamStore,
    scene: &TrainingScene,
    lambda: f64,
) -> Result<(LossParts, BTreeMap<String, Tensor>), NumericError> {
    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, store, &scene.prepared, None)?;
    let l = loss(&mut tape, &logits, &scene.prepared.gt_classes, scene.targets.as_ref(), lambda)?;
    let parts = LossParts {
        total: tape.scalar_value(l.total),
        object: tape.scalar_value(l.object),
        predicate: tape.scalar_value(l.predicate),
    };
    if !parts.total.is_finite() {
        return Ok((parts, BTreeMap::new()));
    }
    let grads = tape.backward(l.total)?;
    Ok((parts, tape.param_grads(&grads)))
}

/// Loss of one scene without gradients.
pub fn scene_loss(model: &Model, store: &ParamStore, scene: &TrainingScene, lambda: f64) -> Result<LossParts, NumericError> {
    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, store, &scene.prepared, None)?;
    let l = loss(&mut tape, &logits, &scene.prepared.gt_classes, scene.targets.as_ref(), lambda)?;
    Ok(LossParts {
        total: tape.scalar_value(l.total),
        object: tape.scalar_value(l.object),
        predicate: tape.scalar_value(l.predicate),
    })
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Parameter update rule with its running state.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64) -> Self {
        OptimizerState { kind, lr, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// Applies one step for `grads`; parameters without a gradient are
    /// treated as having zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        self.t += 1;
        for (name, p) in store.iter_mut() {
            let g = grads.get(name);
            match self.kind {
                Optimizer::Sgd => {
                    if let Some(g) = g {
                        for (w, d) in p.values_mut().iter_mut().zip(g.values()) {
                            *w -= self.lr * d;
                        }
                    }
                }
                Optimizer::Adam => {
                    let n = p.len();
                    let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                    let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                    let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                    for (k, w) in p.values_mut().iter_mut().enumerate() {
                        let d = g.map_or(0.0, |g| g.values()[k]);
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * d;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * d * d;
                        *w -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub object: f64,
    pub predicate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

fn accumulate(sum: &mut BTreeMap<String, Tensor>, grads: BTreeMap<String, Tensor>) {
    for (name, g) in grads {
        match sum.get_mut(&name) {
            Some(s) => {
                for (a, b) in s.values_mut().iter_mut().zip(g.values()) {
                    *a += b;
                }
            }
            None => {
                sum.insert(name, g);
            }
        }
    }
}

fn batch_gradients(
    model: &Model,
    store: &ParamStore,
    scenes: &[&TrainingScene],
    lambda: f64,
    deterministic: bool,
) -> Result<Vec<(LossParts, BTreeMap<String, Tensor>)>, NumericError> {
    let workers = if deterministic {
        1
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get()).min(scenes.len())
    };
    if workers <= 1 {
        return scenes.iter().map(|s| scene_gradients(model, store, s, lambda)).collect();
    }
    let chunk = scenes.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenes
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|s| scene_gradients(model, store, s, lambda)).collect::<Vec<_>>())
            })
            .collect();
        // joined in chunk order, so the reduction order is fixed
        let mut out = Vec::with_capacity(scenes.len());
        for h in handles {
            for r in h.join().expect("gradient worker panicked") {
                out.push(r?);
            }
        }
        Ok(out)
    })
}

/// Trains from a fresh seeded initialization. `on_epoch` sees every epoch
/// record and may stop training early.
pub fn train_with<F>(
    corpus: &[SceneSample],
    kg: &KnowledgeGraph,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&EpochRecord, &ParamStore) -> ControlFlow<()>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::Config("training corpus is empty".into()));
    }
    let model = Model::new(config.model_config()?, config.effective_kg(kg))?;
    let scenes = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| TrainingScene::new(&model, s, scene_seed(config.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut store = model.init_params(config.seed);
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate);
    let batch = if config.batch_size == 0 { scenes.len() } else { config.batch_size.min(scenes.len()) };
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if batch < scenes.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sums = LossParts { total: 0.0, object: 0.0, predicate: 0.0 };
        for idx in order.chunks(batch) {
            let members: Vec<&TrainingScene> = idx.iter().map(|&i| &scenes[i]).collect();
            let results = batch_gradients(&model, &store, &members, config.lambda_obj, config.deterministic)?;
            let mut grad_sum = BTreeMap::new();
            for (parts, g) in results {
                if !parts.total.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                sums.total += parts.total;
                sums.object += parts.object;
                sums.predicate += parts.predicate;
                accumulate(&mut grad_sum, g);
            }
            let scale = 1.0 / members.len() as f64;
            for g in grad_sum.values_mut() {
                for v in g.values_mut() {
                    *v *= scale;
                }
            }
            opt.step(&mut store, &grad_sum);
        }
        let n = scenes.len() as f64;
        let record = EpochRecord { epoch, total: sums.total / n, object: sums.object / n, predicate: sums.predicate / n };
        history.push(record);
        if on_epoch(&record, &store).is_break() {
            break;
        }
    }
    if store.iter().any(|(_, t)| !t.is_finite()) {
        return Err(TrainError::Diverged { epoch: history.len() });
    }
    let checkpoint = Checkpoint::new(config.clone(), &model.kg, store, history.len(), history.last().map(|r| r.total));
    Ok(TrainOutcome { checkpoint, history })
}

pub fn train(corpus: &[SceneSample], kg: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(corpus, kg, config, |_, _| ControlFlow::Continue(()))
}

/// Writes the loss history as CSV: `epoch,total,object,predicate`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,total,object,predicate\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.total, r.object, r.predicate));
    }
    out
}

#[cfg(test)]
mod tests;
