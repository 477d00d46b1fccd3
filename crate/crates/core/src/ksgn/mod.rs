//! Typed-edge message passing over scene and knowledge nodes.

mod model;
mod registry;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::NodeFeatures;
use crate::knowledge::KnowledgeGraph;
use crate::numeric::{NumericError, ParamStore, Tape, Tensor, Var};
use crate::scene::SrGraph;

pub use model::{Model, ModelConfig, Prediction};
pub use registry::{BridgeEdge, EdgeRegistry, EdgeType, NodeType, SceneEdge, WeightSource};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_STEPS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Sizes fixing every parameter shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KsgnConfig {
    pub d_h: usize,
    pub steps: usize,
    /// Width of entity and predicate input features.
    pub scene_in: usize,
    /// Width of knowledge node embeddings.
    pub knowledge_in: usize,
    pub n_objects: usize,
    pub n_predicates: usize,
}

/// Per-node-type values; `sp` entries are `None` for scenes without
/// relation instances.
pub type PerType<T> = [Option<T>; 4];

fn linear(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var) -> Result<Var, NumericError> {
    let w = tape.param(store, &format!("{prefix}.weight"))?;
    let b = tape.param(store, &format!("{prefix}.bias"))?;
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

fn mlp2(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var) -> Result<Var, NumericError> {
    let h = linear(tape, store, &format!("{prefix}.l1"), x)?;
    let h = tape.relu(h);
    linear(tape, store, &format!("{prefix}.l2"), h)
}

fn init_linear<R: Rng>(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
    store.init_glorot(&format!("{prefix}.weight"), fan_in, fan_out, rng);
    store.init_zeros(&format!("{prefix}.bias"), &[fan_out]);
}

fn init_mlp2<R: Rng>(store: &mut ParamStore, prefix: &str, fan_in: usize, hidden: usize, out: usize, rng: &mut R) {
    init_linear(store, &format!("{prefix}.l1"), fan_in, hidden, rng);
    init_linear(store, &format!("{prefix}.l2"), hidden, out, rng);
}

const GRU_GATES: [&str; 6] = ["w_z", "u_z", "w_r", "u_r", "w_h", "u_h"];

fn gru_name(t: NodeType, gate: &str) -> String {
    format!("ksgn.gru.{}.{gate}", t.name())
}

impl KsgnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("d_h", self.d_h),
            ("steps", self.steps),
            ("scene input width", self.scene_in),
            ("knowledge input width", self.knowledge_in),
            ("object count", self.n_objects),
            ("predicate count", self.n_predicates),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn input_width(&self, t: NodeType) -> usize {
        if t.is_scene() {
            self.scene_in
        } else {
            self.knowledge_in
        }
    }

    /// Glorot weights and zero biases for every parameter, drawn in a fixed
    /// order from `rng`.
    pub fn init<R: Rng>(&self, registry: &EdgeRegistry, store: &mut ParamStore, rng: &mut R) {
        let d = self.d_h;
        for t in NodeType::ALL {
            init_linear(store, &format!("ksgn.entry.{}", t.name()), self.input_width(t), d, rng);
        }
        init_mlp2(store, "ksgn.send", d, d, d, rng);
        for t in NodeType::ALL {
            let width = registry.incoming(t).len() * d;
            init_mlp2(store, &format!("ksgn.receive.{}", t.name()), width, d, d, rng);
        }
        for t in NodeType::ALL {
            for g in GRU_GATES {
                store.init_glorot(&gru_name(t, g), d, d, rng);
            }
        }
        for t in NodeType::ALL {
            store.init_glorot(&format!("ksgn.bridge.{}", t.name()), d, d, rng);
        }
        init_mlp2(store, "ksgn.cls.object", d, d, self.n_objects, rng);
        init_mlp2(store, "ksgn.cls.predicate", d, d, self.n_predicates, rng);
    }
}

/// Bridge matrices on a tape: `se_ce` is `[n_se, n_objects]`, `sp_cp` is
/// `[n_sp, n_predicates]`, each row a softmax.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bridges {
    pub se_ce: Var,
    pub sp_cp: Option<Var>,
}

/// Values of the bridge matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeState {
    pub se_ce: Tensor,
    pub sp_cp: Option<Tensor>,
}

impl BridgeState {
    pub fn read(tape: &Tape, b: &Bridges) -> Self {
        BridgeState {
            se_ce: tape.value(b.se_ce).clone(),
            sp_cp: b.sp_cp.map(|v| tape.value(v).clone()),
        }
    }

    /// Largest deviation of any row sum from 1, or `None` if an entry is
    /// negative or not finite.
    pub fn max_row_error(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for m in std::iter::once(&self.se_ce).chain(self.sp_cp.as_ref()) {
            if m.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return None;
            }
            for i in 0..m.rows() {
                worst = worst.max((m.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
        Some(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphState {
    pub x: PerType<Var>,
    pub bridges: Bridges,
    pub step: usize,
}

/// Row counts per node type.
pub fn node_counts(tape: &Tape, x: &PerType<Var>) -> [usize; 4] {
    x.map(|v| v.map(|v| tape.value(v).rows()).unwrap_or(0))
}

/// Per-type entry projections to width `d_h`.
pub fn project(tape: &mut Tape, store: &ParamStore, features: &NodeFeatures) -> Result<PerType<Var>, NumericError> {
    let inputs = [Some(features.se), features.sp, Some(features.ce), Some(features.cp)];
    let mut out = [None; 4];
    for t in NodeType::ALL {
        if let Some(x) = inputs[t.index()] {
            out[t.index()] = Some(linear(tape, store, &format!("ksgn.entry.{}", t.name()), x)?);
        }
    }
    Ok(out)
}

/// Outgoing messages: the same two-layer MLP for all node types.
pub fn send(tape: &mut Tape, store: &ParamStore, x: &PerType<Var>) -> Result<PerType<Var>, NumericError> {
    let mut out = [None; 4];
    for (o, xi) in out.iter_mut().zip(x) {
        if let Some(v) = xi {
            *o = Some(mlp2(tape, store, "ksgn.send", *v)?);
        }
    }
    Ok(out)
}

/// `softmax((x_se P_se)(x_ce P_ce)ᵀ)` per row, and likewise for predicates.
pub fn update_bridges(tape: &mut Tape, store: &ParamStore, x: &PerType<Var>) -> Result<Bridges, NumericError> {
    let mut pair = |a: Var, an: NodeType, b: Var, bn: NodeType| -> Result<Var, NumericError> {
        let pa = tape.param(store, &format!("ksgn.bridge.{}", an.name()))?;
        let pb = tape.param(store, &format!("ksgn.bridge.{}", bn.name()))?;
        let qa = tape.matmul(a, pa)?;
        let qb = tape.matmul(b, pb)?;
        let qbt = tape.transpose(qb);
        let s = tape.matmul(qa, qbt)?;
        Ok(tape.softmax_rows(s))
    };
    let se = x[0].ok_or(NumericError::EmptyInput("entity features"))?;
    let ce = x[2].ok_or(NumericError::EmptyInput("object embeddings"))?;
    let cp = x[3].ok_or(NumericError::EmptyInput("predicate embeddings"))?;
    let se_ce = pair(se, NodeType::Se, ce, NodeType::Ce)?;
    let sp_cp = match x[1] {
        Some(sp) => Some(pair(sp, NodeType::Sp, cp, NodeType::Cp)?),
        None => None,
    };
    Ok(Bridges { se_ce, sp_cp })
}

/// Constant incoming weight matrices `B[j][i] = a_ij` for the scene and
/// knowledge edge types, shaped `[n_target, n_source]`. Bridge entries are
/// `None` and filled from [`Bridges`] each step.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedWeights {
    pub incoming: Vec<Option<Tensor>>,
}

/// Knowledge edge matrices for one knowledge graph; reused across scenes.
pub fn knowledge_weights(registry: &EdgeRegistry, kg: &KnowledgeGraph) -> Vec<Option<Tensor>> {
    registry
        .edges()
        .iter()
        .map(|e| match e.weights {
            // `a_ij = M[i][j]` read forward, so the incoming matrix is `Mᵀ`
            WeightSource::Knowledge { kind, transposed } => {
                let m = &kg.matrix(kind).weights;
                Some(if transposed { m.clone() } else { m.transpose() })
            }
            _ => None,
        })
        .collect()
}

/// Adds the scene edge matrices for `graph` to knowledge weights.
pub fn fixed_weights(registry: &EdgeRegistry, knowledge: &[Option<Tensor>], graph: &SrGraph) -> FixedWeights {
    let (n_se, n_sp) = (graph.n_segments, graph.n_sp());
    let incoming = registry
        .edges()
        .iter()
        .zip(knowledge)
        .map(|(e, k)| match e.weights {
            WeightSource::Scene(_) if n_sp == 0 => None,
            WeightSource::Scene(edge) => {
                let to_pred = matches!(edge, SceneEdge::SubjectToPredicate | SceneEdge::ObjectToPredicate);
                let mut t = if to_pred { Tensor::zeros(&[n_sp, n_se]) } else { Tensor::zeros(&[n_se, n_sp]) };
                for (k, &(s, o)) in graph.instances.iter().enumerate() {
                    let seg = match edge {
                        SceneEdge::SubjectToPredicate | SceneEdge::PredicateToSubject => s,
                        _ => o,
                    };
                    if to_pred {
                        t.set(k, seg, 1.0);
                    } else {
                        t.set(seg, k, 1.0);
                    }
                }
                Some(t)
            }
            _ => k.clone(),
        })
        .collect();
    FixedWeights { incoming }
}

/// Incoming weight matrices on `tape` for every edge type this step.
pub fn step_weights(registry: &EdgeRegistry, fixed: &[Option<Var>], bridges: &Bridges, tape: &mut Tape) -> Vec<Option<Var>> {
    registry
        .edges()
        .iter()
        .zip(fixed)
        .map(|(e, f)| match e.weights {
            WeightSource::Bridge(BridgeEdge::SeToCe) => Some(tape.transpose(bridges.se_ce)),
            WeightSource::Bridge(BridgeEdge::CeToSe) => Some(bridges.se_ce),
            WeightSource::Bridge(BridgeEdge::SpToCp) => bridges.sp_cp.map(|b| tape.transpose(b)),
            WeightSource::Bridge(BridgeEdge::CpToSp) => bridges.sp_cp,
            _ => *f,
        })
        .collect()
}

/// Per-edge-type sums `Σ_i a_ij m_i` for every edge ending at `target`, in
/// registry order. Missing sources or weights contribute zeros.
pub fn incoming_sums(
    tape: &mut Tape,
    registry: &EdgeRegistry,
    weights: &[Option<Var>],
    messages: &PerType<Var>,
    target: NodeType,
    n_target: usize,
    d_h: usize,
) -> Result<Vec<(usize, Var)>, NumericError> {
    let mut parts = Vec::new();
    for k in registry.incoming(target) {
        let src = registry.edges()[k].source;
        let sum = match (weights[k], messages[src.index()]) {
            (Some(w), Some(m)) => tape.matmul(w, m)?,
            _ => tape.constant(Tensor::zeros(&[n_target, d_h])),
        };
        parts.push((k, sum));
    }
    Ok(parts)
}

/// Applies `target`'s receive head to the concatenated per-edge-type sums.
pub fn receive(tape: &mut Tape, store: &ParamStore, target: NodeType, sums: &[(usize, Var)]) -> Result<Var, NumericError> {
    let parts: Vec<Var> = sums.iter().map(|&(_, v)| v).collect();
    let cat = tape.concat(&parts, 1)?;
    mlp2(tape, store, &format!("ksgn.receive.{}", target.name()), cat)
}

/// Gated update `x' = (1 − z)⊙x + z⊙h` with
/// `z = σ(m W_z + x U_z)`, `r = σ(m W_r + x U_r)`, `h = tanh(m W_h + (r⊙x) U_h)`.
pub fn gru_update(tape: &mut Tape, store: &ParamStore, t: NodeType, x: Var, m: Var) -> Result<Var, NumericError> {
    let mut p = |g: &str| tape.param(store, &gru_name(t, g));
    let (wz, uz, wr, ur, wh, uh) = (p("w_z")?, p("u_z")?, p("w_r")?, p("u_r")?, p("w_h")?, p("u_h")?);
    let gate = |tape: &mut Tape, w: Var, u: Var, xin: Var| -> Result<Var, NumericError> {
        let a = tape.matmul(m, w)?;
        let b = tape.matmul(xin, u)?;
        tape.add(a, b)
    };
    let z = gate(tape, wz, uz, x)?;
    let z = tape.sigmoid(z);
    let r = gate(tape, wr, ur, x)?;
    let r = tape.sigmoid(r);
    let rx = tape.mul(r, x)?;
    let h = gate(tape, wh, uh, rx)?;
    let h = tape.tanh(h);
    let ones = tape.constant(Tensor::filled(tape.value(z).shape(), 1.0));
    let keep = tape.sub(ones, z)?;
    let a = tape.mul(keep, x)?;
    let b = tape.mul(z, h)?;
    tape.add(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Logits {
    /// `[n_se, n_objects]`
    pub object: Var,
    /// `[n_sp, n_predicates]`; `None` without relation instances.
    pub predicate: Option<Var>,
}

/// Values recorded during one message-passing step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub bridges: BridgeState,
    /// `(edge type index, per-target sums)` for every edge type.
    pub sums: Vec<(usize, Tensor)>,
}

/// Runs `steps` rounds of bridge refresh, send, receive and gated update,
/// then classifies entity and predicate nodes. When `trace` is given, the
/// bridges and per-edge-type sums of each step are appended to it.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    tape: &mut Tape,
    store: &ParamStore,
    config: &KsgnConfig,
    registry: &EdgeRegistry,
    features: &NodeFeatures,
    fixed: &FixedWeights,
    mut trace: Option<&mut Vec<StepTrace>>,
) -> Result<Logits, NumericError> {
    let x = project(tape, store, features)?;
    let fixed_vars: Vec<Option<Var>> = fixed.incoming.iter().map(|t| t.clone().map(|t| tape.constant(t))).collect();
    let bridges = update_bridges(tape, store, &x)?;
    let mut state = GraphState { x, bridges, step: 0 };
    for step in 0..config.steps {
        if step > 0 {
            state.bridges = update_bridges(tape, store, &state.x)?;
        }
        let counts = node_counts(tape, &state.x);
        let messages = send(tape, store, &state.x)?;
        let weights = step_weights(registry, &fixed_vars, &state.bridges, tape);
        let mut next = state.x;
        let mut recorded = Vec::new();
        for t in NodeType::ALL {
            let Some(xt) = state.x[t.index()] else { continue };
            let sums = incoming_sums(tape, registry, &weights, &messages, t, counts[t.index()], config.d_h)?;
            if trace.is_some() {
                recorded.extend(sums.iter().map(|&(k, v)| (k, tape.value(v).clone())));
            }
            let m = receive(tape, store, t, &sums)?;
            next[t.index()] = Some(gru_update(tape, store, t, xt, m)?);
        }
        if let Some(tr) = trace.as_deref_mut() {
            recorded.sort_by_key(|&(k, _)| k);
            tr.push(StepTrace { bridges: BridgeState::read(tape, &state.bridges), sums: recorded });
        }
        state.x = next;
        state.step = step + 1;
    }
    let se = state.x[0].expect("entity features");
    let object = mlp2(tape, store, "ksgn.cls.object", se)?;
    let predicate = match state.x[1] {
        Some(sp) => Some(mlp2(tape, store, "ksgn.cls.predicate", sp)?),
        None => None,
    };
    Ok(Logits { object, predicate })
}
