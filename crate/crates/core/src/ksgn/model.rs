use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward, fixed_weights, knowledge_weights, EdgeRegistry, KsgnConfig, Logits, ModelError, StepTrace};
use super::{DEFAULT_HIDDEN, DEFAULT_STEPS};
use crate::encoders::{build_node_features, prepare_scene, PointNetConfig, PreparedScene, DEFAULT_N_POINTS};
use crate::knowledge::KnowledgeGraph;
use crate::numeric::{NumericError, ParamStore, Tape, Tensor};
use crate::scene::{build_sr_graph, SceneError, SceneSample, CONTEXT_DIM, DEFAULT_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pointnet: PointNetConfig,
    pub d_h: usize,
    pub steps: usize,
    pub n_points: usize,
    /// Relation distance threshold in meters.
    pub threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            pointnet: PointNetConfig::default(),
            d_h: DEFAULT_HIDDEN,
            steps: DEFAULT_STEPS,
            n_points: DEFAULT_N_POINTS,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Point encoder plus message-passing network over a fixed knowledge graph.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub ksgn: KsgnConfig,
    pub registry: EdgeRegistry,
    pub kg: KnowledgeGraph,
    knowledge: Vec<Option<Tensor>>,
}

/// Parameter-free outputs of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub object_logits: Tensor,
    pub predicate_logits: Option<Tensor>,
}

impl Model {
    pub fn new(config: ModelConfig, kg: KnowledgeGraph) -> Result<Self, ModelError> {
        config.pointnet.validate().map_err(ModelError::Config)?;
        if config.n_points == 0 {
            return Err(ModelError::Config("n_points must be at least 1".into()));
        }
        if !(config.threshold > 0.0 && config.threshold.is_finite()) {
            return Err(ModelError::Config(format!("distance threshold must be positive, got {}", config.threshold)));
        }
        let ksgn = KsgnConfig {
            d_h: config.d_h,
            steps: config.steps,
            scene_in: config.pointnet.output_dim() + CONTEXT_DIM,
            knowledge_in: kg.embedding_dim(),
            n_objects: kg.vocab.n_objects(),
            n_predicates: kg.vocab.n_predicates(),
        };
        ksgn.validate()?;
        let registry = EdgeRegistry::standard();
        let knowledge = knowledge_weights(&registry, &kg);
        Ok(Model { config, ksgn, registry, kg, knowledge })
    }

    /// Fresh parameters; identical seeds give identical stores.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        self.config.pointnet.init(&mut store, &mut rng);
        self.ksgn.init(&self.registry, &mut store, &mut rng);
        store
    }

    /// Checks that `store` holds exactly the parameters of this model.
    pub fn check_params(&self, store: &ParamStore) -> Result<(), ModelError> {
        let reference = self.init_params(0);
        for (name, t) in reference.iter() {
            match store.get(name) {
                None => return Err(ModelError::Config(format!("missing parameter `{name}`"))),
                Some(p) if p.shape() != t.shape() => {
                    return Err(ModelError::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                Some(p) if !p.is_finite() => {
                    return Err(ModelError::Config(format!("parameter `{name}` is not finite")))
                }
                _ => {}
            }
        }
        if let Some(extra) = store.names().find(|n| !reference.contains(n)) {
            return Err(ModelError::Config(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }

    pub fn prepare(&self, scene: &SceneSample, seed: u64) -> Result<PreparedScene, SceneError> {
        let graph = build_sr_graph(scene, self.config.threshold)?;
        prepare_scene(scene, graph, self.config.n_points, seed)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        scene: &PreparedScene,
        trace: Option<&mut Vec<StepTrace>>,
    ) -> Result<Logits, NumericError> {
        let features = build_node_features(tape, store, &self.config.pointnet, scene, &self.kg)?;
        let fixed = fixed_weights(&self.registry, &self.knowledge, &scene.graph);
        forward(tape, store, &self.ksgn, &self.registry, &features, &fixed, trace)
    }

    pub fn predict(&self, store: &ParamStore, scene: &PreparedScene) -> Result<Prediction, NumericError> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, store, scene, None)?;
        Ok(Prediction {
            object_logits: tape.value(logits.object).clone(),
            predicate_logits: logits.predicate.map(|p| tape.value(p).clone()),
        })
    }
}
