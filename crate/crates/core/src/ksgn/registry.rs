use serde::{Deserialize, Serialize};

use crate::knowledge::{ClassKind, MatrixKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Se,
    Sp,
    Ce,
    Cp,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [NodeType::Se, NodeType::Sp, NodeType::Ce, NodeType::Cp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Se => "se",
            NodeType::Sp => "sp",
            NodeType::Ce => "ce",
            NodeType::Cp => "cp",
        }
    }

    pub fn is_scene(self) -> bool {
        matches!(self, NodeType::Se | NodeType::Sp)
    }

    /// Knowledge node type holding classes of `kind`.
    pub fn knowledge(kind: ClassKind) -> NodeType {
        match kind {
            ClassKind::Object => NodeType::Ce,
            ClassKind::Predicate => NodeType::Cp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneEdge {
    SubjectToPredicate,
    PredicateToSubject,
    ObjectToPredicate,
    PredicateToObject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BridgeEdge {
    SeToCe,
    CeToSe,
    SpToCp,
    CpToSp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSource {
    /// Constant weight 1 on scene-graph topology.
    Scene(SceneEdge),
    /// A knowledge matrix, read source-to-target or transposed.
    Knowledge { kind: MatrixKind, transposed: bool },
    Bridge(BridgeEdge),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeType {
    pub name: String,
    pub source: NodeType,
    pub target: NodeType,
    pub weights: WeightSource,
}

/// Ordered list of edge types. Receive heads concatenate per-edge-type sums
/// in this order, so it must not change for a trained model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeRegistry {
    edges: Vec<EdgeType>,
}

impl Default for EdgeRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl EdgeRegistry {
    /// 4 scene edge types, 18 knowledge edge types and 4 bridge edge types.
    pub fn standard() -> Self {
        use NodeType::*;
        let mut edges = Vec::with_capacity(26);
        let mut push = |name: String, source, target, weights| edges.push(EdgeType { name, source, target, weights });
        for (name, s, t, e) in [
            ("scene.subject", Se, Sp, SceneEdge::SubjectToPredicate),
            ("scene.subject_rev", Sp, Se, SceneEdge::PredicateToSubject),
            ("scene.object", Se, Sp, SceneEdge::ObjectToPredicate),
            ("scene.object_rev", Sp, Se, SceneEdge::PredicateToObject),
        ] {
            push(name.into(), s, t, WeightSource::Scene(e));
        }
        for kind in MatrixKind::ALL {
            let s = NodeType::knowledge(kind.source());
            let t = NodeType::knowledge(kind.target());
            push(format!("kg.{}", kind.name()), s, t, WeightSource::Knowledge { kind, transposed: false });
            push(format!("kg.{}_rev", kind.name()), t, s, WeightSource::Knowledge { kind, transposed: true });
        }
        for (name, s, t, e) in [
            ("bridge.se_ce", Se, Ce, BridgeEdge::SeToCe),
            ("bridge.ce_se", Ce, Se, BridgeEdge::CeToSe),
            ("bridge.sp_cp", Sp, Cp, BridgeEdge::SpToCp),
            ("bridge.cp_sp", Cp, Sp, BridgeEdge::CpToSp),
        ] {
            push(name.into(), s, t, WeightSource::Bridge(e));
        }
        EdgeRegistry { edges }
    }

    pub fn edges(&self) -> &[EdgeType] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Indices of edge types ending at `target`, in registry order.
    pub fn incoming(&self, target: NodeType) -> Vec<usize> {
        (0..self.edges.len()).filter(|&k| self.edges[k].target == target).collect()
    }
}
