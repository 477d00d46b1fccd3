use super::{Aabb, SceneError, SceneSample};

/// Default relation distance threshold in meters.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Scene representation graph: one entity node per segment and one
/// predicate node per ordered segment pair within the distance threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct SrGraph {
    pub n_segments: usize,
    /// Ordered `(subject, object)` segment indices, sorted lexicographically.
    /// Predicate node `k` corresponds to `instances[k]`.
    pub instances: Vec<(usize, usize)>,
    pub threshold: f64,
}

impl SrGraph {
    pub fn n_sp(&self) -> usize {
        self.instances.len()
    }

    /// `(entity, predicate node)` pairs where the entity is the subject.
    pub fn subject_edges(&self) -> Vec<(usize, usize)> {
        self.instances.iter().enumerate().map(|(k, &(s, _))| (s, k)).collect()
    }

    /// `(entity, predicate node)` pairs where the entity is the object.
    pub fn object_edges(&self) -> Vec<(usize, usize)> {
        self.instances.iter().enumerate().map(|(k, &(_, o))| (o, k)).collect()
    }

    pub fn instance_index(&self, subject: usize, object: usize) -> Option<usize> {
        self.instances.binary_search(&(subject, object)).ok()
    }
}

pub fn build_sr_graph(scene: &SceneSample, threshold: f64) -> Result<SrGraph, SceneError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(SceneError::Config(format!("distance threshold must be positive, got {threshold}")));
    }
    let n = scene.segments.len();
    if n < 2 {
        return Err(SceneError::DegenerateScene(format!("{n} segment(s); need at least 2")));
    }
    let boxes = scene
        .segments
        .iter()
        .map(|s| Aabb::of_points(&s.points).ok_or(SceneError::EmptySegment(s.id)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut instances = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && boxes[i].distance(&boxes[j]) <= threshold {
                instances.push((i, j));
            }
        }
    }
    Ok(SrGraph { n_segments: n, instances, threshold })
}
