//! Point-cloud encoding and construction of the four node-feature banks.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::knowledge::KnowledgeGraph;
use crate::numeric::{NumericError, ParamStore, Tape, Tensor, Var};
use crate::scene::{contextual_vector, union_segment, Point, SceneError, SceneSample, SrGraph, CONTEXT_DIM};

pub const DEFAULT_N_POINTS: usize = 256;

/// Shared per-point MLP widths: input 3, two hidden layers, output `d_p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointNetConfig {
    pub widths: [usize; 4],
}

impl Default for PointNetConfig {
    fn default() -> Self {
        PointNetConfig { widths: [3, 32, 64, 64] }
    }
}

impl PointNetConfig {
    pub fn with_output(d_p: usize) -> Self {
        PointNetConfig { widths: [3, 32, 64, d_p] }
    }

    pub fn output_dim(&self) -> usize {
        self.widths[3]
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.widths[0] != 3 {
            return Err(format!("point encoder input width must be 3, got {}", self.widths[0]));
        }
        if self.widths.contains(&0) {
            return Err("point encoder widths must be positive".into());
        }
        Ok(())
    }

    fn weight(layer: usize) -> String {
        format!("pointnet.l{layer}.weight")
    }

    fn bias(layer: usize) -> String {
        format!("pointnet.l{layer}.bias")
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in 0..3 {
            store.init_glorot(&Self::weight(l), self.widths[l], self.widths[l + 1], rng);
            store.init_zeros(&Self::bias(l), &[self.widths[l + 1]]);
        }
    }

    /// Encodes `points: [groups * group, 3]` as consecutive point sets of
    /// `group` rows each: three affine + relu layers applied per point, then a
    /// column-wise max over each set. Returns `[groups, d_p]`.
    pub fn encode_batch(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        points: Var,
        group: usize,
    ) -> Result<Var, NumericError> {
        let mut h = points;
        for l in 0..3 {
            let w = tape.param(store, &Self::weight(l))?;
            let b = tape.param(store, &Self::bias(l))?;
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = tape.relu(z);
        }
        tape.max_pool_groups(h, group)
    }
}

/// Draws `n` points: without replacement when enough are available, with
/// replacement otherwise.
pub fn resample<R: Rng>(points: &[Point], n: usize, rng: &mut R) -> Vec<Point> {
    assert!(!points.is_empty() && n > 0, "resample needs points and a positive count");
    if points.len() >= n {
        index::sample(rng, points.len(), n).into_iter().map(|i| points[i]).collect()
    } else {
        (0..n).map(|_| points[rng.random_range(0..points.len())]).collect()
    }
}

/// Subtracts the mean point. Coordinates are summed in sorted order so the
/// result does not depend on point order.
pub fn centered(points: &[Point]) -> Vec<Point> {
    let n = points.len() as f64;
    let c = [0, 1, 2].map(|a| {
        let mut v: Vec<f64> = points.iter().map(|p| p[a]).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / n
    });
    points.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
}

fn points_tensor(sets: &[Vec<Point>]) -> Tensor {
    let rows: usize = sets.iter().map(Vec::len).sum();
    let values = sets.iter().flatten().flat_map(|p| p.iter().copied()).collect();
    Tensor::new(vec![rows, 3], values).expect("point rows")
}

/// Encodes one already-resampled point set after centering it.
pub fn pointnet_encode(points: &[Point], config: &PointNetConfig, store: &ParamStore) -> Result<Vec<f64>, NumericError> {
    if points.is_empty() {
        return Err(NumericError::EmptyInput("pointnet_encode"));
    }
    let mut tape = Tape::new();
    let x = tape.constant(points_tensor(&[centered(points)]));
    let out = config.encode_batch(&mut tape, store, x, points.len())?;
    Ok(tape.value(out).values().to_vec())
}

/// Per-scene inputs that do not depend on parameters: centered resampled
/// point sets and contextual vectors for every entity and predicate node.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedScene {
    pub graph: SrGraph,
    pub n_points: usize,
    /// `[n_se * n_points, 3]`
    pub se_points: Tensor,
    /// `[n_se, 11]`
    pub se_context: Tensor,
    /// `[n_sp * n_points, 3]`, absent when the graph has no predicate nodes.
    pub sp_points: Option<Tensor>,
    pub sp_context: Option<Tensor>,
    pub gt_classes: Vec<Option<usize>>,
}

/// Resamples and centers every node's points. Node `k` (entities first,
/// then predicate nodes in instance order) uses stream `k` of a generator
/// seeded with `seed`.
pub fn prepare_scene(scene: &SceneSample, graph: SrGraph, n_points: usize, seed: u64) -> Result<PreparedScene, SceneError> {
    if n_points == 0 {
        return Err(SceneError::Config("n_points must be at least 1".into()));
    }
    let sample = |points: &[Point], stream: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        centered(&resample(points, n_points, &mut rng))
    };
    let n_se = scene.segments.len();
    let mut se_sets = Vec::with_capacity(n_se);
    let mut se_ctx = Vec::with_capacity(n_se * CONTEXT_DIM);
    for (k, seg) in scene.segments.iter().enumerate() {
        se_ctx.extend(contextual_vector(seg)?.to_array());
        se_sets.push(sample(&seg.points, k));
    }
    let mut sp_sets = Vec::with_capacity(graph.n_sp());
    let mut sp_ctx = Vec::with_capacity(graph.n_sp() * CONTEXT_DIM);
    for (k, &(i, j)) in graph.instances.iter().enumerate() {
        let u = union_segment(&scene.segments[i], &scene.segments[j])?;
        sp_ctx.extend(contextual_vector(&u)?.to_array());
        sp_sets.push(sample(&u.points, n_se + k));
    }
    let n_sp = graph.n_sp();
    Ok(PreparedScene {
        n_points,
        se_points: points_tensor(&se_sets),
        se_context: Tensor::new(vec![n_se, CONTEXT_DIM], se_ctx).expect("context rows"),
        sp_points: (n_sp > 0).then(|| points_tensor(&sp_sets)),
        sp_context: (n_sp > 0).then(|| Tensor::new(vec![n_sp, CONTEXT_DIM], sp_ctx).expect("context rows")),
        gt_classes: scene.gt_classes(),
        graph,
    })
}

/// Input feature banks for the four node types. `sp` is `None` when the
/// scene has no relation instances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeFeatures {
    pub se: Var,
    pub sp: Option<Var>,
    pub ce: Var,
    pub cp: Var,
}

/// Records the node features on `tape`: entity and predicate rows are the
/// point encoding followed by the contextual vector; knowledge rows are the
/// label embeddings.
pub fn build_node_features(
    tape: &mut Tape,
    store: &ParamStore,
    config: &PointNetConfig,
    scene: &PreparedScene,
    kg: &KnowledgeGraph,
) -> Result<NodeFeatures, NumericError> {
    let mut bank = |points: &Tensor, context: &Tensor| -> Result<Var, NumericError> {
        let p = tape.constant(points.clone());
        let enc = config.encode_batch(tape, store, p, scene.n_points)?;
        let ctx = tape.constant(context.clone());
        tape.concat(&[enc, ctx], 1)
    };
    let se = bank(&scene.se_points, &scene.se_context)?;
    let sp = match (&scene.sp_points, &scene.sp_context) {
        (Some(p), Some(c)) => Some(bank(p, c)?),
        _ => None,
    };
    let ce = tape.constant(kg.object_embeddings.clone());
    let cp = tape.constant(kg.predicate_embeddings.clone());
    Ok(NodeFeatures { se, sp, ce, cp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Segment;

    fn store(config: &PointNetConfig, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        config.init(&mut s, &mut ChaCha8Rng::seed_from_u64(seed));
        // non-zero biases so the bias path is exercised
        for l in 0..3 {
            let b = s.get_mut(&PointNetConfig::bias(l)).unwrap();
            for (k, v) in b.values_mut().iter_mut().enumerate() {
                *v = 0.01 * (k as f64 % 5.0) - 0.02;
            }
        }
        s
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn resample_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point> = (0..1000).map(|i| [i as f64, 0.0, 0.0]).collect();
        let s = resample(&pts, 256, &mut rng);
        let mut xs: Vec<i64> = s.iter().map(|p| p[0] as i64).collect();
        xs.sort();
        xs.dedup();
        assert_eq!(xs.len(), 256);

        let few: Vec<Point> = (0..10).map(|i| [i as f64, 1.0, 2.0]).collect();
        let s = resample(&few, 256, &mut rng);
        assert_eq!(s.len(), 256);
        assert!(s.iter().all(|p| few.contains(p)));

        let a = resample(&pts, 64, &mut ChaCha8Rng::seed_from_u64(9));
        let b = resample(&pts, 64, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_is_permutation_invariant() {
        let cfg = PointNetConfig::default();
        let s = store(&cfg, 4);
        let pts = random_points(50, 2);
        let mut rev = pts.clone();
        rev.reverse();
        rev.swap(3, 17);
        assert_eq!(pointnet_encode(&pts, &cfg, &s).unwrap(), pointnet_encode(&rev, &cfg, &s).unwrap());
    }

    #[test]
    fn repeated_point_matches_single_point() {
        let cfg = PointNetConfig::with_output(16);
        let s = store(&cfg, 5);
        let p = [0.3, -0.2, 1.1];
        let encode = |pts: Vec<Point>| {
            let n = pts.len();
            let mut tape = Tape::new();
            let x = tape.constant(points_tensor(&[pts]));
            let out = cfg.encode_batch(&mut tape, &s, x, n).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(encode(vec![p; 40]), encode(vec![p]));
    }

    #[test]
    fn encoding_is_translation_invariant() {
        let cfg = PointNetConfig::default();
        let s = store(&cfg, 6);
        let pts = random_points(64, 3);
        let moved: Vec<Point> = pts.iter().map(|p| [p[0] + 3.5, p[1] - 1.25, p[2] + 0.75]).collect();
        let a = pointnet_encode(&pts, &cfg, &s).unwrap();
        let b = pointnet_encode(&moved, &cfg, &s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let cfg = PointNetConfig { widths: [3, 6, 5, 4] };
        let s = store(&cfg, 8);
        let pts = points_tensor(&[centered(&random_points(12, 4)), centered(&random_points(12, 5))]);
        let readout = Tensor::new(vec![4, 1], vec![0.7, -1.1, 0.4, 0.9]).unwrap();
        let ones = Tensor::filled(&[1, 2], 1.0);
        let report = crate::numeric::grad_check(&s, 1e-6, |tape, st| -> Result<Var, NumericError> {
            let x = tape.constant(pts.clone());
            let enc = cfg.encode_batch(tape, st, x, 12)?;
            let r = tape.constant(readout.clone());
            let y = tape.matmul(enc, r)?;
            let o = tape.constant(ones.clone());
            tape.matmul(o, y)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn prepared_scene_layout() {
        let cube = |id, x: f64| {
            let mut pts = Vec::new();
            for dx in [0.0, 0.4] {
                for y in [0.0, 0.4] {
                    for z in [0.0, 0.4] {
                        pts.push([x + dx, y, z]);
                    }
                }
            }
            Segment::new(id, pts, Some(0)).unwrap()
        };
        let scene = SceneSample::new("v", vec![cube(0, 0.0), cube(1, 0.6), cube(2, 5.0)], vec![]).unwrap();
        let graph = crate::scene::build_sr_graph(&scene, 0.5).unwrap();
        let p = prepare_scene(&scene, graph, 16, 0).unwrap();
        assert_eq!(p.se_points.shape(), &[48, 3]);
        assert_eq!(p.se_context.shape(), &[3, CONTEXT_DIM]);
        assert_eq!(p.sp_points.as_ref().unwrap().shape(), &[32, 3]);
        let u = union_segment(&scene.segments[0], &scene.segments[1]).unwrap();
        assert_eq!(p.sp_context.as_ref().unwrap().row(0), &contextual_vector(&u).unwrap().to_array());

        let far = SceneSample::new("v", vec![cube(0, 0.0), cube(1, 5.0)], vec![]).unwrap();
        let graph = crate::scene::build_sr_graph(&far, 0.5).unwrap();
        let p = prepare_scene(&far, graph, 16, 0).unwrap();
        assert!(p.sp_points.is_none() && p.sp_context.is_none());
    }
}
