use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Aabb, Point, SceneError, SceneSample, Segment, Triplet};
use crate::knowledge::Vocab;

/// Where an object class may be put.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Floor,
    /// On top of a floor object whose class is a support.
    Stacked,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectClass {
    pub name: String,
    /// Nominal box extents in meters.
    pub size: [f64; 3],
    pub placement: Placement,
    pub support: bool,
}

/// Parameters of the procedural scene generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_scenes: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    /// Side of the square floor area objects are placed in.
    pub room_size: f64,
    /// Relative per-axis size perturbation.
    pub size_jitter: f64,
    pub points_per_m2: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Box distance below which a pair is `near` (and size-compared).
    pub near_distance: f64,
    pub volume_ratio: f64,
    pub vocab: Vocab,
    /// One entry per vocabulary object, in vocabulary order.
    pub classes: Vec<ObjectClass>,
}

impl SynthSpec {
    pub fn new(num_scenes: usize) -> Self {
        let class = |name: &str, size: [f64; 3], placement, support| ObjectClass {
            name: name.to_string(),
            size,
            placement,
            support,
        };
        use Placement::*;
        SynthSpec {
            num_scenes,
            min_segments: 3,
            max_segments: 8,
            room_size: 2.6,
            size_jitter: 0.1,
            points_per_m2: 150.0,
            min_points: 24,
            max_points: 256,
            near_distance: 0.4,
            volume_ratio: 1.5,
            vocab: Vocab::synthetic(),
            classes: vec![
                class("table", [1.2, 0.8, 0.75], Floor, true),
                class("chair", [0.5, 0.5, 0.9], Floor, false),
                class("sofa", [1.8, 0.85, 0.8], Floor, false),
                class("shelf", [0.8, 0.35, 1.8], Floor, true),
                class("side table", [0.5, 0.5, 0.55], Floor, true),
                class("cup", [0.08, 0.08, 0.1], Stacked, false),
                class("book", [0.22, 0.16, 0.04], Stacked, false),
                class("lamp", [0.2, 0.2, 0.45], Stacked, false),
            ],
        }
    }

    fn validate(&self) -> Result<RulePredicates, SceneError> {
        let bad = |m: String| Err(SceneError::Config(m));
        if self.min_segments < 2 || self.max_segments < self.min_segments {
            return bad(format!(
                "segment range {}..={} invalid; need 2 <= min <= max",
                self.min_segments, self.max_segments
            ));
        }
        if !(self.room_size > 0.0) || !(0.0..1.0).contains(&self.size_jitter) {
            return bad("room_size must be positive and size_jitter in [0, 1)".into());
        }
        if self.min_points < 8 || self.max_points < self.min_points {
            return bad("point counts need 8 <= min_points <= max_points".into());
        }
        if self.classes.len() != self.vocab.n_objects()
            || self.classes.iter().zip(self.vocab.objects()).any(|(c, n)| &c.name != n)
        {
            return bad("object classes must match the vocabulary objects in order".into());
        }
        if self.classes.iter().any(|c| c.size.iter().any(|s| !(*s > 0.0))) {
            return bad("object sizes must be positive".into());
        }
        if !self.classes.iter().any(|c| c.placement == Placement::Floor) {
            return bad("at least one floor-placed class is required".into());
        }
        let has_stacked = self.classes.iter().any(|c| c.placement == Placement::Stacked);
        if has_stacked && !self.classes.iter().any(|c| c.placement == Placement::Floor && c.support) {
            return bad("stacked classes need a floor class that supports them".into());
        }
        let p = |name: &str| {
            self.vocab
                .predicate_index(name)
                .ok_or_else(|| SceneError::Config(format!("vocabulary lacks predicate `{name}`")))
        };
        Ok(RulePredicates {
            on: p("on")?,
            under: p("under")?,
            near: p("near")?,
            bigger: p("bigger_than")?,
            smaller: p("smaller_than")?,
        })
    }
}

struct RulePredicates {
    on: usize,
    under: usize,
    near: usize,
    bigger: usize,
    smaller: usize,
}

struct Placed {
    class: usize,
    bbox: Aabb,
}

/// Generates `spec.num_scenes` scenes. Scene `k` draws from its own stream of
/// a generator seeded with `seed`, so a longer corpus extends a shorter one.
pub fn generate_synthetic_corpus(seed: u64, spec: &SynthSpec) -> Result<Vec<SceneSample>, SceneError> {
    let rules = spec.validate()?;
    (0..spec.num_scenes)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            generate_scene(&mut rng, spec, &rules)
        })
        .collect()
}

fn jittered(rng: &mut ChaCha8Rng, size: [f64; 3], jitter: f64) -> [f64; 3] {
    size.map(|s| {
        if jitter > 0.0 {
            s * (1.0 + rng.random_range(-jitter..jitter))
        } else {
            s
        }
    })
}

fn generate_scene(rng: &mut ChaCha8Rng, spec: &SynthSpec, rules: &RulePredicates) -> Result<SceneSample, SceneError> {
    let floor_classes: Vec<usize> = (0..spec.classes.len())
        .filter(|&c| spec.classes[c].placement == Placement::Floor)
        .collect();
    let stacked_classes: Vec<usize> = (0..spec.classes.len())
        .filter(|&c| spec.classes[c].placement == Placement::Stacked)
        .collect();

    let target = rng.random_range(spec.min_segments..=spec.max_segments);
    let n_stacked = if stacked_classes.is_empty() {
        0
    } else {
        rng.random_range(0..=target / 2)
    };
    let n_floor = (target - n_stacked).max(2);

    let mut placed: Vec<Placed> = Vec::new();
    while placed.len() < 2 {
        placed.clear();
        place_floor_objects(rng, spec, &floor_classes, n_floor, &mut placed);
    }

    let supports: Vec<usize> = (0..placed.len())
        .filter(|&i| spec.classes[placed[i].class].support)
        .collect();
    for _ in 0..n_stacked {
        if supports.is_empty() || placed.len() >= spec.max_segments {
            break;
        }
        let class = stacked_classes[rng.random_range(0..stacked_classes.len())];
        let size = jittered(rng, spec.classes[class].size, spec.size_jitter);
        for _attempt in 0..64 {
            let s = supports[rng.random_range(0..supports.len())];
            let top = placed[s].bbox;
            let room_x = top.max[0] - top.min[0] - size[0];
            let room_y = top.max[1] - top.min[1] - size[1];
            if room_x <= 0.0 || room_y <= 0.0 {
                continue;
            }
            let x = top.min[0] + rng.random_range(0.0..room_x);
            let y = top.min[1] + rng.random_range(0.0..room_y);
            let z = top.max[2];
            let bbox = Aabb { min: [x, y, z], max: [x + size[0], y + size[1], z + size[2]] };
            let clear = placed
                .iter()
                .enumerate()
                .all(|(i, p)| i == s || p.bbox.distance(&bbox) >= 0.02);
            if clear {
                placed.push(Placed { class, bbox });
                break;
            }
        }
    }

    let triplets = annotate(&placed, spec, rules);
    let segments = placed
        .iter()
        .enumerate()
        .map(|(i, p)| Segment {
            id: i as u32,
            points: sample_box_surface(rng, &p.bbox, spec),
            gt_class: Some(p.class),
        })
        .collect();
    SceneSample::new(spec.vocab.name.clone(), segments, triplets)
}

fn place_floor_objects(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    floor_classes: &[usize],
    count: usize,
    placed: &mut Vec<Placed>,
) {
    for _ in 0..count {
        let class = floor_classes[rng.random_range(0..floor_classes.len())];
        let size = jittered(rng, spec.classes[class].size, spec.size_jitter);
        for _attempt in 0..64 {
            let x = rng.random_range(0.0..(spec.room_size - size[0]).max(1e-6));
            let y = rng.random_range(0.0..(spec.room_size - size[1]).max(1e-6));
            let bbox = Aabb { min: [x, y, 0.0], max: [x + size[0], y + size[1], size[2]] };
            if placed.iter().all(|p| p.bbox.distance(&bbox) >= 0.05) {
                placed.push(Placed { class, bbox });
                break;
            }
        }
    }
}

/// `a` rests on `b`: its bottom face lies on `b`'s top face with overlapping
/// footprints.
fn rests_on(a: &Aabb, b: &Aabb) -> bool {
    let overlap = |axis: usize| a.min[axis] < b.max[axis] && b.min[axis] < a.max[axis];
    (a.min[2] - b.max[2]).abs() < 1e-9 && overlap(0) && overlap(1)
}

fn annotate(placed: &[Placed], spec: &SynthSpec, rules: &RulePredicates) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (i, a) in placed.iter().enumerate() {
        for (j, b) in placed.iter().enumerate() {
            if i == j {
                continue;
            }
            let t = |p| Triplet { subject: i as u32, predicate: p, object: j as u32 };
            if rests_on(&a.bbox, &b.bbox) {
                out.push(t(rules.on));
            }
            if rests_on(&b.bbox, &a.bbox) {
                out.push(t(rules.under));
            }
            // size comparisons only for nearby pairs
            if a.bbox.distance(&b.bbox) < spec.near_distance {
                out.push(t(rules.near));
                let (va, vb) = (a.bbox.volume(), b.bbox.volume());
                if va > spec.volume_ratio * vb {
                    out.push(t(rules.bigger));
                }
                if vb > spec.volume_ratio * va {
                    out.push(t(rules.smaller));
                }
            }
        }
    }
    out.sort();
    out
}

/// Box corners followed by points drawn uniformly over the box surface.
fn sample_box_surface(rng: &mut ChaCha8Rng, b: &Aabb, spec: &SynthSpec) -> Vec<Point> {
    let e = b.extents();
    let faces = [e[1] * e[2], e[1] * e[2], e[0] * e[2], e[0] * e[2], e[0] * e[1], e[0] * e[1]];
    let area: f64 = faces.iter().sum();
    let n = ((area * spec.points_per_m2).round() as usize).clamp(spec.min_points, spec.max_points);
    let mut pts = Vec::with_capacity(n);
    for corner in 0..8 {
        pts.push([0, 1, 2].map(|a| if corner >> a & 1 == 1 { b.max[a] } else { b.min[a] }));
    }
    while pts.len() < n {
        let mut r = rng.random_range(0.0..area);
        let mut face = 0;
        while face < 5 && r >= faces[face] {
            r -= faces[face];
            face += 1;
        }
        let fixed = face / 2;
        let mut p = [0.0; 3];
        for (a, v) in p.iter_mut().enumerate() {
            *v = if a == fixed {
                if face % 2 == 0 { b.min[a] } else { b.max[a] }
            } else {
                b.min[a] + rng.random_range(0.0..=1.0) * e[a]
            };
        }
        pts.push(p);
    }
    pts
}
