use super::{Point, SceneError, Segment};

pub const CONTEXT_DIM: usize = 11;

/// Geometric descriptor of a point cluster: centroid, per-axis population
/// standard deviation, bounding-box extents, longest extent and box volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContextVector {
    pub centroid: [f64; 3],
    pub std: [f64; 3],
    pub bbox: [f64; 3],
    pub max_len: f64,
    pub volume: f64,
}

impl ContextVector {
    pub fn to_array(&self) -> [f64; CONTEXT_DIM] {
        let mut out = [0.0; CONTEXT_DIM];
        out[0..3].copy_from_slice(&self.centroid);
        out[3..6].copy_from_slice(&self.std);
        out[6..9].copy_from_slice(&self.bbox);
        out[9] = self.max_len;
        out[10] = self.volume;
        out
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn of_points(points: &[Point]) -> Option<Aabb> {
        let first = *points.first()?;
        let mut b = Aabb { min: first, max: first };
        for p in &points[1..] {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn extents(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: [0, 1, 2].map(|a| self.min[a].min(other.min[a])),
            max: [0, 1, 2].map(|a| self.max[a].max(other.max[a])),
        }
    }

    /// Minimum Euclidean distance between the two boxes; 0 when they touch
    /// or overlap.
    pub fn distance(&self, other: &Aabb) -> f64 {
        let mut sq = 0.0;
        for a in 0..3 {
            let gap = (self.min[a] - other.max[a]).max(other.min[a] - self.max[a]).max(0.0);
            sq += gap * gap;
        }
        sq.sqrt()
    }
}

pub fn contextual_vector(segment: &Segment) -> Result<ContextVector, SceneError> {
    let pts = &segment.points;
    let bbox = Aabb::of_points(pts).ok_or(SceneError::EmptySegment(segment.id))?;
    let n = pts.len() as f64;
    let mut centroid = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let mut var = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            let d = p[a] - centroid[a];
            var[a] += d * d;
        }
    }
    let std = var.map(|v| (v / n).sqrt());
    let ext = bbox.extents();
    Ok(ContextVector {
        centroid,
        std,
        bbox: ext,
        max_len: ext[0].max(ext[1]).max(ext[2]),
        volume: ext[0] * ext[1] * ext[2],
    })
}

/// The segment formed by all points of `a` followed by all points of `b`.
pub fn union_segment(a: &Segment, b: &Segment) -> Result<Segment, SceneError> {
    a.validate()?;
    b.validate()?;
    let mut points = Vec::with_capacity(a.points.len() + b.points.len());
    points.extend_from_slice(&a.points);
    points.extend_from_slice(&b.points);
    Ok(Segment { id: a.id, points, gt_class: None })
}
