/*
Copyright 2026 The isru-teleop Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Collision primitives (spheres, capsules, boxes) with exact distance
//! queries, plus arm-versus-world collision reports.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::kinematics::{ArmModel, JointConfig, KinematicsError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis along the local z axis; total length `2 * half_length` plus caps.
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: Vector3<f64> },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Capsule { radius, half_length } => radius > 0.0 && half_length > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
        }
    }

    /// Radius of a sphere centred on the local origin that encloses the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Capsule { radius, half_length } => radius + half_length,
            Shape::Box { half_extents } => half_extents.norm(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    World,
    Link(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionPrimitive {
    pub shape: Shape,
    /// Pose relative to the attachment frame.
    pub local_pose: Pose,
    pub attachment: Attachment,
}

impl CollisionPrimitive {
    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self {
            shape: Shape::Sphere { radius },
            local_pose: Pose::new(center, Default::default()),
            attachment: Attachment::World,
        }
    }

    pub fn world_box(pose: Pose, half_extents: Vector3<f64>) -> Self {
        Self {
            shape: Shape::Box { half_extents },
            local_pose: pose,
            attachment: Attachment::World,
        }
    }

    pub fn capsule(pose: Pose, radius: f64, half_length: f64) -> Self {
        Self {
            shape: Shape::Capsule { radius, half_length },
            local_pose: pose,
            attachment: Attachment::World,
        }
    }

    /// The same primitive re-expressed in the parent of `frame`.
    pub fn placed_at(&self, frame: &Pose) -> CollisionPrimitive {
        CollisionPrimitive {
            shape: self.shape,
            local_pose: frame.compose(&self.local_pose),
            attachment: self.attachment,
        }
    }

    fn core(&self) -> Core {
        let p = &self.local_pose;
        match self.shape {
            Shape::Sphere { radius } => Core::Point(p.position, radius),
            Shape::Capsule { radius, half_length } => {
                let axis = p.transform_vector(&Vector3::new(0.0, 0.0, half_length));
                Core::Segment(p.position - axis, p.position + axis, radius)
            }
            Shape::Box { half_extents } => Core::Box(*p, half_extents),
        }
    }
}

/// A named world object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub name: String,
    pub primitive: CollisionPrimitive,
}

impl Obstacle {
    pub fn new(name: &str, primitive: CollisionPrimitive) -> Self {
        Self {
            name: name.to_string(),
            primitive,
        }
    }
}

/// Reduced geometry: a point, segment or box swept by a radius.
enum Core {
    Point(Vector3<f64>, f64),
    Segment(Vector3<f64>, Vector3<f64>, f64),
    Box(Pose, Vector3<f64>),
}

/// Signed clearance between two world-placed primitives: surface separation
/// when apart, a non-positive value when overlapping. Box-box overlap is
/// reported as exactly zero.
pub fn clearance(a: &CollisionPrimitive, b: &CollisionPrimitive) -> f64 {
    use Core::*;
    match (a.core(), b.core()) {
        (Point(p, ra), Point(q, rb)) => (p - q).norm() - ra - rb,
        (Point(p, ra), Segment(s0, s1, rb)) | (Segment(s0, s1, rb), Point(p, ra)) => {
            point_segment_distance(&p, &s0, &s1) - ra - rb
        }
        (Segment(a0, a1, ra), Segment(b0, b1, rb)) => {
            segment_segment_distance(&a0, &a1, &b0, &b1) - ra - rb
        }
        (Point(p, r), Box(pose, h)) | (Box(pose, h), Point(p, r)) => {
            point_box_distance(&p, &pose, &h) - r
        }
        (Segment(s0, s1, r), Box(pose, h)) | (Box(pose, h), Segment(s0, s1, r)) => {
            segment_box_distance(&s0, &s1, &pose, &h) - r
        }
        (Box(pa, ha), Box(pb, hb)) => box_box_distance(&pa, &ha, &pb, &hb),
    }
}

pub fn intersects(a: &CollisionPrimitive, b: &CollisionPrimitive) -> bool {
    match (a.shape, b.shape) {
        (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => {
            boxes_overlap(&a.local_pose, &ha, &b.local_pose, &hb)
        }
        _ => clearance(a, b) < 0.0,
    }
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Closest distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    const EPS: f64 = 1e-18;
    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Distance from `p` to an oriented box (zero inside).
pub fn point_box_distance(p: &Vector3<f64>, pose: &Pose, half: &Vector3<f64>) -> f64 {
    let local = pose.orientation.inverse() * (p - pose.position);
    let mut d2 = 0.0;
    for i in 0..3 {
        let excess = local[i].abs() - half[i];
        if excess > 0.0 {
            d2 += excess * excess;
        }
    }
    d2.sqrt()
}

/// Exact segment-to-box distance. The squared distance along the segment is
/// piecewise quadratic with breaks where the segment crosses a slab face;
/// each piece is minimised in closed form.
pub fn segment_box_distance(
    s0: &Vector3<f64>,
    s1: &Vector3<f64>,
    pose: &Pose,
    half: &Vector3<f64>,
) -> f64 {
    let inv = pose.orientation.inverse();
    let a = inv * (s0 - pose.position);
    let d = inv * (s1 - s0);
    let mut breaks = vec![0.0, 1.0];
    for i in 0..3 {
        if d[i].abs() > 1e-300 {
            for face in [-half[i], half[i]] {
                let t = (face - a[i]) / d[i];
                if t > 0.0 && t < 1.0 {
                    breaks.push(t);
                }
            }
        }
    }
    breaks.sort_by(|x, y| x.total_cmp(y));
    let eval = |t: f64| -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let x = a[i] + d[i] * t;
            let excess = x.abs() - half[i];
            if excess > 0.0 {
                d2 += excess * excess;
            }
        }
        d2
    };
    let mut best = eval(0.0).min(eval(1.0));
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        // On this piece each axis is either inside its slab or beyond a fixed
        // face, so d²(t) = Σ (a_i + d_i t - c_i)² over the active axes.
        let (mut qa, mut qb) = (0.0, 0.0);
        for i in 0..3 {
            let x = a[i] + d[i] * mid;
            if x > half[i] {
                qa += d[i] * d[i];
                qb += d[i] * (a[i] - half[i]);
            } else if x < -half[i] {
                qa += d[i] * d[i];
                qb += d[i] * (a[i] + half[i]);
            }
        }
        let t = if qa > 0.0 { (-qb / qa).clamp(lo, hi) } else { mid };
        best = best.min(eval(t)).min(eval(lo)).min(eval(hi));
    }
    best.sqrt()
}

fn box_corners(pose: &Pose, h: &Vector3<f64>) -> [Vector3<f64>; 8] {
    let mut out = [Vector3::zeros(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        *c = pose.transform_point(&Vector3::new(sx * h.x, sy * h.y, sz * h.z));
    }
    out
}

fn box_edges(corners: &[Vector3<f64>; 8]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let mut edges = Vec::with_capacity(12);
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            if i & bit == 0 {
                edges.push((corners[i], corners[i | bit]));
            }
        }
    }
    edges
}

/// Separating-axis overlap test for two oriented boxes.
pub fn boxes_overlap(pa: &Pose, ha: &Vector3<f64>, pb: &Pose, hb: &Vector3<f64>) -> bool {
    let ra = pa.rotation_matrix();
    let rb = pb.rotation_matrix();
    let t = pb.position - pa.position;
    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    for i in 0..3 {
        axes.push(ra.column(i).into_owned());
        axes.push(rb.column(i).into_owned());
    }
    for i in 0..3 {
        for j in 0..3 {
            let c = ra.column(i).cross(&rb.column(j));
            if c.norm_squared() > 1e-18 {
                axes.push(c.normalize());
            }
        }
    }
    for axis in axes {
        let proj_a: f64 = (0..3).map(|i| ha[i] * ra.column(i).dot(&axis).abs()).sum();
        let proj_b: f64 = (0..3).map(|i| hb[i] * rb.column(i).dot(&axis).abs()).sum();
        if t.dot(&axis).abs() >= proj_a + proj_b {
            return false;
        }
    }
    true
}

fn box_box_distance(pa: &Pose, ha: &Vector3<f64>, pb: &Pose, hb: &Vector3<f64>) -> f64 {
    if boxes_overlap(pa, ha, pb, hb) {
        return 0.0;
    }
    let ca = box_corners(pa, ha);
    let cb = box_corners(pb, hb);
    let mut best = f64::INFINITY;
    for c in &ca {
        best = best.min(point_box_distance(c, pb, hb));
    }
    for c in &cb {
        best = best.min(point_box_distance(c, pa, ha));
    }
    let ea = box_edges(&ca);
    let eb = box_edges(&cb);
    for (a0, a1) in &ea {
        for (b0, b1) in &eb {
            best = best.min(segment_segment_distance(a0, a1, b0, b1));
        }
    }
    best
}

/// One side of a colliding pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum BodyRef {
    /// Index into `ArmModel::collision_bodies`.
    Arm(usize),
    /// Index into the world obstacle list.
    World(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub a: BodyRef,
    pub b: BodyRef,
    pub clearance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollisionReport {
    pub colliding: bool,
    pub pairs: Vec<ContactPair>,
}

/// Pairs of arm bodies that are checked against each other: bodies on links
/// more than one joint apart.
pub fn self_check_pairs(arm: &ArmModel) -> Vec<(usize, usize)> {
    let link_of = |b: &CollisionPrimitive| match b.attachment {
        Attachment::Link(l) => l,
        Attachment::World => 0,
    };
    let bodies = &arm.collision_bodies;
    let mut pairs = Vec::new();
    for i in 0..bodies.len() {
        for j in (i + 1)..bodies.len() {
            if link_of(&bodies[i]).abs_diff(link_of(&bodies[j])) > 1 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// All pairwise clearances relevant to `q`: arm-vs-world then arm-vs-arm.
pub fn pair_clearances(
    arm: &ArmModel,
    q: &JointConfig,
    world: &[CollisionPrimitive],
) -> Result<Vec<ContactPair>, KinematicsError> {
    let posed = arm.posed_bodies(q)?;
    let mut out = Vec::with_capacity(posed.len() * (world.len() + 2));
    for (i, (_, body)) in posed.iter().enumerate() {
        for (j, obstacle) in world.iter().enumerate() {
            out.push(ContactPair {
                a: BodyRef::Arm(i),
                b: BodyRef::World(j),
                clearance: clearance(body, obstacle),
            });
        }
    }
    for (i, j) in self_check_pairs(arm) {
        out.push(ContactPair {
            a: BodyRef::Arm(i),
            b: BodyRef::Arm(j),
            clearance: clearance(&posed[i].1, &posed[j].1),
        });
    }
    Ok(out)
}

/// Collision check of the arm at `q` against `world` and itself.
pub fn check_collision(
    arm: &ArmModel,
    q: &JointConfig,
    world: &[CollisionPrimitive],
) -> Result<CollisionReport, KinematicsError> {
    let pairs: Vec<ContactPair> = pair_clearances(arm, q, world)?
        .into_iter()
        .filter(|p| p.clearance < 0.0)
        .collect();
    Ok(CollisionReport {
        colliding: !pairs.is_empty(),
        pairs,
    })
}

/// Smallest clearance over all checked pairs, with the pair attaining it.
pub fn min_clearance(
    arm: &ArmModel,
    q: &JointConfig,
    world: &[CollisionPrimitive],
) -> Result<Option<ContactPair>, KinematicsError> {
    Ok(pair_clearances(arm, q, world)?
        .into_iter()
        .min_by(|a, b| a.clearance.total_cmp(&b.clearance)))
}

// ---- file representation ----

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ShapeEntry {
    Sphere { radius_m: f64 },
    Capsule { radius_m: f64, half_length_m: f64 },
    Box { half_extents_m: [f64; 3] },
}

impl From<ShapeEntry> for Shape {
    fn from(s: ShapeEntry) -> Self {
        match s {
            ShapeEntry::Sphere { radius_m } => Shape::Sphere { radius: radius_m },
            ShapeEntry::Capsule {
                radius_m,
                half_length_m,
            } => Shape::Capsule {
                radius: radius_m,
                half_length: half_length_m,
            },
            ShapeEntry::Box { half_extents_m } => Shape::Box {
                half_extents: Vector3::from(half_extents_m),
            },
        }
    }
}

impl From<Shape> for ShapeEntry {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Sphere { radius } => ShapeEntry::Sphere { radius_m: radius },
            Shape::Capsule { radius, half_length } => ShapeEntry::Capsule {
                radius_m: radius,
                half_length_m: half_length,
            },
            Shape::Box { half_extents } => ShapeEntry::Box {
                half_extents_m: [half_extents.x, half_extents.y, half_extents.z],
            },
        }
    }
}
