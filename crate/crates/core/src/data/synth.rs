//! Kinematic 14-joint pose generator standing in for motion-capture data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, PoseRecord, Provenance, CATEGORIES};
use crate::error::{Error, Result};
use crate::pose::{joint::*, Pose, NUM_JOINTS};

type V3 = [f64; 3];

/// Skeleton segments with fixed lengths in millimeters.
pub const BONES: [(usize, usize, f64); 12] = [
    (NECK, HEAD, 200.0),
    (NECK, R_SHOULDER, 180.0),
    (R_SHOULDER, R_ELBOW, 280.0),
    (R_ELBOW, R_WRIST, 250.0),
    (NECK, L_SHOULDER, 180.0),
    (L_SHOULDER, L_ELBOW, 280.0),
    (L_ELBOW, L_WRIST, 250.0),
    (R_HIP, L_HIP, 220.0),
    (R_HIP, R_KNEE, 430.0),
    (R_KNEE, R_ANKLE, 420.0),
    (L_HIP, L_KNEE, 430.0),
    (L_KNEE, L_ANKLE, 420.0),
];

/// Pelvis center to neck.
pub const SPINE: f64 = 500.0;

/// Pose family that sets the joint-angle ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Stand,
    Sit,
    Walk,
    Reach,
}

/// Archetype used for each category label.
pub fn archetype_of(category: &str) -> Option<Archetype> {
    use Archetype::*;
    Some(match category {
        "Direct" | "Discuss" | "Phone" | "Smoke" | "Wait" => Stand,
        "Eat" | "Sit" | "SitD" => Sit,
        "Walk" | "WalkD" | "WalkT" => Walk,
        "Greet" | "Pose" | "Purch" | "TakeP" => Reach,
        _ => return None,
    })
}

/// Pinhole camera looking at the subject from the front hemisphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Focal length in pixels.
    pub focal_length: f64,
    pub principal_point: [f64; 2],
    /// Range of subject distances along the optical axis, mm.
    pub distance: [f64; 2],
    /// Maximum sideways and vertical offset of the pelvis from the axis, mm.
    pub offset: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera { focal_length: 1145.0, principal_point: [512.0, 512.0], distance: [4000.0, 6000.0], offset: 400.0 }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let ok = self.focal_length > 0.0
            && self.distance[0] > 2000.0
            && self.distance[1] >= self.distance[0]
            && self.offset >= 0.0
            && self.principal_point.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("camera needs a positive focal length and subject distances of at least 2 m"))
        }
    }

    /// Image coordinates of a camera-frame point (x right, y up, z forward).
    pub fn project(&self, p: V3) -> [f64; 2] {
        [
            self.principal_point[0] + self.focal_length * p[0] / p[2],
            self.principal_point[1] - self.focal_length * p[1] / p[2],
        ]
    }
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Column-vector rotation matrix applied to `v`.
fn rot(m: &[[f64; 3]; 3], v: V3) -> V3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn rot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Unit vector `theta` degrees away from straight down, turned `phi`
/// degrees from forward toward the limb's own side (`side` = -1 right,
/// +1 left). Body frame: x toward the subject's left, y forward, z up.
fn limb(theta: f64, phi: f64, side: f64) -> V3 {
    let (t, p) = (theta.to_radians(), phi.to_radians());
    [side * t.sin() * p.sin(), t.sin() * p.cos(), -t.cos()]
}

struct Angles {
    pitch: f64,
    roll: f64,
    head: f64,
    /// `(theta, phi)` for upper arm, forearm, thigh, shin; right then left.
    arms: [[(f64, f64); 2]; 2],
    legs: [[(f64, f64); 2]; 2],
}

fn u(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

fn sample_angles(arch: Archetype, r: &mut ChaCha8Rng) -> Angles {
    let hang = |r: &mut ChaCha8Rng| [(u(r, 0.0, 35.0), u(r, -60.0, 60.0)), (u(r, 0.0, 90.0), u(r, -30.0, 60.0))];
    let stand_leg = |r: &mut ChaCha8Rng| [(u(r, 0.0, 15.0), u(r, -40.0, 40.0)), (u(r, 0.0, 15.0), u(r, 150.0, 210.0))];
    match arch {
        Archetype::Stand => Angles {
            pitch: u(r, -8.0, 8.0),
            roll: u(r, -5.0, 5.0),
            head: u(r, -15.0, 15.0),
            arms: [hang(r), hang(r)],
            legs: [stand_leg(r), stand_leg(r)],
        },
        Archetype::Sit => {
            let arm =
                |r: &mut ChaCha8Rng| [(u(r, 0.0, 40.0), u(r, -30.0, 60.0)), (u(r, 45.0, 110.0), u(r, -30.0, 30.0))];
            let leg =
                |r: &mut ChaCha8Rng| [(u(r, 65.0, 100.0), u(r, -20.0, 20.0)), (u(r, 0.0, 30.0), u(r, -30.0, 30.0))];
            Angles {
                pitch: u(r, -5.0, 25.0),
                roll: u(r, -5.0, 5.0),
                head: u(r, -15.0, 25.0),
                arms: [arm(r), arm(r)],
                legs: [leg(r), leg(r)],
            }
        }
        Archetype::Walk => {
            let stride = u(r, 10.0, 35.0);
            let lead = if r.random::<bool>() { 0 } else { 1 };
            let mut legs = [[(0.0, 0.0); 2]; 2];
            let mut arms = [[(0.0, 0.0); 2]; 2];
            for side in 0..2 {
                let forward = side == lead;
                legs[side] = [
                    (stride * u(r, 0.8, 1.2), if forward { 0.0 } else { 180.0 } + u(r, -10.0, 10.0)),
                    (u(r, 0.0, 40.0), u(r, 160.0, 200.0)),
                ];
                // arms swing against the leg on the same side
                arms[side] = [
                    (u(r, 5.0, 30.0), if forward { 180.0 } else { 0.0 } + u(r, -15.0, 15.0)),
                    (u(r, 10.0, 60.0), u(r, -20.0, 20.0)),
                ];
            }
            Angles { pitch: u(r, 0.0, 12.0), roll: u(r, -4.0, 4.0), head: u(r, -10.0, 10.0), arms, legs }
        }
        Archetype::Reach => {
            let reaching = r.random_range(0..2usize);
            let mut arms = [hang(r), hang(r)];
            arms[reaching] = [(u(r, 60.0, 170.0), u(r, -45.0, 60.0)), (u(r, 50.0, 180.0), u(r, -45.0, 60.0))];
            Angles {
                pitch: u(r, 0.0, 30.0),
                roll: u(r, -8.0, 8.0),
                head: u(r, -20.0, 20.0),
                arms,
                legs: [stand_leg(r), stand_leg(r)],
            }
        }
    }
}

/// Joint positions in the body frame, pelvis center at the origin.
fn build_skeleton(a: &Angles) -> Vec<V3> {
    let torso = mul(&rot_x(a.pitch.to_radians()), &rot_y(a.roll.to_radians()));
    let mut j = vec![[0.0; 3]; NUM_JOINTS];
    let neck = rot(&torso, [0.0, 0.0, SPINE]);
    j[NECK] = neck;
    j[HEAD] = add(neck, rot(&mul(&torso, &rot_x(a.head.to_radians())), [0.0, 0.0, 200.0]));
    let sides = [
        (-1.0, R_SHOULDER, R_ELBOW, R_WRIST, R_HIP, R_KNEE, R_ANKLE),
        (1.0, L_SHOULDER, L_ELBOW, L_WRIST, L_HIP, L_KNEE, L_ANKLE),
    ];
    for (k, &(side, sh, el, wr, hip, kn, an)) in sides.iter().enumerate() {
        j[sh] = add(neck, rot(&torso, [side * 180.0, 0.0, 0.0]));
        let [(t1, p1), (t2, p2)] = a.arms[k];
        j[el] = add(j[sh], scale(rot(&torso, limb(t1, p1, side)), 280.0));
        j[wr] = add(j[el], scale(rot(&torso, limb(t2, p2, side)), 250.0));
        j[hip] = [side * 110.0, 0.0, 0.0];
        let [(t3, p3), (t4, p4)] = a.legs[k];
        j[kn] = add(j[hip], scale(limb(t3, p3, side), 430.0));
        j[an] = add(j[kn], scale(limb(t4, p4, side), 420.0));
    }
    j
}

fn min_distance(points: &[V3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for k in i + 1..points.len() {
            let d = (0..3).map(|c| (points[i][c] - points[k][c]).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// `count` random poses: 3D joints in millimeters in the camera frame
/// (x right, y up, z along the optical axis) and their pinhole projections
/// in pixels.
pub fn synth_poses(count: usize, seed: u64, camera: &Camera) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    camera.validate()?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    while records.len() < count {
        let category = CATEGORIES[r.random_range(0..CATEGORIES.len())];
        let arch = archetype_of(category).expect("every table category has an archetype");
        let body = build_skeleton(&sample_angles(arch, &mut r));
        if min_distance(&body) <= 1.0 {
            continue;
        }
        let yaw = rot_z(u(&mut r, 0.0, std::f64::consts::TAU));
        let world: Vec<V3> = body.iter().map(|p| rot(&yaw, *p)).collect();
        let depth = u(&mut r, camera.distance[0], camera.distance[1].max(camera.distance[0] + 1e-9));
        let shift = [u(&mut r, -1.0, 1.0) * camera.offset, u(&mut r, -1.0, 1.0) * camera.offset];
        let cam: Vec<V3> = world.iter().map(|p| [p[0] + shift[0], p[2] + shift[1], p[1] + depth]).collect();
        let image: Vec<[f64; 2]> = cam.iter().map(|p| camera.project(*p)).collect();
        records.push(PoseRecord {
            id: format!("syn{seed}-{:06}", records.len()),
            category: category.to_string(),
            pose2d: Pose::from_points2(&image)?,
            pose3d: Some(Pose::from_points3(&cam)?),
        });
    }
    Ok(Dataset::new(records, Provenance::Synthetic { seed }))
}
