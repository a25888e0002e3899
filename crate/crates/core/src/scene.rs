//! Synthetic driving scenes with exact ground truth. Objects are placed and
//! moved under rejection-sampled constraints so that every object's class,
//! color, movement word and side word are constant for the whole scene with
//! comfortable margins; queries generated from those attributes then have an
//! unambiguous answer set, which makes end-to-end accuracy measurable.
//!
//! The camera is a top-down orthographic view (15 pixels per meter), so a
//! box's image rectangle is an exact affine image of its ground-plane hull
//! and image IoU carries no perspective distortion.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3x4, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, project_box, Box3D, CameraProjection, RigidPose};
use crate::ingest::{
    write_calib, write_detections, write_gt_boxes, write_poses, write_queries, Detection3D,
    GtBoxRow, QuerySpec,
};

/// Pixels per meter of the top-down camera.
pub const BEV_PIXELS_PER_METER: f64 = 15.0;
pub const BEV_IMAGE_WIDTH: f64 = 1024.0;
pub const BEV_IMAGE_HEIGHT: f64 = 768.0;

/// Top-down orthographic camera: u = 512 - 15 y, v = 750 - 15 x, depth
/// constant 1. Covers roughly x in (-1.2, 50), y in (-34, 34) meters.
pub fn bev_camera() -> CameraProjection {
    let m = Matrix3x4::from_rows(&[
        [0.0, -BEV_PIXELS_PER_METER, 0.0, 512.0].into(),
        [-BEV_PIXELS_PER_METER, 0.0, 0.0, 750.0].into(),
        [0.0, 0.0, 0.0, 1.0].into(),
    ]);
    CameraProjection::new(m, BEV_IMAGE_WIDTH, BEV_IMAGE_HEIGHT)
}

pub const COLOR_PALETTE: &[&str] = &[
    "black", "white", "red", "blue", "silver", "green", "yellow", "gray",
];

/// Car footprint (width, length, height) in meters.
pub const CAR_DIMS: (f64, f64, f64) = (1.8, 4.2, 1.5);
pub const PEDESTRIAN_DIMS: (f64, f64, f64) = (0.8, 0.8, 1.8);

/// Minimum ground distance between any two objects at any frame, chosen well
/// above the association gates so identities can never collide.
const MIN_SEPARATION_M: f64 = 5.0;
/// Margin kept between a trajectory and any side-word boundary.
const SIDE_MARGIN_M: f64 = 1.0;
/// How far inside the visible region trajectories must stay.
const VIEW_MARGIN_M: f64 = 2.0;
/// The movement word must hold with this multiple of its threshold.
const WORD_MARGIN: f64 = 1.5;
/// Radial ratio must clear the away/approach boundary (0.5) by this much.
const RADIAL_MARGIN: f64 = 0.15;
/// A query is kept only if every matching object's idealized caption score
/// beats every non-matching object's by at least this much, so selection has
/// a real gap to find even under tracking noise.
const QUERY_SCORE_GAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EgoMotion {
    /// Identity pose every frame; ego and world frames coincide.
    Static,
    /// Constant speed along world +x, identity rotation.
    Forward { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub frames: u64,
    pub n_objects: usize,
    /// Probability that an (object, frame) detection is dropped.
    pub dropout: f64,
    /// Standard deviation of x/y detection noise in meters.
    pub jitter_pos: f64,
    /// Probability that an object carries no appearance hint.
    pub distractor_rate: f64,
    pub queries_per_scene: usize,
    pub ego: EgoMotion,
    /// Also emit rendered frames under images/.
    pub emit_images: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            frames: 40,
            n_objects: 5,
            dropout: 0.0,
            jitter_pos: 0.0,
            distractor_rate: 0.0,
            queries_per_scene: 5,
            ego: EgoMotion::Static,
            emit_images: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Zero velocity, fixed heading.
    Parked,
    /// Constant velocity, heading along the velocity.
    Straight,
    /// Slow positional creep with a steadily rotating heading, so the
    /// heading channel carries the signal while position stays near-still.
    Turning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u64,
    pub class: String,
    /// None marks a distractor: present in the scene but never hinted.
    pub color: Option<String>,
    pub motion: MotionKind,
    /// Scene-constant words, guaranteed by construction.
    pub movement_word: String,
    pub side_word: String,
    pub start: [f64; 3],
    /// Meters per frame in the world frame.
    pub velocity: [f64; 2],
    pub heading0: f64,
    /// Radians per frame.
    pub omega: f64,
    pub dims: (f64, f64, f64),
}

impl SceneObject {
    pub fn center_world(&self, frame: u64) -> Vector3<f64> {
        Vector3::new(
            self.start[0] + self.velocity[0] * frame as f64,
            self.start[1] + self.velocity[1] * frame as f64,
            self.start[2],
        )
    }

    pub fn heading_world(&self, frame: u64) -> f64 {
        normalize_angle(self.heading0 + self.omega * frame as f64)
    }

    pub fn box_world(&self, frame: u64) -> Box3D {
        Box3D::new(
            self.center_world(frame),
            self.dims.0,
            self.dims.1,
            self.dims.2,
            self.heading_world(frame),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub params: SceneParams,
    pub objects: Vec<SceneObject>,
    pub poses: Vec<RigidPose>,
    pub queries: Vec<QuerySpec>,
    pub camera: CameraProjection,
    /// Ego-frame detections after dropout and jitter, sorted by frame.
    pub detections: Vec<Detection3D>,
}

fn ego_pose(ego: EgoMotion, frame: u64) -> RigidPose {
    match ego {
        EgoMotion::Static => RigidPose::identity(),
        EgoMotion::Forward { speed } => {
            RigidPose::from_yaw(0.0, Vector3::new(speed * frame as f64, 0.0, 0.0))
        }
    }
}

/// The word the template captioner would emit for a position, with a margin:
/// returns None when the position sits within `SIDE_MARGIN_M` of a boundary.
fn side_word_with_margin(x: f64, y: f64) -> Option<&'static str> {
    let tan = 15.0f64.to_radians().tan();
    // Distance to the front-cone boundary matters only ahead of the ego.
    if x > 0.0 {
        let cone = x * tan;
        if y.abs() <= cone - SIDE_MARGIN_M {
            return Some("in front of us");
        }
        if y.abs() <= cone + SIDE_MARGIN_M {
            return None;
        }
    }
    if y >= SIDE_MARGIN_M {
        Some("on the left")
    } else if y <= -SIDE_MARGIN_M {
        Some("on the right")
    } else {
        None
    }
}

struct Candidate {
    class: &'static str,
    motion: MotionKind,
    start: Vector3<f64>,
    velocity: [f64; 2],
    heading0: f64,
    omega: f64,
    dims: (f64, f64, f64),
}

/// Check every constraint that keeps the candidate's words scene-constant,
/// returning its (movement word, side word) on success.
fn check_candidate(
    c: &Candidate,
    poses: &[RigidPose],
    accepted: &[SceneObject],
    frames: u64,
    window: u64,
) -> Option<(&'static str, &'static str)> {
    let center = |f: u64| {
        Vector3::new(
            c.start.x + c.velocity[0] * f as f64,
            c.start.y + c.velocity[1] * f as f64,
            c.start.z,
        )
    };

    // Visibility with margin, in the ego frame of each frame.
    let half_diag = (c.dims.0.hypot(c.dims.1)) / 2.0;
    let keep = VIEW_MARGIN_M + half_diag;
    for f in 0..frames {
        let p = poses[f as usize].world_to_ego(center(f));
        if p.x < keep || p.x > 50.0 - keep || p.y.abs() > 34.0 - keep {
            return None;
        }
    }

    // One side word for the whole scene, margin included.
    let mut side: Option<&'static str> = None;
    for f in 0..frames {
        let p = poses[f as usize].world_to_ego(center(f));
        match (side, side_word_with_margin(p.x, p.y)) {
            (_, None) => return None,
            (None, word) => side = word,
            (Some(prev), Some(now)) if prev != now => return None,
            _ => {}
        }
    }
    let side = side?;

    // Movement word, with margins, over every trailing descriptor window.
    let tau_move = crate::caption::TemplateThresholds::default().tau_move;
    let movement: &'static str = match c.motion {
        MotionKind::Parked => {
            if c.class == "car" {
                "parked"
            } else {
                "stationary"
            }
        }
        MotionKind::Turning => "turning",
        MotionKind::Straight => {
            // Classify by the radial ratio and require every window of every
            // length to stay on the same side of the boundary with margin.
            let mut word: Option<&'static str> = None;
            for t in 1..frames {
                for w in 1..=window.min(t) {
                    let pose = &poses[t as usize];
                    let a = pose.world_to_ego(center(t - w));
                    let b = pose.world_to_ego(center(t));
                    let d = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
                    if d < WORD_MARGIN * tau_move * w as f64 {
                        return None;
                    }
                    let dr = b.xy().norm() - a.xy().norm();
                    let ratio = dr / d;
                    let now = if ratio >= 0.5 + RADIAL_MARGIN {
                        "moving away"
                    } else if ratio <= -(0.5 + RADIAL_MARGIN) {
                        "approaching"
                    } else if ratio.abs() <= 0.5 - RADIAL_MARGIN {
                        "moving"
                    } else {
                        return None;
                    };
                    match word {
                        None => word = Some(now),
                        Some(prev) if prev != now => return None,
                        _ => {}
                    }
                }
            }
            word?
        }
    };

    // Parked and turning objects must stay clearly below the move threshold.
    if matches!(c.motion, MotionKind::Parked | MotionKind::Turning) {
        let speed = (c.velocity[0].powi(2) + c.velocity[1].powi(2)).sqrt();
        if speed > 0.5 * tau_move {
            return None;
        }
    }

    // Stay far from every accepted object at every frame.
    for other in accepted {
        for f in 0..frames {
            let d = (center(f).xy() - other.center_world(f).xy()).norm();
            if d < MIN_SEPARATION_M {
                return None;
            }
        }
    }

    Some((movement, side))
}

fn sample_candidate(rng: &mut ChaCha8Rng, poses: &[RigidPose], frames: u64) -> Candidate {
    let class = if rng.gen_bool(0.6) { "car" } else { "pedestrian" };
    let dims = if class == "car" {
        CAR_DIMS
    } else {
        PEDESTRIAN_DIMS
    };
    // Sample the start in the ego frame of a random frame so moving-ego
    // scenes still place objects where they will be seen.
    let anchor = rng.gen_range(0..frames);
    let ego_frame_pos = Vector3::new(rng.gen_range(6.0..44.0), rng.gen_range(-27.0..27.0), 0.0);
    let world = poses[anchor as usize].ego_to_world(ego_frame_pos);
    let start = Vector3::new(world.x - 0.0, world.y, dims.2 / 2.0);

    let motion = match rng.gen_range(0..10) {
        0..=3 => MotionKind::Parked,
        4..=7 => MotionKind::Straight,
        _ => MotionKind::Turning,
    };
    match motion {
        MotionKind::Parked => Candidate {
            class,
            motion,
            start,
            velocity: [0.0, 0.0],
            heading0: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            omega: 0.0,
            dims,
        },
        MotionKind::Turning => {
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let speed = rng.gen_range(0.05..0.1);
            Candidate {
                class,
                motion,
                start,
                velocity: [speed * dir.cos(), speed * dir.sin()],
                heading0: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                omega: rng.gen_range(0.03..0.06) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                dims,
            }
        }
        MotionKind::Straight => {
            // Aim for a radial category: outward, inward, or tangential
            // relative to the mid-scene ego position, then perturb a little.
            let mid_pose = &poses[(frames / 2) as usize];
            let rel = mid_pose.world_to_ego(start);
            let radial = rel.y.atan2(rel.x);
            let base = match rng.gen_range(0..3) {
                0 => radial,
                1 => radial + std::f64::consts::PI,
                _ => radial + std::f64::consts::FRAC_PI_2 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            };
            let dir = base + rng.gen_range(-0.12..0.12);
            let speed = rng.gen_range(0.4..0.7);
            Candidate {
                class,
                motion,
                start,
                velocity: [speed * dir.cos(), speed * dir.sin()],
                heading0: normalize_angle(dir),
                omega: 0.0,
                dims,
            }
        }
    }
}

/// Build a dropout mask for one object; runs of consecutive drops are capped
/// at two frames so a track never dies mid-scene.
fn dropout_mask(rng: &mut ChaCha8Rng, frames: u64, dropout: f64) -> Vec<bool> {
    let mut keep = vec![true; frames as usize];
    let mut run = 0usize;
    for slot in keep.iter_mut() {
        if run < 2 && dropout > 0.0 && rng.gen_bool(dropout) {
            *slot = false;
            run += 1;
        } else {
            run = 0;
        }
    }
    keep
}

/// The caption an object's track settles on once tracking is clean: the
/// template sentence with the color hint present exactly when the object has
/// one. Used to vet queries before a scene is accepted.
fn idealized_caption(o: &SceneObject) -> String {
    let hint = o
        .color
        .as_deref()
        .map(|c| format!("{c} "))
        .unwrap_or_default();
    format!("a {hint}{}, {}, {}", o.class, o.movement_word, o.side_word)
}

fn build_queries(
    rng: &mut ChaCha8Rng,
    objects: &[SceneObject],
    frames: u64,
    count: usize,
) -> Result<Vec<QuerySpec>> {
    // Atom subsets, cycled for coverage: color atoms need a hinted focus.
    #[derive(Clone, Copy)]
    struct Atoms {
        color: bool,
        movement: bool,
        side: bool,
    }
    let patterns = [
        Atoms { color: true, movement: true, side: true },
        Atoms { color: true, movement: true, side: false },
        Atoms { color: true, movement: false, side: true },
        Atoms { color: false, movement: true, side: true },
        Atoms { color: true, movement: false, side: false },
    ];
    let hinted: Vec<&SceneObject> = objects.iter().filter(|o| o.color.is_some()).collect();
    if hinted.is_empty() {
        return Err(Error::stage("gen-scene", "no hinted objects to query"));
    }
    let mut queries = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0;
    while queries.len() < count {
        attempts += 1;
        if attempts > 400 {
            return Err(Error::stage(
                "gen-scene",
                format!("could not build {count} distinct queries"),
            ));
        }
        let atoms = patterns[(queries.len() + attempts) % patterns.len()];
        let focus: &SceneObject = if atoms.color {
            hinted[rng.gen_range(0..hinted.len())]
        } else {
            &objects[rng.gen_range(0..objects.len())]
        };
        let mut text = String::from("a ");
        if atoms.color {
            text.push_str(focus.color.as_deref().expect("hinted focus"));
            text.push(' ');
        }
        text.push_str(&focus.class);
        if atoms.movement {
            text.push_str(", ");
            text.push_str(&focus.movement_word);
        }
        if atoms.side {
            text.push_str(", ");
            text.push_str(&focus.side_word);
        }
        if !seen.insert(text.clone()) {
            continue;
        }
        let matches: Vec<u64> = objects
            .iter()
            .filter(|o| {
                o.class == focus.class
                    && (!atoms.color || o.color == focus.color)
                    && (!atoms.movement || o.movement_word == focus.movement_word)
                    && (!atoms.side || o.side_word == focus.side_word)
            })
            .map(|o| o.object_id)
            .collect();

        // The query must be decisively answerable from captions alone: every
        // matching object outscores every non-matching object by a full gap,
        // and threshold-free clustering of the idealized scores recovers
        // exactly the matching set. Anything murkier is retried.
        let encoder = crate::matching::OfflineEncoder::default();
        let weights = crate::matching::Weights::default();
        let mut scored = Vec::with_capacity(objects.len());
        for o in objects {
            let s = crate::matching::total_score(&text, &idealized_caption(o), &encoder, &weights)
                .map_err(|e| Error::stage("gen-scene", e.to_string()))?
                .s_total;
            scored.push((o.object_id, s, matches.contains(&o.object_id)));
        }
        let min_gt = scored
            .iter()
            .filter(|x| x.2)
            .map(|x| x.1)
            .fold(f64::INFINITY, f64::min);
        let max_other = scored
            .iter()
            .filter(|x| !x.2)
            .map(|x| x.1)
            .fold(f64::NEG_INFINITY, f64::max);
        if scored.iter().any(|x| !x.2) && min_gt - max_other < QUERY_SCORE_GAP {
            continue;
        }
        let dets: Vec<crate::select::ScoredDetection> = scored
            .iter()
            .map(|&(id, s, _)| crate::select::ScoredDetection {
                track_id: id,
                frame: 0,
                score: s,
            })
            .collect();
        let labels = crate::select::cluster_select(&dets, 1e-6);
        let selected: std::collections::BTreeSet<u64> = dets
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == crate::select::Label::Matched)
            .map(|(d, _)| d.track_id)
            .collect();
        let wanted: std::collections::BTreeSet<u64> = matches.iter().copied().collect();
        if selected != wanted {
            continue;
        }

        let gt: BTreeMap<u64, Vec<u64>> = (0..frames).map(|f| (f, matches.clone())).collect();
        queries.push(QuerySpec {
            id: format!("q{}", queries.len()),
            text,
            gt,
        });
    }
    Ok(queries)
}

/// Generate a scene. Deterministic in (params, seed).
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    if params.frames < 10 {
        return Err(Error::Config("a scene needs at least 10 frames".into()));
    }
    if params.n_objects == 0 {
        return Err(Error::Config("a scene needs at least one object".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<RigidPose> = (0..params.frames).map(|f| ego_pose(params.ego, f)).collect();
    let window = 5;

    'scene: for _restart in 0..50 {
        let mut objects: Vec<SceneObject> = Vec::new();
        for object_id in 1..=params.n_objects as u64 {
            let mut placed = false;
            for _try in 0..400 {
                let c = sample_candidate(&mut rng, &poses, params.frames);
                if let Some((movement_word, side_word)) =
                    check_candidate(&c, &poses, &objects, params.frames, window)
                {
                    objects.push(SceneObject {
                        object_id,
                        class: c.class.to_string(),
                        color: Some(COLOR_PALETTE[rng.gen_range(0..COLOR_PALETTE.len())].to_string()),
                        motion: c.motion,
                        movement_word: movement_word.to_string(),
                        side_word: side_word.to_string(),
                        start: [c.start.x, c.start.y, c.start.z],
                        velocity: c.velocity,
                        heading0: c.heading0,
                        omega: c.omega,
                        dims: c.dims,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'scene;
            }
        }

        // Flag distractors; at least one object must keep its hint.
        for obj in objects.iter_mut() {
            if params.distractor_rate > 0.0 && rng.gen_bool(params.distractor_rate) {
                obj.color = None;
            }
        }
        if objects.iter().all(|o| o.color.is_none()) {
            objects[0].color = Some(COLOR_PALETTE[0].to_string());
        }

        let queries = match build_queries(&mut rng, &objects, params.frames, params.queries_per_scene)
        {
            Ok(q) => q,
            Err(_) => continue 'scene,
        };

        // Detections: per object, drop frames, jitter positions, jitter score.
        let masks: Vec<Vec<bool>> = objects
            .iter()
            .map(|_| dropout_mask(&mut rng, params.frames, params.dropout))
            .collect();
        let mut detections = Vec::new();
        for f in 0..params.frames {
            let pose = &poses[f as usize];
            for (obj, mask) in objects.iter().zip(&masks) {
                if !mask[f as usize] {
                    continue;
                }
                let ego_box = obj.box_world(f).to_ego(pose);
                let jx = gaussian(&mut rng) * params.jitter_pos;
                let jy = gaussian(&mut rng) * params.jitter_pos;
                let jittered = Box3D::new(
                    ego_box.center + Vector3::new(jx, jy, 0.0),
                    ego_box.width,
                    ego_box.length,
                    ego_box.height,
                    ego_box.heading,
                );
                detections.push(Detection3D {
                    frame: f,
                    class: obj.class.clone(),
                    box3d: jittered,
                    score: rng.gen_range(0.7..0.95),
                });
            }
        }

        return Ok(Scene {
            params: *params,
            objects,
            poses,
            queries,
            camera: bev_camera(),
            detections,
        });
    }
    Err(Error::stage(
        "gen-scene",
        "constraint sampling failed repeatedly; relax the parameters",
    ))
}

/// Standard normal via Box-Muller, fed from the scene's seeded generator.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl Scene {
    /// Write the scene as a sequence directory the pipeline can consume.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_detections(&dir.join("detections.csv"), &self.detections)?;
        write_poses(&dir.join("poses.txt"), &self.poses)?;
        write_calib(&dir.join("calib.txt"), &self.camera)?;
        write_queries(&dir.join("queries.json"), &self.queries)?;

        let mut gt_rows = Vec::new();
        for f in 0..self.params.frames {
            for obj in &self.objects {
                gt_rows.push(GtBoxRow {
                    frame: f,
                    object_id: obj.object_id,
                    class: obj.class.clone(),
                    box3d: obj.box_world(f),
                });
            }
        }
        write_gt_boxes(&dir.join("gt_boxes.csv"), &gt_rows)?;

        let mut hints = String::from("frame,x,y,color\n");
        for f in 0..self.params.frames {
            for obj in &self.objects {
                if let Some(color) = &obj.color {
                    let c = obj.center_world(f);
                    hints.push_str(&format!("{f},{},{},{color}\n", c.x, c.y));
                }
            }
        }
        let hints_path = dir.join("hints.csv");
        std::fs::write(&hints_path, hints).map_err(|e| Error::io(&hints_path, e))?;

        if self.params.emit_images {
            let images = dir.join("images");
            std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
            for f in 0..self.params.frames {
                let img = self.render_frame(f);
                let path = images.join(format!("{f:04}.png"));
                img.save(&path)
                    .map_err(|e| Error::stage("gen-scene", format!("{}: {e}", path.display())))?;
            }
        }
        Ok(())
    }

    /// Top-down view of one frame: colored filled rectangles on asphalt gray.
    pub fn render_frame(&self, frame: u64) -> image::RgbImage {
        let w = self.camera.width as u32;
        let h = self.camera.height as u32;
        let mut img = image::RgbImage::from_pixel(w, h, image::Rgb([40, 44, 48]));
        let pose = &self.poses[frame as usize];
        for obj in &self.objects {
            let rect = match project_box(&obj.box_world(frame).to_ego(pose), &self.camera) {
                Some(r) => r,
                None => continue,
            };
            let rgb = obj
                .color
                .as_deref()
                .map(crate::render::color_rgb)
                .unwrap_or([130, 130, 130]);
            for y in rect.y_min.max(0.0) as u32..(rect.y_max.min(self.camera.height) as u32) {
                for x in rect.x_min.max(0.0) as u32..(rect.x_max.min(self.camera.width) as u32) {
                    img.put_pixel(x, y, image::Rgb(rgb));
                }
            }
        }
        img
    }
}
