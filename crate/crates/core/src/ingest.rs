//! File formats and loading. Everything the pipeline reads or writes on disk
//! goes through this module so the formats stay pinned in one place:
//!
//! * `detections.csv`  header `frame,class,x,y,z,w,l,h,theta,score`, one
//!   detection per row, coordinates in the ego frame of that row's frame,
//!   `.` decimal separator, `\n` line ends.
//! * `poses.txt`  one line per frame (line i is frame i), 12 whitespace
//!   separated numbers forming a row-major 3x4 `[R|t]` taking ego points to
//!   world points.
//! * `calib.txt`  first line 12 numbers (row-major 3x4 projection from ego
//!   points to homogeneous pixels), second line `width height`.
//! * `queries.json`  list of `{id, text, gt}` where `gt` is an optional map
//!   of frame -> ground-truth object ids, used only by evaluation.
//! * `tracks.csv`  header `frame,track_id,class,x,y,z,w,l,h,theta,score`,
//!   world-frame box per confirmed track per frame.
//! * per-query result CSV  header `query_id,frame,track_id,x1,y1,x2,y2`,
//!   image-plane boxes; ground-truth files for evaluation share the schema.
//! * `gt_boxes.csv`  header `frame,object_id,class,x,y,z,w,l,h,theta`,
//!   world-frame ground-truth trajectories emitted by the scene generator.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! parse(serialize(x)) reproduces x exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, CameraProjection, Rect2D, RigidPose};

pub const DETECTION_HEADER: &str = "frame,class,x,y,z,w,l,h,theta,score";
pub const TRACK_HEADER: &str = "frame,track_id,class,x,y,z,w,l,h,theta,score";
pub const RESULT_HEADER: &str = "query_id,frame,track_id,x1,y1,x2,y2";
pub const GT_BOX_HEADER: &str = "frame,object_id,class,x,y,z,w,l,h,theta";

/// Orthonormality drift above this is treated as corrupt data.
const POSE_DRIFT_MAX: f64 = 1e-3;
/// Drift below this is floating-point noise; the rotation is used as-is so
/// that write/read round-trips are bit-exact.
const POSE_DRIFT_EXACT: f64 = 1e-12;

/// One detector output in the ego frame of its frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection3D {
    pub frame: u64,
    pub class: String,
    pub box3d: Box3D,
    pub score: f64,
}

/// A natural-language query, optionally with per-frame ground-truth object
/// ids for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gt: BTreeMap<u64, Vec<u64>>,
}

/// Everything a sequence directory provides.
#[derive(Debug, Clone)]
pub struct SequenceBundle {
    pub sequence_id: String,
    pub dir: PathBuf,
    /// Frame indices covered by the sequence: 0..n_poses when a pose file is
    /// present, otherwise 0..=max detection frame.
    pub frames: Vec<u64>,
    pub detections: Vec<Detection3D>,
    pub poses: Vec<RigidPose>,
    pub camera: Option<CameraProjection>,
    pub queries: Vec<QuerySpec>,
    pub image_paths: BTreeMap<u64, PathBuf>,
}

impl SequenceBundle {
    pub fn pose(&self, frame: u64) -> RigidPose {
        self.poses
            .get(frame as usize)
            .copied()
            .unwrap_or_else(RigidPose::identity)
    }

    pub fn detections_for_frame(&self, frame: u64) -> Vec<&Detection3D> {
        self.detections.iter().filter(|d| d.frame == frame).collect()
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
}

fn parse_num(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(path, line, format!("invalid {field} value {raw:?}")))
}

/// Parse a detection CSV. Rows must be sorted by frame (non-decreasing);
/// dimensions must be positive, scores in [0, 1]. Headings are normalized to
/// (-pi, pi] on load.
pub fn parse_detections(path: &Path) -> Result<Vec<Detection3D>> {
    let text = read_to_string(path)?;
    let lines = split_lines(&text);
    let mut it = lines.iter().enumerate();
    match it.next() {
        Some((_, first)) if *first == DETECTION_HEADER => {}
        Some((_, first)) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {DETECTION_HEADER:?}, found {first:?}"),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty file, expected header")),
    }
    let mut out = Vec::new();
    let mut prev_frame = 0u64;
    for (idx, raw) in it {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 10 fields, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid frame {:?}", fields[0])))?;
        if !out.is_empty() && frame < prev_frame {
            return Err(Error::parse(
                path,
                line,
                format!("frame {frame} out of order after {prev_frame}"),
            ));
        }
        prev_frame = frame;
        let class = fields[1].to_string();
        if class.is_empty() {
            return Err(Error::parse(path, line, "empty class"));
        }
        let x = parse_num(path, line, "x", fields[2])?;
        let y = parse_num(path, line, "y", fields[3])?;
        let z = parse_num(path, line, "z", fields[4])?;
        let w = parse_num(path, line, "w", fields[5])?;
        let l = parse_num(path, line, "l", fields[6])?;
        let h = parse_num(path, line, "h", fields[7])?;
        let theta = parse_num(path, line, "theta", fields[8])?;
        let score = parse_num(path, line, "score", fields[9])?;
        if w <= 0.0 || l <= 0.0 || h <= 0.0 {
            return Err(Error::parse(
                path,
                line,
                format!("non-positive dimensions ({w}, {l}, {h})"),
            ));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(
                path,
                line,
                format!("score {score} outside [0, 1]"),
            ));
        }
        out.push(Detection3D {
            frame,
            class,
            box3d: Box3D::new(Vector3::new(x, y, z), w, l, h, theta),
            score,
        });
    }
    Ok(out)
}

pub fn serialize_detections(dets: &[Detection3D]) -> String {
    let mut s = String::from(DETECTION_HEADER);
    s.push('\n');
    for d in dets {
        let b = &d.box3d;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            d.frame,
            d.class,
            b.center.x,
            b.center.y,
            b.center.z,
            b.width,
            b.length,
            b.height,
            b.heading,
            d.score
        ));
    }
    s
}

pub fn write_detections(path: &Path, dets: &[Detection3D]) -> Result<()> {
    fs::write(path, serialize_detections(dets)).map_err(|e| Error::io(path, e))
}

/// Parse a pose file. Each rotation is checked for orthonormality: drift up
/// to 1e-3 (Frobenius norm of R^T R - I) is repaired by projecting onto the
/// nearest rotation, anything larger is an error, and a negative determinant
/// (a reflection) is always an error.
pub fn parse_poses(path: &Path) -> Result<Vec<RigidPose>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, raw) in split_lines(&text).iter().enumerate() {
        let line = idx + 1;
        let nums: Vec<&str> = raw.split_whitespace().collect();
        if nums.len() != 12 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 12 numbers, found {}", nums.len()),
            ));
        }
        let mut v = [0.0f64; 12];
        for (i, n) in nums.iter().enumerate() {
            v[i] = parse_num(path, line, "pose entry", n)?;
        }
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let translation = Vector3::new(v[3], v[7], v[11]);
        if rotation.determinant() < 0.0 {
            return Err(Error::parse(
                path,
                line,
                "rotation has negative determinant (reflection)",
            ));
        }
        let drift = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let rotation = if drift <= POSE_DRIFT_EXACT {
            rotation
        } else if drift <= POSE_DRIFT_MAX {
            let svd = rotation.svd(true, true);
            let u = svd.u.unwrap();
            let vt = svd.v_t.unwrap();
            u * vt
        } else {
            return Err(Error::parse(
                path,
                line,
                format!("rotation drifts from orthonormal by {drift:.2e} (max 1e-3)"),
            ));
        };
        out.push(RigidPose::new(rotation, translation));
    }
    Ok(out)
}

pub fn serialize_poses(poses: &[RigidPose]) -> String {
    let mut s = String::new();
    for p in poses {
        let r = &p.rotation;
        let t = &p.translation;
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {}\n",
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z
        ));
    }
    s
}

pub fn write_poses(path: &Path, poses: &[RigidPose]) -> Result<()> {
    fs::write(path, serialize_poses(poses)).map_err(|e| Error::io(path, e))
}

/// Parse a query file: a JSON list of {id, text, gt}. Ids must be unique and
/// non-empty, text must contain something other than whitespace.
pub fn parse_queries(path: &Path) -> Result<Vec<QuerySpec>> {
    let text = read_to_string(path)?;
    let queries: Vec<QuerySpec> = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let mut seen = std::collections::BTreeSet::new();
    for q in &queries {
        if q.id.is_empty() {
            return Err(Error::parse(path, 1, "query with empty id"));
        }
        if !seen.insert(q.id.clone()) {
            return Err(Error::parse(path, 1, format!("duplicate query id {:?}", q.id)));
        }
        if q.text.trim().is_empty() {
            return Err(Error::parse(
                path,
                1,
                format!("query {:?} has empty text", q.id),
            ));
        }
    }
    Ok(queries)
}

pub fn serialize_queries(queries: &[QuerySpec]) -> String {
    let mut s = serde_json::to_string_pretty(queries).expect("queries serialize");
    s.push('\n');
    s
}

pub fn write_queries(path: &Path, queries: &[QuerySpec]) -> Result<()> {
    fs::write(path, serialize_queries(queries)).map_err(|e| Error::io(path, e))
}

/// Parse a camera calibration file.
pub fn parse_calib(path: &Path) -> Result<CameraProjection> {
    let text = read_to_string(path)?;
    let lines = split_lines(&text);
    if lines.len() < 2 {
        return Err(Error::parse(path, 1, "expected projection line and size line"));
    }
    let nums: Vec<&str> = lines[0].split_whitespace().collect();
    if nums.len() != 12 {
        return Err(Error::parse(
            path,
            1,
            format!("expected 12 numbers, found {}", nums.len()),
        ));
    }
    let mut v = [0.0f64; 12];
    for (i, n) in nums.iter().enumerate() {
        v[i] = parse_num(path, 1, "projection entry", n)?;
    }
    let size: Vec<&str> = lines[1].split_whitespace().collect();
    if size.len() != 2 {
        return Err(Error::parse(path, 2, "expected `width height`"));
    }
    let width = parse_num(path, 2, "width", size[0])?;
    let height = parse_num(path, 2, "height", size[1])?;
    if width <= 0.0 || height <= 0.0 {
        return Err(Error::parse(path, 2, "non-positive image size"));
    }
    Ok(CameraProjection::new(
        Matrix3x4::from_row_slice(&v),
        width,
        height,
    ))
}

pub fn write_calib(path: &Path, cam: &CameraProjection) -> Result<()> {
    let m = &cam.matrix;
    let mut s = String::new();
    for r in 0..3 {
        for c in 0..4 {
            if r + c > 0 {
                s.push(' ');
            }
            s.push_str(&format!("{}", m[(r, c)]));
        }
    }
    s.push('\n');
    s.push_str(&format!("{} {}\n", cam.width, cam.height));
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Load a sequence directory. `detections.csv` is required; poses, calib,
/// queries, and images are optional.
pub fn load_bundle(dir: &Path) -> Result<SequenceBundle> {
    let sequence_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string());
    let detections = parse_detections(&dir.join("detections.csv"))?;
    let poses_path = dir.join("poses.txt");
    let poses = if poses_path.exists() {
        parse_poses(&poses_path)?
    } else {
        Vec::new()
    };
    let frames: Vec<u64> = if poses.is_empty() {
        match detections.iter().map(|d| d.frame).max() {
            Some(max) => (0..=max).collect(),
            None => Vec::new(),
        }
    } else {
        (0..poses.len() as u64).collect()
    };
    for d in &detections {
        if !poses.is_empty() && d.frame >= poses.len() as u64 {
            return Err(Error::parse(
                dir.join("detections.csv"),
                1,
                format!(
                    "detection at frame {} but pose file covers only frames 0..{}",
                    d.frame,
                    poses.len()
                ),
            ));
        }
    }
    let poses = if poses.is_empty() {
        frames.iter().map(|_| RigidPose::identity()).collect()
    } else {
        poses
    };
    let calib_path = dir.join("calib.txt");
    let camera = if calib_path.exists() {
        Some(parse_calib(&calib_path)?)
    } else {
        None
    };
    let queries_path = dir.join("queries.json");
    let queries = if queries_path.exists() {
        parse_queries(&queries_path)?
    } else {
        Vec::new()
    };
    let mut image_paths = BTreeMap::new();
    let images_dir = dir.join("images");
    if images_dir.is_dir() {
        let entries = fs::read_dir(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&images_dir, e))?;
            let path = entry.path();
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if let Ok(frame) = stem.parse::<u64>() {
                    image_paths.insert(frame, path);
                }
            }
        }
    }
    Ok(SequenceBundle {
        sequence_id,
        dir: dir.to_path_buf(),
        frames,
        detections,
        poses,
        camera,
        queries,
        image_paths,
    })
}

/// One confirmed track state in the world frame, as stored in `tracks.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub frame: u64,
    pub track_id: u64,
    pub class: String,
    pub box3d: Box3D,
    pub score: f64,
}

pub fn parse_track_rows(path: &Path) -> Result<Vec<TrackRow>> {
    let text = read_to_string(path)?;
    let lines = split_lines(&text);
    let mut it = lines.iter().enumerate();
    match it.next() {
        Some((_, first)) if *first == TRACK_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {TRACK_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (idx, raw) in it {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 11 fields, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid frame {:?}", fields[0])))?;
        let track_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid track_id {:?}", fields[1])))?;
        let class = fields[2].to_string();
        let x = parse_num(path, line, "x", fields[3])?;
        let y = parse_num(path, line, "y", fields[4])?;
        let z = parse_num(path, line, "z", fields[5])?;
        let w = parse_num(path, line, "w", fields[6])?;
        let l = parse_num(path, line, "l", fields[7])?;
        let h = parse_num(path, line, "h", fields[8])?;
        let theta = parse_num(path, line, "theta", fields[9])?;
        let score = parse_num(path, line, "score", fields[10])?;
        out.push(TrackRow {
            frame,
            track_id,
            class,
            box3d: Box3D::new(Vector3::new(x, y, z), w, l, h, theta),
            score,
        });
    }
    Ok(out)
}

pub fn serialize_track_rows(rows: &[TrackRow]) -> String {
    let mut s = String::from(TRACK_HEADER);
    s.push('\n');
    for r in rows {
        let b = &r.box3d;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.frame,
            r.track_id,
            r.class,
            b.center.x,
            b.center.y,
            b.center.z,
            b.width,
            b.length,
            b.height,
            b.heading,
            r.score
        ));
    }
    s
}

pub fn write_track_rows(path: &Path, rows: &[TrackRow]) -> Result<()> {
    fs::write(path, serialize_track_rows(rows)).map_err(|e| Error::io(path, e))
}

/// One matched (or ground-truth) image-plane box. Ground-truth files reuse
/// the same schema with object ids in the track_id column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub query_id: String,
    pub frame: u64,
    pub track_id: u64,
    pub rect: Rect2D,
}

pub fn parse_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = read_to_string(path)?;
    let lines = split_lines(&text);
    let mut it = lines.iter().enumerate();
    match it.next() {
        Some((_, first)) if *first == RESULT_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {RESULT_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (idx, raw) in it {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let query_id = fields[0].to_string();
        let frame: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid frame {:?}", fields[1])))?;
        let track_id: u64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid track_id {:?}", fields[2])))?;
        let x1 = parse_num(path, line, "x1", fields[3])?;
        let y1 = parse_num(path, line, "y1", fields[4])?;
        let x2 = parse_num(path, line, "x2", fields[5])?;
        let y2 = parse_num(path, line, "y2", fields[6])?;
        let rect = Rect2D::try_new(x1, y1, x2, y2)
            .ok_or_else(|| Error::parse(path, line, "inverted or non-finite rectangle"))?;
        out.push(ResultRow {
            query_id,
            frame,
            track_id,
            rect,
        });
    }
    Ok(out)
}

pub fn serialize_result_rows(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.query_id, r.frame, r.track_id, r.rect.x_min, r.rect.y_min, r.rect.x_max, r.rect.y_max
        ));
    }
    s
}

pub fn write_result_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    fs::write(path, serialize_result_rows(rows)).map_err(|e| Error::io(path, e))
}

/// One ground-truth object state per frame, world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBoxRow {
    pub frame: u64,
    pub object_id: u64,
    pub class: String,
    pub box3d: Box3D,
}

pub fn parse_gt_boxes(path: &Path) -> Result<Vec<GtBoxRow>> {
    let text = read_to_string(path)?;
    let lines = split_lines(&text);
    let mut it = lines.iter().enumerate();
    match it.next() {
        Some((_, first)) if *first == GT_BOX_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {GT_BOX_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (idx, raw) in it {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 10 fields, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid frame {:?}", fields[0])))?;
        let object_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid object_id {:?}", fields[1])))?;
        let class = fields[2].to_string();
        let x = parse_num(path, line, "x", fields[3])?;
        let y = parse_num(path, line, "y", fields[4])?;
        let z = parse_num(path, line, "z", fields[5])?;
        let w = parse_num(path, line, "w", fields[6])?;
        let l = parse_num(path, line, "l", fields[7])?;
        let h = parse_num(path, line, "h", fields[8])?;
        let theta = parse_num(path, line, "theta", fields[9])?;
        out.push(GtBoxRow {
            frame,
            object_id,
            class,
            box3d: Box3D::new(Vector3::new(x, y, z), w, l, h, theta),
        });
    }
    Ok(out)
}

pub fn serialize_gt_boxes(rows: &[GtBoxRow]) -> String {
    let mut s = String::from(GT_BOX_HEADER);
    s.push('\n');
    for r in rows {
        let b = &r.box3d;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.frame,
            r.object_id,
            r.class,
            b.center.x,
            b.center.y,
            b.center.z,
            b.width,
            b.length,
            b.height,
            b.heading
        ));
    }
    s
}

pub fn write_gt_boxes(path: &Path, rows: &[GtBoxRow]) -> Result<()> {
    fs::write(path, serialize_gt_boxes(rows)).map_err(|e| Error::io(path, e))
}
