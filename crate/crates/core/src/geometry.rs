//! Shared geometric vocabulary: rigid ego poses, oriented 3D boxes, pinhole
//! projection to the image plane, and the two scalar measures the rest of the
//! pipeline is built on (axis-aligned IoU in the image, center distance in
//! the ground plane).
//!
//! Conventions are fixed once here: the ego frame is x forward, y left,
//! z up; headings are yaw about z in radians, normalized to (-pi, pi];
//! at heading 0 a box's length extends along +x and its width along +y.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

/// Depth below this counts as behind the camera plane.
const DEPTH_EPS: f64 = 1e-9;

/// Wrap an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let x = (a + std::f64::consts::PI).rem_euclid(two_pi);
    if x == 0.0 {
        std::f64::consts::PI
    } else {
        x - std::f64::consts::PI
    }
}

/// Signed smallest difference a - b, wrapped to (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Rotation about +z by `yaw`.
pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rigid transform taking ego-frame points to the world frame:
/// `p_world = R * p_ego + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidPose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        RigidPose::new(yaw_rotation(yaw), translation)
    }

    pub fn ego_to_world(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_ego(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Heading is carried as a direction vector through the rotation, so the
    /// result is exact for yaw-only poses and well defined for general ones.
    pub fn heading_ego_to_world(&self, theta: f64) -> f64 {
        let d = self.rotation * Vector3::new(theta.cos(), theta.sin(), 0.0);
        normalize_angle(d.y.atan2(d.x))
    }

    pub fn heading_world_to_ego(&self, theta: f64) -> f64 {
        let d = self.rotation.transpose() * Vector3::new(theta.cos(), theta.sin(), 0.0);
        normalize_angle(d.y.atan2(d.x))
    }
}

/// Oriented box: center, (width, length, height), heading. Width spans y at
/// heading zero, length spans x, height spans z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: Vector3<f64>,
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub heading: f64,
}

impl Box3D {
    pub fn new(center: Vector3<f64>, width: f64, length: f64, height: f64, heading: f64) -> Self {
        Box3D {
            center,
            width,
            length,
            height,
            heading: normalize_angle(heading),
        }
    }

    /// The 8 corners in the box's own frame of reference.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (s, c) = self.heading.sin_cos();
        let fwd = Vector3::new(c, s, 0.0) * (self.length / 2.0);
        let left = Vector3::new(-s, c, 0.0) * (self.width / 2.0);
        let up = Vector3::new(0.0, 0.0, self.height / 2.0);
        let mut out = [Vector3::zeros(); 8];
        let mut i = 0;
        for sf in [-1.0, 1.0] {
            for sl in [-1.0, 1.0] {
                for su in [-1.0, 1.0] {
                    out[i] = self.center + fwd * sf + left * sl + up * su;
                    i += 1;
                }
            }
        }
        out
    }

    pub fn to_ego(&self, pose: &RigidPose) -> Box3D {
        Box3D {
            center: pose.world_to_ego(self.center),
            heading: pose.heading_world_to_ego(self.heading),
            ..*self
        }
    }

    pub fn to_world(&self, pose: &RigidPose) -> Box3D {
        Box3D {
            center: pose.ego_to_world(self.center),
            heading: pose.heading_ego_to_world(self.heading),
            ..*self
        }
    }
}

/// Distance between box centers in the ground plane; z is ignored.
pub fn bev_distance(a: &Box3D, b: &Box3D) -> f64 {
    let dx = a.center.x - b.center.x;
    let dy = a.center.y - b.center.y;
    (dx * dx + dy * dy).sqrt()
}

/// Axis-aligned rectangle in pixel coordinates. Degenerate (zero-area)
/// rectangles are allowed; inverted ones are not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect2D {
    pub fn try_new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Rect2D> {
        let r = Rect2D {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        let ok = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite())
            && x_min <= x_max
            && y_min <= y_max;
        ok.then_some(r)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Intersection-over-union of two axis-aligned rectangles. Defined as 0 when
/// the union has zero area, so two coincident degenerate rects score 0, and
/// identical rects with positive area score exactly 1.
pub fn iou_2d(a: &Rect2D, b: &Rect2D) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Pinhole (or affine) camera: a 3x4 matrix taking homogeneous 3D points in
/// the camera's source frame to homogeneous pixels, plus the image bounds
/// used for clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraProjection {
    pub matrix: Matrix3x4<f64>,
    pub width: f64,
    pub height: f64,
}

impl CameraProjection {
    pub fn new(matrix: Matrix3x4<f64>, width: f64, height: f64) -> Self {
        CameraProjection {
            matrix,
            width,
            height,
        }
    }

    /// Standard pinhole with focal length `f` and principal point (cx, cy),
    /// depth along +z.
    pub fn pinhole(f: f64, cx: f64, cy: f64, width: f64, height: f64) -> Self {
        let m = Matrix3x4::from_rows(&[
            [f, 0.0, cx, 0.0].into(),
            [0.0, f, cy, 0.0].into(),
            [0.0, 0.0, 1.0, 0.0].into(),
        ]);
        CameraProjection::new(m, width, height)
    }

    pub fn project_point(&self, p: Vector3<f64>) -> Option<(f64, f64)> {
        let h = self.matrix * Vector4::new(p.x, p.y, p.z, 1.0);
        if h.z <= DEPTH_EPS {
            return None;
        }
        Some((h.x / h.z, h.y / h.z))
    }
}

/// Project a box to the axis-aligned pixel hull of its visible corners,
/// clipped to the image. Returns None when every corner is behind the camera
/// or the hull misses the image entirely (a zero-measure touch of the border
/// counts as a miss).
pub fn project_box(b: &Box3D, cam: &CameraProjection) -> Option<Rect2D> {
    let mut x_min = f64::INFINITY;
    let mut y_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut any = false;
    for c in b.corners() {
        if let Some((u, v)) = cam.project_point(c) {
            x_min = x_min.min(u);
            y_min = y_min.min(v);
            x_max = x_max.max(u);
            y_max = y_max.max(v);
            any = true;
        }
    }
    if !any {
        return None;
    }
    if x_max <= 0.0 || y_max <= 0.0 || x_min >= cam.width || y_min >= cam.height {
        return None;
    }
    Rect2D::try_new(
        x_min.max(0.0),
        y_min.max(0.0),
        x_max.min(cam.width),
        y_max.min(cam.height),
    )
}
