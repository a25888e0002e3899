//! Ego-centric motion descriptors. A descriptor summarizes a track's recent
//! trajectory over a trailing window of `window` frames, expressed entirely
//! in the ego frame of the current frame t0: current position, circular-mean
//! heading, straight-line distance covered, position delta, and mean
//! per-step heading change. Using the single pose at t0 for every sample in
//! the window cancels ego motion, so a parked car reads as stationary even
//! while the ego drives past it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, normalize_angle, Box3D, RigidPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionDescriptor {
    /// Current position in the ego frame at t0, meters.
    pub position: [f64; 3],
    /// Circular mean of the ego-frame headings across the window, radians.
    pub theta_bar: f64,
    /// Straight-line distance between window endpoints, meters. Equals the
    /// norm of `delta_p` by construction.
    pub d_euclid: f64,
    /// Position now minus position at the window start, ego frame.
    pub delta_p: [f64; 3],
    /// Mean wrapped per-step heading change across the window, radians per
    /// frame. Positive is a left turn.
    pub delta_theta_bar: f64,
    /// Frame span actually covered: min(window, history span), floored at 1
    /// so per-step rates stay well defined for single-sample histories.
    pub window_used: u64,
}

/// Compute a descriptor at frame `t0` from a track's history of
/// (frame, world-frame box) samples, sorted by frame. Samples inside
/// [t0 - window, t0] participate; a history that starts later than
/// t0 - window simply yields a shorter effective window. Errors if the
/// history has no sample at or before t0.
pub fn compute_descriptor(
    history: &[(u64, Box3D)],
    pose_t0: &RigidPose,
    t0: u64,
    window: u64,
) -> Result<MotionDescriptor> {
    let lo = t0.saturating_sub(window);
    let mut samples: Vec<&(u64, Box3D)> = history
        .iter()
        .filter(|(f, _)| *f >= lo && *f <= t0)
        .collect();
    if samples.is_empty() {
        // History exists only before the window start: fall back to the
        // latest sample at or before t0 so the descriptor is still defined.
        samples = history.iter().filter(|(f, _)| *f <= t0).max_by_key(|(f, _)| *f).into_iter().collect();
    }
    if samples.is_empty() {
        return Err(Error::Invalid(format!(
            "no history at or before frame {t0}"
        )));
    }

    let ego: Vec<(u64, [f64; 3], f64)> = samples
        .iter()
        .map(|(f, b)| {
            let e = b.to_ego(pose_t0);
            (*f, [e.center.x, e.center.y, e.center.z], e.heading)
        })
        .collect();
    let first = ego.first().expect("nonempty");
    let last = ego.last().expect("nonempty");

    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for (_, _, h) in &ego {
        sin_sum += h.sin();
        cos_sum += h.cos();
    }
    let theta_bar = normalize_angle(sin_sum.atan2(cos_sum));

    let mut dtheta_sum = 0.0;
    for pair in ego.windows(2) {
        dtheta_sum += angle_diff(pair[1].2, pair[0].2);
    }
    let steps = (ego.len() - 1) as f64;
    let delta_theta_bar = if steps > 0.0 { dtheta_sum / steps } else { 0.0 };

    let delta_p = [
        last.1[0] - first.1[0],
        last.1[1] - first.1[1],
        last.1[2] - first.1[2],
    ];
    let d_euclid = (delta_p[0] * delta_p[0] + delta_p[1] * delta_p[1] + delta_p[2] * delta_p[2]).sqrt();

    Ok(MotionDescriptor {
        position: last.1,
        theta_bar,
        d_euclid,
        delta_p,
        delta_theta_bar,
        window_used: (last.0 - first.0).max(1),
    })
}

/// Fixed-precision single-line rendering, stable across runs. Two decimals
/// everywhere; the distance label carries the window span it was measured
/// over.
pub fn serialize_descriptor(d: &MotionDescriptor) -> String {
    format!(
        "pos_m=[{:.2},{:.2},{:.2}] heading_rad={:.2} dist_{}f_m={:.2} dpos_m=[{:.2},{:.2},{:.2}] dheading_rad={:.2} window={}",
        d.position[0],
        d.position[1],
        d.position[2],
        d.theta_bar,
        d.window_used,
        d.d_euclid,
        d.delta_p[0],
        d.delta_p[1],
        d.delta_p[2],
        d.delta_theta_bar,
        d.window_used
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn boxed(x: f64, y: f64, theta: f64) -> Box3D {
        Box3D::new(Vector3::new(x, y, 0.0), 1.8, 4.2, 1.5, theta)
    }

    #[test]
    fn stationary_object_serializes_to_reference_string() {
        let history: Vec<(u64, Box3D)> =
            (0..6).map(|f| (f, boxed(10.0, 2.0, 0.0))).collect();
        let d = compute_descriptor(&history, &RigidPose::identity(), 5, 5).unwrap();
        assert_eq!(
            serialize_descriptor(&d),
            "pos_m=[10.00,2.00,0.00] heading_rad=0.00 dist_5f_m=0.00 dpos_m=[0.00,0.00,0.00] dheading_rad=0.00 window=5"
        );
    }

    #[test]
    fn moving_object_accumulates_distance() {
        let history: Vec<(u64, Box3D)> =
            (0..6).map(|f| (f, boxed(10.0 + 0.5 * f as f64, 2.0, 0.0))).collect();
        let d = compute_descriptor(&history, &RigidPose::identity(), 5, 5).unwrap();
        assert!((d.d_euclid - 2.5).abs() < 1e-12);
        assert!((d.delta_p[0] - 2.5).abs() < 1e-12);
        assert_eq!(d.window_used, 5);
        assert!((d.d_euclid - (d.delta_p[0].powi(2) + d.delta_p[1].powi(2) + d.delta_p[2].powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn short_history_shrinks_window() {
        let history: Vec<(u64, Box3D)> =
            (8..=10).map(|f| (f, boxed(f as f64, 0.0, 0.0))).collect();
        let d = compute_descriptor(&history, &RigidPose::identity(), 10, 5).unwrap();
        assert_eq!(d.window_used, 2);
        assert!((d.d_euclid - 2.0).abs() < 1e-12);
        assert!(serialize_descriptor(&d).contains("dist_2f_m=2.00"));
    }

    #[test]
    fn single_sample_history_is_defined() {
        let history = vec![(4u64, boxed(3.0, 1.0, 0.5))];
        let d = compute_descriptor(&history, &RigidPose::identity(), 4, 5).unwrap();
        assert_eq!(d.window_used, 1);
        assert_eq!(d.d_euclid, 0.0);
        assert_eq!(d.delta_theta_bar, 0.0);
    }

    #[test]
    fn empty_history_is_an_error() {
        let history: Vec<(u64, Box3D)> = vec![(9, boxed(0.0, 0.0, 0.0))];
        assert!(compute_descriptor(&history, &RigidPose::identity(), 5, 5).is_err());
    }

    #[test]
    fn heading_mean_wraps_at_seam() {
        // Headings of 175 and -175 degrees: the circular mean is the seam
        // itself, and the per-step change is +10 degrees, not -350.
        let history = vec![
            (0u64, boxed(0.0, 0.0, 175f64.to_radians())),
            (1u64, boxed(0.0, 0.0, -175f64.to_radians())),
        ];
        let d = compute_descriptor(&history, &RigidPose::identity(), 1, 5).unwrap();
        assert!((d.theta_bar.abs() - std::f64::consts::PI).abs() < 1e-9, "{}", d.theta_bar);
        assert!((d.delta_theta_bar - 10f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn constant_world_offset_of_poses_and_objects_cancels() {
        let history: Vec<(u64, Box3D)> =
            (0..6).map(|f| (f, boxed(4.0 + 0.3 * f as f64, -2.0, 0.1))).collect();
        let pose = RigidPose::from_yaw(0.4, Vector3::new(1.0, 2.0, 0.0));
        let base = compute_descriptor(&history, &pose, 5, 5).unwrap();

        let offset = Vector3::new(17.0, -4.0, 2.0);
        let shifted: Vec<(u64, Box3D)> = history
            .iter()
            .map(|(f, b)| {
                (*f, Box3D::new(b.center + offset, b.width, b.length, b.height, b.heading))
            })
            .collect();
        let pose_shifted = RigidPose::new(pose.rotation, pose.translation + offset);
        let moved = compute_descriptor(&shifted, &pose_shifted, 5, 5).unwrap();
        for i in 0..3 {
            assert!((base.position[i] - moved.position[i]).abs() < 1e-9);
            assert!((base.delta_p[i] - moved.delta_p[i]).abs() < 1e-9);
        }
        assert!((base.d_euclid - moved.d_euclid).abs() < 1e-9);
        assert!((base.theta_bar - moved.theta_bar).abs() < 1e-9);
    }

    #[test]
    fn history_entirely_before_window_falls_back_to_latest() {
        let history = vec![(0u64, boxed(1.0, 0.0, 0.0)), (1u64, boxed(2.0, 0.0, 0.0))];
        let d = compute_descriptor(&history, &RigidPose::identity(), 20, 5).unwrap();
        assert_eq!(d.position[0], 2.0);
        assert_eq!(d.window_used, 1);
    }
}
