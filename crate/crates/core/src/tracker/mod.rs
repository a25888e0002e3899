//! Tracking-by-detection with confidence-guided two-stage association.
//!
//! Per frame: predict every live track, then associate in two rounds —
//! high-confidence detections against confirmed tracks first, everything
//! left against the remaining tracks second — using ground-plane center
//! distance, gated per class, with class labels required to agree. Matched
//! tracks update their filters; unmatched detections spawn tentative tracks;
//! a tentative track is promoted after `n_hit` consecutive hits and dies the
//! moment it misses; a confirmed track survives up to `n_miss` missed frames
//! (re-identifiable by the second stage while it coasts) and is dead after
//! that. Dead tracks are kept read-only for audit, never re-associated.

mod assignment;
mod kalman;

pub use assignment::{greedy_assignment, min_cost_assignment, AssignmentResult, FORBIDDEN};
pub use kalman::{rts_smooth, KalmanState, NoiseParams, MEAS_DIM, STATE_DIM};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{bev_distance, Box3D};
use crate::ingest::Detection3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Association gate in meters, per class; `gate_default` covers classes
    /// not listed.
    pub gates: BTreeMap<String, f64>,
    pub gate_default: f64,
    /// Detections at or above this confidence go to the first association
    /// stage.
    pub confidence_high: f64,
    /// Consecutive hits needed to promote a tentative track.
    pub n_hit: u32,
    /// Missed frames a confirmed track survives.
    pub n_miss: u32,
    pub noise: NoiseParams,
    /// Per-class noise overrides.
    pub class_noise: BTreeMap<String, NoiseParams>,
    pub assignment: AssignmentMode,
    /// Smooth each finished trajectory with an RTS backward pass before it is
    /// written out. Only affects batch output; live stepping stays causal.
    pub smooth: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let mut gates = BTreeMap::new();
        gates.insert("car".to_string(), 2.0);
        gates.insert("pedestrian".to_string(), 1.0);
        TrackerConfig {
            gates,
            gate_default: 2.0,
            confidence_high: 0.5,
            n_hit: 2,
            n_miss: 3,
            noise: NoiseParams::default(),
            class_noise: BTreeMap::new(),
            assignment: AssignmentMode::Exact,
            smooth: false,
        }
    }
}

impl TrackerConfig {
    pub fn gate_for(&self, class: &str) -> f64 {
        self.gates.get(class).copied().unwrap_or(self.gate_default)
    }

    pub fn noise_for(&self, class: &str) -> &NoiseParams {
        self.class_noise.get(class).unwrap_or(&self.noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub class: String,
    pub state: KalmanState,
    pub status: TrackStatus,
    pub hits: u32,
    pub time_since_update: u32,
    /// Running average of associated detection confidences.
    pub confidence: f64,
    observations: u32,
    /// (frame, world-frame box, confidence) for every frame the track was
    /// alive; frames strictly increasing, first entry is the spawn frame.
    pub history: Vec<(u64, Box3D, f64)>,
    /// Filtered state snapshot per history entry.
    states: Vec<KalmanState>,
    /// Whether the matching history entry had a measurement update.
    updated: Vec<bool>,
    promoted: bool,
}

impl Track {
    fn new(id: u64, frame_hint: u64, det: &Detection3D, noise: &NoiseParams) -> Self {
        let _ = frame_hint;
        Track {
            id,
            class: det.class.clone(),
            state: KalmanState::from_box(&det.box3d, noise),
            status: TrackStatus::Tentative,
            hits: 1,
            time_since_update: 0,
            confidence: det.score,
            observations: 1,
            history: Vec::new(),
            states: Vec::new(),
            updated: Vec::new(),
            promoted: false,
        }
    }

    fn absorb(&mut self, det: &Detection3D, noise: &NoiseParams) {
        self.state.update(&det.box3d, noise);
        self.hits += 1;
        self.time_since_update = 0;
        self.observations += 1;
        self.confidence += (det.score - self.confidence) / self.observations as f64;
    }

    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Dead
    }

    /// True once the track has ever been promoted to confirmed, even if it
    /// has died since.
    pub fn ever_confirmed(&self) -> bool {
        self.promoted
    }

    /// The trajectory as it should be reported after a batch run. A dead
    /// track's trailing coast frames are speculation that no measurement ever
    /// backed, so they are trimmed to the last measured frame; a track still
    /// alive keeps its (short) coasting tail. With `smooth` the filtered
    /// states are replaced by an RTS backward pass.
    pub fn trajectory(&self, noise: &NoiseParams, smooth: bool) -> Vec<(u64, Box3D, f64)> {
        let end = if self.status == TrackStatus::Dead {
            match self.updated.iter().rposition(|&u| u) {
                Some(i) => i,
                None => return Vec::new(),
            }
        } else if self.history.is_empty() {
            return Vec::new();
        } else {
            self.history.len() - 1
        };
        let hist = &self.history[..=end];
        if !smooth {
            return hist.to_vec();
        }
        let smoothed = rts_smooth(&self.states[..=end], noise);
        hist.iter()
            .zip(&smoothed)
            .map(|(&(f, _, c), s)| (f, s.to_box(), c))
            .collect()
    }
}

/// One gated association round between already-predicted track boxes and
/// detections. Cost is ground-plane center distance; pairs with mismatched
/// classes or distance above the class gate are infeasible.
pub fn associate(
    tracks: &[(&Box3D, &str)],
    detections: &[(&Box3D, &str)],
    cfg: &TrackerConfig,
) -> AssignmentResult {
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|(tb, tc)| {
            detections
                .iter()
                .map(|(db, dc)| {
                    if tc != dc {
                        return FORBIDDEN;
                    }
                    let d = bev_distance(tb, db);
                    if d <= cfg.gate_for(dc) {
                        d
                    } else {
                        FORBIDDEN
                    }
                })
                .collect()
        })
        .collect();
    match cfg.assignment {
        AssignmentMode::Exact => min_cost_assignment(&cost),
        AssignmentMode::Greedy => greedy_assignment(&cost),
    }
}

#[derive(Debug, Default)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    /// All tracks ever created, dead ones included (read-only audit trail).
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advance one frame with that frame's detections in the world frame.
    /// Returns the live confirmed tracks as (id, world box, confidence),
    /// sorted by id. Frames must strictly increase; a frame with no
    /// detections still ages every track.
    pub fn step(
        &mut self,
        frame: u64,
        detections: &[Detection3D],
    ) -> Result<Vec<(u64, Box3D, f64)>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::Invalid(format!(
                    "tracker stepped with frame {frame} after frame {last}"
                )));
            }
        }
        self.last_frame = Some(frame);

        let first_frame = self.tracks.is_empty();
        if !first_frame {
            for t in self.tracks.iter_mut().filter(|t| t.is_alive()) {
                let noise = self.cfg.class_noise.get(&t.class).unwrap_or(&self.cfg.noise);
                t.state.predict(noise);
                t.time_since_update += 1;
            }
        }

        let (high, low): (Vec<usize>, Vec<usize>) = (0..detections.len())
            .partition(|&i| detections[i].score >= self.cfg.confidence_high);

        // Stage 1: high-confidence detections vs confirmed tracks.
        let confirmed: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].is_alive() && self.tracks[i].status == TrackStatus::Confirmed)
            .collect();
        let stage1 = self.run_stage(&confirmed, &high, detections);
        let mut matched_tracks: Vec<(usize, usize)> = stage1.clone();

        // Stage 2: everything left vs tentative plus still-unmatched
        // confirmed tracks (this is where a coasting confirmed track can be
        // re-identified).
        let matched_t: std::collections::BTreeSet<usize> =
            stage1.iter().map(|&(t, _)| t).collect();
        let matched_d: std::collections::BTreeSet<usize> =
            stage1.iter().map(|&(_, d)| d).collect();
        let stage2_tracks: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| {
                self.tracks[i].is_alive()
                    && (self.tracks[i].status == TrackStatus::Tentative || !matched_t.contains(&i))
            })
            .collect();
        let stage2_dets: Vec<usize> = high
            .iter()
            .copied()
            .filter(|d| !matched_d.contains(d))
            .chain(low.iter().copied())
            .collect();
        matched_tracks.extend(self.run_stage(&stage2_tracks, &stage2_dets, detections));

        // Updates.
        let mut det_used = vec![false; detections.len()];
        for &(ti, di) in &matched_tracks {
            det_used[di] = true;
            let noise = *self
                .cfg
                .class_noise
                .get(&self.tracks[ti].class)
                .unwrap_or(&self.cfg.noise);
            self.tracks[ti].absorb(&detections[di], &noise);
            if self.tracks[ti].status == TrackStatus::Tentative
                && self.tracks[ti].hits >= self.cfg.n_hit
            {
                self.tracks[ti].status = TrackStatus::Confirmed;
                self.tracks[ti].promoted = true;
            }
        }

        // Lifecycle for the unmatched.
        let matched_t: std::collections::BTreeSet<usize> =
            matched_tracks.iter().map(|&(t, _)| t).collect();
        for (i, t) in self.tracks.iter_mut().enumerate() {
            if !t.is_alive() || matched_t.contains(&i) {
                continue;
            }
            match t.status {
                TrackStatus::Tentative => t.status = TrackStatus::Dead,
                TrackStatus::Confirmed if t.time_since_update > self.cfg.n_miss => {
                    t.status = TrackStatus::Dead
                }
                _ => {}
            }
        }

        // Spawn tentative tracks from leftover detections.
        for (di, det) in detections.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let noise = *self.cfg.class_noise.get(&det.class).unwrap_or(&self.cfg.noise);
            let mut t = Track::new(self.next_id, frame, det, &noise);
            self.next_id += 1;
            if t.hits >= self.cfg.n_hit {
                t.status = TrackStatus::Confirmed;
                t.promoted = true;
            }
            self.tracks.push(t);
        }

        // Record history and collect output.
        let mut out = Vec::new();
        for t in self.tracks.iter_mut().filter(|t| t.is_alive()) {
            let b = t.state.to_box();
            t.history.push((frame, b, t.confidence));
            t.states.push(t.state.clone());
            t.updated.push(t.time_since_update == 0);
            if t.status == TrackStatus::Confirmed {
                out.push((t.id, b, t.confidence));
            }
        }
        out.sort_by_key(|&(id, _, _)| id);
        Ok(out)
    }

    fn run_stage(
        &self,
        track_idx: &[usize],
        det_idx: &[usize],
        detections: &[Detection3D],
    ) -> Vec<(usize, usize)> {
        if track_idx.is_empty() || det_idx.is_empty() {
            return Vec::new();
        }
        let boxes: Vec<Box3D> = track_idx
            .iter()
            .map(|&i| self.tracks[i].state.to_box())
            .collect();
        let tracks: Vec<(&Box3D, &str)> = track_idx
            .iter()
            .zip(&boxes)
            .map(|(&i, b)| (b, self.tracks[i].class.as_str()))
            .collect();
        let dets: Vec<(&Box3D, &str)> = det_idx
            .iter()
            .map(|&i| (&detections[i].box3d, detections[i].class.as_str()))
            .collect();
        associate(&tracks, &dets, &self.cfg)
            .matches
            .into_iter()
            .map(|(ti, di)| (track_idx[ti], det_idx[di]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn det(class: &str, x: f64, y: f64, score: f64) -> Detection3D {
        Detection3D {
            frame: 0,
            class: class.to_string(),
            box3d: Box3D::new(Vector3::new(x, y, 0.0), 1.8, 4.2, 1.5, 0.0),
            score,
        }
    }

    #[test]
    fn single_object_confirms_on_second_hit_and_keeps_id() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let mut confirmed_frames = Vec::new();
        for f in 1..=10u64 {
            let out = tr
                .step(f, &[det("car", 10.0 + 0.5 * f as f64, 2.0, 0.9)])
                .unwrap();
            if !out.is_empty() {
                confirmed_frames.push(f);
                assert_eq!(out.len(), 1);
                assert_eq!(out[0].0, 1);
            }
        }
        assert_eq!(confirmed_frames, (2..=10).collect::<Vec<_>>());
    }

    #[test]
    fn track_dies_after_grace_and_new_id_spawns() {
        let cfg = TrackerConfig::default();
        let n_miss = cfg.n_miss as u64;
        let mut tr = Tracker::new(cfg);
        for f in 1..=3u64 {
            tr.step(f, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        }
        // Miss n_miss + 1 frames: the track coasts through the grace window,
        // then dies.
        for f in 4..=(3 + n_miss + 1) {
            let out = tr.step(f, &[]).unwrap();
            if f <= 3 + n_miss {
                assert_eq!(out.len(), 1, "frame {f} should still coast");
            } else {
                assert!(out.is_empty(), "frame {f} should be dead");
            }
        }
        // A nearby detection afterwards spawns a fresh id.
        let f0 = 3 + n_miss + 2;
        tr.step(f0, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        let out = tr.step(f0 + 1, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 2);
    }

    #[test]
    fn reidentifies_within_grace_keeping_id() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for f in 1..=3u64 {
            tr.step(f, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        }
        tr.step(4, &[]).unwrap();
        tr.step(5, &[]).unwrap();
        let out = tr.step(6, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 1, "coasting track should be re-identified");
    }

    #[test]
    fn class_mismatch_never_associates() {
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(1, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        tr.step(2, &[det("car", 5.0, 0.0, 0.9)]).unwrap();
        // A pedestrian detection right on top of the car track must spawn its
        // own track, not update the car.
        tr.step(3, &[det("pedestrian", 5.0, 0.0, 0.9)]).unwrap();
        let ids: Vec<(u64, &str)> = tr
            .tracks()
            .iter()
            .map(|t| (t.id, t.class.as_str()))
            .collect();
        assert_eq!(ids, vec![(1, "car"), (2, "pedestrian")]);
    }

    #[test]
    fn out_of_gate_detection_spawns_new_track() {
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(1, &[det("car", 0.0, 0.0, 0.9)]).unwrap();
        tr.step(2, &[det("car", 0.0, 0.0, 0.9)]).unwrap();
        tr.step(3, &[det("car", 10.0, 0.0, 0.9)]).unwrap();
        assert_eq!(tr.tracks().len(), 2);
    }

    #[test]
    fn high_confidence_detection_wins_stage_one() {
        // Two detections near one confirmed track; the low-confidence one is
        // closer but only enters the second stage, so the track takes the
        // high-confidence detection.
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(1, &[det("car", 0.0, 0.0, 0.9)]).unwrap();
        tr.step(2, &[det("car", 0.0, 0.0, 0.9)]).unwrap();
        tr.step(3, &[det("car", 0.3, 0.0, 0.4), det("car", 0.5, 0.0, 0.9)])
            .unwrap();
        let car = &tr.tracks()[0];
        assert!(car.state.to_box().center.x > 0.1, "took the far high-conf det");
        // The low-confidence detection spawned a tentative track.
        assert_eq!(tr.tracks().len(), 2);
        assert_eq!(tr.tracks()[1].status, TrackStatus::Tentative);
    }

    #[test]
    fn exact_assignment_resolves_cross_ambiguity() {
        let cfg = TrackerConfig::default();
        let a = Box3D::new(Vector3::new(0.0, 0.0, 0.0), 1.8, 4.2, 1.5, 0.0);
        let b = Box3D::new(Vector3::new(0.0, 1.2, 0.0), 1.8, 4.2, 1.5, 0.0);
        let da = Box3D::new(Vector3::new(1.0, 0.0, 0.0), 1.8, 4.2, 1.5, 0.0);
        let db = Box3D::new(Vector3::new(0.55, 0.3, 0.0), 1.8, 4.2, 1.5, 0.0);
        let tracks = vec![(&a, "car"), (&b, "car")];
        let dets = vec![(&da, "car"), (&db, "car")];
        let exact = associate(&tracks, &dets, &cfg);
        assert_eq!(exact.matches, vec![(0, 0), (1, 1)]);
        let mut greedy_cfg = cfg.clone();
        greedy_cfg.assignment = AssignmentMode::Greedy;
        let greedy = associate(&tracks, &dets, &greedy_cfg);
        assert_eq!(greedy.matches, vec![(0, 1), (1, 0)], "greedy swaps here");
    }

    #[test]
    fn out_of_order_frame_is_an_error() {
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(5, &[]).unwrap();
        assert!(tr.step(5, &[]).is_err());
        assert!(tr.step(4, &[]).is_err());
    }

    #[test]
    fn history_frames_strictly_increase_from_spawn() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for f in 3..=9u64 {
            tr.step(f, &[det("car", f as f64, 0.0, 0.9)]).unwrap();
        }
        let t = &tr.tracks()[0];
        let frames: Vec<u64> = t.history.iter().map(|h| h.0).collect();
        assert_eq!(frames, (3..=9).collect::<Vec<_>>());
    }

    #[test]
    fn confidence_is_running_average() {
        let mut tr = Tracker::new(TrackerConfig::default());
        tr.step(1, &[det("car", 0.0, 0.0, 0.8)]).unwrap();
        tr.step(2, &[det("car", 0.0, 0.0, 0.6)]).unwrap();
        let out = tr.step(3, &[det("car", 0.0, 0.0, 1.0)]).unwrap();
        assert!((out[0].2 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn dead_track_trajectory_drops_the_coast_tail() {
        let cfg = TrackerConfig::default();
        let noise = cfg.noise;
        let n_miss = cfg.n_miss as u64;
        let mut tr = Tracker::new(cfg);
        for f in 1..=4u64 {
            tr.step(f, &[det("car", f as f64, 0.0, 0.9)]).unwrap();
        }
        for f in 5..=(4 + n_miss + 1) {
            tr.step(f, &[]).unwrap();
        }
        let t = &tr.tracks()[0];
        assert_eq!(t.status, TrackStatus::Dead);
        assert_eq!(t.history.last().unwrap().0, 4 + n_miss);
        let traj = t.trajectory(&noise, false);
        assert_eq!(traj.last().unwrap().0, 4, "coast tail should be trimmed");
        assert_eq!(traj.len(), 4);
    }

    #[test]
    fn live_track_trajectory_keeps_its_coasting_tail() {
        let cfg = TrackerConfig::default();
        let noise = cfg.noise;
        let mut tr = Tracker::new(cfg);
        for f in 1..=3u64 {
            tr.step(f, &[det("car", f as f64, 0.0, 0.9)]).unwrap();
        }
        tr.step(4, &[]).unwrap();
        let t = &tr.tracks()[0];
        assert_eq!(t.status, TrackStatus::Confirmed);
        let traj = t.trajectory(&noise, false);
        assert_eq!(traj.last().unwrap().0, 4, "live coast frame stays");
    }

    #[test]
    fn smoothed_trajectory_keeps_frames_and_tightens_a_straight_line() {
        let cfg = TrackerConfig::default();
        let noise = cfg.noise;
        let mut tr = Tracker::new(cfg);
        // Alternating +-0.2 m zigzag around a straight path; the smoothed
        // positions must hug the line tighter than the filtered ones.
        let meas = |f: u64| 0.5 * f as f64 + if f.is_multiple_of(2) { 0.2 } else { -0.2 };
        for f in 0..20u64 {
            tr.step(f, &[det("car", meas(f), 0.0, 0.9)]).unwrap();
        }
        let t = &tr.tracks()[0];
        let filtered = t.trajectory(&noise, false);
        let smoothed = t.trajectory(&noise, true);
        assert_eq!(
            filtered.iter().map(|r| r.0).collect::<Vec<_>>(),
            smoothed.iter().map(|r| r.0).collect::<Vec<_>>()
        );
        let sse = |rows: &[(u64, Box3D, f64)]| -> f64 {
            rows.iter()
                .map(|(f, b, _)| (b.center.x - 0.5 * *f as f64).powi(2))
                .sum()
        };
        assert!(sse(&smoothed) < sse(&filtered));
    }
}
