//! Constant-velocity Kalman filter over the 10-dim state
//! [x, y, z, theta, w, l, h, vx, vy, vz] with 7-dim box measurements
//! [x, y, z, theta, w, l, h]. One predict per frame (dt = 1). The heading
//! innovation is wrapped to (-pi, pi] so a measurement of -3.1 rad against a
//! state of +3.1 rad nudges the heading across the seam instead of spinning
//! it the long way round.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::geometry::{normalize_angle, Box3D};

pub const STATE_DIM: usize = 10;
pub const MEAS_DIM: usize = 7;

type StateVec = SVector<f64, STATE_DIM>;
type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
type MeasVec = SVector<f64, MEAS_DIM>;
type MeasMat = SMatrix<f64, MEAS_DIM, MEAS_DIM>;
type GainMat = SMatrix<f64, STATE_DIM, MEAS_DIM>;
type ObsMat = SMatrix<f64, MEAS_DIM, STATE_DIM>;

/// Standard deviations for process, measurement, and initial uncertainty.
/// All diagonal; per-class overrides are applied at the tracker level.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub process_pos: f64,
    pub process_vel: f64,
    pub process_theta: f64,
    pub process_dims: f64,
    pub meas_pos: f64,
    pub meas_theta: f64,
    pub meas_dims: f64,
    pub init_vel: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            process_pos: 1.0,
            process_vel: 1.0,
            process_theta: 0.1,
            process_dims: 0.01,
            meas_pos: 0.5,
            meas_theta: 0.1,
            meas_dims: 0.1,
            init_vel: 1.0,
        }
    }
}

impl NoiseParams {
    fn process_cov(&self) -> StateMat {
        let mut q = StateMat::zeros();
        let pp = self.process_pos * self.process_pos;
        let pv = self.process_vel * self.process_vel;
        let pt = self.process_theta * self.process_theta;
        let pd = self.process_dims * self.process_dims;
        for i in 0..3 {
            q[(i, i)] = pp;
            q[(7 + i, 7 + i)] = pv;
        }
        q[(3, 3)] = pt;
        for i in 4..7 {
            q[(i, i)] = pd;
        }
        q
    }

    fn meas_cov(&self) -> MeasMat {
        let mut r = MeasMat::zeros();
        let mp = self.meas_pos * self.meas_pos;
        let mt = self.meas_theta * self.meas_theta;
        let md = self.meas_dims * self.meas_dims;
        for i in 0..3 {
            r[(i, i)] = mp;
        }
        r[(3, 3)] = mt;
        for i in 4..7 {
            r[(i, i)] = md;
        }
        r
    }
}

fn transition() -> StateMat {
    let mut f = StateMat::identity();
    f[(0, 7)] = 1.0;
    f[(1, 8)] = 1.0;
    f[(2, 9)] = 1.0;
    f
}

fn observation() -> ObsMat {
    let mut h = ObsMat::zeros();
    for i in 0..MEAS_DIM {
        h[(i, i)] = 1.0;
    }
    h
}

fn measurement_of(b: &Box3D) -> MeasVec {
    MeasVec::from_column_slice(&[
        b.center.x, b.center.y, b.center.z, b.heading, b.width, b.length, b.height,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVec,
    pub cov: StateMat,
}

impl KalmanState {
    /// Initialize from a first detection: measured components take the
    /// measurement noise, velocities start at zero with `init_vel` spread.
    pub fn from_box(b: &Box3D, noise: &NoiseParams) -> Self {
        let z = measurement_of(b);
        let mut mean = StateVec::zeros();
        for i in 0..MEAS_DIM {
            mean[i] = z[i];
        }
        let mut cov = StateMat::zeros();
        let r = noise.meas_cov();
        for i in 0..MEAS_DIM {
            cov[(i, i)] = r[(i, i)];
        }
        let iv = noise.init_vel * noise.init_vel;
        for i in 7..STATE_DIM {
            cov[(i, i)] = iv;
        }
        KalmanState { mean, cov }
    }

    pub fn predict(&mut self, noise: &NoiseParams) {
        let f = transition();
        self.mean = f * self.mean;
        self.mean[3] = normalize_angle(self.mean[3]);
        self.cov = f * self.cov * f.transpose() + noise.process_cov();
        self.symmetrize();
    }

    pub fn update(&mut self, b: &Box3D, noise: &NoiseParams) {
        let h = observation();
        let r = noise.meas_cov();
        let mut innovation = measurement_of(b) - h * self.mean;
        innovation[3] = normalize_angle(innovation[3]);
        let s = h * self.cov * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .expect("innovation covariance is positive definite");
        let k: GainMat = self.cov * h.transpose() * s_inv;
        self.mean += k * innovation;
        self.mean[3] = normalize_angle(self.mean[3]);
        // Joseph form keeps the covariance symmetric positive semidefinite
        // even with an imperfect gain.
        let ikh = StateMat::identity() - k * h;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    /// Current box estimate. Dimensions are floored at 1 mm so a pathological
    /// update can never produce an inverted box.
    pub fn to_box(&self) -> Box3D {
        Box3D::new(
            Vector3::new(self.mean[0], self.mean[1], self.mean[2]),
            self.mean[4].max(1e-3),
            self.mean[5].max(1e-3),
            self.mean[6].max(1e-3),
            self.mean[3],
        )
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.mean[7], self.mean[8], self.mean[9])
    }
}

/// Rauch-Tung-Striebel backward pass over one track's per-frame filtered
/// states (coasted frames included, one state per frame). The last state is
/// returned unchanged; every earlier state is corrected with information from
/// the frames after it. The heading component of the correction is wrapped so
/// smoothing never drags a heading the long way around the seam.
pub fn rts_smooth(filtered: &[KalmanState], noise: &NoiseParams) -> Vec<KalmanState> {
    let mut out = filtered.to_vec();
    if filtered.len() <= 1 {
        return out;
    }
    let f = transition();
    let q = noise.process_cov();
    for k in (0..filtered.len() - 1).rev() {
        let prior_mean = f * filtered[k].mean;
        let prior_cov = f * filtered[k].cov * f.transpose() + q;
        let Some(prior_inv) = prior_cov.try_inverse() else {
            continue;
        };
        let gain = filtered[k].cov * f.transpose() * prior_inv;
        let mut residual = out[k + 1].mean - prior_mean;
        residual[3] = normalize_angle(residual[3]);
        out[k].mean = filtered[k].mean + gain * residual;
        out[k].mean[3] = normalize_angle(out[k].mean[3]);
        let cov = filtered[k].cov + gain * (out[k + 1].cov - prior_cov) * gain.transpose();
        out[k].cov = (cov + cov.transpose()) * 0.5;
    }
    out
}
