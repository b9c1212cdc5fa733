use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{rms, Pose, Trajectory};

use super::{kf_step, riccati_steady_state, ConstantVelocity, GaussianSampler, KalmanState, SteadyState};

pub const BOUND_CSV_HEADER: &str = "timestamp_s,kf_err_m,ml_err_m,kf_steady_std_m";

/// Timestamps of compared trajectories must agree this closely, in seconds.
const ALIGN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub timestamp: f64,
    pub kf_err: f64,
    pub ml_err: f64,
    /// Steady-state standard deviation of the filtered position error norm,
    /// `sqrt(trace P_pos)`.
    pub kf_steady_std: f64,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Filtered positions, carrying the ground-truth orientation.
    pub kf_estimates: Trajectory,
    pub steady: SteadyState,
    pub kf_rmse: f64,
    pub ml_rmse: f64,
    pub meas_sigma: f64,
}

impl BoundReport {
    /// Per-axis steady-state position standard deviations.
    pub fn position_std(&self) -> Vec<f64> {
        let d = self.steady.filtered.nrows() / 2;
        self.steady.filtered_std().iter().take(d).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{BOUND_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.timestamp, r.kf_err, r.ml_err, r.kf_steady_std);
        }
        out
    }

    pub fn summary(&self) -> String {
        let diag: Vec<String> = self
            .steady
            .filtered
            .diagonal()
            .iter()
            .map(|v| format!("{v:.6e}"))
            .collect();
        let std: Vec<String> = self.position_std().iter().map(|v| format!("{v:.6}")).collect();
        let steady_norm = self.rows.first().map_or(f64::NAN, |r| r.kf_steady_std);
        let mut out = String::new();
        let _ = writeln!(out, "measurement_sigma_m = {}", self.meas_sigma);
        let _ = writeln!(out, "riccati_iterations = {}", self.steady.iterations);
        let _ = writeln!(out, "steady_filtered_p_diag = {}", diag.join(","));
        let _ = writeln!(out, "steady_position_std_m = {}", std.join(","));
        let _ = writeln!(out, "steady_position_error_std_m = {steady_norm:.6}");
        let _ = writeln!(out, "kf_rmse_m = {:.6}", self.kf_rmse);
        let _ = writeln!(out, "ml_rmse_m = {:.6}", self.ml_rmse);
        let _ = writeln!(out, "ml_over_bound = {:.3}", self.ml_rmse / steady_norm);
        out
    }
}

fn check_aligned(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("{} ground-truth poses against {} estimates", a.len(), b.len())));
    }
    for (p, q) in a.poses().iter().zip(b.poses()) {
        if (p.timestamp - q.timestamp).abs() > ALIGN_TOL {
            return Err(Error::Misaligned(format!("ground truth at {} s, estimate at {} s", p.timestamp, q.timestamp)));
        }
    }
    Ok(())
}

/// Filters noisy position fixes of `truth` with the constant-velocity model
/// `cv` and sets the filter's error next to the error of `ml`.
///
/// Fixes are the true positions plus `N(0, cv.meas_sigma^2)` noise drawn
/// from `seed`; the filter starts at the first fix with zero velocity.
pub fn bound_report(cv: &ConstantVelocity, truth: &Trajectory, ml: &Trajectory, seed: u64) -> Result<BoundReport> {
    if truth.len() < 2 {
        return Err(Error::EmptyInput("bound report needs at least two poses"));
    }
    check_aligned(truth, ml)?;
    if cv.axes != 3 {
        return Err(Error::InvalidSpec(format!("bound report filters 3 axes, got {}", cv.axes)));
    }
    for w in truth.poses().windows(2) {
        let dt = w[1].timestamp - w[0].timestamp;
        if (dt - cv.dt).abs() > ALIGN_TOL {
            return Err(Error::Misaligned(format!(
                "step of {dt} s at {} s, filter runs at {} s",
                w[0].timestamp, cv.dt
            )));
        }
    }
    let model = cv.model()?;
    let steady = riccati_steady_state(&model, 1e-12, 100_000)?;
    let steady_norm = steady.filtered.diagonal().rows(0, 3).sum().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = GaussianSampler::new(model.r());
    let fix = |p: &Pose, rng: &mut ChaCha8Rng| -> DVector<f64> {
        DVector::from_column_slice(p.position.as_slice()) + noise.sample(rng)
    };
    let first = &truth.poses()[0];
    let y0 = fix(first, &mut rng);
    let mut x0 = DVector::zeros(6);
    x0.rows_mut(0, 3).copy_from(&y0);
    let mut p0 = DMatrix::zeros(6, 6);
    for i in 0..3 {
        p0[(i, i)] = cv.meas_sigma.powi(2);
        p0[(i + 3, i + 3)] = 1.0;
    }
    let mut state = KalmanState::new(&model, x0, p0)?;

    let mut rows = Vec::with_capacity(truth.len());
    let mut estimates = Vec::with_capacity(truth.len());
    for (i, (t, m)) in truth.poses().iter().zip(ml.poses()).enumerate() {
        if i > 0 {
            let y = fix(t, &mut rng);
            state = kf_step(&model, &state, &y)?;
        }
        let mut est = *t;
        est.position = crate::geometry::Vec3::new(state.mean[0], state.mean[1], state.mean[2]);
        rows.push(BoundRow {
            timestamp: t.timestamp,
            kf_err: (est.position - t.position).norm(),
            ml_err: (m.position - t.position).norm(),
            kf_steady_std: steady_norm,
        });
        estimates.push(est);
    }
    let kf: Vec<f64> = rows.iter().map(|r| r.kf_err).collect();
    let mlv: Vec<f64> = rows.iter().map(|r| r.ml_err).collect();
    Ok(BoundReport {
        kf_rmse: rms(&kf)?,
        ml_rmse: rms(&mlv)?,
        kf_estimates: Trajectory::from_poses(estimates)?,
        rows,
        steady,
        meas_sigma: cv.meas_sigma,
    })
}
