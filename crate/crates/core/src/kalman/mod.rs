//! Linear Gaussian filtering: Kalman recursions, the Riccati difference
//! equation and its steady state, and a comparison of a learned estimator
//! against the filter's steady-state error.

mod bound;

pub use bound::{bound_report, BoundReport, BoundRow, BOUND_CSV_HEADER};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const SYMMETRY_TOL: f64 = 1e-9;

/// `x' = A x + w`, `y = H x + v` with `w ~ N(0, Q)` and `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidSpec(format!("{name} is not symmetric")));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl KalmanModel {
    pub fn new(a: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = h.nrows();
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("state and measurement dimensions"));
        }
        let dims = [
            ("A", a.shape(), (n, n)),
            ("H", h.shape(), (m, n)),
            ("Q", q.shape(), (n, n)),
            ("R", r.shape(), (m, m)),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if [&a, &h, &q, &r].iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSpec("model matrices must be finite".into()));
        }
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        if min_eigenvalue(&q) < -SYMMETRY_TOL * q.amax().max(1.0) {
            return Err(Error::InvalidSpec("Q is not positive semidefinite".into()));
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidSpec("R is not positive definite".into()));
        }
        Ok(KalmanModel { a, h, q, r })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Scalar system, handy for closed-form checks.
    pub fn scalar(a: f64, h: f64, q: f64, r: f64) -> Result<Self> {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(h), s(q), s(r))
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Gain of the most recent update; zero before the first one.
    pub gain: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(model: &KalmanModel, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = model.state_dim();
        if mean.len() != n || covariance.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "state of size {} with covariance {:?} for a {n}-state model",
                mean.len(),
                covariance.shape()
            )));
        }
        check_symmetric(&covariance, "P")?;
        Ok(KalmanState {
            mean,
            covariance,
            gain: DMatrix::zeros(n, model.measurement_dim()),
        })
    }
}

/// `K = P H^T S^-1` and `S^-1 H P` for prior covariance `p`.
fn gain_terms(model: &KalmanModel, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let hp = &model.h * p;
    let s = symmetrize(&hp * model.h.transpose() + &model.r);
    let chol = s.cholesky().ok_or(Error::Singular("innovation covariance"))?;
    let s_inv_hp = chol.solve(&hp);
    Ok((s_inv_hp.transpose(), hp))
}

/// Time update: `x = A x`, `P = A P A^T + Q`.
pub fn predict(model: &KalmanModel, state: &KalmanState) -> KalmanState {
    KalmanState {
        mean: &model.a * &state.mean,
        covariance: symmetrize(&model.a * &state.covariance * model.a.transpose() + &model.q),
        gain: state.gain.clone(),
    }
}

/// Measurement update of a predicted state.
pub fn update(model: &KalmanModel, state: &KalmanState, y: &DVector<f64>) -> Result<KalmanState> {
    if y.len() != model.measurement_dim() {
        return Err(Error::Dimension(format!(
            "measurement of size {}, model expects {}",
            y.len(),
            model.measurement_dim()
        )));
    }
    let (k, hp) = gain_terms(model, &state.covariance)?;
    let innovation = y - &model.h * &state.mean;
    let mean = &state.mean + &k * innovation;
    let covariance = symmetrize(&state.covariance - &k * hp);
    if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericFault { op: "kalman update" });
    }
    Ok(KalmanState {
        mean,
        covariance,
        gain: k,
    })
}

/// One predict-then-update cycle from the posterior at `t - 1` to the
/// posterior at `t`.
pub fn kf_step(model: &KalmanModel, state: &KalmanState, y: &DVector<f64>) -> Result<KalmanState> {
    update(model, &predict(model, state), y)
}

/// One step of `P <- A P A^T - A P H^T (H P H^T + R)^-1 H P A^T + Q`.
pub fn riccati_step(model: &KalmanModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, hp) = gain_terms(model, p)?;
    let inner = p - k * hp;
    let next = symmetrize(&model.a * inner * model.a.transpose() + &model.q);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault { op: "riccati step" });
    }
    Ok(next)
}

/// `steps` successive predicted covariances, not including `p0`.
pub fn riccati_iterate(model: &KalmanModel, p0: &DMatrix<f64>, steps: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = model.state_dim();
    if p0.shape() != (n, n) {
        return Err(Error::Dimension(format!("P0 is {:?}, expected ({n}, {n})", p0.shape())));
    }
    check_symmetric(p0, "P0")?;
    let mut out = Vec::with_capacity(steps);
    let mut p = p0.clone();
    for _ in 0..steps {
        p = riccati_step(model, &p)?;
        out.push(p.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Fixed point of the Riccati recursion: the one-step-ahead covariance.
    pub predicted: DMatrix<f64>,
    /// Covariance right after a measurement update, `(I - K H) P`.
    pub filtered: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    /// Largest absolute entry of the last change.
    pub residual: f64,
}

impl SteadyState {
    pub fn filtered_std(&self) -> DVector<f64> {
        self.filtered.diagonal().map(|v| v.max(0.0).sqrt())
    }

    pub fn predicted_std(&self) -> DVector<f64> {
        self.predicted.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Iterates the Riccati recursion from `P0 = 0`.
pub fn riccati_steady_state(model: &KalmanModel, tol: f64, max_iter: usize) -> Result<SteadyState> {
    let n = model.state_dim();
    riccati_steady_state_from(model, &DMatrix::zeros(n, n), tol, max_iter)
}

pub fn riccati_steady_state_from(
    model: &KalmanModel,
    p0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance {tol} must be positive")));
    }
    let n = model.state_dim();
    if p0.shape() != (n, n) {
        return Err(Error::Dimension(format!("P0 is {:?}, expected ({n}, {n})", p0.shape())));
    }
    let mut p = p0.clone();
    let mut residual = f64::INFINITY;
    for i in 1..=max_iter {
        let next = riccati_step(model, &p)?;
        residual = (&next - &p).amax();
        p = next;
        if residual < tol {
            let (k, hp) = gain_terms(model, &p)?;
            let filtered = symmetrize(&p - &k * hp);
            return Ok(SteadyState {
                predicted: p,
                filtered,
                gain: k,
                iterations: i,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Per-axis double integrator driven by continuous white acceleration,
/// observed through noisy positions. States are ordered
/// `[p_0 .. p_{axes-1}, v_0 .. v_{axes-1}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVelocity {
    pub dt: f64,
    /// Spectral density of the acceleration noise, m^2/s^3.
    pub accel_psd: f64,
    /// Position measurement standard deviation, m.
    pub meas_sigma: f64,
    pub axes: usize,
}

impl ConstantVelocity {
    pub fn model(&self) -> Result<KalmanModel> {
        let d = self.axes;
        if d == 0 || !(self.dt > 0.0) || !(self.accel_psd >= 0.0) || !(self.meas_sigma > 0.0) {
            return Err(Error::InvalidSpec(format!("{self:?}")));
        }
        let (dt, q) = (self.dt, self.accel_psd);
        let eye = DMatrix::<f64>::identity(d, d);
        let mut a = DMatrix::identity(2 * d, 2 * d);
        a.view_mut((0, d), (d, d)).copy_from(&(&eye * dt));
        let mut qm = DMatrix::zeros(2 * d, 2 * d);
        qm.view_mut((0, 0), (d, d)).copy_from(&(&eye * (q * dt.powi(3) / 3.0)));
        qm.view_mut((0, d), (d, d)).copy_from(&(&eye * (q * dt * dt / 2.0)));
        qm.view_mut((d, 0), (d, d)).copy_from(&(&eye * (q * dt * dt / 2.0)));
        qm.view_mut((d, d), (d, d)).copy_from(&(&eye * (q * dt)));
        let mut h = DMatrix::zeros(d, 2 * d);
        h.view_mut((0, 0), (d, d)).copy_from(&eye);
        let r = eye * self.meas_sigma.powi(2);
        KalmanModel::new(a, h, qm, r)
    }
}

/// Distance from `sensor` to `target` plus zero-mean Gaussian noise.
pub fn range_measurement(sensor: &Vec3, target: &Vec3, noise_sigma: f64, rng: &mut impl Rng) -> f64 {
    let noise = if noise_sigma > 0.0 {
        noise_sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    (sensor - target).norm() + noise
}

/// Draws from `N(0, cov)` for any symmetric positive semidefinite `cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(symmetrize(cov.clone()));
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        GaussianSampler {
            factor: eig.eigenvectors * scale,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }
}

/// Empirical against predicted filter error after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    /// Root mean square of the filtered error, per state.
    pub empirical_std: DVector<f64>,
    /// Square roots of the steady-state filtered covariance diagonal.
    pub predicted_std: DVector<f64>,
    pub samples: usize,
}

impl Consistency {
    /// Largest `|empirical / predicted - 1|` over the first `states` entries.
    pub fn worst_ratio_error(&self, states: usize) -> f64 {
        self.empirical_std
            .iter()
            .zip(self.predicted_std.iter())
            .take(states)
            .map(|(e, p)| (e / p - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Simulates `runs` independent realizations of `model` for `steps` steps
/// each, filters them, and pools the estimation errors after `burn_in`
/// steps. Run `i` is seeded with `seed + i`.
pub fn monte_carlo_consistency(
    model: &KalmanModel,
    runs: usize,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Consistency> {
    if runs == 0 || steps <= burn_in {
        return Err(Error::EmptyInput("monte carlo runs after burn-in"));
    }
    let steady = riccati_steady_state(model, 1e-12, 100_000)?;
    let n = model.state_dim();
    let p0 = DMatrix::identity(n, n);
    let init = GaussianSampler::new(&p0);
    let process = GaussianSampler::new(model.q());
    let sensor = GaussianSampler::new(model.r());
    let mut sq = DVector::zeros(n);
    let mut samples = 0;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
        let mut x = init.sample(&mut rng);
        let mut est = KalmanState::new(model, DVector::zeros(n), p0.clone())?;
        for step in 0..steps {
            x = model.a() * x + process.sample(&mut rng);
            let y = model.h() * &x + sensor.sample(&mut rng);
            est = kf_step(model, &est, &y)?;
            if step >= burn_in {
                let e = &x - &est.mean;
                sq += e.component_mul(&e);
                samples += 1;
            }
        }
    }
    Ok(Consistency {
        empirical_std: (sq / samples as f64).map(f64::sqrt),
        predicted_std: steady.filtered_std(),
        samples,
    })
}
