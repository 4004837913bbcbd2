//! Strang-split time stepping of the Ito-form stochastic NLS with
//! blow-up-aware adaptivity.
//!
//! One step of size dt applies
//!   linear(dt/2) -> noise(dt) -> nonlinear(dt) -> linear(dt/2),
//! where the linear flow is the exact Fourier phase on periodic boxes and
//! an exactly mass-preserving Cayley/Crank-Nicolson solve on radial grids,
//! the nonlinear flow is the exact pointwise phase rotation
//! u -> u exp(-i lambda |u|^{2 sigma} dt), and the noise substep is either
//! the Euler-Maruyama injection u -> u + i dW (additive) or the exact
//! Stratonovich phase u -> u exp(-i dW) (multiplicative, real dW), which
//! already contains the Ito correction -(1/2) F_phi u dt. Both nonlinear
//! and noise substeps preserve |u| pointwise, so all mass drift comes from
//! the linear solve alone.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRow, IdentityAccumulators};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::ground_state::q_profile;
use crate::noise::{FrozenPath, Increment, NoiseKind, NoiseOperator};
use crate::rng::StepRng;

/// Time-step policy for `run`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    /// dt_k = dt0 * min(1, (g0/||grad u||)^2) clamped below by dt_min; the
    /// gradient norm grows like the inverse remaining time near collapse,
    /// so the step tracks it.
    Adaptive { dt0: f64, dt_min: f64 },
}

/// Blow-up detector thresholds. Firing time is the operational surrogate
/// for the maximal existence time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detector {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_amp_max")]
    pub amp_max: f64,
}

fn default_gamma() -> f64 {
    50.0
}

fn default_amp_max() -> f64 {
    1e8
}

impl Default for Detector {
    fn default() -> Self {
        Detector { gamma: default_gamma(), amp_max: default_amp_max() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Running,
    BlownUp { t: f64 },
    Completed,
}

/// Where the Brownian increments come from. Stream draws are keyed by
/// (seed, path, step index) and are reproducible in isolation; frozen
/// paths replay pre-drawn fine increments for refinement studies.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    Stream { seed: u64, path: u64 },
    Frozen(Arc<FrozenPath>),
}

#[derive(Debug)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub lambda: f64,
    pub noise_kind: NoiseKind,
    pub status: Status,
    pub step_index: u64,
    pub detector: Detector,
    op: Option<Arc<NoiseOperator>>,
    source: NoiseSource,
    accumulators: Option<IdentityAccumulators>,
    grad0: f64,
}

/// Exact free propagator over dt (either sign).
pub fn linear_step(u: &mut Field, dt: f64) -> Result<()> {
    if dt == 0.0 {
        return Ok(());
    }
    let grid = u.grid().clone();
    match grid.as_ref() {
        Grid::Radial(g) => g.crank_nicolson(&mut u.values, dt)?,
        Grid::PeriodicBox(g) => g.phase_step(&mut u.values, dt),
    }
    Ok(())
}

/// Exact flow of i u_t = lambda |u|^{2 sigma} u: a pointwise phase.
pub fn nonlinear_step(u: &mut Field, dt: f64, lambda: f64) {
    if dt == 0.0 {
        return;
    }
    let n = u.grid().dim().n();
    for v in u.values.iter_mut() {
        let a = v.norm_sqr();
        let strength = match n {
            3 => a * a,
            4 => a,
            _ => a.powf(2.0 / 3.0),
        };
        *v *= Complex64::from_polar(1.0, -lambda * strength * dt);
    }
}

/// Euler-Maruyama injection of the stochastic convolution increment.
pub fn additive_noise_step(u: &mut Field, delta_w: &[Complex64]) {
    for (v, w) in u.values.iter_mut().zip(delta_w) {
        *v += Complex64::new(0.0, 1.0) * w;
    }
}

/// Exact Stratonovich multiplicative step u -> u exp(-i dW); dW must be
/// real-valued, which is what keeps the mass pathwise constant.
pub fn multiplicative_noise_step(u: &mut Field, delta_w: &[Complex64]) -> Result<()> {
    if delta_w.iter().any(|w| w.im != 0.0) {
        return Err(Error::Contract(
            "multiplicative noise requires a real-valued increment".into(),
        ));
    }
    for (v, w) in u.values.iter_mut().zip(delta_w) {
        *v *= Complex64::from_polar(1.0, -w.re);
    }
    Ok(())
}

/// Deterministic initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// alpha * Q with a smooth cutoff so the field is square-integrable
    /// and vanishes at the grid boundary.
    ScaledQ {
        alpha: f64,
        cutoff: f64,
        #[serde(default)]
        taper: Option<f64>,
    },
    Custom {
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

/// Quintic smoothstep cutoff: 1 below `cutoff`, 0 above `cutoff + taper`.
fn cutoff_profile(r: f64, cutoff: f64, taper: f64) -> f64 {
    if r <= cutoff {
        1.0
    } else if r >= cutoff + taper {
        0.0
    } else {
        let s = (r - cutoff) / taper;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn make_initial(grid: &Arc<Grid>, spec: &InitialSpec) -> Result<Field> {
    match spec {
        InitialSpec::Gaussian { amplitude, width } => {
            if !(*width > 0.0) {
                return Err(Error::Config(format!("gaussian width must be positive, got {width}")));
            }
            let w2 = width * width;
            let values = (0..grid.len())
                .map(|j| Complex64::new(amplitude * (-grid.x_sq(j) / w2).exp(), 0.0))
                .collect();
            Field::from_values(grid.clone(), values)
        }
        InitialSpec::ScaledQ { alpha, cutoff, taper } => {
            let taper = taper.unwrap_or(0.15 * cutoff);
            if !(*cutoff > 0.0) || !(taper > 0.0) {
                return Err(Error::Config("scaled_q cutoff and taper must be positive".into()));
            }
            let extent = match grid.as_ref() {
                Grid::Radial(g) => g.radius(),
                // largest radius inscribed in the box
                Grid::PeriodicBox(g) => -g.coord(0),
            };
            if cutoff + taper > extent {
                return Err(Error::Config(format!(
                    "cutoff {cutoff} + taper {taper} exceeds the grid extent {extent}"
                )));
            }
            let dim = grid.dim();
            let values = (0..grid.len())
                .map(|j| {
                    let r = grid.x_sq(j).sqrt();
                    let q = q_profile(r, dim).expect("r >= 0 on grid");
                    Complex64::new(alpha * q * cutoff_profile(r, *cutoff, taper), 0.0)
                })
                .collect();
            Field::from_values(grid.clone(), values)
        }
        InitialSpec::Custom { re, im } => {
            if re.len() != grid.len() || im.len() != grid.len() {
                return Err(Error::Config(format!(
                    "custom samples have {}/{} entries, grid needs {}",
                    re.len(),
                    im.len(),
                    grid.len()
                )));
            }
            let values = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            Field::from_values(grid.clone(), values)
        }
    }
}

/// Output of a `run`: recorded diagnostics and the boundary monitor.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<DiagnosticsRow>,
    /// Largest observed fraction of mass in the outer 10% shell (radial
    /// grids only); variance diagnostics are trustworthy while this stays
    /// below ~1e-6.
    pub boundary_mass_max: f64,
    /// Suprema tracked at every accepted step, not just at record times.
    pub sup_energy: f64,
    pub sup_grad: f64,
}

impl SimState {
    pub fn new(
        u0: Field,
        lambda: f64,
        noise_kind: NoiseKind,
        op: Option<Arc<NoiseOperator>>,
        source: NoiseSource,
        detector: Detector,
    ) -> Result<Self> {
        if lambda != 1.0 && lambda != -1.0 {
            return Err(Error::Config(format!("lambda must be +1 or -1, got {lambda}")));
        }
        if noise_kind != NoiseKind::None && op.is_none() {
            return Err(Error::Config("noise requested but no operator supplied".into()));
        }
        if noise_kind == NoiseKind::MultiplicativeStratonovich {
            if let Some(op) = &op {
                if op.complexness() != crate::noise::Complexness::RealValued {
                    return Err(Error::Config(
                        "multiplicative noise requires a real-valued operator".into(),
                    ));
                }
            }
        }
        let grad0 = diagnostics::grad_norm(&u0);
        Ok(SimState {
            t: 0.0,
            u: u0,
            lambda,
            noise_kind,
            status: Status::Running,
            step_index: 0,
            detector,
            op,
            source,
            accumulators: None,
        grad0,
        })
    }

    pub fn operator(&self) -> Option<&Arc<NoiseOperator>> {
        self.op.as_ref()
    }

    pub fn initial_grad_norm(&self) -> f64 {
        self.grad0
    }

    /// Switch on the pathwise identity accumulators. Must be called at
    /// t = 0 so the stored initial values match the identities.
    pub fn enable_accumulators(&mut self) -> Result<()> {
        if self.t != 0.0 || self.step_index != 0 {
            return Err(Error::Contract("accumulators must be enabled at t = 0".into()));
        }
        self.accumulators = Some(IdentityAccumulators::new(
            &self.u,
            self.lambda,
            self.noise_kind,
            self.op.as_deref(),
        ));
        Ok(())
    }

    pub fn residuals(&self) -> Result<crate::diagnostics::ResidualSet> {
        match &self.accumulators {
            Some(acc) => Ok(acc.residuals(&self.u)),
            None => Err(Error::Contract("identity accumulators are not enabled".into())),
        }
    }

    fn draw_increment(&self, dt: f64) -> Result<Option<Increment>> {
        if self.noise_kind == NoiseKind::None {
            return Ok(None);
        }
        let op = self.op.as_ref().expect("checked at construction");
        let inc = match &self.source {
            NoiseSource::Stream { seed, path } => {
                let mut rng = StepRng::new(*seed, *path, self.step_index);
                op.sample_increment(dt, &mut rng)
            }
            NoiseSource::Frozen(fp) => {
                let ratio = dt / fp.dt_fine;
                let count = ratio.round() as usize;
                if count == 0 || (ratio - count as f64).abs() > 1e-9 {
                    return Err(Error::Contract(format!(
                        "step dt = {dt} is not an integer multiple of the frozen fine step {}",
                        fp.dt_fine
                    )));
                }
                fp.increment(op, self.step_index as usize * count, count)?
            }
        };
        Ok(Some(inc))
    }

    /// One Strang step of size dt. Advances accumulators with the same
    /// increment. dt = 0 leaves the state untouched.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if self.status != Status::Running {
            return Err(Error::Contract("step called on a finished simulation".into()));
        }
        if dt == 0.0 {
            return Ok(());
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        let inc = self.draw_increment(dt)?;
        if let Some(acc) = &mut self.accumulators {
            acc.pre_step(&self.u, inc.as_ref(), self.op.as_deref());
        }

        linear_step(&mut self.u, 0.5 * dt)?;
        match self.noise_kind {
            NoiseKind::None => {}
            NoiseKind::Additive => {
                additive_noise_step(&mut self.u, &inc.as_ref().expect("drawn above").delta_w)
            }
            NoiseKind::MultiplicativeStratonovich => {
                multiplicative_noise_step(&mut self.u, &inc.as_ref().expect("drawn above").delta_w)?
            }
        }
        nonlinear_step(&mut self.u, dt, self.lambda);
        linear_step(&mut self.u, 0.5 * dt)?;

        self.t += dt;
        self.step_index += 1;
        if let Some(acc) = &mut self.accumulators {
            acc.post_step(&self.u, dt, self.op.as_deref());
        }
        self.check_detector();
        Ok(())
    }

    fn check_detector(&mut self) {
        if !self.u.is_finite() {
            self.status = Status::BlownUp { t: self.t };
            return;
        }
        let grad = diagnostics::grad_norm(&self.u);
        let amp = self.u.sup_amp();
        let grad_fired = self.grad0 > 0.0 && grad >= self.detector.gamma * self.grad0;
        if grad_fired || amp >= self.detector.amp_max {
            self.status = Status::BlownUp { t: self.t };
        }
    }

    fn current_grad(&self) -> f64 {
        diagnostics::grad_norm(&self.u)
    }

    fn observe_row(&self, dt: f64) -> DiagnosticsRow {
        let mut row = diagnostics::observe(&self.u, self.t, self.lambda, dt);
        if let Some(acc) = &self.accumulators {
            row.residuals = Some(acc.residuals(&self.u));
        }
        row
    }

    /// Step repeatedly until t >= t_max or blow-up, recording diagnostics
    /// every `record_interval` time units (and always at start and end).
    pub fn run(&mut self, t_max: f64, policy: &DtPolicy, record_interval: f64) -> Result<RunOutput> {
        if t_max < 0.0 {
            return Err(Error::Config(format!("t_max must be >= 0, got {t_max}")));
        }
        if let (DtPolicy::Adaptive { .. }, NoiseSource::Frozen(_)) = (policy, &self.source) {
            return Err(Error::Config(
                "frozen noise paths require a fixed time step".into(),
            ));
        }
        let mut rows = Vec::new();
        let mut boundary_max: f64 = 0.0;
        let mut sup_energy = diagnostics::energy(&self.u, self.lambda);
        let mut sup_grad = self.grad0;
        let track_boundary = |state: &SimState, b: &mut f64| {
            if let Some(frac) = diagnostics::boundary_mass_fraction(&state.u) {
                *b = b.max(frac);
            }
        };

        let first_dt = match policy {
            DtPolicy::Fixed { dt } => *dt,
            DtPolicy::Adaptive { dt0, .. } => *dt0,
        };
        if !(first_dt > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        rows.push(self.observe_row(first_dt));
        track_boundary(self, &mut boundary_max);
        if t_max == 0.0 {
            self.status = Status::Completed;
            return Ok(RunOutput { rows, boundary_mass_max: boundary_max, sup_energy, sup_grad });
        }

        match policy {
            DtPolicy::Fixed { dt } => {
                let every = (record_interval / dt).round().max(1.0) as u64;
                while self.status == Status::Running && self.t < t_max - 1e-12 {
                    let dt_eff = dt.min(t_max - self.t);
                    self.step(dt_eff)?;
                    sup_energy = sup_energy.max(diagnostics::energy(&self.u, self.lambda));
                    sup_grad = sup_grad.max(self.current_grad());
                    if self.step_index % every == 0 || self.t >= t_max - 1e-12 {
                        rows.push(self.observe_row(dt_eff));
                        track_boundary(self, &mut boundary_max);
                    }
                }
            }
            DtPolicy::Adaptive { dt0, dt_min } => {
                if !(*dt_min > 0.0) || dt_min > dt0 {
                    return Err(Error::Config("adaptive policy needs 0 < dt_min <= dt0".into()));
                }
                let mut next_record = record_interval;
                while self.status == Status::Running && self.t < t_max - 1e-12 {
                    let grad = self.current_grad();
                    let shrink = if grad > self.grad0 && self.grad0 > 0.0 {
                        (self.grad0 / grad).powi(2)
                    } else {
                        1.0
                    };
                    let dt_eff = (dt0 * shrink).max(*dt_min).min(t_max - self.t);
                    self.step(dt_eff)?;
                    sup_energy = sup_energy.max(diagnostics::energy(&self.u, self.lambda));
                    sup_grad = sup_grad.max(self.current_grad());
                    if self.t >= next_record - 1e-12 || self.status != Status::Running {
                        rows.push(self.observe_row(dt_eff));
                        track_boundary(self, &mut boundary_max);
                        while next_record <= self.t {
                            next_record += record_interval;
                        }
                    }
                }
                if rows.last().map(|r| r.t) != Some(self.t) {
                    rows.push(self.observe_row(*dt0));
                }
            }
        }
        if self.status == Status::Running {
            self.status = Status::Completed;
        }
        Ok(RunOutput { rows, boundary_mass_max: boundary_max, sup_energy, sup_grad })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{energy, grad_norm, mass};
    use crate::dim::Dim;
    use crate::ground_state::ground_state_constants;
    use crate::noise::{BasisKind, Complexness, NoiseSpec};

    fn gaussian(grid: &Arc<Grid>, amp: f64, width: f64) -> Field {
        make_initial(grid, &InitialSpec::Gaussian { amplitude: amp, width }).unwrap()
    }

    fn state_no_noise(u: Field, lambda: f64) -> SimState {
        SimState::new(
            u,
            lambda,
            NoiseKind::None,
            None,
            NoiseSource::Stream { seed: 0, path: 0 },
            Detector::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_dt_is_identity() {
        let grid = Grid::radial(Dim::THREE, 12.0, 128).unwrap();
        let mut state = state_no_noise(gaussian(&grid, 1.0, 2.0), 1.0);
        let before = state.u.values.clone();
        state.step(0.0).unwrap();
        assert_eq!(state.u.values, before);
        assert_eq!(state.t, 0.0);
    }

    #[test]
    fn linear_step_preserves_mass_radial_and_box() {
        let grid = Grid::radial(Dim::FIVE, 10.0, 200).unwrap();
        let mut u = gaussian(&grid, 1.0, 1.5);
        let m0 = mass(&u);
        for _ in 0..100 {
            linear_step(&mut u, 0.01).unwrap();
        }
        assert!(((mass(&u) - m0) / m0).abs() < 1e-13);

        let grid = Grid::periodic_box(Dim::THREE, 12.0, 16).unwrap();
        let mut u = gaussian(&grid, 1.0, 1.5);
        let m0 = mass(&u);
        for _ in 0..100 {
            linear_step(&mut u, 0.01).unwrap();
        }
        assert!(((mass(&u) - m0) / m0).abs() < 1e-13);
    }

    #[test]
    fn nonlinear_step_is_phase_only() {
        let grid = Grid::radial(Dim::FOUR, 10.0, 128).unwrap();
        let mut u = gaussian(&grid, 1.3, 1.0);
        let amps_before: Vec<f64> = u.values.iter().map(|v| v.norm()).collect();
        nonlinear_step(&mut u, 0.37, 1.0);
        for (v, a) in u.values.iter().zip(amps_before) {
            assert!((v.norm() - a).abs() <= 1e-15 * a.max(1.0));
        }
    }

    #[test]
    fn homogeneous_solution_oracle_on_box() {
        // spatially constant data: the split-step solution must match the
        // exact ODE u(t) = c exp(-i lambda |c|^{2 sigma} t) to machine
        // precision because every substep is exact on constants.
        let grid = Grid::periodic_box(Dim::THREE, 10.0, 16).unwrap();
        let c = Complex64::new(0.8, 0.3);
        let u0 = Field::from_values(grid.clone(), vec![c; grid.len()]).unwrap();
        let mut state = state_no_noise(u0, 1.0);
        let dt = 0.01;
        for _ in 0..100 {
            state.step(dt).unwrap();
        }
        let sigma2 = c.norm_sqr() * c.norm_sqr(); // |c|^{4/(n-2)} with n = 3
        let exact = c * Complex64::from_polar(1.0, -sigma2 * 1.0);
        for v in &state.u.values {
            assert!((v - exact).norm() < 1e-10);
        }
    }

    #[test]
    fn additive_step_linearity_and_ito_isometry() {
        let grid = Grid::radial(Dim::THREE, 10.0, 128).unwrap();
        let u1 = gaussian(&grid, 1.0, 1.0);
        let u2 = gaussian(&grid, 0.5, 2.0);
        let spec = NoiseSpec {
            basis: BasisKind::SineRadial,
            k_modes: 8,
            decay_q: 2.0,
            epsilon: 0.5,
            complexness: Complexness::ComplexValued,
        };
        let op = NoiseOperator::build(&spec, grid.clone()).unwrap();
        let dw = op.sample_increment(0.02, &mut StepRng::new(3, 1, 0)).delta_w;

        // linearity: step(u1 + u2, dW) - step(u2, dW) = u1
        let mut a = Field::from_values(
            grid.clone(),
            u1.values.iter().zip(&u2.values).map(|(x, y)| x + y).collect(),
        )
        .unwrap();
        let mut b = u2.clone();
        additive_noise_step(&mut a, &dw);
        additive_noise_step(&mut b, &dw);
        for ((av, bv), uv) in a.values.iter().zip(&b.values).zip(&u1.values) {
            assert!((av - bv - uv).norm() < 1e-14);
        }

        // E ||u + i dW||^2 = ||u||^2 + dt ||phi||^2_{L^{0,0}} by sample mean
        let dt = 0.02;
        let m0 = mass(&u1);
        let trials = 4000;
        let mut acc = 0.0;
        for k in 0..trials {
            let inc = op.sample_increment(dt, &mut StepRng::new(77, 0, k));
            let mut v = u1.clone();
            additive_noise_step(&mut v, &inc.delta_w);
            acc += mass(&v);
        }
        acc /= trials as f64;
        let hs0_sq = op.constants().hs_norm_0.powi(2);
        let expected = m0 + dt * hs0_sq;
        // 3 standard errors, sd of each term ~ sqrt(2) dt hs0^2-ish
        let tol = 5.0 * dt * hs0_sq / (trials as f64).sqrt() + 1e-9;
        assert!((acc - expected).abs() < tol, "{acc} vs {expected}");
    }

    #[test]
    fn multiplicative_step_is_exact_phase() {
        let grid = Grid::radial(Dim::THREE, 10.0, 128).unwrap();
        let mut u = gaussian(&grid, 1.0, 1.0);
        let constant = vec![Complex64::new(0.7, 0.0); grid.len()];
        let before = u.clone();
        multiplicative_noise_step(&mut u, &constant).unwrap();
        let rot = Complex64::from_polar(1.0, -0.7);
        for (v, b) in u.values.iter().zip(&before.values) {
            assert!((v - rot * b).norm() < 1e-15);
        }
        // complex increment is a contract violation
        let bad = vec![Complex64::new(0.0, 0.1); grid.len()];
        assert!(multiplicative_noise_step(&mut u, &bad).is_err());
    }

    #[test]
    fn multiplicative_mass_exactly_conserved() {
        let grid = Grid::radial(Dim::THREE, 12.0, 256).unwrap();
        let spec = NoiseSpec {
            basis: BasisKind::SineRadial,
            k_modes: 16,
            decay_q: 2.0,
            epsilon: 0.3,
            complexness: Complexness::RealValued,
        };
        let op = Arc::new(NoiseOperator::build(&spec, grid.clone()).unwrap());
        let mut state = SimState::new(
            gaussian(&grid, 1.0, 2.0),
            1.0,
            NoiseKind::MultiplicativeStratonovich,
            Some(op),
            NoiseSource::Stream { seed: 12, path: 0 },
            Detector::default(),
        )
        .unwrap();
        let m0 = mass(&state.u);
        for _ in 0..1000 {
            state.step(0.001).unwrap();
        }
        let drift = ((mass(&state.u) - m0) / m0).abs();
        assert!(drift < 1e-10, "relative mass drift {drift}");
    }

    #[test]
    fn deterministic_energy_drift_is_second_order() {
        let grid = Grid::radial(Dim::THREE, 16.0, 384).unwrap();
        let drift = |dt: f64| -> f64 {
            let mut state = state_no_noise(gaussian(&grid, 1.0, 2.0), -1.0);
            let steps = (1.0 / dt).round() as usize;
            let h0 = energy(&state.u, -1.0);
            for _ in 0..steps {
                state.step(dt).unwrap();
            }
            (energy(&state.u, -1.0) - h0).abs()
        };
        let d1 = drift(0.02);
        let d2 = drift(0.01);
        assert!(d1 / d2 > 3.0, "energy drift ratio {} (want ~4)", d1 / d2);
    }

    #[test]
    fn focusing_above_threshold_blows_up_and_gradient_grows_tenfold() {
        // The 1/r tail of Q makes truncation delicate in n = 3: a tight
        // taper stores ~1/taper of gradient energy and pushes H above H(Q).
        // cutoff 12 / taper 30 keeps H just below H(Q) at alpha = 1.2 while
        // the core still collapses fast.
        let grid = Grid::radial(Dim::THREE, 48.0, 768).unwrap();
        let gs = ground_state_constants(Dim::THREE, 1e-10).unwrap();
        let u0 = make_initial(
            &grid,
            &InitialSpec::ScaledQ { alpha: 1.2, cutoff: 12.0, taper: Some(30.0) },
        )
        .unwrap();
        // preconditions of the dichotomy: kinetic norm above, energy below
        let g0 = grad_norm(&u0);
        assert!(g0 > gs.grad_q(), "{} vs {}", g0, gs.grad_q());
        assert!(energy(&u0, 1.0) < gs.h_q);

        let mut state = SimState::new(
            u0,
            1.0,
            NoiseKind::None,
            None,
            NoiseSource::Stream { seed: 0, path: 0 },
            Detector { gamma: 10.0, amp_max: 1e6 },
        )
        .unwrap();
        let out = state
            .run(10.0, &DtPolicy::Adaptive { dt0: 2e-3, dt_min: 2e-6 }, 0.05)
            .unwrap();
        match state.status {
            Status::BlownUp { t } => assert!(t < 10.0),
            other => panic!("expected blow-up, got {other:?} (rows: {})", out.rows.len()),
        }
        let max_grad = out.rows.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
        assert!(max_grad >= 10.0 * g0 * 0.99, "grad grew only to {max_grad} from {g0}");
    }

    #[test]
    fn trapped_data_completes_below_ground_state_gradient() {
        let grid = Grid::radial(Dim::THREE, 16.0, 256).unwrap();
        let gs = ground_state_constants(Dim::THREE, 1e-10).unwrap();
        // small data: safely trapped
        let u0 = gaussian(&grid, 0.4, 2.0);
        assert!(grad_norm(&u0) < gs.grad_q());
        assert!(energy(&u0, 1.0) < gs.h_q);
        let mut state = state_no_noise(u0, 1.0);
        let out = state.run(1.0, &DtPolicy::Fixed { dt: 0.005 }, 0.1).unwrap();
        assert_eq!(state.status, Status::Completed);
        let max_grad = out.rows.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
        assert!(max_grad < gs.grad_q());
    }

    #[test]
    fn run_with_zero_horizon_completes_immediately() {
        let grid = Grid::radial(Dim::THREE, 10.0, 64).unwrap();
        let mut state = state_no_noise(gaussian(&grid, 0.3, 1.0), 1.0);
        let out = state.run(0.0, &DtPolicy::Fixed { dt: 0.01 }, 0.1).unwrap();
        assert_eq!(state.status, Status::Completed);
        assert_eq!(out.rows.len(), 1);
    }

    #[test]
    fn identical_seed_gives_bit_identical_trajectory() {
        let grid = Grid::radial(Dim::THREE, 10.0, 128).unwrap();
        let spec = NoiseSpec {
            basis: BasisKind::SineRadial,
            k_modes: 8,
            decay_q: 2.0,
            epsilon: 0.4,
            complexness: Complexness::ComplexValued,
        };
        let op = Arc::new(NoiseOperator::build(&spec, grid.clone()).unwrap());
        let mk = || {
            SimState::new(
                gaussian(&grid, 0.5, 1.5),
                1.0,
                NoiseKind::Additive,
                Some(op.clone()),
                NoiseSource::Stream { seed: 99, path: 7 },
                Detector::default(),
            )
            .unwrap()
        };
        let mut a = mk();
        let mut b = mk();
        for _ in 0..50 {
            a.step(0.01).unwrap();
            b.step(0.01).unwrap();
        }
        assert_eq!(a.u.values, b.u.values);
    }

    #[test]
    fn scaled_q_initial_data_properties() {
        let grid = Grid::radial(Dim::FIVE, 60.0, 1200).unwrap();
        // alpha = 1, growing cutoff: H(u0) approaches H(Q) (n = 5: Q has
        // finite mass and energy so the truncation error is tail-sized)
        let gs = ground_state_constants(Dim::FIVE, 1e-10).unwrap();
        let gap = |cutoff: f64, taper: f64| {
            let u = make_initial(
                &grid,
                &InitialSpec::ScaledQ { alpha: 1.0, cutoff, taper: Some(taper) },
            )
            .unwrap();
            (energy(&u, 1.0) - gs.h_q).abs() / gs.h_q
        };
        let near = gap(25.0, 10.0);
        let far = gap(40.0, 15.0);
        assert!(far < 2e-2, "H gap {far}");
        assert!(far < near, "gap should shrink with the cutoff: {near} -> {far}");
        // gradient norm scales linearly in alpha
        let u = make_initial(&grid, &InitialSpec::ScaledQ { alpha: 1.0, cutoff: 40.0, taper: None })
            .unwrap();
        let u2 = make_initial(&grid, &InitialSpec::ScaledQ { alpha: 2.0, cutoff: 40.0, taper: None })
            .unwrap();
        let ratio = grad_norm(&u2) / grad_norm(&u);
        assert!((ratio - 2.0).abs() < 1e-12);
        // cutoff beyond the grid is a configuration error
        assert!(make_initial(
            &grid,
            &InitialSpec::ScaledQ { alpha: 1.0, cutoff: 70.0, taper: None }
        )
        .is_err());
    }

    #[test]
    fn gaussian_zero_amplitude_is_zero_field() {
        let grid = Grid::radial(Dim::THREE, 10.0, 64).unwrap();
        let u = make_initial(&grid, &InitialSpec::Gaussian { amplitude: 0.0, width: 1.0 }).unwrap();
        assert!(u.values.iter().all(|v| v.norm() == 0.0));
    }
}
