//! The driving noise W(t, x) = sum_k beta_k(t) (phi e_k)(x) realized as a
//! finite family of spatial modes on the solver grid, together with every
//! derived constant the existence-time and blow-up criteria consume.
//!
//! Basis realization: on radial grids the modes are weighted Gram-Schmidt
//! orthonormalizations of sine seeds sin((k+1) pi r / R); plain
//! sin(k pi r/R)/r^{(n-1)/2} would be orthonormal too but carries an
//! unbounded gradient density at the origin for n >= 4, which would make
//! M_phi infinite. On periodic boxes the modes are real Fourier cos/sin
//! pairs ordered by |m|^2. Mode gradients are assembled from the analytic
//! derivatives of the seeds, not from grid differencing.
//!
//! Complex-valued operators drive each mode with independent real and
//! imaginary Gaussian parts of variance 1/2, which is the real-Brownian
//! family {phi e_k / sqrt2, i phi e_k / sqrt2}; every quadratic constant
//! below has the same value over that family as over the bare modes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::StepRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    SineRadial,
    FourierPeriodic,
    Kernel,
}

/// How the stochastic forcing enters the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Additive,
    MultiplicativeStratonovich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexness {
    /// Additive case: complex Gaussian coefficients.
    ComplexValued,
    /// Multiplicative (Stratonovich) case: real coefficients, real modes.
    RealValued,
}

/// Noise block of the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub basis: BasisKind,
    #[serde(rename = "K")]
    pub k_modes: usize,
    #[serde(default = "default_decay_q")]
    pub decay_q: f64,
    pub epsilon: f64,
    pub complexness: Complexness,
}

fn default_decay_q() -> f64 {
    2.0
}

/// One spatial mode phi e_k with its analytic gradient (one entry per axis).
#[derive(Debug, Clone)]
pub struct NoiseMode {
    pub values: Vec<Complex64>,
    pub grads: Vec<Vec<Complex64>>,
}

impl NoiseMode {
    fn scaled(&self, factor: Complex64) -> NoiseMode {
        NoiseMode {
            values: self.values.iter().map(|v| v * factor).collect(),
            grads: self
                .grads
                .iter()
                .map(|g| g.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
            && self.grads.iter().flatten().all(|v| v.im == 0.0)
    }
}

/// Derived constants of the operator. The two densities F_phi and f^1_phi
/// are kept as grid samples; M_phi is the sup of the latter.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseConstants {
    pub hs_norm_0: f64,
    pub hs_norm_1: f64,
    pub c_phi_sigma: f64,
    pub c_of_phi: f64,
    pub c_phi_1: f64,
    pub c_phi_2: f64,
    pub m_phi: f64,
    #[serde(skip)]
    pub f_phi: Vec<f64>,
    #[serde(skip)]
    pub f1_phi: Vec<f64>,
}

/// One increment of the Wiener process over a step: the field dW and the
/// per-real-mode Brownian increments that produced it, so evolution-identity
/// accumulators can reuse exactly the same draws.
#[derive(Debug, Clone)]
pub struct Increment {
    pub delta_w: Vec<Complex64>,
    pub betas: Vec<f64>,
}

pub struct NoiseOperator {
    grid: Arc<Grid>,
    basis: BasisKind,
    complexness: Complexness,
    amplitude: f64,
    modes: Vec<NoiseMode>,
    /// z-side factors of a separable kernel operator, when built from one.
    kernel_z_factors: Option<Vec<Vec<f64>>>,
}

impl std::fmt::Debug for NoiseOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseOperator")
            .field("basis", &self.basis)
            .field("complexness", &self.complexness)
            .field("amplitude", &self.amplitude)
            .field("modes", &self.modes.len())
            .finish()
    }
}

impl NoiseOperator {
    pub fn build(spec: &NoiseSpec, grid: Arc<Grid>) -> Result<Self> {
        if spec.k_modes == 0 {
            return Err(Error::Config("noise operator needs K >= 1 modes".into()));
        }
        if !(spec.epsilon >= 0.0) {
            return Err(Error::Config(format!("noise amplitude must be >= 0, got {}", spec.epsilon)));
        }
        let modes = match spec.basis {
            BasisKind::SineRadial => {
                if spec.decay_q <= 1.5 {
                    return Err(Error::Config(format!(
                        "radial decay exponent q = {} makes the H^1 mode sum diverge (need q > 3/2)",
                        spec.decay_q
                    )));
                }
                sine_radial_modes(&grid, spec)?
            }
            BasisKind::FourierPeriodic => {
                if spec.decay_q <= 2.5 {
                    return Err(Error::Config(format!(
                        "periodic decay exponent q = {} makes the H^1 mode sum diverge (need q > 5/2)",
                        spec.decay_q
                    )));
                }
                fourier_periodic_modes(&grid, spec)?
            }
            BasisKind::Kernel => {
                return Err(Error::Config(
                    "kernel operators are built from explicit factors, not from a spec".into(),
                ))
            }
        };
        Self::from_modes_inner(grid, spec.basis, spec.complexness, spec.epsilon, modes, None)
    }

    /// Assemble an operator from explicit modes (tests, custom spectra).
    pub fn from_modes(
        grid: Arc<Grid>,
        modes: Vec<NoiseMode>,
        complexness: Complexness,
    ) -> Result<Self> {
        Self::from_modes_inner(grid, BasisKind::Kernel, complexness, 1.0, modes, None)
    }

    /// Separable kernel K(x, z) = sum_i g_i(x) w_i(z); the induced mode
    /// family is g L where L is the Cholesky factor of the w-Gram matrix.
    /// Kernel mode gradients come from grid differencing.
    pub fn from_kernel(
        grid: Arc<Grid>,
        x_factors: Vec<Vec<f64>>,
        z_factors: Vec<Vec<f64>>,
        complexness: Complexness,
    ) -> Result<Self> {
        if x_factors.len() != z_factors.len() || x_factors.is_empty() {
            return Err(Error::Config("kernel needs matching non-empty factor lists".into()));
        }
        let m = x_factors.len();
        for f in x_factors.iter().chain(z_factors.iter()) {
            if f.len() != grid.len() {
                return Err(Error::Contract("kernel factor length does not match grid".into()));
            }
        }
        // Gram matrix of the z factors under the grid quadrature.
        let mut gram = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                let v = grid.quadrature(|idx| z_factors[i][idx] * z_factors[j][idx]);
                gram[i][j] = v;
                gram[j][i] = v;
            }
        }
        let chol = cholesky(&gram)?;
        let mut modes = Vec::with_capacity(m);
        for k in 0..m {
            let values: Vec<Complex64> = (0..grid.len())
                .map(|idx| {
                    let mut acc = 0.0;
                    for i in k..m {
                        acc += chol[i][k] * x_factors[i][idx];
                    }
                    Complex64::new(acc, 0.0)
                })
                .collect();
            let grads = numeric_gradients(&grid, &values);
            modes.push(NoiseMode { values, grads });
        }
        Self::from_modes_inner(grid, BasisKind::Kernel, complexness, 1.0, modes, Some(z_factors))
    }

    fn from_modes_inner(
        grid: Arc<Grid>,
        basis: BasisKind,
        complexness: Complexness,
        amplitude: f64,
        modes: Vec<NoiseMode>,
        kernel_z_factors: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        for (k, mode) in modes.iter().enumerate() {
            if mode.values.len() != grid.len() {
                return Err(Error::Contract(format!("mode {k} does not match the grid size")));
            }
            if complexness == Complexness::RealValued && !mode.is_real() {
                return Err(Error::Contract(format!(
                    "real-valued operator requires real modes, mode {k} has nonzero imaginary part"
                )));
            }
            if !mode.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Numerical(format!("mode {k} contains non-finite samples")));
            }
        }
        Ok(NoiseOperator { grid, basis, complexness, amplitude, modes, kernel_z_factors })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn complexness(&self) -> Complexness {
        self.complexness
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes
            .iter()
            .all(|m| m.values.iter().all(|v| v.norm_sqr() == 0.0))
    }

    /// Copy of the operator with every mode multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> NoiseOperator {
        NoiseOperator {
            grid: self.grid.clone(),
            basis: self.basis,
            complexness: self.complexness,
            amplitude: self.amplitude * factor,
            modes: self.modes.iter().map(|m| m.scaled(Complex64::new(factor, 0.0))).collect(),
            kernel_z_factors: self.kernel_z_factors.clone(),
        }
    }

    /// Number of real Brownian motions driving the operator.
    pub fn real_mode_count(&self) -> usize {
        match self.complexness {
            Complexness::RealValued => self.modes.len(),
            Complexness::ComplexValued => 2 * self.modes.len(),
        }
    }

    /// Visit the real-Brownian mode family: `f(m, scale, mode)` with
    /// phi~_m = scale * mode.
    pub fn for_each_real_mode(&self, mut f: impl FnMut(usize, Complex64, &NoiseMode)) {
        match self.complexness {
            Complexness::RealValued => {
                for (k, mode) in self.modes.iter().enumerate() {
                    f(k, Complex64::ONE, mode);
                }
            }
            Complexness::ComplexValued => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for (k, mode) in self.modes.iter().enumerate() {
                    f(2 * k, Complex64::new(s, 0.0), mode);
                    f(2 * k + 1, Complex64::new(0.0, s), mode);
                }
            }
        }
    }

    /// Draw the Wiener increment for one step of size dt.
    pub fn sample_increment(&self, dt: f64, rng: &mut StepRng) -> Increment {
        let sqrt_dt = dt.sqrt();
        let mut betas = vec![0.0; self.real_mode_count()];
        for b in betas.iter_mut() {
            *b = sqrt_dt * rng.normal();
        }
        let delta_w = self.assemble(&betas);
        Increment { delta_w, betas }
    }

    /// Build the increment field from given per-real-mode Brownian
    /// increments (used by frozen paths).
    pub fn assemble(&self, betas: &[f64]) -> Vec<Complex64> {
        let mut delta_w = vec![Complex64::ZERO; self.grid.len()];
        self.for_each_real_mode(|m, scale, mode| {
            let c = scale * betas[m];
            for (w, v) in delta_w.iter_mut().zip(&mode.values) {
                *w += c * v;
            }
        });
        delta_w
    }

    /// Per-axis gradient fields of the assembled increment, from the modes'
    /// analytic gradients.
    pub fn assemble_gradients(&self, betas: &[f64]) -> Vec<Vec<Complex64>> {
        let axes = match self.grid.as_ref() {
            Grid::Radial(_) => 1,
            Grid::PeriodicBox(_) => 3,
        };
        let mut out = vec![vec![Complex64::ZERO; self.grid.len()]; axes];
        self.for_each_real_mode(|m, scale, mode| {
            let c = scale * betas[m];
            for (axis, grad) in mode.grads.iter().enumerate() {
                for (o, g) in out[axis].iter_mut().zip(grad) {
                    *o += c * g;
                }
            }
        });
        out
    }

    /// All derived constants, by quadrature over the modes.
    pub fn constants(&self) -> NoiseConstants {
        let grid = &self.grid;
        let n = grid.dim().nf();
        let crit = 2.0 * n / (n - 2.0);
        let len = grid.len();
        let mut hs0_sq = 0.0;
        let mut c1 = 0.0;
        let mut c_sigma = 0.0;
        let mut c_of_phi = 0.0;
        let mut c2 = 0.0;
        let mut f_phi = vec![0.0; len];
        let mut f1_phi = vec![0.0; len];
        for mode in &self.modes {
            hs0_sq += grid.quadrature(|j| mode.values[j].norm_sqr());
            let grad_density =
                |j: usize| mode.grads.iter().map(|g| g[j].norm_sqr()).sum::<f64>();
            c1 += grid.quadrature(&grad_density);
            c_sigma += grid.quadrature(|j| grid.x_sq(j) * mode.values[j].norm_sqr());
            let lp = grid.quadrature(|j| mode.values[j].norm().powf(crit));
            c_of_phi += lp.powf(2.0 / crit);
            c2 += grid.quadrature(|j| {
                let xg = x_dot_grad_mode(grid, mode, j);
                (mode.values[j] * xg.conj()).im
            });
            for j in 0..len {
                f_phi[j] += mode.values[j].norm_sqr();
                f1_phi[j] += grad_density(j);
            }
        }
        let m_phi = f1_phi.iter().copied().fold(0.0, f64::max);
        NoiseConstants {
            hs_norm_0: hs0_sq.sqrt(),
            hs_norm_1: (hs0_sq + c1).sqrt(),
            c_phi_sigma: c_sigma,
            c_of_phi,
            c_phi_1: c1,
            c_phi_2: c2,
            m_phi,
            f_phi,
            f1_phi,
        }
    }

    /// Correlation function c(x, y) = int K(x,z) K(y,z) dz of a
    /// kernel-built operator, evaluated at two grid indices.
    pub fn correlation(&self, i: usize, j: usize) -> Result<f64> {
        if self.kernel_z_factors.is_none() {
            return Err(Error::Unsupported(
                "correlation is defined only for kernel-built operators".into(),
            ));
        }
        if i >= self.grid.len() || j >= self.grid.len() {
            return Err(Error::Domain("correlation index outside the grid".into()));
        }
        Ok(self
            .modes
            .iter()
            .map(|m| m.values[i].re * m.values[j].re)
            .sum())
    }
}

pub(crate) fn x_dot_grad_mode(grid: &Grid, mode: &NoiseMode, j: usize) -> Complex64 {
    match grid {
        Grid::Radial(g) => mode.grads[0][j] * g.r(j),
        Grid::PeriodicBox(g) => {
            let idx3 = g.split_index(j);
            let mut acc = Complex64::ZERO;
            for (axis, grad) in mode.grads.iter().enumerate() {
                acc += g.coord(idx3[axis]) * grad[j];
            }
            acc
        }
    }
}

pub(crate) fn numeric_gradients(grid: &Grid, values: &[Complex64]) -> Vec<Vec<Complex64>> {
    match grid {
        Grid::Radial(g) => vec![g.node_derivative(values)],
        Grid::PeriodicBox(g) => (0..3).map(|axis| g.derivative(values, axis)).collect(),
    }
}

fn cholesky(gram: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = gram.len();
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = gram[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical(
                        "kernel z-factors are numerically dependent (Gram not positive definite)"
                            .into(),
                    ));
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Weighted Gram-Schmidt of sine seeds, with analytic cosine derivatives
/// carried through the same linear combination.
fn sine_radial_modes(grid: &Arc<Grid>, spec: &NoiseSpec) -> Result<Vec<NoiseMode>> {
    let radial = grid
        .as_radial()
        .ok_or_else(|| Error::Config("sine_radial basis needs a radial grid".into()))?;
    let len = grid.len();
    let radius = radial.r(len); // boundary node sits at r = R
    let k_modes = spec.k_modes;

    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k_modes);
    let mut dvecs: Vec<Vec<f64>> = Vec::with_capacity(k_modes);
    for k in 0..k_modes {
        let freq = (k + 1) as f64 * PI / radius;
        vecs.push((0..len).map(|j| (freq * radial.r(j)).sin()).collect());
        dvecs.push((0..len).map(|j| freq * (freq * radial.r(j)).cos()).collect());
    }

    let inner = |a: &[f64], b: &[f64]| grid.quadrature(|j| a[j] * b[j]);
    for k in 0..k_modes {
        // two MGS passes for orthogonality at the weighted inner product
        for _ in 0..2 {
            for prev in 0..k {
                let (head, tail) = vecs.split_at_mut(k);
                let (dhead, dtail) = dvecs.split_at_mut(k);
                let c = inner(&head[prev], &tail[0]);
                for j in 0..len {
                    tail[0][j] -= c * head[prev][j];
                    dtail[0][j] -= c * dhead[prev][j];
                }
            }
        }
        let norm = inner(&vecs[k], &vecs[k]).sqrt();
        if !(norm > 1e-12) {
            return Err(Error::Numerical(format!(
                "sine seed {k} collapsed during orthonormalization; use a finer grid or fewer modes"
            )));
        }
        for j in 0..len {
            vecs[k][j] /= norm;
            dvecs[k][j] /= norm;
        }
    }

    Ok((0..k_modes)
        .map(|k| {
            let scale = spec.epsilon * ((k + 1) as f64).powf(-spec.decay_q);
            NoiseMode {
                values: vecs[k].iter().map(|v| Complex64::new(scale * v, 0.0)).collect(),
                grads: vec![dvecs[k].iter().map(|v| Complex64::new(scale * v, 0.0)).collect()],
            }
        })
        .collect())
}

/// Real Fourier modes ordered by |m|^2: the constant, then cos/sin pairs
/// over canonical wavevectors, scaled by epsilon (1 + |m|^2)^{-q/2}.
fn fourier_periodic_modes(grid: &Arc<Grid>, spec: &NoiseSpec) -> Result<Vec<NoiseMode>> {
    let b = grid
        .as_box()
        .ok_or_else(|| Error::Config("fourier_periodic basis needs a periodic box".into()))?;
    let side_volume = {
        let side = b.coord(0).abs() * 2.0;
        side.powi(3)
    };

    // canonical wavevectors: first nonzero component positive
    let mut waves: Vec<[i32; 3]> = Vec::new();
    let max = 6;
    for mx in -max..=max {
        for my in -max..=max {
            for mz in -max..=max {
                let m = [mx, my, mz];
                let first_nonzero = m.iter().find(|&&c| c != 0);
                match first_nonzero {
                    None => waves.push(m),
                    Some(&c) if c > 0 => waves.push(m),
                    _ => {}
                }
            }
        }
    }
    waves.sort_by_key(|m| {
        (m[0] * m[0] + m[1] * m[1] + m[2] * m[2], m[0], m[1], m[2])
    });

    let side = b.coord(0).abs() * 2.0;
    let norm0 = 1.0 / side_volume.sqrt();
    let mut modes = Vec::with_capacity(spec.k_modes);
    'outer: for m in waves {
        let msq = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
        let scale = spec.epsilon * (1.0 + msq).powf(-spec.decay_q / 2.0);
        let k = [
            2.0 * PI * m[0] as f64 / side,
            2.0 * PI * m[1] as f64 / side,
            2.0 * PI * m[2] as f64 / side,
        ];
        let phases: Vec<f64> = (0..grid.len())
            .map(|idx| {
                let [ix, iy, iz] = b.split_index(idx);
                k[0] * b.coord(ix) + k[1] * b.coord(iy) + k[2] * b.coord(iz)
            })
            .collect();
        if msq == 0.0 {
            let values = vec![Complex64::new(scale * norm0, 0.0); grid.len()];
            let grads = vec![vec![Complex64::ZERO; grid.len()]; 3];
            modes.push(NoiseMode { values, grads });
            if modes.len() == spec.k_modes {
                break 'outer;
            }
            continue;
        }
        let amp = scale * norm0 * 2f64.sqrt();
        for trig in [true, false] {
            let values: Vec<Complex64> = phases
                .iter()
                .map(|&p| Complex64::new(amp * if trig { p.cos() } else { p.sin() }, 0.0))
                .collect();
            let grads: Vec<Vec<Complex64>> = (0..3)
                .map(|axis| {
                    phases
                        .iter()
                        .map(|&p| {
                            let d = if trig { -p.sin() } else { p.cos() };
                            Complex64::new(amp * k[axis] * d, 0.0)
                        })
                        .collect()
                })
                .collect();
            modes.push(NoiseMode { values, grads });
            if modes.len() == spec.k_modes {
                break 'outer;
            }
        }
    }
    if modes.len() < spec.k_modes {
        return Err(Error::Config(format!(
            "requested K = {} exceeds the enumerated Fourier range ({} modes)",
            spec.k_modes,
            modes.len()
        )));
    }
    Ok(modes)
}

/// Brownian increments pre-drawn on a fine uniform partition, so refinement
/// studies can run different step sizes over the same path. Coarser steps
/// sum whole blocks of fine increments.
#[derive(Debug, Clone)]
pub struct FrozenPath {
    pub dt_fine: f64,
    betas: Vec<Vec<f64>>,
}

impl FrozenPath {
    pub fn sample(op: &NoiseOperator, dt_fine: f64, fine_steps: usize, seed: u64, path: u64) -> Self {
        let sqrt_dt = dt_fine.sqrt();
        let betas = (0..fine_steps)
            .map(|s| {
                let mut rng = StepRng::new(seed, path, s as u64);
                (0..op.real_mode_count()).map(|_| sqrt_dt * rng.normal()).collect()
            })
            .collect();
        FrozenPath { dt_fine, betas }
    }

    pub fn fine_steps(&self) -> usize {
        self.betas.len()
    }

    /// Aggregate the fine increments `start .. start + count` into one step.
    pub fn increment(&self, op: &NoiseOperator, start: usize, count: usize) -> Result<Increment> {
        if start + count > self.betas.len() {
            return Err(Error::Contract(format!(
                "frozen path exhausted: requested fine steps {start}..{} of {}",
                start + count,
                self.betas.len()
            )));
        }
        let mut betas = vec![0.0; op.real_mode_count()];
        for fine in &self.betas[start..start + count] {
            for (b, f) in betas.iter_mut().zip(fine) {
                *b += f;
            }
        }
        let delta_w = op.assemble(&betas);
        Ok(Increment { delta_w, betas })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dim::Dim;

    fn radial_grid(n: u8, radius: f64, points: usize) -> Arc<Grid> {
        Grid::radial(Dim::new(n).unwrap(), radius, points).unwrap()
    }

    fn spec(basis: BasisKind, k: usize, q: f64, eps: f64, c: Complexness) -> NoiseSpec {
        NoiseSpec { basis, k_modes: k, decay_q: q, epsilon: eps, complexness: c }
    }

    #[test]
    fn sine_modes_are_orthonormal_before_scaling() {
        for n in [3u8, 4, 5] {
            let grid = radial_grid(n, 10.0, 256);
            let s = spec(BasisKind::SineRadial, 8, 2.0, 1.0, Complexness::RealValued);
            let op = NoiseOperator::build(&s, grid.clone()).unwrap();
            for a in 0..8 {
                for b in 0..=a {
                    // undo the decay scaling to test bare-mode orthonormality
                    let sa = ((a + 1) as f64).powf(2.0);
                    let sb = ((b + 1) as f64).powf(2.0);
                    let dot = grid.quadrature(|j| {
                        (op.modes()[a].values[j] * op.modes()[b].values[j].conj()).re
                    }) * sa * sb;
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (dot - want).abs() < 1e-8,
                        "n = {n}: <e{a}, e{b}> = {dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_amplitude_zeroes_all_constants() {
        let grid = radial_grid(3, 10.0, 128);
        let s = spec(BasisKind::SineRadial, 6, 2.0, 0.0, Complexness::ComplexValued);
        let op = NoiseOperator::build(&s, grid).unwrap();
        assert!(op.is_zero());
        let c = op.constants();
        for v in [c.hs_norm_0, c.hs_norm_1, c.c_phi_sigma, c.c_of_phi, c.c_phi_1, c.c_phi_2, c.m_phi]
        {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn single_gaussian_mode_matches_closed_form_moments() {
        // g = exp(-r^2) on the radial n = 3 grid:
        //   ||g||^2        = 4 pi int r^2 e^{-2r^2}          = pi^{3/2}/2^{3/2}
        //   ||grad g||^2   = 16 pi int r^4 e^{-2r^2}         = 3 pi^{3/2}/2^{3/2}
        //   || |x| g ||^2  = 4 pi int r^4 e^{-2r^2}          = (3/4) pi^{3/2}/2^{3/2}
        let grid = radial_grid(3, 12.0, 1200);
        let g = grid.as_radial().unwrap();
        let values: Vec<Complex64> =
            (0..grid.len()).map(|j| Complex64::new((-g.r(j) * g.r(j)).exp(), 0.0)).collect();
        let grads: Vec<Complex64> = (0..grid.len())
            .map(|j| Complex64::new(-2.0 * g.r(j) * (-g.r(j) * g.r(j)).exp(), 0.0))
            .collect();
        let op = NoiseOperator::from_modes(
            grid.clone(),
            vec![NoiseMode { values, grads: vec![grads] }],
            Complexness::RealValued,
        )
        .unwrap();
        let c = op.constants();
        let base = PI.powf(1.5) / 2f64.powf(1.5);
        assert!((c.hs_norm_0.powi(2) - base).abs() < 1e-4 * base);
        assert!((c.c_phi_1 - 3.0 * base).abs() < 1e-3 * base, "{} vs {}", c.c_phi_1, 3.0 * base);
        assert!((c.c_phi_sigma - 0.75 * base).abs() < 1e-3 * base);
        assert!(c.c_phi_2.abs() < 1e-10, "real mode must have zero c_phi_2");
    }

    #[test]
    fn quadratic_homogeneity_under_scaling() {
        let grid = radial_grid(4, 8.0, 128);
        // complex chirped mode so that c_phi_2 is nonzero
        let g = grid.as_radial().unwrap();
        let values: Vec<Complex64> = (0..grid.len())
            .map(|j| {
                let r = g.r(j);
                Complex64::from_polar((-r * r).exp(), 0.3 * r * r)
            })
            .collect();
        let grads: Vec<Complex64> = (0..grid.len())
            .map(|j| {
                let r = g.r(j);
                // d/dr [e^{-r^2} e^{i 0.3 r^2}] = (-2r + 0.6 i r) e^{-r^2} e^{i 0.3 r^2}
                Complex64::new(-2.0 * r, 0.6 * r) * Complex64::from_polar((-r * r).exp(), 0.3 * r * r)
            })
            .collect();
        let op = NoiseOperator::from_modes(
            grid,
            vec![NoiseMode { values, grads: vec![grads] }],
            Complexness::ComplexValued,
        )
        .unwrap();
        let c0 = op.constants();
        assert!(c0.c_phi_2.abs() > 1e-6, "chirped mode should have c_phi_2 != 0");
        for lambda in [0.5, 2.0] {
            let c = op.scaled(lambda).constants();
            let l2 = lambda * lambda;
            assert!((c.hs_norm_0 - lambda * c0.hs_norm_0).abs() < 1e-12 * c.hs_norm_0.max(1.0));
            assert!((c.c_phi_1 - l2 * c0.c_phi_1).abs() < 1e-10 * c.c_phi_1.max(1.0));
            assert!((c.c_phi_sigma - l2 * c0.c_phi_sigma).abs() < 1e-10);
            assert!((c.c_of_phi - l2 * c0.c_of_phi).abs() < 1e-10);
            assert!((c.c_phi_2 - l2 * c0.c_phi_2).abs() < 1e-10);
            assert!((c.m_phi - l2 * c0.m_phi).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_monotone_in_mode_count() {
        let grid = radial_grid(3, 10.0, 192);
        let mut last = None;
        for k in [2usize, 4, 8, 16] {
            let s = spec(BasisKind::SineRadial, k, 2.0, 0.5, Complexness::RealValued);
            let c = NoiseOperator::build(&s, grid.clone()).unwrap().constants();
            if let Some(prev) = last {
                let p: &NoiseConstants = &prev;
                assert!(c.hs_norm_0 >= p.hs_norm_0 - 1e-12);
                assert!(c.hs_norm_1 >= p.hs_norm_1 - 1e-12);
                assert!(c.c_phi_sigma >= p.c_phi_sigma - 1e-12);
                assert!(c.c_of_phi >= p.c_of_phi - 1e-12);
                assert!(c.m_phi >= p.m_phi - 1e-12);
            }
            last = Some(c);
        }
    }

    #[test]
    fn paper_inequalities_hold_for_built_operators() {
        for (basis, grid) in [
            (BasisKind::SineRadial, radial_grid(3, 10.0, 192)),
            (
                BasisKind::FourierPeriodic,
                Grid::periodic_box(Dim::THREE, 12.0, 16).unwrap(),
            ),
        ] {
            let q = if basis == BasisKind::FourierPeriodic { 3.0 } else { 2.0 };
            let s = spec(basis, 9, q, 0.7, Complexness::ComplexValued);
            let c = NoiseOperator::build(&s, grid).unwrap().constants();
            assert!(c.c_phi_1 <= c.hs_norm_1.powi(2) + 1e-12);
            assert!(
                c.c_phi_2.abs() <= c.hs_norm_1 * c.c_phi_sigma.sqrt() + 1e-12,
                "c2 {} bound {}",
                c.c_phi_2,
                c.hs_norm_1 * c.c_phi_sigma.sqrt()
            );
            assert!(c.f_phi.iter().all(|&v| v >= 0.0));
            assert!(c.f1_phi.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn increment_is_deterministic_and_centered() {
        let grid = radial_grid(3, 10.0, 128);
        let s = spec(BasisKind::SineRadial, 4, 2.0, 1.0, Complexness::ComplexValued);
        let op = NoiseOperator::build(&s, grid.clone()).unwrap();
        let dt = 0.01;

        let a = op.sample_increment(dt, &mut StepRng::new(5, 9, 3));
        let b = op.sample_increment(dt, &mut StepRng::new(5, 9, 3));
        assert_eq!(a.delta_w, b.delta_w, "same key must give bit-identical increments");

        // moment check at two probe indices over many draws
        let (p, q) = (32usize, 64usize);
        let trials = 100_000;
        let mut mean = Complex64::ZERO;
        let mut var_p = 0.0;
        let mut cov_pq = 0.0;
        for t in 0..trials {
            let mut rng = StepRng::new(11, 0, t as u64);
            let sqrt_dt = dt.sqrt();
            // evaluate the increment at the probes only
            let mut wp = Complex64::ZERO;
            let mut wq = Complex64::ZERO;
            op.for_each_real_mode(|_, scale, mode| {
                let beta = sqrt_dt * rng.normal();
                wp += scale * beta * mode.values[p];
                wq += scale * beta * mode.values[q];
            });
            mean += wp;
            var_p += wp.norm_sqr();
            cov_pq += (wp * wq.conj()).re;
        }
        mean /= trials as f64;
        var_p /= trials as f64;
        cov_pq /= trials as f64;

        let c = op.constants();
        let expect_var = dt * c.f_phi[p];
        let expect_cov: f64 = dt
            * op.modes()
                .iter()
                .map(|m| (m.values[p] * m.values[q].conj()).re)
                .sum::<f64>();
        let se = expect_var * (2.0 / trials as f64).sqrt();
        assert!(mean.norm() < 3.0 * (expect_var / trials as f64).sqrt(), "mean {mean}");
        assert!((var_p - expect_var).abs() < 3.0 * se, "var {var_p} vs {expect_var}");
        assert!((cov_pq - expect_cov).abs() < 5.0 * se, "cov {cov_pq} vs {expect_cov}");
    }

    #[test]
    fn real_valued_rejects_complex_modes() {
        let grid = radial_grid(3, 10.0, 128);
        let values = vec![Complex64::new(0.0, 1.0); grid.len()];
        let grads = vec![vec![Complex64::ZERO; grid.len()]];
        let err = NoiseOperator::from_modes(
            grid,
            vec![NoiseMode { values, grads }],
            Complexness::RealValued,
        );
        assert!(err.is_err());
    }

    #[test]
    fn nonsummable_decay_is_a_config_error() {
        let grid = radial_grid(3, 10.0, 128);
        let s = spec(BasisKind::SineRadial, 4, 1.0, 1.0, Complexness::RealValued);
        assert!(NoiseOperator::build(&s, grid).is_err());
    }

    #[test]
    fn rank_one_kernel_correlation_factorizes() {
        let grid = radial_grid(3, 10.0, 128);
        let g = grid.as_radial().unwrap();
        let gx: Vec<f64> = (0..grid.len()).map(|j| (-g.r(j)).exp()).collect();
        // normalized z factor
        let raw: Vec<f64> = (0..grid.len()).map(|j| (-2.0 * g.r(j) * g.r(j)).exp()).collect();
        let nrm = grid.quadrature(|j| raw[j] * raw[j]).sqrt();
        let e0: Vec<f64> = raw.iter().map(|v| v / nrm).collect();
        let op = NoiseOperator::from_kernel(
            grid.clone(),
            vec![gx.clone()],
            vec![e0],
            Complexness::RealValued,
        )
        .unwrap();
        for (i, j) in [(3, 80), (10, 10), (40, 90)] {
            let c = op.correlation(i, j).unwrap();
            assert!((c - gx[i] * gx[j]).abs() < 1e-10, "c({i},{j}) = {c}");
            assert_eq!(op.correlation(i, j).unwrap(), op.correlation(j, i).unwrap());
        }
        assert!(op.correlation(5, 5).unwrap() >= 0.0);
    }

    #[test]
    fn non_kernel_operator_has_no_correlation() {
        let grid = radial_grid(3, 10.0, 128);
        let s = spec(BasisKind::SineRadial, 4, 2.0, 1.0, Complexness::RealValued);
        let op = NoiseOperator::build(&s, grid).unwrap();
        assert!(op.correlation(0, 1).is_err());
    }

    #[test]
    fn frozen_path_blocks_sum_to_fine_increments() {
        let grid = radial_grid(3, 10.0, 128);
        let s = spec(BasisKind::SineRadial, 4, 2.0, 0.3, Complexness::ComplexValued);
        let op = NoiseOperator::build(&s, grid).unwrap();
        let path = FrozenPath::sample(&op, 0.005, 16, 7, 0);
        let coarse = path.increment(&op, 0, 4).unwrap();
        let mut sum = vec![Complex64::ZERO; op.grid().len()];
        for k in 0..4 {
            let fine = path.increment(&op, k, 1).unwrap();
            for (s, f) in sum.iter_mut().zip(fine.delta_w) {
                *s += f;
            }
        }
        for (a, b) in coarse.delta_w.iter().zip(sum) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(path.increment(&op, 14, 4).is_err());
    }
}
