//! Spatial discretizations: a radial finite-volume grid for n = 3, 4, 5 and
//! a periodic Fourier box for n = 3.
//!
//! The radial Laplacian is kept in flux form
//!   (A u)_j = [a_{j+1/2}(u_{j+1}-u_j) - a_{j-1/2}(u_j-u_{j-1})] / (w_j h),
//! with a_{j+1/2} = r_{j+1/2}^{n-1} and w_j the shell volume element, so A is
//! self-adjoint in the weighted inner product that also defines every grid
//! quadrature. That makes the Crank-Nicolson (Cayley) step exactly unitary
//! and ties the edge-difference kinetic energy to A by summation by parts.
//! The r = 0 cell reproduces the regularity closure 2n(u_1 - u_0)/h^2.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dim::Dim;
use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: Dim,
    radius: f64,
    points: usize,
    h: f64,
    /// Full measure of shell j including the sphere area factor.
    cell_w: Vec<f64>,
    /// Geometric surface factor r_{j+1/2}^{n-1} for edge j <-> j+1
    /// (the last edge touches the Dirichlet boundary at r = R).
    edge_a: Vec<f64>,
    /// Geometric cell weights (r_{j+1/2}^n - r_{j-1/2}^n)/n, no area factor.
    cell_geo: Vec<f64>,
}

impl RadialGrid {
    pub fn new(dim: Dim, radius: f64, points: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("radial grid radius must be positive, got {radius}")));
        }
        if points < MIN_POINTS {
            return Err(Error::Config(format!(
                "radial grid needs at least {MIN_POINTS} points, got {points}"
            )));
        }
        let h = radius / points as f64;
        let n = dim.nf();
        let area = dim.sphere_area();
        let mut cell_geo = Vec::with_capacity(points);
        let mut edge_a = Vec::with_capacity(points);
        for j in 0..points {
            let lo = if j == 0 { 0.0 } else { (j as f64 - 0.5) * h };
            let hi = (j as f64 + 0.5) * h;
            cell_geo.push((hi.powf(n) - lo.powf(n)) / n);
            edge_a.push(hi.powf(n - 1.0));
        }
        let cell_w = cell_geo.iter().map(|w| w * area).collect();
        Ok(RadialGrid { dim, radius, points, h, cell_w, edge_a, cell_geo })
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Flux-form radial Laplacian with Dirichlet value 0 at r = R.
    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.points;
        let h = self.h;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let up = if j + 1 < n { u[j + 1] } else { Complex64::ZERO };
            let flux_hi = self.edge_a[j] * (up - u[j]);
            let flux_lo = if j == 0 {
                Complex64::ZERO
            } else {
                self.edge_a[j - 1] * (u[j] - u[j - 1])
            };
            out.push((flux_hi - flux_lo) / (self.cell_geo[j] * h));
        }
        out
    }

    /// Tridiagonal Crank-Nicolson step for i u_t = Delta u:
    /// (I + i dt/2 A) u_new = (I - i dt/2 A) u. Exactly mass preserving in
    /// the grid quadrature because the Cayley transform of the weighted
    /// self-adjoint A is unitary.
    pub fn crank_nicolson(&self, u: &mut [Complex64], dt: f64) -> Result<()> {
        let n = self.points;
        let h = self.h;
        let half = Complex64::new(0.0, 0.5 * dt);

        // Tridiagonal entries of A.
        let mut sub = vec![0.0f64; n];
        let mut diag = vec![0.0f64; n];
        let mut sup = vec![0.0f64; n];
        for j in 0..n {
            let wh = self.cell_geo[j] * h;
            let a_hi = self.edge_a[j];
            let a_lo = if j == 0 { 0.0 } else { self.edge_a[j - 1] };
            diag[j] = -(a_hi + a_lo) / wh;
            if j > 0 {
                sub[j] = a_lo / wh;
            }
            if j + 1 < n {
                sup[j] = a_hi / wh;
            }
        }

        // Right-hand side (I - i dt/2 A) u.
        let mut rhs = Vec::with_capacity(n);
        for j in 0..n {
            let mut v = u[j] - half * (diag[j] * u[j]);
            if j > 0 {
                v -= half * (sub[j] * u[j - 1]);
            }
            if j + 1 < n {
                v -= half * (sup[j] * u[j + 1]);
            }
            rhs.push(v);
        }

        // Thomas solve of (I + i dt/2 A) x = rhs.
        let mut c_prime = vec![Complex64::ZERO; n];
        let mut d_prime = vec![Complex64::ZERO; n];
        let b0 = Complex64::ONE + half * diag[0];
        if b0.norm() == 0.0 {
            return Err(Error::Numerical("Crank-Nicolson pivot vanished".into()));
        }
        c_prime[0] = half * sup[0] / b0;
        d_prime[0] = rhs[0] / b0;
        for j in 1..n {
            let a_j = half * sub[j];
            let denom = (Complex64::ONE + half * diag[j]) - a_j * c_prime[j - 1];
            if denom.norm() == 0.0 {
                return Err(Error::Numerical("Crank-Nicolson pivot vanished".into()));
            }
            if j + 1 < n {
                c_prime[j] = half * sup[j] / denom;
            }
            d_prime[j] = (rhs[j] - a_j * d_prime[j - 1]) / denom;
        }
        u[n - 1] = d_prime[n - 1];
        for j in (0..n - 1).rev() {
            u[j] = d_prime[j] - c_prime[j] * u[j + 1];
        }
        Ok(())
    }

    /// Centered node derivative used for pointwise x . grad u quadratures.
    /// At r = 0 smooth radial fields have zero derivative; the outer end
    /// uses the Dirichlet ghost value 0.
    pub fn node_derivative(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.points;
        let two_h = 2.0 * self.h;
        (0..n)
            .map(|j| {
                if j == 0 {
                    Complex64::ZERO
                } else {
                    let up = if j + 1 < n { u[j + 1] } else { Complex64::ZERO };
                    (up - u[j - 1]) / two_h
                }
            })
            .collect()
    }
}

pub struct BoxGrid {
    side: f64,
    points: usize,
    h: f64,
    /// Signed wavenumbers 2 pi s(m) / L per index.
    kv: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BoxGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxGrid")
            .field("side", &self.side)
            .field("points", &self.points)
            .finish()
    }
}

impl BoxGrid {
    pub fn new(side: f64, points: usize) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::Config(format!("box side must be positive, got {side}")));
        }
        if points < MIN_POINTS {
            return Err(Error::Config(format!(
                "box grid needs at least {MIN_POINTS} points per axis, got {points}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(points);
        let inv = planner.plan_fft_inverse(points);
        let kv = (0..points)
            .map(|m| {
                let s = if m <= points / 2 { m as i64 } else { m as i64 - points as i64 };
                2.0 * std::f64::consts::PI * s as f64 / side
            })
            .collect();
        Ok(BoxGrid { side, points, h: side / points as f64, kv, fwd, inv })
    }

    pub fn len(&self) -> usize {
        self.points * self.points * self.points
    }

    /// Box-centered coordinate of a 1-D index along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side + i as f64 * self.h
    }

    pub fn split_index(&self, idx: usize) -> [usize; 3] {
        let n = self.points;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.points;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut line = vec![Complex64::ZERO; n];
        // axis 2: contiguous
        for chunk in data.chunks_exact_mut(n) {
            plan.process(chunk);
        }
        // axis 1: stride n within each n*n plane
        for plane in data.chunks_exact_mut(n * n) {
            for x in 0..n {
                for (i, l) in line.iter_mut().enumerate() {
                    *l = plane[i * n + x];
                }
                plan.process(&mut line);
                for (i, l) in line.iter().enumerate() {
                    plane[i * n + x] = *l;
                }
            }
        }
        // axis 0: stride n*n
        let nn = n * n;
        for x in 0..nn {
            for (i, l) in line.iter_mut().enumerate() {
                *l = data[i * nn + x];
            }
            plan.process(&mut line);
            for (i, l) in line.iter().enumerate() {
                data[i * nn + x] = *l;
            }
        }
        if inverse {
            let scale = 1.0 / (n * n * n) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    fn for_each_mode(&self, data: &mut [Complex64], mut f: impl FnMut(&mut Complex64, [f64; 3])) {
        let n = self.points;
        let mut idx = 0;
        for mx in 0..n {
            let kx = self.kv[mx];
            for my in 0..n {
                let ky = self.kv[my];
                for kz in self.kv.iter().take(n) {
                    f(&mut data[idx], [kx, ky, *kz]);
                    idx += 1;
                }
            }
        }
    }

    /// Free Schroedinger propagator over time dt: multiply each Fourier mode
    /// by exp(i |k|^2 dt), the exact flow of i u_t = Delta u.
    pub fn phase_step(&self, u: &mut [Complex64], dt: f64) {
        self.fft3(u, false);
        self.for_each_mode(u, |v, k| {
            let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            *v *= Complex64::from_polar(1.0, ksq * dt);
        });
        self.fft3(u, true);
    }

    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut hat = u.to_vec();
        self.fft3(&mut hat, false);
        self.for_each_mode(&mut hat, |v, k| {
            *v *= -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        });
        self.fft3(&mut hat, true);
        hat
    }

    /// Spectral derivative along one axis; the Nyquist mode is zeroed as
    /// usual for odd-order derivatives on even-length grids.
    pub fn derivative(&self, u: &[Complex64], axis: usize) -> Vec<Complex64> {
        let n = self.points;
        let mut hat = u.to_vec();
        self.fft3(&mut hat, false);
        let nyquist = if n % 2 == 0 { Some(n / 2) } else { None };
        let nn = n * n;
        for (idx, v) in hat.iter_mut().enumerate() {
            let m = match axis {
                0 => idx / nn,
                1 => (idx / n) % n,
                _ => idx % n,
            };
            if nyquist == Some(m) {
                *v = Complex64::ZERO;
            } else {
                *v *= Complex64::new(0.0, self.kv[m]);
            }
        }
        self.fft3(&mut hat, true);
        hat
    }

    /// Kinetic integral int |grad u|^2 via Parseval with the same |k|^2
    /// symbol the propagator uses.
    pub fn kinetic(&self, u: &[Complex64]) -> f64 {
        let mut hat = u.to_vec();
        self.fft3(&mut hat, false);
        let mut acc = 0.0;
        self.for_each_mode(&mut hat, |v, k| {
            acc += (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * v.norm_sqr();
        });
        // Parseval: sum |u_j|^2 h^3 = sum |u_hat|^2 / N^3 * h^3
        acc * self.h.powi(3) / self.len() as f64
    }
}

#[derive(Debug)]
pub enum Grid {
    Radial(RadialGrid),
    PeriodicBox(BoxGrid),
}

impl Grid {
    pub fn radial(dim: Dim, radius: f64, points: usize) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::Radial(RadialGrid::new(dim, radius, points)?)))
    }

    /// Full periodic grids are restricted to n = 3 by memory; higher
    /// dimensions run on the radial grid.
    pub fn periodic_box(dim: Dim, side: f64, points: usize) -> Result<Arc<Grid>> {
        if dim != Dim::THREE {
            return Err(Error::Config(format!(
                "periodic box supports n = 3 only, got n = {dim}"
            )));
        }
        Ok(Arc::new(Grid::PeriodicBox(BoxGrid::new(side, points)?)))
    }

    pub fn dim(&self) -> Dim {
        match self {
            Grid::Radial(g) => g.dim,
            Grid::PeriodicBox(_) => Dim::THREE,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.points,
            Grid::PeriodicBox(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.h,
            Grid::PeriodicBox(g) => g.h,
        }
    }

    pub fn as_radial(&self) -> Option<&RadialGrid> {
        match self {
            Grid::Radial(g) => Some(g),
            Grid::PeriodicBox(_) => None,
        }
    }

    pub fn as_box(&self) -> Option<&BoxGrid> {
        match self {
            Grid::PeriodicBox(g) => Some(g),
            Grid::Radial(_) => None,
        }
    }

    /// |x|^2 at a grid index (box coordinates are box-centered).
    pub fn x_sq(&self, idx: usize) -> f64 {
        match self {
            Grid::Radial(g) => {
                let r = g.r(idx);
                r * r
            }
            Grid::PeriodicBox(g) => {
                let [ix, iy, iz] = g.split_index(idx);
                let (x, y, z) = (g.coord(ix), g.coord(iy), g.coord(iz));
                x * x + y * y + z * z
            }
        }
    }

    /// Quadrature of a scalar sample set against the grid measure.
    pub fn quadrature(&self, f: impl Fn(usize) -> f64) -> f64 {
        match self {
            Grid::Radial(g) => g.cell_w.iter().enumerate().map(|(j, w)| w * f(j)).sum(),
            Grid::PeriodicBox(g) => {
                let vol = g.h.powi(3);
                (0..g.len()).map(|j| vol * f(j)).sum()
            }
        }
    }

    /// int |grad u|^2. Radial grids use the edge-difference form that is
    /// exactly the quadratic form of the flux Laplacian; the box uses the
    /// spectral symbol.
    pub fn kinetic(&self, u: &[Complex64]) -> f64 {
        match self {
            Grid::Radial(g) => {
                let mut acc = 0.0;
                for j in 0..g.points {
                    let up = if j + 1 < g.points { u[j + 1] } else { Complex64::ZERO };
                    let diff = (up - u[j]) / g.h;
                    acc += g.edge_a[j] * g.h * diff.norm_sqr();
                }
                acc * g.dim.sphere_area()
            }
            Grid::PeriodicBox(g) => g.kinetic(u),
        }
    }

    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        match self {
            Grid::Radial(g) => g.laplacian(u),
            Grid::PeriodicBox(g) => g.laplacian(u),
        }
    }

    /// Samples of x . grad u at every node.
    pub fn x_dot_grad(&self, u: &[Complex64]) -> Vec<Complex64> {
        match self {
            Grid::Radial(g) => {
                let du = g.node_derivative(u);
                (0..g.points).map(|j| du[j] * g.r(j)).collect()
            }
            Grid::PeriodicBox(g) => {
                let mut out = vec![Complex64::ZERO; g.len()];
                for axis in 0..3 {
                    let d = g.derivative(u, axis);
                    for (idx, (o, dv)) in out.iter_mut().zip(d).enumerate() {
                        let c = g.coord(g.split_index(idx)[axis]);
                        *o += c * dv;
                    }
                }
                out
            }
        }
    }
}

/// A complex scalar field sampled on a shared grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![Complex64::ZERO; grid.len()];
        Field { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!(
                "field has {} samples but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn sup_amp(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}
