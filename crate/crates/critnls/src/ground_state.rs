//! The ground state Q(x) = (1 + |x|^2/(n(n-2)))^{-(n-2)/2}, the sharp
//! Sobolev constant it attains, and the trapping function built from both.
//!
//! Q is not square-integrable for n = 3, 4, so only the weighted radial
//! integrals that actually converge are ever computed: |Q'|^2 r^{n-1} and
//! Q^{2n/(n-2)} r^{n-1}. The half-line is compactified inside the
//! quadrature, which makes the truncation-tail contribution exactly zero.

use serde::Serialize;

use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::quad::integrate_to_infinity;

/// Radial profile Q(r) for r >= 0.
pub fn q_profile(r: f64, dim: Dim) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("q_profile needs r >= 0, got {r}")));
    }
    let n = dim.nf();
    Ok((1.0 + r * r / (n * (n - 2.0))).powf(-(n - 2.0) / 2.0))
}

/// Radial derivative Q'(r) = -(r/n) (1 + r^2/(n(n-2)))^{-n/2}.
pub fn q_profile_deriv(r: f64, dim: Dim) -> f64 {
    let n = dim.nf();
    -(r / n) * (1.0 + r * r / (n * (n - 2.0))).powf(-n / 2.0)
}

/// Sharp constants carried by Q, all produced by quadrature.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroundStateConstants {
    pub n: u32,
    /// Sharp Sobolev constant C_n = ||Q||_{L^{2n/(n-2)}} / ||grad Q||_{L^2}.
    pub c_n: f64,
    /// x_c = ||grad Q||^2_{L^2}.
    pub grad_q_sq: f64,
    /// H(Q), computed by direct quadrature of the energy (focusing sign).
    pub h_q: f64,
    /// Estimated absolute quadrature error underlying the entries above.
    pub quadrature_error: f64,
    #[serde(skip)]
    dim: Dim,
}

/// Compute kinetic and potential integrals of Q by independent quadratures:
/// K = ||grad Q||^2 and P = ||Q||^{2n/(n-2)}_{L^{2n/(n-2)}}.
fn q_integrals(dim: Dim, tol: f64) -> Result<(f64, f64, f64)> {
    let area = dim.sphere_area();
    let n = dim.nf();
    let kinetic = integrate_to_infinity(
        move |r| {
            let dq = q_profile_deriv(r, dim);
            dq * dq * r.powf(n - 1.0)
        },
        tol,
    )?;
    let potential = integrate_to_infinity(
        move |r| {
            let q = q_profile(r, dim).expect("r >= 0 inside quadrature");
            q.powf(2.0 * n / (n - 2.0)) * r.powf(n - 1.0)
        },
        tol,
    )?;
    let err = area * (kinetic.error + potential.error);
    Ok((area * kinetic.value, area * potential.value, err))
}

pub fn ground_state_constants(dim: Dim, tol: f64) -> Result<GroundStateConstants> {
    let (kinetic, potential, err) = q_integrals(dim, tol)?;
    let n = dim.nf();
    // ||Q||_{L^{2n/(n-2)}} = P^{(n-2)/(2n)}; C_n is the Sobolev quotient
    // attained by Q.
    let c_n = potential.powf((n - 2.0) / (2.0 * n)) / kinetic.sqrt();
    let h_q = 0.5 * kinetic - dim.potential_coeff() * potential;
    Ok(GroundStateConstants {
        n: dim.n(),
        c_n,
        grad_q_sq: kinetic,
        h_q,
        quadrature_error: err,
        dim,
    })
}

/// Outcome of the dichotomy test on (H(u_0), ||grad u_0||).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trapping {
    TrappedBelow,
    AboveThreshold,
    Indeterminate,
}

impl GroundStateConstants {
    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// ||grad Q||_{L^2}.
    pub fn grad_q(&self) -> f64 {
        self.grad_q_sq.sqrt()
    }

    /// Trapping function f(x) = x/2 - ((n-2)/(2n)) C_n^{2n/(n-2)} x^{n/(n-2)}
    /// for x = ||grad u||^2 >= 0. Maximized at x_c = C_n^{-n} with value H(Q).
    pub fn trapping_f(&self, x: f64) -> f64 {
        let n = self.dim.nf();
        0.5 * x - self.dim.potential_coeff() * self.c_n.powf(2.0 * n / (n - 2.0)) * x.powf(n / (n - 2.0))
    }

    /// Strict-inequality dichotomy on energy and kinetic norm; boundary
    /// cases are deliberately indeterminate.
    pub fn trapping_predicate(&self, h0: f64, g0: f64) -> Trapping {
        if !h0.is_finite() || !g0.is_finite() || h0 >= self.h_q {
            return Trapping::Indeterminate;
        }
        if g0 < self.grad_q() {
            Trapping::TrappedBelow
        } else if g0 > self.grad_q() {
            Trapping::AboveThreshold
        } else {
            Trapping::Indeterminate
        }
    }
}

/// Max-norm residual of the discrete elliptic equation
/// Delta_h Q + Q^{(n+2)/(n-2)} over interior nodes of a uniform radial grid,
/// using the centered second-order stencil with the r = 0 regularity closure
/// Delta u(0) = 2n (u_1 - u_0)/h^2.
pub fn elliptic_residual(dim: Dim, h: f64, radius: f64) -> Result<f64> {
    if !(h > 0.0) || !(radius > 2.0 * h) {
        return Err(Error::Config(format!(
            "invalid radial grid: h = {h}, radius = {radius}"
        )));
    }
    let n = dim.nf();
    let steps = (radius / h).round() as usize;
    let q: Vec<f64> = (0..=steps)
        .map(|j| q_profile(j as f64 * h, dim))
        .collect::<Result<_>>()?;
    let power = (n + 2.0) / (n - 2.0);

    let mut worst = 0.0f64;
    for j in 0..steps {
        let laplacian = if j == 0 {
            2.0 * n * (q[1] - q[0]) / (h * h)
        } else {
            let r = j as f64 * h;
            (q[j + 1] - 2.0 * q[j] + q[j - 1]) / (h * h)
                + (n - 1.0) / r * (q[j + 1] - q[j - 1]) / (2.0 * h)
        };
        let residual = (laplacian + q[j].powf(power)).abs();
        worst = worst.max(residual);
    }
    Ok(worst)
}
