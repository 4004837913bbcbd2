use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension of the equation, restricted to the energy-critical
/// range n = 3, 4, 5 where the nonlinearity power 4/(n-2) is defined and
/// the fixed-point exponent (6-n)/(n-2) stays positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Dim(u8);

impl Dim {
    pub const THREE: Dim = Dim(3);
    pub const FOUR: Dim = Dim(4);
    pub const FIVE: Dim = Dim(5);

    pub const ALL: [Dim; 3] = [Dim::THREE, Dim::FOUR, Dim::FIVE];

    pub fn new(n: u8) -> Result<Self> {
        match n {
            3 | 4 | 5 => Ok(Dim(n)),
            _ => Err(Error::Domain(format!(
                "dimension n = {n} outside the supported range {{3, 4, 5}}"
            ))),
        }
    }

    pub fn n(self) -> u32 {
        u32::from(self.0)
    }

    pub fn nf(self) -> f64 {
        f64::from(self.0)
    }

    /// Nonlinearity exponent sigma = 2/(n-2); the forcing is |u|^{2 sigma} u.
    pub fn sigma(self) -> f64 {
        2.0 / (self.nf() - 2.0)
    }

    /// Critical Lebesgue exponent 2n/(n-2).
    pub fn critical_exponent(self) -> f64 {
        2.0 * self.nf() / (self.nf() - 2.0)
    }

    /// Coefficient (n-2)/(2n) in front of the potential term of the energy.
    pub fn potential_coeff(self) -> f64 {
        (self.nf() - 2.0) / (2.0 * self.nf())
    }

    /// Surface area of the unit sphere S^{n-1}: 2 pi^{n/2} / Gamma(n/2).
    pub fn sphere_area(self) -> f64 {
        match self.0 {
            3 => 4.0 * PI,
            4 => 2.0 * PI * PI,
            5 => 8.0 * PI * PI / 3.0,
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for Dim {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        Dim::new(n)
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(Dim::new(2).is_err());
        assert!(Dim::new(6).is_err());
        for n in 3..=5 {
            assert!(Dim::new(n).is_ok());
        }
    }

    #[test]
    fn sphere_areas_match_gamma_formula() {
        // 2 pi^{n/2} / Gamma(n/2) with Gamma(3/2) = sqrt(pi)/2, Gamma(2) = 1,
        // Gamma(5/2) = 3 sqrt(pi)/4.
        let g = [PI.sqrt() / 2.0, 1.0, 3.0 * PI.sqrt() / 4.0];
        for (dim, gamma) in Dim::ALL.iter().zip(g) {
            let expected = 2.0 * PI.powf(dim.nf() / 2.0) / gamma;
            assert!((dim.sphere_area() - expected).abs() < 1e-12 * expected);
        }
    }
}
