//! Critical exponents and admissible pairs, kept as exact rationals so the
//! admissibility identities hold without rounding. Floats only appear when a
//! consumer evaluates them.

use num_rational::Ratio;
use serde::Serialize;

use crate::dim::Dim;
use crate::error::Result;

pub type Rational = Ratio<i64>;

/// The exponent bundle attached to a dimension: sigma = 2/(n-2),
/// p = gamma = 2(n+2)/(n-2), rho = 2n(n+2)/(n^2+4), kappa = n(n+2)/(n-2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Exponents {
    pub n: u32,
    #[serde(serialize_with = "ser_rational")]
    pub sigma: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub gamma: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub rho: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub kappa: Rational,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    if r.is_integer() {
        s.serialize_i64(*r.numer())
    } else {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }
}

pub fn exponents(dim: Dim) -> Exponents {
    let n = i64::from(dim.n() as u8);
    let p = Ratio::new(2 * (n + 2), n - 2);
    Exponents {
        n: dim.n(),
        sigma: Ratio::new(2, n - 2),
        p,
        gamma: p,
        rho: Ratio::new(2 * n * (n + 2), n * n + 4),
        kappa: Ratio::new(n * (n + 2), n - 2),
    }
}

/// Checked constructor for raw integer input (CLI path).
pub fn exponents_for(n: u8) -> Result<Exponents> {
    Ok(exponents(Dim::new(n)?))
}

impl Exponents {
    fn n_rational(&self) -> Rational {
        Ratio::from_integer(i64::from(self.n as u8))
    }

    /// 2/gamma + n/rho - n/2, zero exactly when (gamma, rho) is L^2-admissible.
    pub fn l2_admissibility_defect(&self) -> Rational {
        let n = self.n_rational();
        Ratio::new(2, 1) / self.gamma + n / self.rho - n / Ratio::new(2, 1)
    }

    /// 2/gamma + n/p - (n/2 - 1), zero exactly for the H^1-admissible pair.
    pub fn h1_admissibility_defect(&self) -> Rational {
        let n = self.n_rational();
        Ratio::new(2, 1) / self.gamma + n / self.p - (n / Ratio::new(2, 1) - Ratio::new(1, 1))
    }

    /// (n+2)/(2n) - (2 sigma/p + 1/rho): the Holder split for the dual
    /// exponent 2n/(n+2), zero exactly.
    pub fn holder_split_defect(&self) -> Rational {
        let n = self.n_rational();
        (n + Ratio::new(2, 1)) / (Ratio::new(2, 1) * n)
            - (Ratio::new(2, 1) * self.sigma / self.p + Ratio::new(1, 1) / self.rho)
    }
}
