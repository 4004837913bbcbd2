//! Counter-based random numbers for ensemble runs.
//!
//! Every draw is a pure function of (seed, path, step, counter), so any
//! path is recomputable in isolation and results do not depend on worker
//! scheduling. Normals come from Box-Muller with a fixed two-uniform
//! consumption per pair, keeping the stream layout deterministic.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one (seed, path, step) cell of the noise lattice.
#[derive(Debug, Clone)]
pub struct StepRng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl StepRng {
    pub fn new(seed: u64, path: u64, step: u64) -> Self {
        // Absorb the three coordinates through successive finalizers so
        // nearby keys decorrelate.
        let key = mix(mix(mix(seed) ^ path.wrapping_mul(0xa076_1d64_78bd_642f))
            ^ step.wrapping_mul(0xe703_7ed1_a0b4_28db));
        StepRng { key, counter: 0, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    /// Uniform draw in the half-open interval (0, 1]; never zero, so it is
    /// safe under a logarithm.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller; pairs share the two uniforms.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(mag * theta.sin());
        mag * theta.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_key() {
        let mut a = StepRng::new(7, 3, 11);
        let mut b = StepRng::new(7, 3, 11);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = StepRng::new(7, 3, 12);
        assert_ne!(StepRng::new(7, 3, 11).next_u64(), c.next_u64());
        assert_ne!(
            StepRng::new(7, 3, 11).next_u64(),
            StepRng::new(7, 4, 11).next_u64()
        );
        assert_ne!(
            StepRng::new(7, 3, 11).next_u64(),
            StepRng::new(8, 3, 11).next_u64()
        );
    }

    #[test]
    fn normal_moments() {
        let mut rng = StepRng::new(42, 0, 0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut sum_4 = 0.0;
        for _ in 0..n {
            let z = rng.normal();
            sum += z;
            sum_sq += z * z;
            sum_4 += z * z * z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64;
        let kurt = sum_4 / n as f64;
        // three standard errors
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt(), "var {var}");
        assert!((kurt - 3.0).abs() < 3.0 * (96.0f64 / n as f64).sqrt(), "kurtosis {kurt}");
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = StepRng::new(1, 2, 3);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }
}
