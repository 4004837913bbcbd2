//! Build a Q-Wiener operator from sine modes on the radial grid, print its
//! derived constants, and check the sampled increments against the exact
//! one-step covariance.
//!
//!     cargo run --release --example noise_operator

use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::noise::{BasisKind, Complexness, NoiseOperator, NoiseSpec};
use critnls::rng::StepRng;

fn main() {
    let grid = Grid::radial(Dim::THREE, 16.0, 256).unwrap();
    let spec = NoiseSpec {
        basis: BasisKind::SineRadial,
        k_modes: 16,
        decay_q: 2.0,
        epsilon: 0.5,
        complexness: Complexness::ComplexValued,
    };
    let op = NoiseOperator::build(&spec, grid.clone()).unwrap();
    let c = op.constants();

    println!("operator: K = {} sine modes, decay q = {}, eps = {}", spec.k_modes, spec.decay_q, spec.epsilon);
    println!("  ||phi||_L2->L2      = {:.6}", c.hs_norm_0);
    println!("  ||phi||_L2->H1      = {:.6}", c.hs_norm_1);
    println!("  C_phi^Sigma         = {:.6}", c.c_phi_sigma);
    println!("  C(phi)              = {:.6}", c.c_of_phi);
    println!("  C_phi^(1)           = {:.6}", c.c_phi_1);
    println!("  C_phi^(2)           = {:.6e}", c.c_phi_2);
    println!("  M_phi               = {:.6}", c.m_phi);
    assert!(c.c_phi_1 <= c.hs_norm_1 * c.hs_norm_1);
    assert!(c.c_phi_2.abs() <= c.hs_norm_1 * c.c_phi_sigma.sqrt() + 1e-12);

    // sample moments at one probe node against dt * F_phi(x)
    let dt = 0.01;
    let probe = 64;
    let trials = 50_000;
    let mut mean_re = 0.0;
    let mut second = 0.0;
    for t in 0..trials {
        let inc = op.sample_increment(dt, &mut StepRng::new(7, 0, t));
        mean_re += inc.delta_w[probe].re;
        second += inc.delta_w[probe].norm_sqr();
    }
    mean_re /= trials as f64;
    second /= trials as f64;
    let expect = dt * c.f_phi[probe];
    println!();
    println!("one-step increment at r = {:.3}:", 64.0 * 16.0 / 256.0);
    println!("  sample mean (re)    = {mean_re:+.3e}   (expect 0)");
    println!("  sample E|dW|^2      = {second:.6e}");
    println!("  dt * F_phi(x)       = {expect:.6e}");
    let se = expect * (2.0 / trials as f64).sqrt();
    assert!((second - expect).abs() < 4.0 * se, "covariance off: {second} vs {expect}");
    println!("  agreement within Monte Carlo error");
}
