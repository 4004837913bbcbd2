//! Worked threshold evaluation: existence-time lower bounds for both noise
//! types and the blow-up smallness conditions for a Gaussian-bump data set.
//!
//!     cargo run --release --example threshold_report

use critnls::diagnostics::{energy, mass, variance, virial_g};
use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::ground_state::ground_state_constants;
use critnls::noise::{BasisKind, Complexness, NoiseOperator, NoiseSpec};
use critnls::solver::{make_initial, InitialSpec};
use critnls::thresholds::{
    blowup_conditions_additive, contraction_budget, t_star_additive, t_star_multiplicative,
    ThresholdInputs,
};

fn main() {
    let gs3 = ground_state_constants(Dim::THREE, 1e-11).unwrap();
    let gs4 = ground_state_constants(Dim::FOUR, 1e-11).unwrap();

    println!("existence-time lower bounds:");
    let t = t_star_additive(&gs3, 0.5, 0.1).unwrap();
    println!("  additive,      n=3, beta=0.50, ||phi||=0.10        T* = {t:.12}");
    let m = t_star_multiplicative(&gs4, 0.25, 0.05, 2.0).unwrap();
    println!("  multiplicative n=4, beta=0.25, M_phi=0.05, EM=2    T* = {:.12}", m.t_star);
    println!("                                         E(tau M) >= {:.12}", m.e_tau_mass_lower);

    // noise and data statistics feeding the blow-up conditions
    let grid = Grid::radial(Dim::THREE, 16.0, 256).unwrap();
    let spec = NoiseSpec {
        basis: BasisKind::SineRadial,
        k_modes: 8,
        decay_q: 2.0,
        epsilon: 0.05,
        complexness: Complexness::ComplexValued,
    };
    let op = NoiseOperator::build(&spec, grid.clone()).unwrap();
    let noise = op.constants();
    let u0 = make_initial(&grid, &InitialSpec::Gaussian { amplitude: 0.9, width: 1.5 }).unwrap();

    let inputs = ThresholdInputs {
        n: 3,
        beta0: 0.5,
        delta: 1.2,
        epsilon: 0.1,
        grad_cap: 10.0,
        horizon: 1.0,
        e_mass: mass(&u0),
        e_mass_sq: mass(&u0) * mass(&u0),
        e_variance: variance(&u0),
        e_virial_sq: virial_g(&u0) * virial_g(&u0),
        e_t_tau_sq: None,
    };
    println!();
    println!(
        "blow-up smallness conditions (n=3, delta=1.2, beta0=0.5, eps={}, t={}):",
        inputs.epsilon, inputs.horizon
    );
    println!("  Gaussian bump data: H(u0)/H(Q) = {:.4}, V(u0) = {:.4}", energy(&u0, 1.0) / gs3.h_q, inputs.e_variance);
    for flag in blowup_conditions_additive(&inputs, &gs3, &noise).unwrap() {
        println!(
            "  {:<22} lhs = {:>12.5e}  rhs = {:>9.3e}  {}  (slack {:+.3e})",
            flag.id,
            flag.lhs,
            flag.rhs,
            if flag.satisfied { "ok " } else { "VIOLATED" },
            flag.slack
        );
    }

    println!();
    let b = contraction_budget(Dim::THREE, 1.0, 1.0, 1.0).unwrap();
    println!("fixed-point budget (n=3, A = C_Str = C_Sob = 1):");
    println!(
        "  a = {:.6}, b = {:.3}, alpha = delta = {:.6}, beta = {:.3}, tightened a = {:.6}",
        b.a, b.b, b.alpha, b.beta, b.a_tilde
    );
}
