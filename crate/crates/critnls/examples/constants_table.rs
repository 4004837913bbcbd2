//! Critical exponents and ground-state constants for every supported
//! dimension, next to the identities they must satisfy.
//!
//!     cargo run --release --example constants_table

use critnls::dim::Dim;
use critnls::exponents::exponents;
use critnls::ground_state::ground_state_constants;

fn main() {
    println!("{:>2} {:>8} {:>8} {:>8} {:>8}", "n", "p=gamma", "rho", "kappa", "sigma");
    for dim in Dim::ALL {
        let e = exponents(dim);
        println!(
            "{:>2} {:>8} {:>8} {:>8} {:>8}",
            e.n,
            e.p.to_string(),
            e.rho.to_string(),
            e.kappa.to_string(),
            e.sigma.to_string()
        );
        assert_eq!(e.l2_admissibility_defect().to_string(), "0");
        assert_eq!(e.h1_admissibility_defect().to_string(), "0");
    }

    println!();
    println!(
        "{:>2} {:>14} {:>14} {:>14} {:>12}",
        "n", "C_n", "||grad Q||^2", "H(Q)", "quad error"
    );
    for dim in Dim::ALL {
        let gs = ground_state_constants(dim, 1e-11).unwrap();
        println!(
            "{:>2} {:>14.10} {:>14.8} {:>14.8} {:>12.2e}",
            gs.n, gs.c_n, gs.grad_q_sq, gs.h_q, gs.quadrature_error
        );
        // the two self-consistency identities
        let pohozaev = (gs.h_q - gs.grad_q_sq / dim.nf()).abs() / gs.h_q;
        let sharp = (gs.grad_q_sq * gs.c_n.powf(dim.nf()) - 1.0).abs();
        println!("   H(Q) - x_c/n defect: {pohozaev:.2e},  x_c C_n^n - 1: {sharp:.2e}");
    }
}
