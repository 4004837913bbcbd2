//! Focusing evolution of trapped initial data: the kinetic norm stays
//! below the ground-state value for the whole run, and the trapping
//! function stays below the energy pointwise.
//!
//!     cargo run --release --example trapped_orbit

use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::ground_state::ground_state_constants;
use critnls::noise::NoiseKind;
use critnls::solver::{make_initial, Detector, DtPolicy, InitialSpec, NoiseSource, SimState};

fn main() {
    let gs = ground_state_constants(Dim::THREE, 1e-10).unwrap();
    let grid = Grid::radial(Dim::THREE, 16.0, 256).unwrap();
    // rescale a Gaussian so ||grad u0|| = 0.8 ||grad Q||
    let base = make_initial(&grid, &InitialSpec::Gaussian { amplitude: 1.0, width: 2.0 }).unwrap();
    let amp = (0.64 * gs.grad_q_sq / grid.kinetic(&base.values)).sqrt();
    let u0 = make_initial(&grid, &InitialSpec::Gaussian { amplitude: amp, width: 2.0 }).unwrap();

    let mut state = SimState::new(
        u0,
        1.0,
        NoiseKind::None,
        None,
        NoiseSource::Stream { seed: 0, path: 0 },
        Detector::default(),
    )
    .unwrap();
    let out = state.run(5.0, &DtPolicy::Fixed { dt: 0.01 }, 0.5).unwrap();

    println!("||grad Q|| = {:.6}, H(Q) = {:.6}", gs.grad_q(), gs.h_q);
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "||grad u||", "H(u)", "f(K)", "mass");
    for row in &out.rows {
        let f_val = gs.trapping_f(row.grad_norm * row.grad_norm);
        println!(
            "{:>6.2} {:>12.6} {:>12.6} {:>12.6} {:>12.8}",
            row.t, row.grad_norm, row.energy, f_val, row.mass
        );
        assert!(f_val <= row.energy + 1e-6);
    }
    println!();
    println!(
        "sup ||grad u|| = {:.6} stayed below ||grad Q|| = {:.6}",
        out.sup_grad,
        gs.grad_q()
    );
    assert!(out.sup_grad < gs.grad_q());
}
