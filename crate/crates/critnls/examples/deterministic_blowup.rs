//! Deterministic blow-up of pumped-up truncated ground states: the
//! detector firing time decreases as the amplitude factor grows.
//!
//!     cargo run --release --example deterministic_blowup

use critnls::diagnostics::{energy, grad_norm, variance};
use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::ground_state::ground_state_constants;
use critnls::noise::NoiseKind;
use critnls::solver::{
    make_initial, Detector, DtPolicy, InitialSpec, NoiseSource, SimState, Status,
};

fn main() {
    let gs = ground_state_constants(Dim::THREE, 1e-10).unwrap();
    // The 1/r tail of Q makes truncation delicate in n = 3: a tight taper
    // stores ~1/taper of extra gradient energy. cutoff 12 / taper 30 keeps
    // H(u0) below H(Q) at alpha = 1.2 while the variance stays finite.
    let grid = Grid::radial(Dim::THREE, 48.0, 768).unwrap();

    println!(
        "{:>5} {:>14} {:>12} {:>12} {:>12}",
        "alpha", "grad/gradQ", "H/H(Q)", "V(u0)", "firing t"
    );
    for alpha in [1.2, 1.5, 2.0] {
        let u0 = make_initial(
            &grid,
            &InitialSpec::ScaledQ { alpha, cutoff: 12.0, taper: Some(30.0) },
        )
        .unwrap();
        let grad_ratio = grad_norm(&u0) / gs.grad_q();
        let h_ratio = energy(&u0, 1.0) / gs.h_q;
        let v0 = variance(&u0);
        assert!(grad_ratio > 1.0 && h_ratio < 1.0);

        let mut state = SimState::new(
            u0,
            1.0,
            NoiseKind::None,
            None,
            NoiseSource::Stream { seed: 0, path: 0 },
            Detector { gamma: 10.0, amp_max: 1e6 },
        )
        .unwrap();
        state
            .run(10.0, &DtPolicy::Adaptive { dt0: 2e-3, dt_min: 2e-6 }, 0.5)
            .unwrap();
        let fired = match state.status {
            Status::BlownUp { t } => t,
            other => panic!("expected blow-up, got {other:?}"),
        };
        println!(
            "{:>5.1} {:>14.4} {:>12.4} {:>12.1} {:>12.4}",
            alpha, grad_ratio, h_ratio, v0, fired
        );
    }
}
