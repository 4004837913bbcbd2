//! Convergence of the deterministic virial identities dV/dt = 4G and
//! d^2V/dt^2 = (16n/(n-2)) H - (16/(n-2)) ||grad u||^2 under simultaneous
//! halving of the solver step and the recording interval.
//!
//!     cargo run --release --example virial_identities

use critnls::diagnostics::deterministic_virial_residuals;
use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::noise::NoiseKind;
use critnls::solver::{make_initial, Detector, DtPolicy, InitialSpec, NoiseSource, SimState};

fn main() {
    let grid = Grid::periodic_box(Dim::THREE, 24.0, 48).unwrap();
    println!("defocusing Gaussian on the periodic box, T = 0.5");
    println!("{:>9} {:>9} {:>14} {:>14}", "dt", "record", "max|dV-4G|", "max|d2V-rhs|");
    let mut prev: Option<(f64, f64)> = None;
    for level in 0..3 {
        let dt = 0.01 / (1 << level) as f64;
        let rec = 0.05 / (1 << level) as f64;
        let u0 =
            make_initial(&grid, &InitialSpec::Gaussian { amplitude: 1.0, width: 2.0 }).unwrap();
        let mut state = SimState::new(
            u0,
            -1.0,
            NoiseKind::None,
            None,
            NoiseSource::Stream { seed: 0, path: 0 },
            Detector::default(),
        )
        .unwrap();
        let out = state.run(0.5, &DtPolicy::Fixed { dt }, rec).unwrap();
        let (r1, r2) = deterministic_virial_residuals(&out.rows, Dim::THREE).unwrap();
        print!("{dt:>9.5} {rec:>9.5} {r1:>14.4e} {r2:>14.4e}");
        if let Some((p1, p2)) = prev {
            print!("   ratios {:.2} / {:.2}", p1 / r1, p2 / r2);
        }
        println!();
        prev = Some((r1, r2));
    }
}
