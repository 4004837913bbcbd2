//! Pathwise evolution-identity residuals on one frozen Brownian path,
//! refined in dt. Both the additive and the multiplicative identities are
//! exercised; the residual reported per level is the sup over the
//! trajectory.
//!
//!     cargo run --release --example frozen_path_residuals

use std::sync::Arc;

use critnls::dim::Dim;
use critnls::grid::Grid;
use critnls::noise::{BasisKind, Complexness, FrozenPath, NoiseKind, NoiseOperator, NoiseSpec};
use critnls::solver::{make_initial, Detector, InitialSpec, NoiseSource, SimState};

fn study(kind: NoiseKind, complexness: Complexness, label: &str) {
    let grid = Grid::radial(Dim::THREE, 16.0, 256).unwrap();
    let spec = NoiseSpec {
        basis: BasisKind::SineRadial,
        k_modes: 8,
        decay_q: 2.0,
        epsilon: 0.3,
        complexness,
    };
    let op = Arc::new(NoiseOperator::build(&spec, grid.clone()).unwrap());
    let t_end = 0.5;
    let frozen = Arc::new(FrozenPath::sample(&op, t_end / 1024.0, 1024, 42, 0));

    println!("{label}:");
    println!("{:>10} {:>13} {:>13} {:>13}", "dt", "energy", "variance", "virial");
    for level in 0..4 {
        let steps = 128usize << level;
        let dt = t_end / steps as f64;
        let u0 =
            make_initial(&grid, &InitialSpec::Gaussian { amplitude: 0.8, width: 2.0 }).unwrap();
        let mut state = SimState::new(
            u0,
            1.0,
            kind,
            Some(op.clone()),
            NoiseSource::Frozen(frozen.clone()),
            Detector::default(),
        )
        .unwrap();
        state.enable_accumulators().unwrap();
        let (mut se, mut sv, mut sg) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..steps {
            state.step(dt).unwrap();
            let r = state.residuals().unwrap();
            se = se.max(r.energy.abs());
            sv = sv.max(r.variance.abs());
            sg = sg.max(r.virial.abs());
        }
        println!("{dt:>10.6} {se:>13.4e} {sv:>13.4e} {sg:>13.4e}");
    }
    println!();
}

fn main() {
    study(NoiseKind::Additive, Complexness::ComplexValued, "additive (complex) noise");
    study(
        NoiseKind::MultiplicativeStratonovich,
        Complexness::RealValued,
        "multiplicative (real, Stratonovich) noise",
    );
}
