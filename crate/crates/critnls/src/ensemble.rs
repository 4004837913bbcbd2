//! Monte Carlo estimation of the probabilistic claims: survival and
//! blow-up frequencies, energy-excursion probabilities against their
//! analytic Markov bounds, and the moment estimates fed back into the
//! threshold formulas.
//!
//! Paths are embarrassingly parallel; every draw on path p is keyed by
//! (seed, p, step), so the aggregate is a pure function of (config, seed)
//! regardless of the worker count. Interval estimates use the Wilson score
//! (the Wald interval degenerates in the small-p regimes near blow-up
//! thresholds).

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ground_state::GroundStateConstants;
use crate::noise::{NoiseKind, NoiseOperator, NoiseSpec};
use crate::solver::{make_initial, Detector, DtPolicy, InitialSpec, NoiseSource, SimState, Status};
use crate::thresholds;

/// Fully resolved inputs for one ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSetup {
    pub grid: Arc<Grid>,
    pub initial: InitialSpec,
    pub lambda: f64,
    pub noise_kind: NoiseKind,
    pub op: Option<Arc<NoiseOperator>>,
    pub detector: Detector,
    pub policy: DtPolicy,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Energy-excursion threshold delta: the monitored event is
    /// sup_{s <= T and tau} H(u(s)) >= delta H(Q).
    pub delta_energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathRecord {
    pub path: u64,
    pub blown_up: bool,
    /// Detector firing time when blown up.
    pub firing_time: Option<f64>,
    /// min(T, tau): horizon or firing time.
    pub t_tau: f64,
    pub sup_energy: f64,
    pub sup_grad: f64,
    pub final_mass: f64,
    pub final_energy: f64,
    /// Set when the path ended in a numerical failure rather than a clean
    /// detector firing; such paths count as blown up but are flagged.
    pub numerical_failure: bool,
}

/// 95% Wilson score interval for a Bernoulli proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = 1.959_963_984_540_054f64; // 97.5% normal quantile
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let margin = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (p, (center - margin).max(0.0), (center + margin).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct EventEstimate {
    pub count: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn estimate(count: usize, trials: usize) -> EventEstimate {
    let (p_hat, ci_lo, ci_hi) = wilson_interval(count, trials);
    EventEstimate { count, p_hat, ci_lo, ci_hi }
}

/// Statistics of the (deterministic) initial data plus ensemble moments,
/// in the shape the threshold formulas consume.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ThresholdStats {
    pub e_mass: f64,
    pub e_mass_sq: f64,
    pub e_variance: f64,
    pub e_virial_sq: f64,
    pub e_t_tau_sq: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub delta_energy: f64,
    pub h_q: f64,
    pub blow_up: EventEstimate,
    pub energy_excursion: EventEstimate,
    pub numerical_failures: usize,
    pub e_t_tau_sq: f64,
    pub e_sup_energy: f64,
    pub initial_mass: f64,
    pub initial_variance: f64,
    pub initial_virial: f64,
    pub initial_energy: f64,
    pub records: Vec<PathRecord>,
}

impl EnsembleResult {
    pub fn threshold_stats(&self) -> ThresholdStats {
        ThresholdStats {
            e_mass: self.initial_mass,
            e_mass_sq: self.initial_mass * self.initial_mass,
            e_variance: self.initial_variance,
            e_virial_sq: self.initial_virial * self.initial_virial,
            e_t_tau_sq: self.e_t_tau_sq,
            horizon: self.horizon,
        }
    }
}

fn run_one_path(setup: &EnsembleSetup, gs: &GroundStateConstants, path: u64) -> Result<PathRecord> {
    let u0 = make_initial(&setup.grid, &setup.initial)?;
    let mut state = SimState::new(
        u0,
        setup.lambda,
        setup.noise_kind,
        setup.op.clone(),
        NoiseSource::Stream { seed: setup.seed, path },
        setup.detector,
    )?;
    let run = state.run(setup.horizon, &setup.policy, setup.horizon);
    let (sup_energy, sup_grad, failed) = match &run {
        Ok(out) => (out.sup_energy, out.sup_grad, false),
        Err(Error::Numerical(_)) => (f64::NAN, f64::NAN, true),
        Err(e) => return Err(Error::Config(format!("path {path}: {e}"))),
    };
    let _ = gs;
    let (blown_up, firing_time) = match state.status {
        Status::BlownUp { t } => (true, Some(t)),
        _ if failed => (true, Some(state.t)),
        _ => (false, None),
    };
    let t_tau = firing_time.unwrap_or(setup.horizon);
    Ok(PathRecord {
        path,
        blown_up,
        firing_time,
        t_tau,
        sup_energy,
        sup_grad,
        final_mass: diagnostics::mass(&state.u),
        final_energy: diagnostics::energy(&state.u, setup.lambda),
        numerical_failure: failed,
    })
}

/// Run `setup.paths` independent paths and aggregate. The per-path records
/// are ordered by path index, so the result is identical for any worker
/// count.
pub fn run_ensemble(setup: &EnsembleSetup, gs: &GroundStateConstants) -> Result<EnsembleResult> {
    if setup.paths == 0 {
        return Err(Error::Config("ensemble needs at least one path".into()));
    }
    let u0 = make_initial(&setup.grid, &setup.initial)?;
    let initial_mass = diagnostics::mass(&u0);
    let initial_variance = diagnostics::variance(&u0);
    let initial_virial = diagnostics::virial_g(&u0);
    let initial_energy = diagnostics::energy(&u0, setup.lambda);

    let records: Vec<PathRecord> = (0..setup.paths as u64)
        .into_par_iter()
        .map(|p| run_one_path(setup, gs, p))
        .collect::<Result<_>>()?;

    let blow_count = records.iter().filter(|r| r.blown_up).count();
    let excursion_level = setup.delta_energy * gs.h_q;
    let excursion_count = records
        .iter()
        .filter(|r| r.sup_energy.is_nan() || r.sup_energy >= excursion_level)
        .count();
    let failures = records.iter().filter(|r| r.numerical_failure).count();
    let e_t_tau_sq =
        records.iter().map(|r| r.t_tau * r.t_tau).sum::<f64>() / records.len() as f64;
    let finite_sup: Vec<f64> =
        records.iter().map(|r| r.sup_energy).filter(|s| s.is_finite()).collect();
    let e_sup_energy = if finite_sup.is_empty() {
        f64::NAN
    } else {
        finite_sup.iter().sum::<f64>() / finite_sup.len() as f64
    };

    Ok(EnsembleResult {
        paths: setup.paths,
        seed: setup.seed,
        horizon: setup.horizon,
        delta_energy: setup.delta_energy,
        h_q: gs.h_q,
        blow_up: estimate(blow_count, setup.paths),
        energy_excursion: estimate(excursion_count, setup.paths),
        numerical_failures: failures,
        e_t_tau_sq,
        e_sup_energy,
        initial_mass,
        initial_variance,
        initial_virial,
        initial_energy,
        records,
    })
}

/// Empirical energy-excursion probability next to the analytic Markov
/// bound from the existence-time proofs, plus a bootstrap consistency
/// fraction (how often a resampled mean stays below the bound).
#[derive(Debug, Clone, Serialize)]
pub struct ExcursionStats {
    pub delta: f64,
    pub empirical: EventEstimate,
    pub analytic_bound: f64,
    pub e_sup_energy: f64,
    /// empirical p_hat <= bound within the Wilson upper margin
    pub consistent: bool,
    /// fraction of bootstrap resamples whose mean stays <= bound
    pub bootstrap_fraction: f64,
}

pub fn energy_excursion_stats(
    result: &EnsembleResult,
    setup: &EnsembleSetup,
    gs: &GroundStateConstants,
) -> Result<ExcursionStats> {
    let beta = result.initial_energy / gs.h_q;
    let delta = setup.delta_energy;
    if delta <= beta {
        return Err(Error::Config(format!(
            "excursion level delta = {delta} must exceed beta = H(u0)/H(Q) = {beta}"
        )));
    }
    let bound = match setup.noise_kind {
        NoiseKind::Additive => {
            let hs1 = setup.op.as_ref().map(|op| op.constants().hs_norm_1).unwrap_or(0.0);
            thresholds::excursion_bound_additive(gs, beta, delta, hs1, result.horizon)
        }
        NoiseKind::MultiplicativeStratonovich => {
            let m_phi = setup.op.as_ref().map(|op| op.constants().m_phi).unwrap_or(0.0);
            thresholds::excursion_bound_multiplicative(
                gs,
                beta,
                delta,
                m_phi,
                result.initial_mass,
                result.horizon,
            )
        }
        NoiseKind::None => beta / delta,
    };

    // bootstrap over the per-path indicators
    let level = delta * gs.h_q;
    let indicators: Vec<f64> = result
        .records
        .iter()
        .map(|r| if r.sup_energy.is_nan() || r.sup_energy >= level { 1.0 } else { 0.0 })
        .collect();
    let resamples = 400;
    let mut below = 0usize;
    let mut rng = crate::rng::StepRng::new(result.seed ^ 0x626f_6f74, 0, 0);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..indicators.len() {
            let idx = (rng.next_u64() % indicators.len() as u64) as usize;
            acc += indicators[idx];
        }
        if acc / indicators.len() as f64 <= bound {
            below += 1;
        }
    }
    let empirical = result.energy_excursion.clone();
    let consistent = empirical.p_hat <= bound + (empirical.ci_hi - empirical.p_hat);
    Ok(ExcursionStats {
        delta,
        empirical,
        analytic_bound: bound,
        e_sup_energy: result.e_sup_energy,
        consistent,
        bootstrap_fraction: below as f64 / resamples as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub p_blowup: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_paths: usize,
    pub numerical_failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Warning flag: initial data did not satisfy the above-threshold
    /// hypotheses (H(u0) < H(Q) and ||grad u0|| > ||grad Q||).
    pub above_threshold: bool,
    /// Non-increasing trend of the blow-up frequency across the sweep,
    /// judged within the confidence intervals.
    pub monotone_within_ci: bool,
}

/// Blow-up frequency as a function of the noise amplitude. The epsilon = 0
/// row is the deterministic run.
pub fn blowup_probability_sweep(
    base: &EnsembleSetup,
    noise_spec: &NoiseSpec,
    epsilons: &[f64],
    gs: &GroundStateConstants,
) -> Result<SweepOutput> {
    if epsilons.is_empty() {
        return Err(Error::Config("sweep needs at least one epsilon".into()));
    }
    let u0 = make_initial(&base.grid, &base.initial)?;
    let above_threshold = diagnostics::energy(&u0, base.lambda) < gs.h_q
        && diagnostics::grad_norm(&u0) > gs.grad_q();

    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps >= 0.0) {
            return Err(Error::Config(format!("noise amplitude must be >= 0, got {eps}")));
        }
        let mut spec = noise_spec.clone();
        spec.epsilon = eps;
        let mut setup = base.clone();
        setup.op = Some(Arc::new(NoiseOperator::build(&spec, base.grid.clone())?));
        let result = run_ensemble(&setup, gs)?;
        rows.push(SweepRow {
            epsilon: eps,
            p_blowup: result.blow_up.p_hat,
            ci_lo: result.blow_up.ci_lo,
            ci_hi: result.blow_up.ci_hi,
            n_paths: result.paths,
            numerical_failures: result.numerical_failures,
        });
    }
    // trend check: each row's CI must overlap or exceed the next row's CI
    let mut monotone = true;
    for w in rows.windows(2) {
        if w[1].ci_lo > w[0].ci_hi {
            monotone = false;
        }
    }
    Ok(SweepOutput { rows, above_threshold, monotone_within_ci: monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dim::Dim;
    use crate::ground_state::ground_state_constants;
    use crate::noise::{BasisKind, Complexness};
    use crate::rng::StepRng;
    use proptest::prelude::*;

    fn small_setup(epsilon: f64, paths: usize, seed: u64) -> (EnsembleSetup, GroundStateConstants) {
        let grid = Grid::radial(Dim::THREE, 12.0, 96).unwrap();
        let spec = NoiseSpec {
            basis: BasisKind::SineRadial,
            k_modes: 4,
            decay_q: 2.0,
            epsilon,
            complexness: Complexness::ComplexValued,
        };
        let op = Arc::new(NoiseOperator::build(&spec, grid.clone()).unwrap());
        let gs = ground_state_constants(Dim::THREE, 1e-10).unwrap();
        (
            EnsembleSetup {
                grid,
                initial: InitialSpec::Gaussian { amplitude: 0.3, width: 1.5 },
                lambda: 1.0,
                noise_kind: NoiseKind::Additive,
                op: Some(op),
                detector: Detector::default(),
                policy: DtPolicy::Fixed { dt: 0.01 },
                horizon: 0.2,
                paths,
                seed,
                delta_energy: 0.9,
            },
            gs,
        )
    }

    #[test]
    fn zero_noise_ensemble_is_degenerate() {
        let (mut setup, gs) = small_setup(0.0, 8, 3);
        setup.noise_kind = NoiseKind::None;
        setup.op = None;
        let result = run_ensemble(&setup, &gs).unwrap();
        assert_eq!(result.blow_up.count, 0);
        assert!(result.blow_up.p_hat == 0.0 || result.blow_up.p_hat == 1.0);
        let first = &result.records[0];
        for r in &result.records {
            assert_eq!(r.sup_energy, first.sup_energy);
            assert_eq!(r.t_tau, first.t_tau);
        }
        assert_eq!(result.e_t_tau_sq, setup.horizon * setup.horizon);
    }

    #[test]
    fn ensemble_bytes_are_reproducible() {
        let (setup, gs) = small_setup(0.2, 12, 42);
        let a = serde_json::to_vec(&run_ensemble(&setup, &gs).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_ensemble(&setup, &gs).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn survival_monotone_in_horizon() {
        let (mut setup, gs) = small_setup(0.25, 24, 9);
        setup.detector = Detector { gamma: 3.0, amp_max: 1e8 };
        let mut last_survival = 1.0f64;
        for horizon in [0.05, 0.15, 0.3] {
            setup.horizon = horizon;
            let result = run_ensemble(&setup, &gs).unwrap();
            let survival = 1.0 - result.blow_up.p_hat;
            assert!(
                survival <= last_survival + 0.2,
                "survival should trend down: {survival} after {last_survival}"
            );
            last_survival = survival;
        }
    }

    #[test]
    fn threshold_stats_shape() {
        let (setup, gs) = small_setup(0.0, 4, 1);
        let result = run_ensemble(&setup, &gs).unwrap();
        let stats = result.threshold_stats();
        // deterministic u0: E M^2 = (E M)^2
        assert!((stats.e_mass_sq - stats.e_mass * stats.e_mass).abs() < 1e-14);
        // all paths survive: E (T and tau)^2 = T^2
        assert_eq!(stats.e_t_tau_sq, setup.horizon * setup.horizon);
    }

    #[test]
    fn wilson_interval_basic_properties() {
        let (p, lo, hi) = wilson_interval(0, 50);
        assert_eq!(p, 0.0);
        assert!(lo == 0.0 && hi > 0.0 && hi < 0.1);
        let (p, lo, hi) = wilson_interval(50, 50);
        assert_eq!(p, 1.0);
        assert!(hi == 1.0 && lo > 0.9);
        let (p, lo, hi) = wilson_interval(20, 100);
        assert!(lo < p && p < hi);
    }

    proptest! {
        #[test]
        fn wilson_interval_contains_p_hat(successes in 0usize..200, extra in 1usize..200) {
            let trials = successes + extra;
            let (p, lo, hi) = wilson_interval(successes, trials);
            prop_assert!((0.0..=1.0).contains(&lo));
            prop_assert!((0.0..=1.0).contains(&hi));
            prop_assert!(lo <= p && p <= hi);
        }
    }

    /// Coverage sanity for the Wilson interval with a synthetic Bernoulli
    /// source in place of the solver.
    #[test]
    fn wilson_coverage_on_synthetic_bernoulli() {
        let p_true = 0.3;
        let trials_per = 300;
        let meta = 200;
        let mut covered = 0;
        for m in 0..meta {
            let mut rng = StepRng::new(2024, m as u64, 0);
            let successes =
                (0..trials_per).filter(|_| rng.uniform() < p_true).count();
            let (_, lo, hi) = wilson_interval(successes, trials_per);
            if lo <= p_true && p_true <= hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / meta as f64;
        assert!(
            (0.92..=0.98).contains(&coverage),
            "Wilson 95% coverage was {coverage}"
        );
    }

    #[test]
    fn trapped_paths_stay_below_ground_state_gradient() {
        // trapped data, tiny noise: on paths with sup H < H(Q) the gradient
        // must stay at or below ||grad Q|| within tolerance
        let (mut setup, gs) = small_setup(0.02, 16, 5);
        setup.horizon = 0.3;
        let result = run_ensemble(&setup, &gs).unwrap();
        for r in &result.records {
            if r.sup_energy < gs.h_q {
                assert!(
                    r.sup_grad <= gs.grad_q() + 1e-3,
                    "path {}: sup grad {} vs {}",
                    r.path,
                    r.sup_grad,
                    gs.grad_q()
                );
            }
        }
    }

    #[test]
    fn excursion_bound_consistency_trapped_small_noise() {
        let (setup, gs) = small_setup(0.05, 32, 17);
        let result = run_ensemble(&setup, &gs).unwrap();
        let stats = energy_excursion_stats(&result, &setup, &gs).unwrap();
        assert!(stats.consistent, "empirical {} vs bound {}", stats.empirical.p_hat, stats.analytic_bound);
        assert!(stats.bootstrap_fraction >= 0.95);
        // epsilon = 0 and trapped data: excursion probability is exactly 0
        let (mut s0, gs) = small_setup(0.0, 8, 17);
        s0.noise_kind = NoiseKind::None;
        s0.op = None;
        let r0 = run_ensemble(&s0, &gs).unwrap();
        assert_eq!(r0.energy_excursion.count, 0);
    }
}
