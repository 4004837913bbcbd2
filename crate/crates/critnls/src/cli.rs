//! Subcommand implementations behind the `critnls` binary.
//!
//! Exit codes: 0 completed, 2 blow-up detected (simulate), 3 configuration
//! error, 4 numerical failure. Errors are also emitted as one-line JSON on
//! stderr so callers can parse failures.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ThresholdBlock};
use crate::diagnostics::{self, DiagnosticsRow};
use crate::ensemble::{self, ThresholdStats};
use crate::error::{Error, Result};
use crate::exponents::exponents_for;
use crate::ground_state::{ground_state_constants, GroundStateConstants};
use crate::noise::{FrozenPath, NoiseKind};
use crate::solver::{DtPolicy, NoiseSource, Status};
use crate::thresholds::{self, ThresholdInputs};

#[derive(Parser)]
#[command(
    name = "critnls",
    version,
    about = "Numerical laboratory for the energy-critical stochastic NLS equation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical exponents, ground-state constants, and the trapping point.
    Constants {
        /// Dimension n in {3, 4, 5}
        #[arg(long)]
        n: u8,
        /// Quadrature tolerance for the ground-state integrals
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Emit JSON (the default; kept for interface stability)
        #[arg(long, default_value_t = true)]
        json: bool,
    },
    /// Derived constants of the configured noise operator.
    NoiseConstants { config: PathBuf },
    /// Run one trajectory and write diagnostics CSV + metadata.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frozen-path refinement study of the evolution identities.
    VerifyIdentities {
        config: PathBuf,
        /// Number of dt halvings below the configured step
        #[arg(long, default_value_t = 3)]
        halvings: usize,
    },
    /// Existence-time bounds and blow-up smallness conditions.
    Thresholds {
        config: PathBuf,
        /// JSON stats file from `ensemble` to replace the pessimistic
        /// E((t and tau)^2) = t^2 substitution
        #[arg(long)]
        ensemble_stats: Option<PathBuf>,
    },
    /// Monte Carlo ensemble at the configured noise amplitude.
    Ensemble {
        config: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one trajectory CSV per path
        #[arg(long, default_value_t = false)]
        per_path: bool,
    },
    /// Blow-up frequency sweep over noise amplitudes.
    Sweep {
        config: PathBuf,
        /// Comma-separated amplitudes; defaults to ensemble.epsilons
        #[arg(long)]
        epsilons: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::Io(_) => 4,
        _ => 3,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::Config(_) => "config",
        Error::Numerical(_) => "numerical",
        Error::Unsupported(_) => "unsupported",
        Error::Contract(_) => "contract",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// Worker-count cap from the environment, recorded in output metadata.
fn configured_threads() -> Option<usize> {
    std::env::var("CRITNLS_THREADS").ok().and_then(|v| v.parse().ok())
}

fn install_thread_cap() -> usize {
    if let Some(n) = configured_threads() {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        n
    } else {
        rayon::current_num_threads()
    }
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!(
                "{}",
                json!({ "error": error_kind(&err), "message": err.to_string() })
            );
            exit_code_for(&err)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Constants { n, tol, json: _ } => constants_cmd(n, tol),
        Command::NoiseConstants { config } => noise_constants_cmd(&config),
        Command::Simulate { config, out } => simulate_cmd(&config, out.as_deref()),
        Command::VerifyIdentities { config, halvings } => verify_identities_cmd(&config, halvings),
        Command::Thresholds { config, ensemble_stats } => {
            thresholds_cmd(&config, ensemble_stats.as_deref())
        }
        Command::Ensemble { config, paths, seed, out, per_path } => {
            ensemble_cmd(&config, paths, seed, &out, per_path)
        }
        Command::Sweep { config, epsilons, paths, seed, out } => {
            sweep_cmd(&config, epsilons.as_deref(), paths, seed, &out)
        }
    }
}

fn constants_cmd(n: u8, tol: f64) -> Result<i32> {
    let exps = exponents_for(n)?;
    let gs = ground_state_constants(crate::dim::Dim::new(n)?, tol)?;
    #[derive(Serialize)]
    struct Out {
        #[serde(flatten)]
        exponents: crate::exponents::Exponents,
        c_n: f64,
        grad_q_sq: f64,
        h_q: f64,
        quadrature_error: f64,
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&Out {
            exponents: exps,
            c_n: gs.c_n,
            grad_q_sq: gs.grad_q_sq,
            h_q: gs.h_q,
            quadrature_error: gs.quadrature_error,
        })?
    );
    Ok(0)
}

fn noise_constants_cmd(config: &Path) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let grid = cfg.build_grid()?;
    let op = cfg
        .build_operator(&grid)?
        .ok_or_else(|| Error::Config("config has no noise operator (noise_kind = none)".into()))?;
    let c = op.constants();
    let mut value = serde_json::to_value(&c)?;
    // the two density fields are summarized rather than dumped in full
    value["f_phi_sup"] = json!(c.f_phi.iter().copied().fold(0.0f64, f64::max));
    value["f_phi_integral"] = json!(grid.quadrature(|j| c.f_phi[j]));
    value["f1_phi_sup"] = json!(c.m_phi);
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(0)
}

fn write_trajectory_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t,mass,energy,grad_norm,variance,virial_g,sup_amp,dt")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.t, r.mass, r.energy, r.grad_norm, r.variance, r.virial_g, r.sup_amp, r.dt
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    code_version: &'static str,
    threads: usize,
    config: &'a ExperimentConfig,
    status: Status,
    boundary_mass_max: f64,
    sup_energy: f64,
    sup_grad: f64,
}

fn simulate_cmd(config: &Path, out: Option<&Path>) -> Result<i32> {
    let threads = install_thread_cap();
    let cfg = ExperimentConfig::load(config)?;
    let mut state = cfg.build_state(0)?;
    let output = state.run(cfg.run.t_max, &cfg.run.dt, cfg.run.record_interval)?;

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_trajectory_csv(&dir.join("trajectory.csv"), &output.rows)?;
        // plots ship as data plus a declarative panel spec, not images
        std::fs::write(
            dir.join("plot.json"),
            serde_json::to_string_pretty(&json!({
                "source": "trajectory.csv",
                "x": "t",
                "panels": [
                    { "y": ["mass"], "scale": "linear" },
                    { "y": ["energy"], "scale": "linear" },
                    { "y": ["grad_norm", "sup_amp"], "scale": "log" },
                    { "y": ["variance", "virial_g"], "scale": "linear" }
                ]
            }))?,
        )?;
        let meta = RunMetadata {
            code_version: env!("CARGO_PKG_VERSION"),
            threads,
            config: &cfg,
            status: state.status,
            boundary_mass_max: output.boundary_mass_max,
            sup_energy: output.sup_energy,
            sup_grad: output.sup_grad,
        };
        std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
        // wall-clock stamp kept out of metadata.json so reruns stay
        // byte-identical
        std::fs::write(
            dir.join("timestamp.txt"),
            format!(
                "{}\n",
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            ),
        )?;
    }

    let summary = json!({
        "status": state.status,
        "t_final": state.t,
        "steps": state.step_index,
        "rows": output.rows.len(),
        "boundary_mass_max": output.boundary_mass_max,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(match state.status {
        Status::BlownUp { .. } => 2,
        _ => 0,
    })
}

fn verify_identities_cmd(config: &Path, halvings: usize) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let DtPolicy::Fixed { dt: dt0 } = cfg.run.dt else {
        return Err(Error::Config("verify-identities needs a fixed dt policy".into()));
    };
    let base_steps = (cfg.run.t_max / dt0).round() as usize;
    if base_steps == 0 || ((cfg.run.t_max / dt0) - base_steps as f64).abs() > 1e-9 {
        return Err(Error::Config("t_max must be an integer multiple of dt".into()));
    }
    let grid = cfg.build_grid()?;
    let op = cfg.build_operator(&grid)?;
    let fine_steps = base_steps << halvings;
    let dt_fine = cfg.run.t_max / fine_steps as f64;
    let frozen = op.as_ref().map(|op| {
        Arc::new(FrozenPath::sample(op, dt_fine, fine_steps, cfg.run.seed, 0))
    });

    #[derive(Serialize)]
    struct Level {
        dt: f64,
        residual: f64,
    }
    let mut energy = Vec::new();
    let mut variance = Vec::new();
    let mut virial = Vec::new();
    for level in 0..=halvings {
        let steps = base_steps << level;
        let dt = cfg.run.t_max / steps as f64;
        let u0 = crate::solver::make_initial(&grid, &cfg.initial)?;
        let source = match &frozen {
            Some(fp) => NoiseSource::Frozen(fp.clone()),
            None => NoiseSource::Stream { seed: cfg.run.seed, path: 0 },
        };
        let mut state = crate::solver::SimState::new(
            u0,
            cfg.physics.lambda,
            cfg.physics.noise_kind,
            op.clone(),
            source,
            cfg.run.detector,
        )?;
        state.enable_accumulators()?;
        let (mut se, mut sv, mut sg) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..steps {
            state.step(dt)?;
            let r = state.residuals()?;
            se = se.max(r.energy.abs());
            sv = sv.max(r.variance.abs());
            sg = sg.max(r.virial.abs());
        }
        energy.push(Level { dt, residual: se });
        variance.push(Level { dt, residual: sv });
        virial.push(Level { dt, residual: sg });
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "sup_over": format!("t in [0, {}]", cfg.run.t_max),
            "energy": energy,
            "variance": variance,
            "virial": virial,
        }))?
    );
    Ok(0)
}

#[derive(Serialize)]
struct ThresholdReport {
    inputs: ThresholdInputs,
    noise_kind: NoiseKind,
    beta: f64,
    t_star: f64,
    e_tau_lower: f64,
    conditions: Vec<thresholds::ConditionFlag>,
    ground_state: GroundStateConstants,
}

fn thresholds_cmd(config: &Path, stats_path: Option<&Path>) -> Result<i32> {
    let cfg = ExperimentConfig::load(config)?;
    let gs = ground_state_constants(cfg.dim(), 1e-10)?;
    let grid = cfg.build_grid()?;
    let op = cfg.build_operator(&grid)?;
    let noise_constants = match &op {
        Some(op) => op.constants(),
        None => crate::noise::NoiseConstants {
            hs_norm_0: 0.0,
            hs_norm_1: 0.0,
            c_phi_sigma: 0.0,
            c_of_phi: 0.0,
            c_phi_1: 0.0,
            c_phi_2: 0.0,
            m_phi: 0.0,
            f_phi: vec![],
            f1_phi: vec![],
        },
    };
    let u0 = crate::solver::make_initial(&grid, &cfg.initial)?;
    let h0 = diagnostics::energy(&u0, cfg.physics.lambda);
    let mass0 = diagnostics::mass(&u0);
    let var0 = diagnostics::variance(&u0);
    let g0 = diagnostics::virial_g(&u0);
    let beta = h0 / gs.h_q;

    let block = cfg.thresholds.clone().unwrap_or_else(ThresholdBlock::default);
    let stats: Option<ThresholdStats> = match stats_path {
        Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let inputs = ThresholdInputs {
        n: cfg.dimension,
        beta0: beta.clamp(1e-6, 1.0 - 1e-9),
        delta: block.delta,
        epsilon: block.epsilon,
        grad_cap: block.grad_cap,
        horizon: block.horizon.unwrap_or(cfg.run.t_max),
        e_mass: mass0,
        e_mass_sq: mass0 * mass0,
        e_variance: var0,
        e_virial_sq: g0 * g0,
        e_t_tau_sq: stats.map(|s| s.e_t_tau_sq),
    };

    let beta_for_t_star = beta.clamp(1e-6, 1.0);
    let (t_star, e_tau_lower, conditions) = match cfg.physics.noise_kind {
        NoiseKind::MultiplicativeStratonovich => {
            let m =
                thresholds::t_star_multiplicative(&gs, beta_for_t_star, noise_constants.m_phi, mass0)?;
            let flags = thresholds::blowup_conditions_multiplicative(&inputs, &gs, &noise_constants)?;
            (m.t_star, m.e_tau_mass_lower, flags)
        }
        _ => {
            let t = thresholds::t_star_additive(&gs, beta_for_t_star, noise_constants.hs_norm_1)?;
            let flags = thresholds::blowup_conditions_additive(&inputs, &gs, &noise_constants)?;
            (t, t, flags)
        }
    };

    let report = ThresholdReport {
        inputs,
        noise_kind: cfg.physics.noise_kind,
        beta,
        t_star,
        e_tau_lower,
        conditions,
        ground_state: gs,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn ensemble_cmd(
    config: &Path,
    paths: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    per_path: bool,
) -> Result<i32> {
    let threads = install_thread_cap();
    let mut cfg = ExperimentConfig::load(config)?;
    if cfg.ensemble.is_none() {
        cfg.ensemble = Some(crate::config::EnsembleBlock {
            paths: paths.unwrap_or(100),
            horizon: None,
            delta_energy: 0.9,
            epsilons: None,
        });
    }
    if let Some(p) = paths {
        cfg.ensemble.as_mut().expect("set above").paths = p;
    }
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let gs = ground_state_constants(cfg.dim(), 1e-10)?;
    let setup = cfg.ensemble_setup()?;
    let result = ensemble::run_ensemble(&setup, &gs)?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("aggregate.json"), serde_json::to_string_pretty(&result)?)?;
    std::fs::write(
        out.join("stats.json"),
        serde_json::to_string_pretty(&result.threshold_stats())?,
    )?;
    let eps = cfg.noise.as_ref().map(|n| n.epsilon).unwrap_or(0.0);
    std::fs::write(
        out.join("summary.csv"),
        format!(
            "epsilon,p_blowup,ci_lo,ci_hi,n_paths\n{},{},{},{},{}\n",
            eps, result.blow_up.p_hat, result.blow_up.ci_lo, result.blow_up.ci_hi, result.paths
        ),
    )?;
    let meta = json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
        "config": &cfg,
    });
    std::fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;

    if per_path {
        for p in 0..setup.paths as u64 {
            let mut state = cfg.build_state(p)?;
            let run = state.run(setup.horizon, &setup.policy, cfg.run.record_interval)?;
            write_trajectory_csv(&out.join(format!("path_{p:04}.csv")), &run.rows)?;
        }
    }

    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "p_blowup": result.blow_up.p_hat,
            "ci": [result.blow_up.ci_lo, result.blow_up.ci_hi],
            "p_excursion": result.energy_excursion.p_hat,
            "numerical_failures": result.numerical_failures,
            "out": out,
        }))?
    );
    Ok(0)
}

fn sweep_cmd(
    config: &Path,
    epsilons: Option<&str>,
    paths: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<i32> {
    let threads = install_thread_cap();
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(p) = paths {
        if let Some(e) = cfg.ensemble.as_mut() {
            e.paths = p;
        } else {
            cfg.ensemble = Some(crate::config::EnsembleBlock {
                paths: p,
                horizon: None,
                delta_energy: 0.9,
                epsilons: None,
            });
        }
    }
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let eps_list: Vec<f64> = match epsilons {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad epsilon value {s:?}")))
            })
            .collect::<Result<_>>()?,
        None => cfg
            .ensemble
            .as_ref()
            .and_then(|e| e.epsilons.clone())
            .ok_or_else(|| Error::Config("sweep needs --epsilons or ensemble.epsilons".into()))?,
    };
    let spec = cfg
        .noise
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a noise block".into()))?;
    let gs = ground_state_constants(cfg.dim(), 1e-10)?;
    let setup = cfg.ensemble_setup()?;
    let sweep = ensemble::blowup_probability_sweep(&setup, &spec, &eps_list, &gs)?;
    if !sweep.above_threshold {
        eprintln!(
            "{}",
            json!({
                "warning": "initial data is not above the blow-up threshold",
                "detail": "H(u0) < H(Q) and ||grad u0|| > ||grad Q|| do not both hold"
            })
        );
    }

    std::fs::create_dir_all(out)?;
    let mut csv = String::from("epsilon,p_blowup,ci_lo,ci_hi,n_paths\n");
    for row in &sweep.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epsilon, row.p_blowup, row.ci_lo, row.ci_hi, row.n_paths
        ));
    }
    std::fs::write(out.join("summary.csv"), csv)?;
    std::fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&sweep)?)?;
    let meta = json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
        "config": &cfg,
        "epsilons": eps_list,
    });
    std::fs::write(out.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("{}", serde_json::to_string_pretty(&sweep.rows)?);
    Ok(0)
}
