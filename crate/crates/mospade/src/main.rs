//! Experiment-runner CLI: declarative configs in, CSV/SVG artifacts out.
//! Exit codes: 0 success, 2 config error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;

use mospade::adaptive::{run_adaptive, AdaptiveSchedule};
use mospade::config::{ExperimentConfig, SweepAxis, ScenarioSection};
use mospade::error::{Error, Result};
use mospade::estimator::{nnls, stack_design};
use mospade::fisher::{
    direct_response_matrix, fisher_report_from_response, source_adapted_modes, ModeObjective,
    ObjectiveConfig,
};
use mospade::grid::Grid;
use mospade::modes::{self, ModeSet};
use mospade::plot::{plot_csv, PlotSpec};
use mospade::psf::{overlap_kernel, response_matrix, Psf};
use mospade::quantum::{default_cutoff, density_matrix, qfi_and_qcrb};
use mospade::report::{self, Provenance};
use mospade::sim::{sample_counts, trial_seed, MeasurementRecord};
use mospade::source::SourceModel;
use mospade::stiefel::{minimize_modes, OptimizerOptions};

#[derive(Parser)]
#[command(name = "mospade", version, about = "Mode-optimized imaging experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a scenario parameter and tabulate direct/optimized/quantum CRBs.
    CrbSweep(RunArgs),
    /// Optimize a mode set for one scenario and export it.
    OptimizeModes(RunArgs),
    /// Monte Carlo reconstruction error versus the CRB reference.
    MonteCarlo(RunArgs),
    /// Run the adaptive measurement loop (per-trial artifact directories).
    Adaptive(RunArgs),
    /// Quantum bound for one scenario.
    Qcrb(RunArgs),
    /// Render an emitted CSV to SVG.
    Plot(PlotArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Truncate long-running jobs to a desk-reproducible slice.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// Input CSV path.
    csv: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value = "")]
    title: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::CrbSweep(args) => run(args, cmd_crb_sweep),
        Command::OptimizeModes(args) => run(args, cmd_optimize_modes),
        Command::MonteCarlo(args) => run(args, cmd_monte_carlo),
        Command::Adaptive(args) => run(args, cmd_adaptive),
        Command::Qcrb(args) => run(args, cmd_qcrb),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

/// Shared per-run context.
struct Ctx {
    config: ExperimentConfig,
    out: PathBuf,
    seed: u64,
    desk_scale: bool,
    prov: Provenance,
}

fn run(args: RunArgs, body: fn(&Ctx) -> Result<()>) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    let seed = args.seed.unwrap_or(config.experiment.seed);
    let prov = Provenance { config_hash: config.hash(), seed };
    let ctx = Ctx { config, out: args.out, seed, desk_scale: args.desk_scale, prov };
    body(&ctx)
}

/// Scenario instantiation shared by all commands.
struct Problem {
    model: SourceModel,
    psf: Psf,
    grid: Grid,
}

fn build_problem(config: &ExperimentConfig) -> Result<Problem> {
    // all config lengths are in units of the PSF width σ, so the pipelines
    // run with σ = 1 internally; psf.sigma fixes the physical scale of
    // exported coordinates only
    let scenario = config.scenario.to_scenario();
    let model = scenario.build()?;
    let psf = match config.scenario.dim() {
        mospade::grid::GridDim::One => Psf::gaussian_1d(1.0)?,
        mospade::grid::GridDim::Two => Psf::gaussian_2d(1.0)?,
    };
    let spacing = config.grid.spacing_for(config.scenario.dim());
    let grid = psf.image_grid(model.basis.support_extent(), spacing)?;
    Ok(Problem { model, psf, grid })
}

fn optimizer_options(config: &ExperimentConfig, seed: u64) -> OptimizerOptions {
    OptimizerOptions {
        max_iters: config.modes.max_iters,
        grad_tol: config.modes.grad_tol,
        restarts: config.modes.restarts,
        seed,
        ..OptimizerOptions::default()
    }
}

fn mode_count(config: &ExperimentConfig, k: usize) -> usize {
    config.modes.count.unwrap_or(k + 1)
}

/// Optimize a J-mode set for the model, seeding from the source-adapted
/// spectral basis with a pixel-basis fallback.
fn optimize_for(problem: &Problem, j: usize, opts: &OptimizerOptions) -> Result<(ModeSet, ModeObjective)> {
    let objective = ModeObjective::new(
        &problem.grid,
        &problem.psf,
        &problem.model,
        &ObjectiveConfig::for_optimizer(),
    )?;
    let ext = problem.model.basis.support_extent().min(problem.grid.extent());
    let init = source_adapted_modes(&problem.model, &problem.psf, &problem.grid, j)
        .or_else(|_| match problem.grid.dim() {
            mospade::grid::GridDim::One => modes::pixel_basis(&problem.grid, j, (-ext, ext)),
            mospade::grid::GridDim::Two => {
                let n = (j as f64).sqrt().floor().max(1.0) as usize;
                modes::pixel_basis_2d(&problem.grid, n.min(j), ext)
            }
        })
        .or_else(|_| {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(opts.seed);
            modes::random_modes(&problem.grid, j, &mut rng, "init")
        })?;
    let (ms, _trace) = minimize_modes(&objective, &init, &problem.grid, opts)?;
    Ok((ms, objective))
}

fn write_out(ctx: &Ctx, name: &str, content: String) -> Result<()> {
    let path = ctx.out.join(name);
    std::fs::write(&path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn apply_sweep_value(config: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    match (&mut c.scenario, axis) {
        (ScenarioSection::FivePoints { dx }, SweepAxis::Dx) => *dx = value,
        (ScenarioSection::Uniform1d { a, .. }, SweepAxis::A)
        | (ScenarioSection::Smooth1dA { a, .. }, SweepAxis::A)
        | (ScenarioSection::Smooth1dB { a, .. }, SweepAxis::A) => *a = value,
        (_, SweepAxis::Budget) => {
            return Err(Error::Config("budget sweeps belong to monte-carlo".into()))
        }
        _ => {
            return Err(Error::Config(format!(
                "sweep axis {axis:?} does not apply to this scenario"
            )))
        }
    }
    Ok(c)
}

fn cmd_crb_sweep(ctx: &Ctx) -> Result<()> {
    let values: Vec<(SweepAxis, f64)> = match &ctx.config.sweep {
        Some(s) => s.values.iter().map(|&v| (s.axis, v)).collect(),
        None => vec![(SweepAxis::Dx, f64::NAN)], // single point, scenario as-is
    };
    let opts = optimizer_options(&ctx.config, ctx.seed);
    let rows: Vec<Result<Vec<String>>> = values
        .par_iter()
        .map(|&(axis, v)| -> Result<Vec<String>> {
            let config = if v.is_nan() {
                ctx.config.clone()
            } else {
                apply_sweep_value(&ctx.config, axis, v)?
            };
            let problem = build_problem(&config)?;
            let quad = problem.model.basis.quadrature(problem.grid.spacing());
            let cfg = ObjectiveConfig::default();

            let m_direct = direct_response_matrix(&problem.grid, &problem.psf, &quad);
            let direct = fisher_report_from_response(m_direct.clone(), &problem.model, &cfg)?;

            let j = mode_count(&config, problem.model.num_modes());
            let (ms, _) = optimize_for(&problem, j, &opts)?;
            let m_opt = response_matrix(
                &overlap_kernel(&ms, &quad.points, &problem.psf)?,
                &quad,
            )?;
            let optimized = fisher_report_from_response(m_opt, &problem.model, &cfg)?;

            let state = density_matrix(&problem.model, &problem.psf, &problem.grid)?;
            let qfi = qfi_and_qcrb(&state, default_cutoff(&state), None)?;

            println!(
                "sweep point {v:.4}: direct {:.4e} mo {:.4e} qcrb {:.4e}",
                direct.crb_mean, optimized.crb_mean, qfi.qcrb_mean
            );
            Ok(vec![
                format!("{v:.6e}"),
                format!("{:.9e}", direct.crb_mean),
                format!("{:.9e}", optimized.crb_mean),
                format!("{:.9e}", qfi.qcrb_mean),
                format!("{:.6}", optimized.crb_mean / qfi.qcrb_mean),
                format!("{:.6}", direct.crb_mean / optimized.crb_mean),
            ])
        })
        .collect();
    let rows: Result<Vec<Vec<String>>> = rows.into_iter().collect();
    report::write_csv(
        &ctx.out.join("crb_sweep.csv"),
        &ctx.prov,
        "value,direct_crb_mean,mo_crb_mean,qcrb_mean,mo_over_qcrb,direct_over_mo",
        &rows?,
    )?;
    println!("wrote {}", ctx.out.join("crb_sweep.csv").display());
    Ok(())
}

fn cmd_optimize_modes(ctx: &Ctx) -> Result<()> {
    let problem = build_problem(&ctx.config)?;
    let j = mode_count(&ctx.config, problem.model.num_modes());
    let opts = optimizer_options(&ctx.config, ctx.seed);
    let (ms, _objective) = optimize_for(&problem, j, &opts)?;
    let quad = problem.model.basis.quadrature(problem.grid.spacing());
    let m = response_matrix(&overlap_kernel(&ms, &quad.points, &problem.psf)?, &quad)?;
    let rep = fisher_report_from_response(m, &problem.model, &ObjectiveConfig::default())?;
    write_out(ctx, "modes.csv", report::modes_csv(&ms, &ctx.prov))?;
    write_out(ctx, "fisher.csv", report::fisher_csv(&rep, &ctx.prov))?;
    println!("optimized {} modes: crb_mean {:.6e}", j, rep.crb_mean);
    Ok(())
}

fn cmd_qcrb(ctx: &Ctx) -> Result<()> {
    let problem = build_problem(&ctx.config)?;
    let state = density_matrix(&problem.model, &problem.psf, &problem.grid)?;
    let qfi = qfi_and_qcrb(&state, default_cutoff(&state), None)?;
    write_out(ctx, "qcrb.csv", report::qfi_csv(&qfi, &ctx.prov))?;
    println!("qcrb_mean {:.6e}", qfi.qcrb_mean);
    Ok(())
}

/// MSE of an NNLS reconstruction from a single record against the truth.
fn trial_mse(
    m: &nalgebra::DMatrix<f64>,
    label: &str,
    truth: &DVector<f64>,
    budget: f64,
    seed: u64,
) -> Result<f64> {
    let p = mospade::fisher::detection_probs(m, truth)?;
    let counts = sample_counts(p.as_slice(), budget, seed)?;
    let rec = MeasurementRecord {
        mode_label: label.to_string(),
        counts,
        budget,
        seed,
    };
    let c_hat = if budget == 0.0 {
        DVector::zeros(truth.len())
    } else {
        nnls(&stack_design(&[rec], std::slice::from_ref(m))?)?.c
    };
    Ok((c_hat - truth).norm_squared() / truth.len() as f64)
}

fn cmd_monte_carlo(ctx: &Ctx) -> Result<()> {
    let problem = build_problem(&ctx.config)?;
    let budgets = ctx
        .config
        .monte_carlo
        .as_ref()
        .map(|m| m.budgets.clone())
        .or_else(|| ctx.config.adaptive.as_ref().map(|a| vec![a.budget]))
        .ok_or_else(|| Error::Config("monte-carlo needs [monte_carlo] budgets".into()))?;
    let trials = ctx.config.experiment.trials;
    let quad = problem.model.basis.quadrature(problem.grid.spacing());
    let cfg = ObjectiveConfig::default();
    let opts = optimizer_options(&ctx.config, ctx.seed);

    let m_direct = direct_response_matrix(&problem.grid, &problem.psf, &quad);
    let direct_rep = fisher_report_from_response(m_direct.clone(), &problem.model, &cfg)?;
    let j = mode_count(&ctx.config, problem.model.num_modes());
    let (ms, _) = optimize_for(&problem, j, &opts)?;
    let m_opt = response_matrix(&overlap_kernel(&ms, &quad.points, &problem.psf)?, &quad)?;
    let opt_rep = fisher_report_from_response(m_opt.clone(), &problem.model, &cfg)?;

    let mut rows = Vec::new();
    for (bi, &n) in budgets.iter().enumerate() {
        let per_trial: Vec<Result<(f64, f64, Option<f64>)>> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<(f64, f64, Option<f64>)> {
                let base = trial_seed(ctx.seed, (bi * trials + t) as u64);
                let mse_d = trial_mse(&m_direct, "direct", &problem.model.c, n, trial_seed(base, 0))?;
                let mse_o = trial_mse(&m_opt, ms.label(), &problem.model.c, n, trial_seed(base, 1))?;
                let mse_a = match &ctx.config.adaptive {
                    Some(ad) if n > 0.0 => {
                        let schedule =
                            AdaptiveSchedule::equal_split(n, ad.j_adapt, ad.phases - 1, trial_seed(base, 2));
                        let r = run_adaptive(
                            &problem.model,
                            &schedule,
                            &problem.psf,
                            &problem.grid,
                            &optimizer_options(&ctx.config, trial_seed(base, 3)),
                            &ObjectiveConfig::for_optimizer(),
                        )?;
                        Some((r.final_c - &problem.model.c).norm_squared() / problem.model.num_modes() as f64)
                    }
                    _ => None,
                };
                Ok((mse_d, mse_o, mse_a))
            })
            .collect();
        let per_trial: Result<Vec<_>> = per_trial.into_iter().collect();
        let per_trial = per_trial?;
        let mean = |f: &dyn Fn(&(f64, f64, Option<f64>)) -> f64| {
            per_trial.iter().map(|r| f(r)).sum::<f64>() / trials as f64
        };
        let mse_direct = mean(&|r| r.0);
        let mse_opt = mean(&|r| r.1);
        let mse_adaptive = if per_trial.iter().all(|r| r.2.is_some()) {
            Some(mean(&|r| r.2.unwrap()))
        } else {
            None
        };
        let crb_d = if n > 0.0 { direct_rep.crb_mean / n } else { f64::NAN };
        let crb_o = if n > 0.0 { opt_rep.crb_mean / n } else { f64::NAN };
        println!(
            "N={n:.3e}: direct {mse_direct:.4e} optimal {mse_opt:.4e} adaptive {}",
            mse_adaptive.map_or("-".to_string(), |v| format!("{v:.4e}"))
        );
        rows.push(vec![
            format!("{n:.6e}"),
            format!("{mse_direct:.9e}"),
            format!("{mse_opt:.9e}"),
            mse_adaptive.map_or("nan".to_string(), |v| format!("{v:.9e}")),
            format!("{crb_d:.9e}"),
            format!("{crb_o:.9e}"),
        ]);
    }
    report::write_csv(
        &ctx.out.join("monte_carlo.csv"),
        &ctx.prov,
        "budget,mse_direct,mse_optimal_mo,mse_adaptive,crb_direct_over_n,crb_mo_over_n",
        &rows,
    )?;
    println!("wrote {}", ctx.out.join("monte_carlo.csv").display());
    Ok(())
}

fn cmd_adaptive(ctx: &Ctx) -> Result<()> {
    let mut config = ctx.config.clone();
    if ctx.desk_scale {
        // 2D scenarios above 8 bins per axis are coarsened so full-scale
        // configs still complete at least one phase in desk time
        match &mut config.scenario {
            ScenarioSection::Chirp2d { bins, .. } | ScenarioSection::Siemens2d { bins, .. }
                if *bins > 8 =>
            {
                println!("desk-scale: coarsening 2D scenario from {bins} to 8 bins per axis");
                *bins = 8;
            }
            _ => {}
        }
    }
    let problem = build_problem(&config)?;
    let ad = config
        .adaptive
        .as_ref()
        .ok_or_else(|| Error::Config("adaptive needs an [adaptive] section".into()))?;
    let trials = if ctx.desk_scale { 1 } else { config.experiment.trials };
    let (budget, phases) = if ctx.desk_scale {
        // desk-scale truncation: one direct phase at a reduced budget
        (ad.budget.min(1e6), 1)
    } else {
        (ad.budget, ad.phases)
    };
    let quad = problem.model.basis.quadrature(problem.grid.spacing());
    let m_direct = direct_response_matrix(&problem.grid, &problem.psf, &quad);

    let mut summary = Vec::new();
    for t in 0..trials {
        let trial_dir = ctx.out.join(format!("trial_{t}"));
        let done = trial_dir.join("summary.csv");
        if done.exists() {
            // resume: reuse the completed trial's summary row
            if let Ok(text) = std::fs::read_to_string(&done) {
                if let Some(row) = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("trial")) {
                    println!("trial {t}: resumed from {}", done.display());
                    summary.push(row.split(',').map(|s| s.to_string()).collect());
                    continue;
                }
            }
        }
        std::fs::create_dir_all(&trial_dir)
            .map_err(|e| Error::Io(format!("{}: {e}", trial_dir.display())))?;
        let base = trial_seed(ctx.seed, t as u64);
        let mut schedule = AdaptiveSchedule::equal_split(budget, ad.j_adapt, phases - 1, base);
        if ad.weighted_nnls {
            schedule = schedule.with_weighted_nnls();
        }
        println!("trial {t}: {} phases, budget {budget:.3e}", schedule.phases.len());
        let result = run_adaptive(
            &problem.model,
            &schedule,
            &problem.psf,
            &problem.grid,
            &optimizer_options(&config, base),
            &ObjectiveConfig::for_optimizer(),
        )?;
        let mse_adaptive =
            (&result.final_c - &problem.model.c).norm_squared() / problem.model.num_modes() as f64;
        let mse_direct = trial_mse(&m_direct, "direct", &problem.model.c, budget, trial_seed(base, 999))?;

        // per-phase artifacts
        let records: Vec<_> = result.phases.iter().map(|p| p.record.clone()).collect();
        let write = |name: &str, content: String| -> Result<()> {
            let path = trial_dir.join(name);
            std::fs::write(&path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        };
        write("counts.csv", report::counts_csv(&records, &ctx.prov))?;
        write("estimate.csv", report::estimate_csv(result.final_c.as_slice(), &ctx.prov))?;
        for (i, phase) in result.phases.iter().enumerate() {
            if let Some(ms) = &phase.modes {
                write(&format!("modes_phase_{i}.csv"), report::modes_csv(ms, &ctx.prov))?;
            }
        }
        let row = vec![
            format!("{t}"),
            format!("{mse_direct:.9e}"),
            format!("{mse_adaptive:.9e}"),
            format!("{:.6}", mse_adaptive / mse_direct),
        ];
        report::write_csv(&done, &ctx.prov, "trial,mse_direct,mse_adaptive,ratio", &[row.clone()])?;
        println!(
            "trial {t}: direct {mse_direct:.4e} adaptive {mse_adaptive:.4e} ratio {:.3}",
            mse_adaptive / mse_direct
        );
        summary.push(row);
    }
    report::write_csv(
        &ctx.out.join("adaptive_summary.csv"),
        &ctx.prov,
        "trial,mse_direct,mse_adaptive,ratio",
        &summary,
    )?;
    println!("wrote {}", ctx.out.join("adaptive_summary.csv").display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| Error::Io(format!("{}: {e}", args.csv.display())))?;
    let spec = PlotSpec {
        title: if args.title.is_empty() {
            args.csv
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        } else {
            args.title.clone()
        },
        x_label: "x".into(),
        y_label: "y".into(),
        log_x: args.log_x,
        log_y: args.log_y,
    };
    let svg = plot_csv(&text, &spec).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    let name = Path::new(&args.csv)
        .file_stem()
        .map(|s| format!("{}.svg", s.to_string_lossy()))
        .unwrap_or_else(|| "plot.svg".into());
    let path = args.out.join(name);
    std::fs::write(&path, svg).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}
