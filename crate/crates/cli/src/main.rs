//! `pfode`: deterministic PF-ODE sampling experiments from the command line.
//!
//! Subcommands: `schedule`, `simulate`, `geometry`, `gits`, `gaussian-exact`,
//! `meanshift`, `synth`. Exit codes: 0 on success, 2 on configuration
//! errors, 3 on numeric failures. `PFODE_THREADS` caps the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pfode_core::error::Error as CoreError;
use pfode_core::experiment::{ExperimentConfig, OracleSpec, ProcessKind, ScheduleSpec};
use pfode_core::gaussian_exact::{phi_extremum, GaussianTrajectoryModel};
use pfode_core::geometry::{
    deviation_profile, direct_pca_ratios, frenet_stats_param, pca_reconstruct, procrustes_align,
    procrustes_residual,
};
use pfode_core::gits::{gits_pipeline, GitsParams};
use pfode_core::io;
use pfode_core::oracles::{kde_logdensity, mean_shift_iterate};
use pfode_core::schedules::{logsnr_grid, polynomial_grid, vp_uniform_grid, TimeGrid};
use pfode_core::solvers::{SolveMethod, SolverConfig, Trajectory};
use pfode_core::synth::{random_low_rank_gaussian, synth_dataset, CenterSpec, SynthSpec};
use pfode_core::vecmath::dot;

#[derive(Parser)]
#[command(name = "pfode", version, about = "Probability-flow-ODE sampling laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a time schedule as JSON.
    Schedule(ScheduleArgs),
    /// Simulate a batch of sampling trajectories and write artifacts.
    Simulate(SimulateArgs),
    /// Analyze stored trajectories: deviation, PCA, Frenet stats, alignment.
    Geometry(GeometryArgs),
    /// Search a sampling schedule by dynamic programming over local errors.
    Gits(GitsArgs),
    /// Tabulate the closed-form Gaussian trajectory residual.
    GaussianExact(GaussianExactArgs),
    /// Run fixed-bandwidth mean-shift iterations on a dataset.
    Meanshift(MeanshiftArgs),
    /// Synthesize a dataset file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// Schedule family: poly | logsnr | vp-uniform.
    #[arg(long, default_value = "poly")]
    kind: String,
    /// Number of solver steps.
    #[arg(long)]
    nfe: usize,
    #[arg(long, default_value_t = 0.002)]
    t0: f64,
    #[arg(long, default_value_t = 80.0)]
    tmax: f64,
    /// Polynomial exponent (poly only).
    #[arg(long, default_value_t = 7.0)]
    rho: f64,
    /// Uniform-schedule epsilon (vp-uniform only).
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Oracle spec: kde:<file> | gaussian:<file|d=..,r=..,scale=..,seed=..> | mixture:<file>.
    #[arg(long)]
    oracle: String,
    /// Diffusion process: ve | vp | flow-matching.
    #[arg(long, default_value = "ve")]
    process: String,
    /// Schedule spec: poly:n=10 | logsnr:n=8 | vp-uniform:n=6 | explicit:80,1,0.002 | file:<path>.
    #[arg(long, default_value = "poly:n=10")]
    schedule: String,
    /// Solver: euler | heun | dpm2 | ipndm.
    #[arg(long, default_value = "euler")]
    method: String,
    /// Override the step count of a generated schedule.
    #[arg(long)]
    nfe: Option<usize>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for trajectories, geometry CSVs, and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GeometryArgs {
    /// Trajectory stem (without extension) or a directory of traj_*.json.
    #[arg(long)]
    input: PathBuf,
    /// Reconstruction subspace dimension.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Frenet window (odd, >= 7); auto-sized when omitted.
    #[arg(long)]
    window: Option<usize>,
    /// Procrustes-align every projected trajectory to the first one.
    #[arg(long)]
    align: bool,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GitsArgs {
    /// Oracle spec (same grammar as `simulate`).
    #[arg(long)]
    oracle: String,
    /// Step budget of the searched schedule.
    #[arg(long)]
    nfe: usize,
    #[arg(long, default_value_t = 1.15)]
    gamma: f64,
    /// Fine-grid step count.
    #[arg(long, default_value_t = 60)]
    fine: usize,
    /// Number of warmup samples.
    #[arg(long, default_value_t = 256)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.002)]
    t0: f64,
    #[arg(long, default_value_t = 80.0)]
    tmax: f64,
    /// Teacher solver for ground-truth states.
    #[arg(long, default_value = "ipndm")]
    method: String,
    /// Output directory (schedule JSON plus cost-matrix CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GaussianExactArgs {
    /// State dimension.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Covariance rank.
    #[arg(long, default_value_t = 3)]
    rank: usize,
    /// Eigenvalue scale of the synthesized model.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 80.0)]
    sigma_max: f64,
    /// Number of sigma samples in the table.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeanshiftArgs {
    /// Dataset file (.csv or binary).
    #[arg(long)]
    data: PathBuf,
    /// Starting point, comma-separated coordinates.
    #[arg(long)]
    x0: String,
    /// Kernel bandwidth.
    #[arg(long)]
    bandwidth: f64,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset family: clusters | low-rank | grid.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dim: usize,
    /// Point count (clusters, low-rank).
    #[arg(long, default_value_t = 64)]
    count: usize,
    /// Number of random cluster centers.
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    /// Center scale for random clusters.
    #[arg(long, default_value_t = 5.0)]
    center_scale: f64,
    /// Within-cluster spread.
    #[arg(long, default_value_t = 0.25)]
    spread: f64,
    /// Covariance rank (low-rank).
    #[arg(long, default_value_t = 3)]
    rank: usize,
    /// Eigenvalue scale (low-rank).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Points per axis (grid).
    #[arg(long, default_value_t = 3)]
    per_axis: usize,
    /// Lattice spacing (grid).
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (.csv writes CSV, anything else the binary format).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PFODE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: PFODE_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<CoreError>() {
                Some(core) if !core.is_config() => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Schedule(args) => cmd_schedule(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Geometry(args) => cmd_geometry(args),
        Command::Gits(args) => cmd_gits(args),
        Command::GaussianExact(args) => cmd_gaussian_exact(args),
        Command::Meanshift(args) => cmd_meanshift(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_schedule(args: ScheduleArgs) -> anyhow::Result<()> {
    let grid: TimeGrid<f64> = match args.kind.as_str() {
        "poly" => polynomial_grid(args.nfe, args.t0, args.tmax, args.rho)?,
        "logsnr" => logsnr_grid(args.nfe, args.t0, args.tmax)?,
        "vp-uniform" => vp_uniform_grid(args.nfe, args.t0, args.tmax, args.eps)?,
        other => anyhow::bail!("unknown schedule kind {other:?} (poly|logsnr|vp-uniform)"),
    };
    let kind = match args.kind.as_str() {
        "poly" => "polynomial",
        other => other,
    };
    match &args.out {
        Some(path) => {
            io::write_schedule_json(path, kind, &grid)?;
            println!("wrote {}", path.display());
        }
        None => {
            let file = io::ScheduleFile {
                kind: kind.to_string(),
                times: grid.times().to_vec(),
            };
            println!("{}", serde_json::to_string_pretty(&file)?);
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut schedule: ScheduleSpec = args.schedule.parse()?;
    if let Some(nfe) = args.nfe {
        match &mut schedule {
            ScheduleSpec::Poly { n, .. }
            | ScheduleSpec::LogSnr { n, .. }
            | ScheduleSpec::VpUniform { n, .. } => *n = nfe,
            _ => anyhow::bail!("--nfe only applies to generated schedules (poly/logsnr/vp-uniform)"),
        }
    }
    let cfg = ExperimentConfig {
        oracle: args.oracle.parse()?,
        process: args.process.parse::<ProcessKind>()?,
        schedule,
        solver: SolverConfig::new(args.method.parse::<SolveMethod>()?),
        batch: args.batch,
        seed: args.seed,
        out_dir: args.out,
    };
    let summary = pfode_core::experiment::run_experiment(&cfg)?;
    println!(
        "wrote {} trajectories to {}",
        summary.manifest.batch,
        summary.out_dir.display()
    );
    Ok(())
}

fn trajectory_stems(input: &PathBuf) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut stems: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension().and_then(|x| x.to_str()) == Some("pftr")
            })
            .map(|p| p.with_extension(""))
            .collect();
        stems.sort();
        if stems.is_empty() {
            anyhow::bail!("no .pftr trajectories found in {}", input.display());
        }
        Ok(stems)
    } else {
        Ok(vec![input.with_extension("")])
    }
}

/// Projects a trajectory into the 3-D frame spanned by the displacement
/// direction and the top 2 complement components.
fn project3(traj: &Trajectory<f64>) -> anyhow::Result<Vec<[f64; 3]>> {
    let rep = pca_reconstruct(traj, 3)?;
    let v_hat = &rep.basis[0];
    let w1 = rep.basis.get(1);
    let w2 = rep.basis.get(2);
    Ok(traj
        .states()
        .iter()
        .map(|x| {
            [
                dot(x, v_hat),
                w1.map_or(0.0, |w| dot(x, w)),
                w2.map_or(0.0, |w| dot(x, w)),
            ]
        })
        .collect())
}

fn auto_window(points: usize) -> Option<usize> {
    let mut w = 101.min(points.saturating_sub(1));
    if w % 2 == 0 {
        w = w.saturating_sub(1);
    }
    (w >= 7).then_some(w)
}

fn cmd_geometry(args: GeometryArgs) -> anyhow::Result<()> {
    let stems = trajectory_stems(&args.input)?;
    std::fs::create_dir_all(&args.out)?;

    let mut summaries = Vec::new();
    let mut reference: Option<Vec<[f64; 3]>> = None;
    for stem in &stems {
        let (traj, sidecar) = io::read_trajectory(stem)?;
        let name = stem
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectory".into());
        let dim_sqrt = (sidecar.d as f64).sqrt();

        let dev = deviation_profile(&traj)?;
        let pca = pca_reconstruct(&traj, args.k)?;
        let direct = direct_pca_ratios(traj.states(), args.k)?;
        let projected = project3(&traj)?;

        let aligned: Option<(Vec<[f64; 3]>, f64)> = if args.align {
            match &reference {
                None => {
                    reference = Some(projected.clone());
                    Some((projected.clone(), 0.0))
                }
                Some(r_ref) => {
                    if r_ref.len() == projected.len() {
                        let (o, resid) = procrustes_align(&projected, r_ref, false)?;
                        let mapped = projected
                            .iter()
                            .map(|p| {
                                let mut out = [0.0; 3];
                                for j in 0..3 {
                                    out[j] =
                                        p[0] * o[0][j] + p[1] * o[1][j] + p[2] * o[2][j];
                                }
                                out
                            })
                            .collect();
                        // sanity: residual matches the returned transform
                        debug_assert!(
                            (procrustes_residual(&projected, r_ref, &o) - resid).abs() <= 1e-9
                        );
                        Some((mapped, resid))
                    } else {
                        None
                    }
                }
            }
        } else {
            None
        };

        // Frenet stats on the projected curve, parameterized by xi = t_max - t
        let times = traj.times().times();
        let xi: Vec<f64> = times.iter().map(|&t| times[0] - t).collect();
        let window = args.window.or_else(|| auto_window(projected.len()));
        let frenet = match window {
            Some(w) => Some(frenet_stats_param(&projected, &xi, w)?),
            None => None,
        };

        // per-step CSV
        let csv_path = args.out.join(format!("{name}_steps.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        let mut header = vec![
            "step".to_string(),
            "time".to_string(),
            "time_scaled".to_string(),
            "d_td".to_string(),
            "d_fsd".to_string(),
            "proj0".to_string(),
            "proj1".to_string(),
            "proj2".to_string(),
        ];
        if traj.eps_norms().is_some() {
            header.push("eps_norm".into());
        }
        if aligned.is_some() {
            header.extend(["aligned0".into(), "aligned1".into(), "aligned2".into()]);
        }
        w.write_record(&header)?;
        for (i, &t) in times.iter().enumerate() {
            let mut rec = vec![
                i.to_string(),
                format!("{t}"),
                format!("{}", t * dim_sqrt),
                format!("{}", dev.d_td[i]),
                format!("{}", dev.d_fsd[i]),
                format!("{}", projected[i][0]),
                format!("{}", projected[i][1]),
                format!("{}", projected[i][2]),
            ];
            if let Some(ns) = traj.eps_norms() {
                rec.push(format!("{}", ns[i]));
            }
            if let Some((mapped, _)) = &aligned {
                rec.extend(mapped[i].iter().map(|v| format!("{v}")));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;

        summaries.push(serde_json::json!({
            "trajectory": name,
            "steps": sidecar.n,
            "dim": sidecar.d,
            "max_deviation_ratio": dev.max_ratio,
            "complement_variance_ratios": pca.variance_ratios,
            "direct_pca_ratios": direct,
            "max_recon_error": pca.recon_error.iter().cloned().fold(0.0f64, f64::max),
            "procrustes_residual": aligned.as_ref().map(|(_, r)| *r),
            "frenet": frenet.as_ref().map(|f| serde_json::json!({
                "window": f.window,
                "max_curvature": f.curvature.iter().cloned().fold(0.0f64, f64::max),
                "max_abs_torsion": f.torsion.iter().map(|t| t.abs()).fold(0.0f64, f64::max),
                "arc_length_total": f.arc_length.last().copied().unwrap_or(0.0),
            })),
        }));
    }

    let summary_path = args.out.join("geometry_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summaries)?)?;
    println!(
        "analyzed {} trajectories -> {}",
        stems.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_gits(args: GitsArgs) -> anyhow::Result<()> {
    let oracle = args.oracle.parse::<OracleSpec>()?.build()?;
    let params = GitsParams::<f64> {
        nfe: args.nfe,
        gamma: args.gamma,
        fine_steps: args.fine,
        t0: args.t0,
        t_max: args.tmax,
        rho: 7.0,
        warmup: args.warmup,
        seed: args.seed,
        teacher: SolverConfig::new(args.method.parse::<SolveMethod>()?),
    };
    let outcome = gits_pipeline(oracle.as_ref(), &params)?;
    std::fs::create_dir_all(&args.out)?;

    let sched_path = args.out.join("schedule.json");
    io::write_schedule_json(&sched_path, "gits", &outcome.result.schedule)?;

    let cm = &outcome.cost_matrix;
    let cm_path = args.out.join("cost_matrix.csv");
    let mut w = csv::Writer::from_path(&cm_path)?;
    let times = cm.grid().times();
    let mut header = vec!["from_time".to_string()];
    header.extend(times.iter().map(|t| format!("{t}")));
    w.write_record(&header)?;
    for i in 0..cm.size() {
        let mut rec = vec![format!("{}", times[i])];
        for j in 0..cm.size() {
            let c = cm.cost(i, j);
            rec.push(if c.is_finite() { format!("{c}") } else { String::new() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    println!(
        "schedule ({} steps, gamma {}): {:?}",
        args.nfe,
        args.gamma,
        outcome.result.schedule.times()
    );
    println!("wrote {} and {}", sched_path.display(), cm_path.display());
    Ok(())
}

fn cmd_gaussian_exact(args: GaussianExactArgs) -> anyhow::Result<()> {
    let gaussian = random_low_rank_gaussian(args.d, args.rank, args.scale, args.seed)?;
    let model = GaussianTrajectoryModel::new(gaussian.clone(), args.sigma_max)?;
    let x_init = pfode_core::gits::warmup_noises::<f64>(1, args.d, args.sigma_max, args.seed)
        .pop()
        .expect("one draw");

    let mut out: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut header = vec!["sigma".to_string()];
    for k in 0..args.rank {
        header.push(format!("phi_sq_{k}"));
    }
    header.push("residual_norm_sq".to_string());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..=args.samples {
        let sigma = args.sigma_max * i as f64 / args.samples as f64;
        let mut rec = vec![format!("{sigma}")];
        for k in 0..args.rank {
            let p = model.phi_k(k, sigma)?;
            rec.push(format!("{}", p * p));
        }
        rec.push(format!("{}", model.residual_norm_sq(&x_init, sigma)?));
        writeln!(out, "{}", rec.join(","))?;
    }
    out.flush()?;

    for (k, &lambda) in gaussian.eigvals().iter().enumerate() {
        let (sigma_min, phi_min) = phi_extremum(lambda, args.sigma_max)?;
        eprintln!(
            "eigenpair {k}: lambda = {lambda:.6}, extremum at sigma = {sigma_min:.6}, phi = {phi_min:.6e}"
        );
    }
    Ok(())
}

fn cmd_meanshift(args: MeanshiftArgs) -> anyhow::Result<()> {
    let data = io::read_dataset_auto(&args.data)?;
    let x0: Vec<f64> = args
        .x0
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("cannot parse --x0 {:?}", args.x0))?;
    let path = mean_shift_iterate(&data, &x0, args.bandwidth, args.iters)?;

    let mut out: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut header = vec!["iter".to_string()];
    for i in 0..data.dim() {
        header.push(format!("x{i}"));
    }
    header.push("kde_logdensity".to_string());
    writeln!(out, "{}", header.join(","))?;
    for (i, p) in path.iter().enumerate() {
        let ld = kde_logdensity(&data, p, args.bandwidth)?;
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|v| format!("{v}")));
        rec.push(format!("{ld}"));
        writeln!(out, "{}", rec.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = match args.kind.as_str() {
        "clusters" => SynthSpec::Clusters {
            dim: args.dim,
            count: args.count,
            centers: CenterSpec::Random {
                num: args.clusters,
                scale: args.center_scale,
            },
            spread: args.spread,
        },
        "low-rank" => SynthSpec::LowRankGaussian {
            dim: args.dim,
            rank: args.rank,
            count: args.count,
            scale: args.scale,
        },
        "grid" => SynthSpec::Grid {
            dim: args.dim,
            per_axis: args.per_axis,
            spacing: args.spacing,
        },
        other => anyhow::bail!("unknown synth kind {other:?} (clusters|low-rank|grid)"),
    };
    let data = synth_dataset(&spec, args.seed)?;
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("csv") => io::write_dataset_csv(&args.out, &data)?,
        _ => io::write_dataset_bin(&args.out, &data)?,
    }
    println!(
        "wrote {} points of dim {} to {}",
        data.len(),
        data.dim(),
        args.out.display()
    );
    Ok(())
}
