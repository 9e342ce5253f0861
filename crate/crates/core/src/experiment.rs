//! Reproducible experiment runner: oracle/schedule specifications, batch
//! simulation, artifact output, and the run manifest.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::deviation_profile;
use crate::gits::warmup_noises;
use crate::io;
use crate::oracles::{GaussianMixture, LowRankGaussian, ScoreOracle};
use crate::schedules::{
    explicit_grid, logsnr_grid, polynomial_grid, vp_uniform_grid, NoiseProcess, TimeGrid,
};
use crate::solvers::{simulate, simulate_zspace, SolverConfig, Trajectory};
use crate::synth::random_low_rank_gaussian;

/// Oracle selection, parsed from strings like `kde:data.pfld`,
/// `gaussian:model.json`, `gaussian:d=8,r=3,scale=2,seed=7`, or
/// `mixture:mix.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleSpec {
    Kde { path: PathBuf },
    GaussianFile { path: PathBuf },
    GaussianSynth { dim: usize, rank: usize, scale: f64, seed: u64 },
    MixtureFile { path: PathBuf },
}

fn parse_kv_list(s: &str) -> Result<Vec<(String, String)>> {
    s.split(',')
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidParams(format!("expected key=value, got {pair:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl FromStr for OracleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParams(format!("oracle spec {s:?} needs kind:...")))?;
        match kind {
            "kde" => Ok(OracleSpec::Kde { path: rest.into() }),
            "mixture" => Ok(OracleSpec::MixtureFile { path: rest.into() }),
            "gaussian" => {
                if rest.contains('=') {
                    let (mut dim, mut rank, mut scale, mut seed) = (0usize, 0usize, 1.0f64, 0u64);
                    for (k, v) in parse_kv_list(rest)? {
                        match k.as_str() {
                            "d" => dim = v.parse().map_err(|_| bad_num(&k, &v))?,
                            "r" => rank = v.parse().map_err(|_| bad_num(&k, &v))?,
                            "scale" => scale = v.parse().map_err(|_| bad_num(&k, &v))?,
                            "seed" => seed = v.parse().map_err(|_| bad_num(&k, &v))?,
                            other => {
                                return Err(Error::InvalidParams(format!(
                                    "unknown gaussian parameter {other:?}"
                                )))
                            }
                        }
                    }
                    if dim == 0 {
                        return Err(Error::InvalidParams("gaussian spec needs d=<dim>".into()));
                    }
                    Ok(OracleSpec::GaussianSynth { dim, rank, scale, seed })
                } else {
                    Ok(OracleSpec::GaussianFile { path: rest.into() })
                }
            }
            other => Err(Error::InvalidParams(format!("unknown oracle kind {other:?}"))),
        }
    }
}

fn bad_num(key: &str, value: &str) -> Error {
    Error::InvalidParams(format!("cannot parse {key}={value}"))
}

impl OracleSpec {
    /// Builds the oracle, reading referenced files.
    pub fn build(&self) -> Result<Box<dyn ScoreOracle<f64>>> {
        match self {
            OracleSpec::Kde { path } => Ok(Box::new(io::read_dataset_auto(path)?)),
            OracleSpec::GaussianFile { path } => {
                let body =
                    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let g: LowRankGaussian<f64> = serde_json::from_str(&body)
                    .map_err(|e| Error::format(path, e.to_string()))?;
                Ok(Box::new(g))
            }
            OracleSpec::GaussianSynth { dim, rank, scale, seed } => Ok(Box::new(
                random_low_rank_gaussian(*dim, *rank, *scale, *seed)?,
            )),
            OracleSpec::MixtureFile { path } => {
                let body =
                    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mix: GaussianMixture<f64> = serde_json::from_str(&body)
                    .map_err(|e| Error::format(path, e.to_string()))?;
                Ok(Box::new(mix))
            }
        }
    }

    /// Paths of the files this spec depends on.
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            OracleSpec::Kde { path }
            | OracleSpec::GaussianFile { path }
            | OracleSpec::MixtureFile { path } => vec![path.clone()],
            OracleSpec::GaussianSynth { .. } => Vec::new(),
        }
    }
}

/// Process selection for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Ve,
    Vp,
    FlowMatching,
}

impl FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ve" => Ok(ProcessKind::Ve),
            "vp" => Ok(ProcessKind::Vp),
            "flow" | "flow-matching" => Ok(ProcessKind::FlowMatching),
            other => Err(Error::InvalidParams(format!("unknown process {other:?}"))),
        }
    }
}

impl ProcessKind {
    pub fn build(&self) -> NoiseProcess<f64> {
        match self {
            ProcessKind::Ve => NoiseProcess::ve_default(),
            ProcessKind::Vp => NoiseProcess::vp_default(),
            ProcessKind::FlowMatching => NoiseProcess::FlowMatching {
                t_total: 1.0,
                t_max: 0.95,
            },
        }
    }
}

/// Schedule selection, parsed from strings like `poly:n=10`,
/// `logsnr:n=8,t0=0.002,tmax=80`, `vp-uniform:n=6`, `explicit:80,1,0.002`,
/// or `file:schedule.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleSpec {
    Poly { n: usize, t0: f64, t_max: f64, rho: f64 },
    LogSnr { n: usize, t0: f64, t_max: f64 },
    VpUniform { n: usize, t0: f64, t_max: f64, eps_s: f64 },
    Explicit { times: Vec<f64> },
    File { path: PathBuf },
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParams(format!("schedule spec {s:?} needs kind:...")))?;
        match kind {
            "file" => Ok(ScheduleSpec::File { path: rest.into() }),
            "explicit" => {
                let times: std::result::Result<Vec<f64>, _> =
                    rest.split(',').map(|t| t.trim().parse::<f64>()).collect();
                Ok(ScheduleSpec::Explicit {
                    times: times
                        .map_err(|_| Error::InvalidParams(format!("bad explicit times {rest:?}")))?,
                })
            }
            "poly" | "logsnr" | "vp-uniform" => {
                let (mut n, mut t0, mut t_max, mut rho, mut eps_s) =
                    (0usize, 0.002f64, 80.0f64, 7.0f64, 0.001f64);
                for (k, v) in parse_kv_list(rest)? {
                    match k.as_str() {
                        "n" => n = v.parse().map_err(|_| bad_num(&k, &v))?,
                        "t0" => t0 = v.parse().map_err(|_| bad_num(&k, &v))?,
                        "tmax" => t_max = v.parse().map_err(|_| bad_num(&k, &v))?,
                        "rho" => rho = v.parse().map_err(|_| bad_num(&k, &v))?,
                        "eps" => eps_s = v.parse().map_err(|_| bad_num(&k, &v))?,
                        other => {
                            return Err(Error::InvalidParams(format!(
                                "unknown schedule parameter {other:?}"
                            )))
                        }
                    }
                }
                if n == 0 {
                    return Err(Error::InvalidParams("schedule spec needs n=<steps>".into()));
                }
                Ok(match kind {
                    "poly" => ScheduleSpec::Poly { n, t0, t_max, rho },
                    "logsnr" => ScheduleSpec::LogSnr { n, t0, t_max },
                    _ => ScheduleSpec::VpUniform { n, t0, t_max, eps_s },
                })
            }
            other => Err(Error::InvalidParams(format!("unknown schedule kind {other:?}"))),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<TimeGrid<f64>> {
        match self {
            ScheduleSpec::Poly { n, t0, t_max, rho } => polynomial_grid(*n, *t0, *t_max, *rho),
            ScheduleSpec::LogSnr { n, t0, t_max } => logsnr_grid(*n, *t0, *t_max),
            ScheduleSpec::VpUniform { n, t0, t_max, eps_s } => {
                vp_uniform_grid(*n, *t0, *t_max, *eps_s)
            }
            ScheduleSpec::Explicit { times } => explicit_grid(times),
            ScheduleSpec::File { path } => Ok(io::read_schedule_json(path)?.1),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScheduleSpec::Poly { .. } => "polynomial",
            ScheduleSpec::LogSnr { .. } => "logsnr",
            ScheduleSpec::VpUniform { .. } => "vp-uniform",
            ScheduleSpec::Explicit { .. } => "explicit",
            ScheduleSpec::File { .. } => "file",
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            ScheduleSpec::File { path } => vec![path.clone()],
            _ => Vec::new(),
        }
    }
}

/// Full experiment description. All randomness flows from `seed` through
/// per-trajectory counter-mode streams, so reruns are deterministic and
/// enlarging the batch never reshuffles earlier trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub oracle: OracleSpec,
    pub process: ProcessKind,
    pub schedule: ScheduleSpec,
    pub solver: SolverConfig,
    pub batch: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Manifest written next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub batch: usize,
    pub oracle: String,
    pub schedule_kind: String,
    pub config_digest: String,
    pub input_digests: Vec<(String, String)>,
    pub trajectory_digests: Vec<String>,
}

/// Summary returned by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Runs the configured batch, writing one trajectory file pair and one
/// deviation-profile CSV per sample, the schedule, and a manifest with the
/// digests of all inputs and payloads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    if cfg.batch == 0 {
        return Err(Error::InvalidParams("batch must be positive".into()));
    }
    let oracle = cfg.oracle.build()?;
    let grid = cfg.schedule.build()?;
    let process = cfg.process.build();
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let sigma_init = process.sigma(grid.t_max());
    let scale_init = process.scale(grid.t_max());
    let noises = warmup_noises::<f64>(cfg.batch, oracle.dim(), sigma_init * scale_init, cfg.seed);

    let trajectories: Vec<Result<Trajectory<f64>>> = noises
        .par_iter()
        .map(|x_init| match cfg.process {
            ProcessKind::Ve => simulate(oracle.as_ref(), &grid, x_init, &cfg.solver),
            _ => simulate_zspace(oracle.as_ref(), &process, &grid, x_init, &cfg.solver),
        })
        .collect();

    io::write_schedule_json(
        cfg.out_dir.join("schedule.json"),
        cfg.schedule.kind_name(),
        &grid,
    )?;

    let method = format!("{:?}", cfg.solver.method).to_lowercase();
    let mut trajectory_digests = Vec::with_capacity(cfg.batch);
    for (i, traj) in trajectories.into_iter().enumerate() {
        let traj = traj?;
        let stem = cfg.out_dir.join(format!("traj_{i:04}"));
        io::write_trajectory(&stem, &traj, &oracle.describe(), &method)?;
        io::write_trajectory_csv(stem.with_extension("csv"), &traj)?;
        trajectory_digests.push(file_digest(&stem.with_extension("pftr"))?);

        let dev = deviation_profile(&traj)?;
        let csv_path = cfg.out_dir.join(format!("geometry_{i:04}.csv"));
        write_deviation_csv(&csv_path, &traj, &dev)?;
    }

    // the digest covers the semantic configuration, not where it is written
    let mut digest_cfg = cfg.clone();
    digest_cfg.out_dir = PathBuf::new();
    let config_digest = sha256_hex(
        serde_json::to_string(&digest_cfg)
            .expect("config serializes")
            .as_bytes(),
    );
    let mut input_digests = Vec::new();
    for path in cfg
        .oracle
        .input_files()
        .into_iter()
        .chain(cfg.schedule.input_files())
    {
        input_digests.push((path.display().to_string(), file_digest(&path)?));
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        batch: cfg.batch,
        oracle: oracle.describe(),
        schedule_kind: cfg.schedule.kind_name().to_string(),
        config_digest,
        input_digests,
        trajectory_digests,
    };
    let manifest_path = cfg.out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    Ok(ExperimentSummary {
        out_dir: cfg.out_dir.clone(),
        manifest,
    })
}

fn write_deviation_csv(
    path: &Path,
    traj: &Trajectory<f64>,
    dev: &crate::geometry::DeviationProfile<f64>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let has_eps = traj.eps_norms().is_some();
    let mut header = vec!["step", "time", "d_td", "d_fsd"];
    if has_eps {
        header.push("eps_norm");
    }
    w.write_record(&header)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for (k, &t) in traj.times().times().iter().enumerate() {
        let mut rec = vec![
            k.to_string(),
            format!("{t}"),
            format!("{}", dev.d_td[k]),
            format!("{}", dev.d_fsd[k]),
        ];
        if let Some(ns) = traj.eps_norms() {
            rec.push(format!("{}", ns[k]));
        }
        w.write_record(&rec)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
