//! File formats: datasets, trajectories, and schedules.
//!
//! Binary payloads are little-endian `f64`, row-major, behind a 4-byte magic
//! and `u32` header fields. Every binary format has a CSV mirror. Trajectory
//! files are a JSON sidecar (`<stem>.json`) plus a binary payload
//! (`<stem>.pftr` holding the states and then the denoised rows).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::Dataset;
use crate::schedules::TimeGrid;
use crate::solvers::Trajectory;

const DATASET_MAGIC: &[u8; 4] = b"PFLD";
const TRAJECTORY_MAGIC: &[u8; 4] = b"PFTR";

fn write_f64s(w: &mut impl Write, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_f64s(r: &mut impl Read, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes a dataset in the binary format: magic `PFLD`, `u32` count, `u32`
/// dim, then the points row-major.
pub fn write_dataset_bin(path: impl AsRef<Path>, data: &Dataset<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    (|| -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(data.len() as u32).to_le_bytes())?;
        w.write_all(&(data.dim() as u32).to_le_bytes())?;
        for p in data.points() {
            write_f64s(&mut w, p.iter().copied())?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Reads a binary dataset file.
pub fn read_dataset_bin(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(path, "bad magic, expected PFLD"));
    }
    let mut header = [0u8; 8];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let count = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if count == 0 || dim == 0 {
        return Err(Error::format(path, "count and dim must be positive"));
    }
    let flat = read_exact_f64s(&mut r, count * dim).map_err(|e| Error::io(path, e))?;
    let points = flat.chunks_exact(dim).map(|c| c.to_vec()).collect();
    Dataset::new(points)
}

/// Writes a dataset as CSV, one point per row, no header.
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for p in data.points() {
        w.serialize(p)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV dataset, one point per row.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut points = Vec::new();
    for rec in r.deserialize::<Vec<f64>>() {
        points.push(rec.map_err(|e| Error::format(path, e.to_string()))?);
    }
    Dataset::new(points)
}

/// Reads a dataset by extension: `.csv` as CSV, anything else as binary.
pub fn read_dataset_auto(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_dataset_csv(path),
        _ => read_dataset_bin(path),
    }
}

/// On-disk schedule representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub kind: String,
    pub times: Vec<f64>,
}

/// Writes a schedule as `{"kind": ..., "times": [descending]}`.
pub fn write_schedule_json(
    path: impl AsRef<Path>,
    kind: &str,
    grid: &TimeGrid<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let file = ScheduleFile {
        kind: kind.to_string(),
        times: grid.times().to_vec(),
    };
    let body = serde_json::to_string_pretty(&file).expect("schedule serializes");
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads and validates a schedule file.
pub fn read_schedule_json(path: impl AsRef<Path>) -> Result<(String, TimeGrid<f64>)> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ScheduleFile =
        serde_json::from_str(&body).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((file.kind, TimeGrid::new(file.times)?))
}

/// JSON sidecar accompanying a trajectory payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    /// State dimension.
    pub d: usize,
    /// Step count (the payload has `n + 1` state rows).
    pub n: usize,
    /// Visited times, descending.
    pub times: Vec<f64>,
    /// Oracle description.
    pub oracle: String,
    /// Solver method name.
    pub method: String,
    /// Whether denoised rows follow the states in the payload.
    pub denoised: bool,
    /// Recorded noise-prediction norms, if any.
    pub eps_norms: Option<Vec<f64>>,
    /// Oracle evaluations consumed by the solver.
    pub nfe: usize,
}

fn sidecar_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn payload_path(stem: &Path) -> PathBuf {
    stem.with_extension("pftr")
}

/// Writes `<stem>.json` and `<stem>.pftr` for a trajectory.
pub fn write_trajectory(
    stem: impl AsRef<Path>,
    traj: &Trajectory<f64>,
    oracle_desc: &str,
    method: &str,
) -> Result<()> {
    let stem = stem.as_ref();
    let sidecar = TrajectorySidecar {
        d: traj.dim(),
        n: traj.steps(),
        times: traj.times().times().to_vec(),
        oracle: oracle_desc.to_string(),
        method: method.to_string(),
        denoised: traj.denoised().is_some(),
        eps_norms: traj.eps_norms().map(|n| n.to_vec()),
        nfe: traj.nfe(),
    };
    let sc_path = sidecar_path(stem);
    std::fs::write(
        &sc_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| Error::io(&sc_path, e))?;

    let pl_path = payload_path(stem);
    let mut w = BufWriter::new(File::create(&pl_path).map_err(|e| Error::io(&pl_path, e))?);
    (|| -> std::io::Result<()> {
        w.write_all(TRAJECTORY_MAGIC)?;
        for row in traj.states() {
            write_f64s(&mut w, row.iter().copied())?;
        }
        if let Some(denoised) = traj.denoised() {
            for row in denoised {
                write_f64s(&mut w, row.iter().copied())?;
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(&pl_path, e))
}

/// Reads a trajectory written by [`write_trajectory`].
pub fn read_trajectory(stem: impl AsRef<Path>) -> Result<(Trajectory<f64>, TrajectorySidecar)> {
    let stem = stem.as_ref();
    let sc_path = sidecar_path(stem);
    let body = std::fs::read_to_string(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    let sidecar: TrajectorySidecar =
        serde_json::from_str(&body).map_err(|e| Error::format(&sc_path, e.to_string()))?;

    let pl_path = payload_path(stem);
    let mut r = BufReader::new(File::open(&pl_path).map_err(|e| Error::io(&pl_path, e))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(&pl_path, e))?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(Error::format(&pl_path, "bad magic, expected PFTR"));
    }
    let rows = sidecar.n + 1;
    let d = sidecar.d;
    let states_flat = read_exact_f64s(&mut r, rows * d).map_err(|e| Error::io(&pl_path, e))?;
    let states: Vec<Vec<f64>> = states_flat.chunks_exact(d).map(|c| c.to_vec()).collect();
    let denoised = if sidecar.denoised {
        let flat = read_exact_f64s(&mut r, rows * d).map_err(|e| Error::io(&pl_path, e))?;
        Some(flat.chunks_exact(d).map(|c| c.to_vec()).collect())
    } else {
        None
    };
    let grid = TimeGrid::new(sidecar.times.clone())?;
    let traj = Trajectory::from_parts(
        grid,
        states,
        denoised,
        sidecar.eps_norms.clone(),
        sidecar.nfe,
    )?;
    Ok((traj, sidecar))
}

/// CSV export of a trajectory: one row per visited state with the time, the
/// state coordinates, and the eps norm when recorded.
pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut header = vec!["step".to_string(), "time".to_string()];
    for i in 0..traj.dim() {
        header.push(format!("x{i}"));
    }
    if traj.eps_norms().is_some() {
        header.push("eps_norm".to_string());
    }
    w.write_record(&header)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for (k, (x, &t)) in traj
        .states()
        .iter()
        .zip(traj.times().times())
        .enumerate()
    {
        let mut rec = vec![k.to_string(), format!("{t}")];
        rec.extend(x.iter().map(|v| format!("{v}")));
        if let Some(ns) = traj.eps_norms() {
            rec.push(format!("{}", ns[k]));
        }
        w.write_record(&rec)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::polynomial_grid;
    use crate::solvers::{simulate, SolverConfig};

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("pfode-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn dataset_binary_round_trip_is_bit_exact() {
        let data = Dataset::new(vec![
            vec![0.1, -2.5e-17, 3.0],
            vec![f64::MIN_POSITIVE, 1.0 + f64::EPSILON, -0.0],
        ])
        .unwrap();
        let path = tmp("roundtrip.pfld");
        write_dataset_bin(&path, &data).unwrap();
        let back = read_dataset_bin(&path).unwrap();
        for (a, b) in data.points().iter().zip(back.points()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let data = Dataset::new(vec![vec![1.5, -2.25], vec![0.0, 42.0]]).unwrap();
        let path = tmp("roundtrip.csv");
        write_dataset_csv(&path, &data).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(data, back);
        assert_eq!(read_dataset_auto(&path).unwrap(), data);
    }

    #[test]
    fn dataset_bad_magic_is_rejected() {
        let path = tmp("bad.pfld");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            read_dataset_bin(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn schedule_json_round_trip() {
        let grid = polynomial_grid(5, 0.002, 80.0, 7.0).unwrap();
        let path = tmp("schedule.json");
        write_schedule_json(&path, "polynomial", &grid).unwrap();
        let (kind, back) = read_schedule_json(&path).unwrap();
        assert_eq!(kind, "polynomial");
        assert_eq!(back.times(), grid.times());
    }

    #[test]
    fn schedule_json_validates_order() {
        let path = tmp("bad_schedule.json");
        std::fs::write(&path, r#"{"kind":"x","times":[1.0, 2.0]}"#).unwrap();
        assert!(read_schedule_json(&path).is_err());
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let data = Dataset::new(vec![vec![1.0, 0.0], vec![-1.0, 0.3]]).unwrap();
        let grid = polynomial_grid(7, 0.01, 40.0, 7.0).unwrap();
        let traj = simulate(&data, &grid, &[13.0, -4.0], &SolverConfig::default()).unwrap();
        let stem = tmp("traj_rt");
        write_trajectory(&stem, &traj, "kde-test", "euler").unwrap();
        let (back, sidecar) = read_trajectory(&stem).unwrap();
        assert_eq!(sidecar.method, "euler");
        assert_eq!(sidecar.d, 2);
        assert_eq!(sidecar.n, 7);
        assert_eq!(back.states().len(), traj.states().len());
        for (a, b) in traj.states().iter().zip(back.states()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (a, b) in traj
            .denoised()
            .unwrap()
            .iter()
            .zip(back.denoised().unwrap())
        {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(traj.eps_norms().unwrap(), back.eps_norms().unwrap());
    }

    #[test]
    fn trajectory_csv_has_one_row_per_state() {
        let data = Dataset::new(vec![vec![0.5], vec![-0.5]]).unwrap();
        let grid = polynomial_grid(4, 0.01, 10.0, 7.0).unwrap();
        let traj = simulate(&data, &grid, &[2.0], &SolverConfig::default()).unwrap();
        let path = tmp("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 1 + 5);
        assert!(body.lines().next().unwrap().starts_with("step,time,x0"));
    }
}
