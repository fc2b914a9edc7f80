//! Per-iteration trajectory CSV.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pgd::Trajectory;

pub const TRAJECTORY_COLUMNS: [&str; 7] = ["iteration", "inverse_mode", "nll", "dx_inf", "psnr", "ssim", "seconds"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one row per iteration. Floats use the shortest representation that parses
/// back to the same value. With `wall_time` false the `seconds` column is left empty so
/// that replays compare byte for byte.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory, wall_time: bool) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| annotate(e, path))?;
    w.write_record(TRAJECTORY_COLUMNS)?;
    for r in &traj.records {
        w.write_record([
            r.iteration.to_string(),
            r.inverse_mode.as_str().to_string(),
            r.nll.to_string(),
            r.dx_inf.to_string(),
            opt(r.psnr),
            opt(r.ssim),
            if wall_time { format!("{:.6}", r.seconds) } else { String::new() },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn annotate(e: csv::Error, path: &Path) -> Error {
    Error::from(e).at(path.display().to_string())
}

/// Raw rows (header excluded) of a trajectory file.
pub fn read_trajectory_rows(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| annotate(e, path))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(Error::Corrupt {
            offset: 0,
            reason: format!("unexpected trajectory header {header:?}"),
        });
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::InverseMode;
    use crate::pgd::IterationRecord;

    #[test]
    fn rows_round_trip() {
        let traj = Trajectory {
            records: vec![IterationRecord {
                iteration: 1,
                inverse_mode: InverseMode::NsApprox,
                nll: 0.1 + 0.2,
                dx_inf: 0.0,
                psnr: Some(f64::INFINITY),
                ssim: None,
                seconds: 1.25,
            }],
            ns_fallbacks: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory(&p, &traj, false).unwrap();
        let rows = read_trajectory_rows(&p).unwrap();
        assert_eq!(rows, vec![vec!["1", "ns-approx", "0.30000000000000004", "0", "inf", "", ""]]);
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.1 + 0.2);
        write_trajectory(&p, &traj, true).unwrap();
        assert_eq!(read_trajectory_rows(&p).unwrap()[0][6], "1.250000");
    }
}
