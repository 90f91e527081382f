//! Gnuplot-ready `.dat` files from a run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("{} not found", p.display()),
        )));
    }
    Ok(p)
}

/// Writes `outputs.dat`, `error.dat`, `lyapunov.dat` and
/// `lyapunov_full.dat` next to the run artifacts and returns their paths.
///
/// `lyapunov.dat` keeps the rows evaluated in a connected topology up to
/// the round-off floor; for a certified run its `W` column never
/// increases. `lyapunov_full.dat` has every row.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let traj_path = require(dir, "trajectory.csv")?;
    let lyap_path = require(dir, "lyapunov.csv")?;
    let cert_path = require(dir, "certificate.json")?;

    let cert: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cert_path)?)?;
    let connected: BTreeMap<String, bool> = cert["constants"]["topologies"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(|t| Some((t["label"].as_str()?.to_string(), t["connected"].as_bool()?)))
                .collect()
        })
        .unwrap_or_default();
    let floor = cert["floor_time"].as_f64().unwrap_or(f64::INFINITY);

    let mut rdr = csv::Reader::from_path(&traj_path)?;
    let headers = rdr.headers()?.clone();
    let y_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("y_"))
        .map(|(i, _)| i)
        .collect();
    let err_col = headers.iter().position(|h| h == "err");
    let mut outputs = String::from("# t");
    for i in &y_cols {
        let _ = write!(outputs, " {}", &headers[*i]);
    }
    outputs.push('\n');
    let mut error = String::from("# t err log10_err\n");
    for rec in rdr.records() {
        let rec = rec?;
        let t = &rec[0];
        outputs.push_str(t);
        for i in &y_cols {
            outputs.push(' ');
            outputs.push_str(&rec[*i]);
        }
        outputs.push('\n');
        if let Some(c) = err_col {
            let e: f64 = rec[c].parse().map_err(|_| Error::Parse {
                file: traj_path.display().to_string(),
                message: format!("bad err value `{}`", &rec[c]),
            })?;
            let _ = writeln!(error, "{t} {} {:.9}", &rec[c], e.max(f64::MIN_POSITIVE).log10());
        }
    }

    let mut lyap = String::from("# t V W sigma switch\n");
    let mut full = String::from("# t V W sigma connected switch\n");
    let mut rdr = csv::Reader::from_path(&lyap_path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let t: f64 = rec[0].parse().unwrap_or(f64::NAN);
        let conn = connected.get(&rec[4]).copied().unwrap_or(false);
        let switch = u8::from(&rec[5] == "jump");
        let _ = writeln!(
            full,
            "{} {} {} {} {} {switch}",
            &rec[0],
            &rec[1],
            &rec[2],
            &rec[3],
            u8::from(conn)
        );
        if conn && t <= floor {
            let _ = writeln!(lyap, "{} {} {} {} {switch}", &rec[0], &rec[1], &rec[2], &rec[3]);
        }
    }

    let files = [
        ("outputs.dat", outputs),
        ("error.dat", error),
        ("lyapunov.dat", lyap),
        ("lyapunov_full.dat", full),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
