use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::sweep::{RealDataRow, ResultRow};

pub const THEORY_COLUMNS: [&str; 10] =
    ["n_over_d", "p_over_d", "eps_g_theory", "eps_t_theory", "rho", "m", "q", "v", "converged", "iterations"];
pub const MC_COLUMNS: [&str; 5] = ["eps_g_mc_mean", "eps_g_mc_se", "eps_t_mc_mean", "eps_t_mc_se", "seeds_used"];
pub const REALDATA_COLUMNS: [&str; 11] = [
    "n_over_d",
    "p_over_d",
    "alpha",
    "corruption",
    "eps_g_median",
    "eps_g_mc_mean",
    "eps_g_mc_se",
    "eps_t_median",
    "eps_t_mc_mean",
    "eps_t_mc_se",
    "seeds_used",
];

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io { path: "<csv>".into(), source: e.into() }
}

/// Writes result rows; the Monte Carlo columns appear when any row has them.
pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let with_mc = rows.iter().any(|r| r.mc.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = THEORY_COLUMNS.to_vec();
    if with_mc {
        header.extend(MC_COLUMNS);
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            float(r.n_over_d),
            float(r.p_over_d),
            float(r.eps_g_theory),
            float(r.eps_t_theory),
            float(r.rho),
            float(r.m),
            float(r.q),
            float(r.v),
            u8::from(r.converged).to_string(),
            r.iterations.to_string(),
        ];
        if with_mc {
            match &r.mc {
                Some(mc) => rec.extend([
                    float(mc.eps_g_mc_mean),
                    opt(mc.eps_g_mc_se),
                    float(mc.eps_t_mc_mean),
                    opt(mc.eps_t_mc_se),
                    mc.seeds_used.to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), MC_COLUMNS.len())),
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })
}

pub fn write_realdata<W: Write>(out: W, rows: &[RealDataRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REALDATA_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            float(r.n_over_d),
            float(r.p_over_d),
            float(r.alpha),
            float(r.corruption),
            float(r.eps_g_median),
            float(r.eps_g_mc_mean),
            opt(r.eps_g_mc_se),
            float(r.eps_t_median),
            float(r.eps_t_mc_mean),
            opt(r.eps_t_mc_se),
            r.seeds_used.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.display().to_string(), source })?;
    }
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Pretty JSON of any serializable value. Non-finite floats become `null`.
pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(out, value).map_err(|e| Error::Io { path: "<json>".into(), source: e.into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::sweep::McColumns;

    fn row(mc: Option<McColumns>) -> ResultRow {
        ResultRow {
            n_over_d: 1.0,
            p_over_d: 0.1,
            eps_g_theory: f64::NAN,
            eps_t_theory: 0.25,
            rho: 1.0,
            m: -0.5,
            q: 2.0,
            v: 3.0,
            converged: false,
            iterations: 7,
            mc,
        }
    }

    #[test]
    fn theory_only_layout() {
        let mut buf = Vec::new();
        write_results(&mut buf, &[row(None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n_over_d,p_over_d,eps_g_theory,eps_t_theory,rho,m,q,v,converged,iterations");
        let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cells[1], "1.0000000000000001e-1");
        assert_eq!(cells[2], "NaN");
        assert_eq!(&cells[8..], ["0", "7"]);
        assert_eq!(cells[1].parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn single_seed_leaves_standard_errors_empty() {
        let mc = McColumns { eps_g_mc_mean: 0.2, eps_g_mc_se: None, eps_t_mc_mean: 0.1, eps_t_mc_se: None, seeds_used: 1 };
        let mut buf = Vec::new();
        write_results(&mut buf, &[row(Some(mc))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "n_over_d,p_over_d,eps_g_theory,eps_t_theory,rho,m,q,v,converged,iterations,eps_g_mc_mean,eps_g_mc_se,eps_t_mc_mean,eps_t_mc_se,seeds_used\n"
        ));
        let last: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&last[10..], ["2.0000000000000001e-1", "", "1.0000000000000001e-1", "", "1"]);
    }
}
