//! Plot-ready tables from greedy logs and validation sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::schema::{self, num};
use crate::{io_err, CliError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub curves: Option<PathBuf>,
    pub effectivity: Option<PathBuf>,
    pub curve_rows: usize,
    pub effectivity_rows: usize,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let headers = rd.headers()?.iter().map(str::to_string).collect();
        let rows = rd.records().collect::<std::result::Result<_, _>>()?;
        Ok(Table { headers, rows })
    }

    fn has(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.headers.iter().any(|h| h == n))
    }

    fn col(&self, name: &str) -> usize {
        self.headers.iter().position(|h| h == name).expect("column checked on load")
    }

    fn f(&self, row: &csv::StringRecord, name: &str) -> Option<f64> {
        row.get(self.col(name)).and_then(|s| s.parse().ok())
    }

    fn s<'r>(&self, row: &'r csv::StringRecord, name: &str) -> &'r str {
        row.get(self.col(name)).unwrap_or("")
    }
}

#[derive(Default)]
struct Group {
    points: usize,
    violations: usize,
    max: BTreeMap<&'static str, f64>,
    sums: BTreeMap<&'static str, (f64, usize)>,
}

impl Group {
    fn push_max(&mut self, key: &'static str, v: Option<f64>) {
        if let Some(v) = v {
            let e = self.max.entry(key).or_insert(f64::NEG_INFINITY);
            *e = e.max(v);
        }
    }

    fn push_mean(&mut self, key: &'static str, v: Option<f64>) {
        if let Some(v) = v {
            let e = self.sums.entry(key).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }

    fn max(&self, key: &str) -> Option<f64> {
        self.max.get(key).copied()
    }

    fn mean(&self, key: &str) -> Option<f64> {
        self.sums.get(key).map(|(s, n)| s / *n as f64)
    }
}

fn source_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes `greedy_curves.csv` from round logs and `effectivity.csv` from validation sweeps into `out_dir`.
pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<ReportSummary> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one input CSV".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut curves = Vec::new();
    let mut eff = Vec::new();
    for path in inputs {
        let t = Table::read(path)?;
        let src = source_name(path);
        if t.has(schema::ROUNDS) {
            for r in &t.rows {
                curves.push(vec![
                    src.clone(),
                    t.s(r, "round").to_string(),
                    t.s(r, "n_pr").to_string(),
                    t.s(r, "n_du").to_string(),
                    t.s(r, "max_estimate").to_string(),
                    t.s(r, "max_relative").to_string(),
                    t.s(r, "max_err_primal").to_string(),
                    t.s(r, "max_err_output").to_string(),
                ]);
            }
        } else if t.has(schema::VALIDATE) {
            let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
            for r in &t.rows {
                let key = (t.s(r, "n_pr").parse().unwrap_or(0), t.s(r, "n_du").parse().unwrap_or(0));
                let g = groups.entry(key).or_default();
                g.points += 1;
                if t.s(r, "reliable") != "true" {
                    g.violations += 1;
                }
                for k in ["err_primal", "bound_primal", "eff_primal", "err_corrected", "bound_corrected", "eff_corrected", "err_plain", "bound_plain", "eff_plain"] {
                    g.push_max(k, t.f(r, k));
                }
                g.push_mean("eff_primal", t.f(r, "eff_primal"));
                g.push_mean("eff_plain", t.f(r, "eff_plain"));
            }
            for ((n_pr, n_du), g) in groups {
                eff.push(vec![
                    src.clone(),
                    n_pr.to_string(),
                    n_du.to_string(),
                    g.points.to_string(),
                    g.violations.to_string(),
                    num(g.max("err_primal")),
                    num(g.max("bound_primal")),
                    num(g.max("eff_primal")),
                    num(g.mean("eff_primal")),
                    num(g.max("err_corrected")),
                    num(g.max("bound_corrected")),
                    num(g.max("eff_corrected")),
                    num(g.max("err_plain")),
                    num(g.max("bound_plain")),
                    num(g.max("eff_plain")),
                    num(g.mean("eff_plain")),
                ]);
            }
        } else {
            return Err(CliError::Usage(format!("{} is neither a greedy log nor a validation table", path.display())));
        }
    }
    let mut summary = ReportSummary { curve_rows: curves.len(), effectivity_rows: eff.len(), ..Default::default() };
    if !curves.is_empty() {
        let p = out_dir.join("greedy_curves.csv");
        write(&p, schema::CURVES, &curves)?;
        summary.curves = Some(p);
    }
    if !eff.is_empty() {
        let p = out_dir.join("effectivity.csv");
        write(&p, schema::EFFECTIVITY, &eff)?;
        summary.effectivity = Some(p);
    }
    Ok(summary)
}
