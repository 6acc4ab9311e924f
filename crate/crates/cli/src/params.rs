//! Parameter lists for the online and validation sweeps.

use std::path::Path;

use darcy_rb::config::Config;
use darcy_rb::mpfa::{ParameterPoint, ParameterRanges};

use crate::{CliError, Result};

/// Where the evaluation points come from.
#[derive(Clone, Debug, Default)]
pub struct PointSource {
    pub xi: Vec<String>,
    pub xi_file: Option<std::path::PathBuf>,
    pub grid: Option<usize>,
}

pub fn parse_xi(s: &str) -> Result<ParameterPoint> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("expected kappa1,kappa2 but got {s:?}")));
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: {p:?}"))))
        .collect::<Result<_>>()?;
    Ok(ParameterPoint::new(v[0], v[1]))
}

/// Reads a CSV with `kappa1` and `kappa2` columns.
pub fn read_xi_file(path: &Path) -> Result<Vec<ParameterPoint>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{} has no {name} column", path.display())))
    };
    let (i1, i2) = (col("kappa1")?, col("kappa2")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(parse_xi(&format!("{},{}", &rec[i1], &rec[i2]))?);
    }
    Ok(out)
}

/// `n × n` tensor grid, log-spaced in each permeability.
pub fn log_grid(r: &ParameterRanges, n: usize) -> Vec<ParameterPoint> {
    let axis = |lim: [f64; 2]| -> Vec<f64> {
        if n == 1 || lim[0] == lim[1] {
            return vec![(lim[0] * lim[1]).sqrt(); n];
        }
        let (a, b) = (lim[0].log10(), lim[1].log10());
        (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64).clamp(lim[0], lim[1])).collect()
    };
    let k1 = axis(r.kappa1);
    let k2 = axis(r.kappa2);
    k1.iter().flat_map(|&a| k2.iter().map(move |&b| ParameterPoint::new(a, b))).collect()
}

impl PointSource {
    /// Explicit points if any were given, otherwise the test sample of `config`.
    pub fn resolve(&self, config: &Config) -> Result<Vec<ParameterPoint>> {
        let mut pts = Vec::new();
        for s in &self.xi {
            pts.push(parse_xi(s)?);
        }
        if let Some(p) = &self.xi_file {
            pts.extend(read_xi_file(p)?);
        }
        if let Some(n) = self.grid {
            if n == 0 {
                return Err(CliError::Usage("--grid needs at least one point per axis".into()));
            }
            pts.extend(log_grid(&config.parameters, n));
        }
        if pts.is_empty() {
            pts = config.samples().1;
        }
        for xi in &pts {
            config.parameters.check(xi)?;
        }
        Ok(pts)
    }
}
