//! TOML run configuration and parameter sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::mesh::{Aabb, Plane, ZoneSpec};
use crate::mpfa::{FluidRockProps, ParameterPoint, ParameterRanges};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxSpec {
    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Depth interval of zone 1; absent means a single zone.
    pub zone1: Option<[f64; 2]>,
    pub dirichlet: Vec<Plane>,
    pub well_box: BoxSpec,
    pub gamma_int: BoxSpec,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            nx: 10,
            ny: 10,
            nz: 5,
            lo: [0.0, 0.0, -1000.0],
            hi: [1996.0, 1996.0, 0.0],
            zone1: Some([-800.0, -200.0]),
            dirichlet: vec![Plane::XMin, Plane::XMax, Plane::YMin, Plane::YMax],
            well_box: BoxSpec { lo: [850.0, 850.0, -700.0], hi: [1000.0, 1000.0, -300.0] },
            gamma_int: BoxSpec { lo: [598.8, 598.8, -800.0], hi: [1397.2, 1397.2, -200.0] },
        }
    }
}

impl MeshConfig {
    pub fn zone(&self) -> ZoneSpec {
        match self.zone1 {
            Some([a, b]) => ZoneSpec::slab(a, b),
            None => ZoneSpec::whole(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub final_time_days: f64,
    pub dt_days: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { final_time_days: 200.0, dt_days: 10.0 }
    }
}

impl TimeConfig {
    pub fn dt(&self) -> f64 {
        self.dt_days * SECONDS_PER_DAY
    }

    pub fn n_steps(&self) -> Result<usize> {
        let n = self.final_time_days / self.dt_days;
        let r = n.round();
        if !(self.dt_days > 0.0) || !(r >= 1.0) || (n - r).abs() > 1e-9 * r {
            return Err(Error::Config("final_time_days must be a positive multiple of dt_days".into()));
        }
        Ok(r as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub training: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { training: 100, test: 50, seed: 20_240_517 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EimConfig {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for EimConfig {
    fn default() -> Self {
        EimConfig { tol: 1e-12, max_terms: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmConfig {
    pub enabled: bool,
    pub m1: usize,
    pub m2: usize,
    pub tol: f64,
    pub max_points: usize,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig { enabled: true, m1: 5, m2: 5, tol: 1e-4, max_points: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyConfig {
    pub estimator: EstimatorKind,
    pub tol: f64,
    pub n_max: usize,
    pub max_rounds: usize,
    pub ric: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { estimator: EstimatorKind::DeltaSTilde, tol: 1e-8, n_max: 200, max_rounds: 200, ric: 1.0 - 1e-8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mesh: MeshConfig,
    pub physics: FluidRockProps,
    pub time: TimeConfig,
    pub parameters: ParameterRanges,
    pub sampling: SamplingConfig,
    pub eim: EimConfig,
    pub scm: ScmConfig,
    pub greedy: GreedyConfig,
}

impl Default for ParameterRanges {
    fn default() -> Self {
        ParameterRanges::reference()
    }
}

/// 1-based line of `key` inside `[section]`, falling back to the section header.
pub fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(k) = key {
                let name = line.split('=').next().unwrap_or("").trim();
                if name == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn semantic(text: &str, section: &str, key: Option<&str>, msg: impl std::fmt::Display) -> Error {
    match locate(text, section, key) {
        Some(line) => Error::Config(format!("line {line}: {msg}")),
        None => Error::Config(format!("[{section}]: {msg}")),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    /// Checks value ranges; `text` is only used to report line numbers.
    pub fn validate(&self, text: &str) -> Result<()> {
        let m = &self.mesh;
        for (k, v) in [("nx", m.nx), ("ny", m.ny), ("nz", m.nz)] {
            if v == 0 {
                return Err(semantic(text, "mesh", Some(k), format!("{k} must be at least 1")));
            }
        }
        if (0..3).any(|i| !(m.hi[i] > m.lo[i])) {
            return Err(semantic(text, "mesh", Some("hi"), "hi must exceed lo componentwise"));
        }
        if m.dirichlet.is_empty() {
            return Err(semantic(text, "mesh", Some("dirichlet"), "at least one Dirichlet plane is required"));
        }
        for (k, b) in [("well_box", &m.well_box), ("gamma_int", &m.gamma_int)] {
            if (0..3).any(|i| !(b.hi[i] >= b.lo[i])) {
                return Err(semantic(text, "mesh", Some(k), format!("{k}: hi must not be below lo")));
            }
        }
        if let Some([a, b]) = m.zone1 {
            if !(b > a) {
                return Err(semantic(text, "mesh", Some("zone1"), "zone1 needs z_lo < z_hi"));
            }
        }
        self.physics.validate().map_err(|e| semantic(text, "physics", None, e))?;
        self.time.n_steps().map_err(|e| semantic(text, "time", Some("final_time_days"), e))?;
        self.parameters.validate().map_err(|e| semantic(text, "parameters", None, e))?;
        if self.sampling.training == 0 {
            return Err(semantic(text, "sampling", Some("training"), "training set must not be empty"));
        }
        if !(self.eim.tol > 0.0) || self.eim.max_terms == 0 {
            return Err(semantic(text, "eim", None, "tol must be positive and max_terms at least 1"));
        }
        if !(self.scm.tol > 0.0) || self.scm.max_points == 0 {
            return Err(semantic(text, "scm", None, "tol must be positive and max_points at least 1"));
        }
        let g = &self.greedy;
        if !(g.ric > 0.0 && g.ric <= 1.0) {
            return Err(semantic(text, "greedy", Some("ric"), "ric must lie in (0, 1]"));
        }
        if !(g.tol >= 0.0) || g.n_max == 0 || g.max_rounds == 0 {
            return Err(semantic(text, "greedy", None, "tol must be nonnegative, n_max and max_rounds at least 1"));
        }
        Ok(())
    }

    /// Training and test sets, drawn log-uniformly from one seeded stream.
    pub fn samples(&self) -> (Vec<ParameterPoint>, Vec<ParameterPoint>) {
        let s = &self.sampling;
        sample_sets(&self.parameters, s.training, s.test, s.seed)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        return r[0];
    }
    let (a, b) = (r[0].log10(), r[1].log10());
    10f64.powf(a + (b - a) * rng.random::<f64>())
}

pub fn sample_sets(ranges: &ParameterRanges, n_train: usize, n_test: usize, seed: u64) -> (Vec<ParameterPoint>, Vec<ParameterPoint>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<ParameterPoint> {
        (0..n)
            .map(|_| {
                let k1 = log_uniform(&mut rng, ranges.kappa1);
                let k2 = log_uniform(&mut rng, ranges.kappa2);
                ParameterPoint::new(k1, k2)
            })
            .collect()
    };
    let train = draw(n_train);
    let test = draw(n_test);
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_reference_case() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.time.n_steps().unwrap(), 20);
        assert_eq!(c.physics, FluidRockProps::reference());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "[mesh]\nnx = 4\n\n[greedy]\nbogus = 1\n";
        let e = Config::parse(text).unwrap_err().to_string();
        assert!(e.contains("line 5"), "{e}");
        let text = "[mesh]\nnx = 0\n";
        let e = Config::parse(text).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let text = "[mesh]\ndirichlet = []\n";
        let e = Config::parse(text).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("Dirichlet"), "{e}");
        let text = "[greedy]\nestimator = \"nope\"\n";
        assert!(Config::parse(text).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let c = Config::default();
        let (a, b) = c.samples();
        let (a2, b2) = c.samples();
        assert_eq!((a.len(), b.len()), (100, 50));
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert!(a.iter().chain(&b).all(|x| c.parameters.contains(x)));
        let (a3, _) = sample_sets(&c.parameters, 100, 0, 7);
        assert_ne!(a, a3);
    }
}
