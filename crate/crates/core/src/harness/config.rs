//! Flat `key = value` configuration. Sections are dotted key prefixes
//! (`stage.lambda = 32`); `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decompose::Route;
use crate::error::{Error, Result};
use crate::field::{load_macf1, Field, Grid2, ScalarField2, SymMatrixField2};
use crate::nk::Family;
use crate::random::{rng, smooth_sym};
use crate::stage::StageParams;

/// Parsed key-value pairs, in key order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawConfig(pub BTreeMap<String, String>);

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(Error::Config(format!("line {}: malformed key `{k}`", n + 1)));
            }
            if v.is_empty() {
                return Err(Error::Config(format!("line {}: empty value for `{k}`", n + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(RawConfig(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text form; the config hash is taken over this.
    pub fn canonical(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }
}

/// Consumes keys so leftovers can be reported as unknown.
struct Reader(BTreeMap<String, String>);

impl Reader {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }
    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }
    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: expected a comma-separated list, got `{v}`"))),
        }
    }
    fn pair(&mut self, key: &str, default: [f64; 2]) -> Result<[f64; 2]> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok([v[0], v[1]]),
            Some(_) => Err(Error::Config(format!("`{key}` needs two numbers"))),
        }
    }
}

/// `N1xN2`
pub fn parse_grid_size(s: &str) -> Result<[usize; 2]> {
    let bad = || Error::Config(format!("grid size `{s}` is not of the form N1xN2"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: [usize; 2],
    pub center: [f64; 2],
    /// x1 extent of the core domain
    pub core_width: f64,
    pub collar: f64,
}

impl GridSpec {
    /// Spacing from the x1 axis; the x2 node count is taken as given.
    pub fn build(&self) -> Result<Grid2> {
        let [n1, n2] = self.size;
        if n1 < 2 {
            return Err(Error::Config("grid needs at least two nodes per axis".into()));
        }
        let h = (self.core_width + 2.0 * self.collar) / (n1 - 1) as f64;
        let m = (self.collar / h).round() as usize;
        let origin = [
            self.center[0] - 0.5 * (n1 - 1) as f64 * h,
            self.center[1] - 0.5 * (n2.max(1) - 1) as f64 * h,
        ];
        Grid2::new(origin, n1, n2, h, m).map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpec {
    /// scale Id
    Identity,
    /// scale (1 + x1^2/10) Id
    Quadratic,
    /// scale Id plus a seeded smooth perturbation of the given amplitude
    Random { amplitude: f64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSpec {
    Constant(f64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub k: usize,
    pub beta: f64,
    pub target: TargetSpec,
    pub target_scale: f64,
    /// right-hand side of the Monge-Ampere pipeline
    pub f: SourceSpec,
    /// lower bound demanded of the subsolution defect
    pub c: f64,
}

impl ProblemSpec {
    pub fn target(&self, g: Grid2, seed: u64) -> Result<SymMatrixField2> {
        let s = self.target_scale;
        match &self.target {
            TargetSpec::Identity => Ok(SymMatrixField2::identity(g, s)),
            TargetSpec::Quadratic => Ok(SymMatrixField2::from_fn(g, |x, _| {
                let d = s * (1.0 + x * x / 10.0);
                [d, 0.0, d]
            })),
            TargetSpec::Random { amplitude } => {
                let mut r = rng(seed);
                let p = smooth_sym(g, &mut r, 6, 4.0);
                let id = SymMatrixField2::identity(g, s);
                crate::field::zip_fields(&id, &p, |a, b| a + amplitude * b)
            }
            TargetSpec::File(path) => {
                let f: SymMatrixField2 = load_macf1(path)?;
                if !f.grid().same_layout(&g) {
                    return Err(Error::Config(format!("{} does not match the configured grid", path.display())));
                }
                Ok(f)
            }
        }
    }

    pub fn source(&self, g: Grid2) -> Result<ScalarField2> {
        match &self.f {
            SourceSpec::Constant(c) => Ok(ScalarField2::constant(g, *c)),
            SourceSpec::File(path) => {
                let f: ScalarField2 = load_macf1(path)?;
                if !f.grid().same_layout(&g) {
                    return Err(Error::Config(format!("{} does not match the configured grid", path.display())));
                }
                Ok(f)
            }
        }
    }
}

/// r0: calibrated on the run's grid, or fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum R0Spec {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub ls: Vec<f64>,
    pub ns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSpecCfg {
    /// spiral or corrugation
    pub kind: String,
    pub lambda: f64,
    pub axis: usize,
    pub component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub problem: ProblemSpec,
    pub method: Family,
    /// stage parameters; r0 is filled in at run time when `r0` is auto
    pub stage: StageParams,
    pub r0: R0Spec,
    pub alpha: f64,
    pub eps: f64,
    pub max_iterations: usize,
    pub max_preliminary: usize,
    pub sweep: SweepSpec,
    pub step: StepSpecCfg,
    pub route: Route,
    pub samples: usize,
    pub exponents_kmax: u32,
    pub seed: u64,
    pub out: PathBuf,
    /// the key-value form everything above was read from
    pub raw: RawConfig,
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<[usize; 2]>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig, ov: &Overrides) -> Result<Self> {
        let mut raw = raw;
        if let Some(o) = &ov.out {
            raw.set("out", o.display());
        }
        if let Some(s) = ov.seed {
            raw.set("seed", s);
        }
        if let Some([a, b]) = ov.grid {
            raw.set("grid.size", format!("{a}x{b}"));
        }
        let mut r = Reader(raw.0.clone());

        let size = match r.0.remove("grid.size") {
            Some(s) => parse_grid_size(&s)?,
            None => [512, 512],
        };
        let grid = GridSpec {
            size,
            center: r.pair("grid.center", [0.5, 0.5])?,
            core_width: r.or("grid.core_width", 1.0)?,
            collar: r.or("grid.collar", 0.25)?,
        };

        let target = match r.0.remove("problem.target").as_deref() {
            None | Some("identity") => TargetSpec::Identity,
            Some("quadratic") => TargetSpec::Quadratic,
            Some("random") => TargetSpec::Random { amplitude: r.or("problem.amplitude", 0.1)? },
            Some(s) if s.starts_with("file:") => TargetSpec::File(PathBuf::from(&s[5..])),
            Some(s) => return Err(Error::Config(format!("unknown target `{s}`"))),
        };
        let f = match r.0.remove("problem.f") {
            None => SourceSpec::Constant(1.0),
            Some(s) if s.starts_with("file:") => SourceSpec::File(PathBuf::from(&s[5..])),
            Some(s) => SourceSpec::Constant(s.parse().map_err(|_| Error::Config(format!("`problem.f`: cannot parse `{s}`")))?),
        };
        let files = [
            if let TargetSpec::File(p) = &target { Some(p) } else { None },
            if let SourceSpec::File(p) = &f { Some(p) } else { None },
        ];
        if let Some(p) = files.into_iter().flatten().find(|p| !p.exists()) {
            return Err(Error::Config(format!("field file {} does not exist", p.display())));
        }
        let problem = ProblemSpec {
            k: r.or("problem.k", 1)?,
            beta: r.or("problem.beta", 1.0)?,
            target,
            target_scale: r.or("problem.target_scale", 1.0)?,
            f,
            c: r.or("problem.c", 1.0)?,
        };
        let method: Family = r.or("method", if problem.k >= 4 { Family::Kallen } else { Family::Chi })?;

        let r0 = match r.0.remove("stage.r0").as_deref() {
            None | Some("auto") => R0Spec::Auto,
            Some(s) => R0Spec::Fixed(s.parse().map_err(|_| Error::Config(format!("`stage.r0`: cannot parse `{s}`")))?),
        };
        let stage = StageParams {
            l: r.or("stage.l", 0.1)?,
            lambda: r.or("stage.lambda", 32.0)?,
            gamma: r.or("stage.gamma", 0.05)?,
            n: r.or("stage.n", 2)?,
            m_bound: r.take("stage.m")?,
            sigma0: r.or("stage.sigma0", 1.0)?,
            r0: match r0 {
                R0Spec::Fixed(x) => x,
                R0Spec::Auto => 0.5,
            },
            beta: problem.beta,
        };
        stage.validate()?;

        let sweep = SweepSpec {
            lambdas: r.list("sweep.lambda")?.unwrap_or_else(|| vec![stage.lambda]),
            ls: r.list("sweep.l")?.unwrap_or_else(|| vec![stage.l]),
            ns: r.list("sweep.n")?.map(|v| v.iter().map(|x| *x as usize).collect()).unwrap_or_else(|| vec![stage.n]),
        };
        if sweep.lambdas.is_empty() || sweep.ls.is_empty() || sweep.ns.is_empty() {
            return Err(Error::Config("sweep axes must be nonempty".into()));
        }

        let step = StepSpecCfg {
            kind: r.or("step.kind", "corrugation".to_string())?,
            lambda: r.or("step.lambda", 16.0)?,
            axis: r.or("step.axis", 1)?,
            component: r.or("step.component", 0)?,
        };
        if !matches!(step.kind.as_str(), "spiral" | "corrugation") || !(1..=2).contains(&step.axis) {
            return Err(Error::Config(format!("step: kind `{}` axis {}", step.kind, step.axis)));
        }
        let route = match r.0.remove("decompose.route").as_deref() {
            None | Some("newtonian") => Route::Newtonian,
            Some("dirichlet") => Route::Dirichlet,
            Some(s) => return Err(Error::Config(format!("unknown route `{s}`"))),
        };

        let cfg = ExperimentConfig {
            grid,
            problem,
            method,
            stage,
            r0,
            alpha: r.or("nk.alpha", 0.1)?,
            eps: r.or("nk.eps", 1e-3)?,
            max_iterations: r.or("nk.max_iterations", 6)?,
            max_preliminary: r.or("nk.max_preliminary", 2)?,
            sweep,
            step,
            route,
            samples: r.or("decompose.samples", 4)?,
            exponents_kmax: r.or("exponents.kmax", 6)?,
            seed: r.or("seed", 0)?,
            out: r.or("out", PathBuf::from("out"))?,
            raw,
        };
        if let Some(k) = r.0.keys().next() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        cfg.grid.build()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, ov: &Overrides) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?, ov)
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        let raw = match path {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        Self::from_raw(raw, ov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let c = RawConfig::parse("# run\nstage.lambda = 64  # high\n\nseed=3\n").unwrap();
        assert_eq!(c.0["stage.lambda"], "64");
        assert_eq!(c.0["seed"], "3");
        assert_eq!(c.canonical(), "seed = 3\nstage.lambda = 64\n");
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["novalue", "a = 1\na = 2", "a..b = 1", "x =", "[section]"] {
            assert!(matches!(RawConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn empty_sweep_axis_is_a_config_error() {
        let e = ExperimentConfig::parse("sweep.lambda = ,", &Overrides::default()).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_and_missing_files_are_rejected() {
        let ov = Overrides::default();
        assert!(matches!(ExperimentConfig::parse("stage.lamda = 3", &ov), Err(Error::Config(_))));
        let e = ExperimentConfig::parse("problem.target = file:/nonexistent.macf", &ov).unwrap_err();
        assert!(e.to_string().contains("does not exist"));
    }

    #[test]
    fn overrides_win_and_grid_builds() {
        let ov = Overrides { seed: Some(9), grid: Some([65, 33]), out: None };
        let c = ExperimentConfig::parse("seed = 1\ngrid.collar = 0.2", &ov).unwrap();
        assert_eq!(c.seed, 9);
        let g = c.grid.build().unwrap();
        assert_eq!((g.n1(), g.n2()), (65, 33));
        assert!((g.h() - 1.4 / 64.0).abs() < 1e-15);
        assert_eq!(parse_grid_size("12X7").unwrap(), [12, 7]);
        assert!(parse_grid_size("12").is_err());
    }
}
