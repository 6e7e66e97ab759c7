//! Flat dotted-key configuration files.
//!
//! One `section.key = value` pair per line, `#` comments, no sections
//! headers. Unknown keys are errors (with their line number), as are
//! missing files referenced by `file:` expressions.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use wavelab_core::grid::{DomainConfig, Gamma0};
use wavelab_core::wave::Potential;
use wavelab_core::weights::CarlemanParams;

/// Configuration or validation failure with a file position.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Experiment mode, selected by the CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Validate,
    Forward,
    Control,
    Invert,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Validate => "validate",
            Mode::Forward => "forward",
            Mode::Control => "control",
            Mode::Invert => "invert",
            Mode::Verify => "verify",
        }
    }
}

/// Named spatial profile.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialExpr {
    Zero,
    Const(f64),
    /// `a + b·x`
    Affine { a: f64, b: f64 },
    /// `amp · sin(k π x̃)` with `x̃ = (x − x_lo)/(x_hi − x_lo)`
    Sin { amp: f64, k: f64 },
    /// Values loaded from a CSV file (last column, one row per node).
    File(PathBuf),
}

impl SpatialExpr {
    pub fn parse(text: &str) -> Result<SpatialExpr, String> {
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["zero"] => Ok(SpatialExpr::Zero),
            ["const", v] => Ok(SpatialExpr::Const(parse_num(v)?)),
            ["affine", a, b] => Ok(SpatialExpr::Affine {
                a: parse_num(a)?,
                b: parse_num(b)?,
            }),
            ["sin", amp, k] => Ok(SpatialExpr::Sin {
                amp: parse_num(amp)?,
                k: parse_num(k)?,
            }),
            ["file", path] => Ok(SpatialExpr::File(PathBuf::from(path))),
            [v] => parse_num(v).map(SpatialExpr::Const),
            _ => Err(format!(
                "unrecognized expression `{text}` (expected zero, const:V, affine:A:B, \
                 sin:AMP:K, file:PATH, or a number)"
            )),
        }
    }

    /// Samples the profile on all spatial nodes.
    pub fn sample(&self, domain: &DomainConfig) -> Result<Vec<f64>, String> {
        let lx = domain.x_hi - domain.x_lo;
        Ok(match self {
            SpatialExpr::Zero => vec![0.0; domain.n_space()],
            SpatialExpr::Const(v) => vec![*v; domain.n_space()],
            SpatialExpr::Affine { a, b } => (0..domain.n_space())
                .map(|ix| a + b * domain.x(ix))
                .collect(),
            SpatialExpr::Sin { amp, k } => (0..domain.n_space())
                .map(|ix| {
                    let xs = (domain.x(ix) - domain.x_lo) / lx;
                    amp * (k * std::f64::consts::PI * xs).sin()
                })
                .collect(),
            SpatialExpr::File(path) => {
                let values = load_csv_column(path)?;
                if values.len() != domain.n_space() {
                    return Err(format!(
                        "{} has {} rows, expected {} spatial nodes",
                        path.display(),
                        values.len(),
                        domain.n_space()
                    ));
                }
                values
            }
        })
    }

    pub fn into_potential(&self, domain: &DomainConfig, m: f64) -> Result<Potential, String> {
        Ok(Potential {
            values: self.sample(domain)?,
            m,
            time_dependent: None,
        })
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{s}` is not a number"))
}

/// Loads the last column of a simple CSV file (header optional).
pub fn load_csv_column(path: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap().trim();
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => {
                if out.is_empty() {
                    continue; // header line
                }
                return Err(format!("{}: bad numeric field `{last}`", path.display()));
            }
        }
    }
    Ok(out)
}

/// Control-mode block.
#[derive(Debug, Clone)]
pub struct ControlBlock {
    pub y0: SpatialExpr,
    pub y1: SpatialExpr,
    pub p: SpatialExpr,
    /// Second potential; enables the sensitivity sweep when present.
    pub pb: Option<SpatialExpr>,
    pub s_list: Vec<f64>,
}

/// Invert-mode block.
#[derive(Debug, Clone)]
pub struct InvertBlock {
    /// Oracle truth; generates the measurement when present.
    pub true_q: Option<SpatialExpr>,
    /// Measured flux on the observed side (CSV time series), used when no
    /// oracle potential is given.
    pub flux_file: Option<PathBuf>,
    pub w0: SpatialExpr,
    pub w1: SpatialExpr,
    pub bc_left: f64,
    pub bc_right: f64,
    pub fine_factor: usize,
    pub max_iter: usize,
    pub stop_rel: f64,
    pub alpha_pos: f64,
}

/// Forward-mode block.
#[derive(Debug, Clone)]
pub struct ForwardBlock {
    pub q: SpatialExpr,
    pub w0: SpatialExpr,
    pub w1: SpatialExpr,
    pub bc_left: f64,
    pub bc_right: f64,
}

/// Verify-mode block.
#[derive(Debug, Clone)]
pub struct VerifyBlock {
    pub s_list: Vec<f64>,
    pub n_fields: usize,
    pub n_potentials: usize,
    pub max_mode: usize,
}

/// Fully parsed experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub params: CarlemanParams,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub cg_tol: f64,
    /// 0 selects the automatic cap.
    pub cg_max_iter: usize,
    pub control: ControlBlock,
    pub invert: InvertBlock,
    pub forward: ForwardBlock,
    pub verify: VerifyBlock,
    /// Original text, echoed into the run manifest.
    pub echo: String,
}

struct RawConfig {
    path: PathBuf,
    entries: Vec<(String, String, usize)>,
    consumed: BTreeSet<usize>,
}

impl RawConfig {
    fn err(&self, line: Option<usize>, message: String) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line,
            message,
        }
    }

    fn lookup(&mut self, key: &str) -> Option<(String, usize)> {
        for (i, (k, v, line)) in self.entries.iter().enumerate() {
            if k == key {
                self.consumed.insert(i);
                return Some((v.clone(), *line));
            }
        }
        None
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.lookup(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<f64>()
                .map_err(|_| self.err(Some(line), format!("{key}: `{v}` is not a number"))),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.lookup(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<usize>()
                .map_err(|_| self.err(Some(line), format!("{key}: `{v}` is not an integer"))),
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.lookup(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<u64>()
                .map_err(|_| self.err(Some(line), format!("{key}: `{v}` is not an integer"))),
        }
    }

    fn expr_or(&mut self, key: &str, default: SpatialExpr) -> Result<SpatialExpr, ConfigError> {
        match self.lookup(key) {
            None => Ok(default),
            Some((v, line)) => SpatialExpr::parse(&v)
                .map_err(|e| self.err(Some(line), format!("{key}: {e}"))),
        }
    }

    fn list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.lookup(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| {
                        self.err(Some(line), format!("{key}: `{p}` is not a number"))
                    })
                })
                .collect(),
        }
    }
}

/// Default deterministic seed; override with the `WAVELAB_SEED` variable.
pub const DEFAULT_SEED: u64 = 716_253;

/// Parses and validates a configuration file for the given mode.
pub fn load_config(path: &Path, mode: Mode) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read config: {e}"),
    })?;

    let mut entries = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError {
                path: path.to_path_buf(),
                line: Some(line_no),
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        entries.push((key.trim().to_string(), value.trim().to_string(), line_no));
    }

    let mut raw = RawConfig {
        path: path.to_path_buf(),
        entries,
        consumed: BTreeSet::new(),
    };

    // Optional mode key must agree with the subcommand.
    if let Some((v, line)) = raw.lookup("mode") {
        if v != mode.name() {
            return Err(raw.err(
                Some(line),
                format!("config is for mode `{v}` but the `{}` subcommand was invoked", mode.name()),
            ));
        }
    }

    let gamma0 = match raw.lookup("domain.gamma0") {
        None => Gamma0::Right,
        Some((v, line)) => match v.as_str() {
            "left" => Gamma0::Left,
            "right" => Gamma0::Right,
            "both" => Gamma0::Both,
            other => {
                return Err(raw.err(
                    Some(line),
                    format!("domain.gamma0: `{other}` is not one of left|right|both"),
                ))
            }
        },
    };
    let domain = DomainConfig {
        x_lo: raw.f64_or("domain.x_lo", 0.0)?,
        x_hi: raw.f64_or("domain.x_hi", 1.0)?,
        nx: raw.usize_or("domain.nx", 100)?,
        t_lo: raw.f64_or(
            "domain.t_lo",
            if mode == Mode::Invert { 0.0 } else { -2.0 },
        )?,
        t_hi: raw.f64_or("domain.t_hi", 2.0)?,
        nt: raw.usize_or("domain.nt", if mode == Mode::Invert { 200 } else { 400 })?,
        gamma0,
    };

    let beta = raw.f64_or("params.beta", 0.75)?;
    let alpha = match raw.lookup("params.alpha") {
        None => CarlemanParams::alpha_midpoint(beta),
        Some((v, line)) => {
            if v == "auto" {
                CarlemanParams::alpha_midpoint(beta)
            } else {
                v.parse::<f64>().map_err(|_| {
                    raw.err(Some(line), format!("params.alpha: `{v}` is not a number"))
                })?
            }
        }
    };
    let c0 = match raw.lookup("params.c0") {
        None => None,
        Some((v, line)) => {
            if v == "auto" {
                None
            } else {
                Some(v.parse::<f64>().map_err(|_| {
                    raw.err(Some(line), format!("params.c0: `{v}` is not a number"))
                })?)
            }
        }
    };
    let params = CarlemanParams {
        x0: raw.f64_or("params.x0", -0.3)?,
        beta,
        lambda: raw.f64_or("params.lambda", 0.3)?,
        s: raw.f64_or("params.s", 80.0)?,
        c0,
        alpha,
        eta: raw.f64_or("params.eta", 0.1)?,
        eps: raw.f64_or("params.eps", 0.05)?,
        m: raw.f64_or("params.m", 1.0)?,
    };

    let seed = raw.u64_or("run.seed", DEFAULT_SEED)?;
    let workers = raw.usize_or("run.workers", 1)?.max(1);
    let out_dir = match raw.lookup("run.out_dir") {
        Some((v, _)) => PathBuf::from(v),
        None => PathBuf::from("wavelab_out"),
    };
    let cg_tol = raw.f64_or("cg.tol", 1e-10)?;
    let cg_max_iter = raw.usize_or("cg.max_iter", 0)?;

    let control = ControlBlock {
        y0: raw.expr_or("control.y0", SpatialExpr::Sin { amp: 1.0, k: 1.0 })?,
        y1: raw.expr_or("control.y1", SpatialExpr::Zero)?,
        p: raw.expr_or("control.p", SpatialExpr::Zero)?,
        pb: match raw.lookup("control.pb") {
            None => None,
            Some((v, line)) => Some(
                SpatialExpr::parse(&v)
                    .map_err(|e| raw.err(Some(line), format!("control.pb: {e}")))?,
            ),
        },
        s_list: raw.list_or("control.s_list", &[40.0, 80.0, 160.0])?,
    };

    let invert = InvertBlock {
        true_q: match raw.lookup("invert.true_q") {
            None => None,
            Some((v, line)) => Some(
                SpatialExpr::parse(&v)
                    .map_err(|e| raw.err(Some(line), format!("invert.true_q: {e}")))?,
            ),
        },
        flux_file: raw.lookup("invert.flux_file").map(|(v, _)| PathBuf::from(v)),
        w0: raw.expr_or("invert.w0", SpatialExpr::Affine { a: 2.0, b: 1.0 })?,
        w1: raw.expr_or("invert.w1", SpatialExpr::Zero)?,
        bc_left: raw.f64_or("invert.bc_left", 2.0)?,
        bc_right: raw.f64_or("invert.bc_right", 3.0)?,
        fine_factor: raw.usize_or("invert.fine_factor", 2)?,
        max_iter: raw.usize_or("invert.max_iter", 20)?,
        stop_rel: raw.f64_or("invert.stop_rel", 1e-4)?,
        alpha_pos: raw.f64_or("invert.alpha_pos", 2.0)?,
    };

    let forward = ForwardBlock {
        q: raw.expr_or("forward.q", SpatialExpr::Zero)?,
        w0: raw.expr_or("forward.w0", SpatialExpr::Sin { amp: 1.0, k: 1.0 })?,
        w1: raw.expr_or("forward.w1", SpatialExpr::Zero)?,
        bc_left: raw.f64_or("forward.bc_left", 0.0)?,
        bc_right: raw.f64_or("forward.bc_right", 0.0)?,
    };

    let verify = VerifyBlock {
        s_list: raw.list_or("verify.s_list", &[40.0, 80.0, 160.0, 320.0])?,
        n_fields: raw.usize_or("verify.n_fields", 10)?,
        n_potentials: raw.usize_or("verify.n_potentials", 10)?,
        max_mode: raw.usize_or("verify.max_mode", 8)?,
    };

    // Every key must have been consumed.
    let unconsumed: Vec<&(String, String, usize)> = raw
        .entries
        .iter()
        .enumerate()
        .filter(|(i, _)| !raw.consumed.contains(i))
        .map(|(_, e)| e)
        .collect();
    if let Some((key, _, line)) = unconsumed.first() {
        return Err(ConfigError {
            path: path.to_path_buf(),
            line: Some(*line),
            message: format!("unknown key `{key}`"),
        });
    }

    // Referenced files must exist at load time.
    let mut referenced: Vec<&PathBuf> = Vec::new();
    for expr in [
        &control.y0,
        &control.y1,
        &control.p,
        &invert.w0,
        &invert.w1,
        &forward.q,
        &forward.w0,
        &forward.w1,
    ] {
        if let SpatialExpr::File(p) = expr {
            referenced.push(p);
        }
    }
    if let Some(SpatialExpr::File(p)) = &control.pb {
        referenced.push(p);
    }
    if let Some(SpatialExpr::File(p)) = &invert.true_q {
        referenced.push(p);
    }
    if let Some(p) = &invert.flux_file {
        referenced.push(p);
    }
    for p in referenced {
        if !p.exists() {
            return Err(ConfigError {
                path: path.to_path_buf(),
                line: None,
                message: format!("referenced file does not exist: {}", p.display()),
            });
        }
    }

    domain.validate().map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    params.validate().map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    // Geometry admissibility gates every mode except validate, whose whole
    // point is reporting the margins.
    if mode != Mode::Validate {
        let report = wavelab_core::weights::validate_geometry(&domain, &params);
        if let Some(fail) = report.first_failure() {
            return Err(ConfigError {
                path: path.to_path_buf(),
                line: None,
                message: format!(
                    "geometry condition `{}` violated: {} (margin {:.6e})",
                    fail.name, fail.detail, fail.margin
                ),
            });
        }
    }

    Ok(ExperimentConfig {
        domain,
        params,
        seed,
        workers,
        out_dir,
        cg_tol,
        cg_max_iter,
        control,
        invert,
        forward,
        verify,
        echo: text,
    })
}
