//! Run configuration: command-line flags layered over an optional INI-style file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use stsem_tt::driver::Format;
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "STSEM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`, found `{text}`")]
    Syntax {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("{path}:{line}: key `{key}` appears twice")]
    DuplicateKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("output directory {path} is not writable: {source}")]
    OutDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    RankTable,
    Poisson,
    Cdr,
    Semilinear,
    Convergence,
    Custom,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RankTable => "rank-table",
            Command::Poisson => "poisson",
            Command::Cdr => "cdr",
            Command::Semilinear => "semilinear",
            Command::Convergence => "convergence",
            Command::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemName {
    Poisson,
    Cdr,
    Semilinear,
    Custom,
}

impl ProblemName {
    fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stsem",
    version,
    about = "Space-time tensor-train solver experiments",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Ranks of cross-interpolated coefficients and of the rounded diffusion operator.
    RankTable(CommonArgs),
    /// Stationary diffusion benchmark.
    Poisson(CommonArgs),
    /// Space-time convection-diffusion-reaction benchmark.
    Cdr(CommonArgs),
    /// Semilinear space-time benchmark solved by Newton's method.
    Semilinear(CommonArgs),
    /// Convergence study with a fitted order.
    Convergence(CommonArgs),
    /// Space-time problem with constant coefficients.
    Custom(CommonArgs),
}

impl CliCommand {
    fn split(self) -> (Command, CommonArgs) {
        match self {
            CliCommand::RankTable(a) => (Command::RankTable, a),
            CliCommand::Poisson(a) => (Command::Poisson, a),
            CliCommand::Cdr(a) => (Command::Cdr, a),
            CliCommand::Semilinear(a) => (Command::Semilinear, a),
            CliCommand::Convergence(a) => (Command::Convergence, a),
            CliCommand::Custom(a) => (Command::Custom, a),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Elements per axis, comma separated (e.g. 8,16,32).
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    /// Storage format of the solve: full, tt or qtt.
    #[arg(long)]
    pub format: Option<String>,
    /// Relative truncation tolerance.
    #[arg(long)]
    pub tt_tol: Option<f64>,
    /// Target relative residual of the solver.
    #[arg(long)]
    pub solver_tol: Option<f64>,
    /// Rank cap of the solver.
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $STSEM_OUT_DIR, else ./results).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a log-log SVG error plot.
    #[arg(long)]
    pub plot: bool,
    /// INI-style file with default values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem of a convergence study: poisson, cdr, semilinear or custom.
    #[arg(long)]
    pub problem: Option<String>,
    /// Diffusion coefficient of the custom problem.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Convection vector of the custom problem, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub b: Option<Vec<f64>>,
    /// Reaction coefficient of the custom problem.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub grids: Vec<usize>,
    pub format: Format,
    pub tt_tol: f64,
    pub solver_tol: f64,
    pub rmax: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub problem: ProblemName,
    pub kappa: f64,
    pub b: [f64; 3],
    pub c: f64,
}

const KEYS: [&str; 12] = [
    "grids",
    "format",
    "tt_tol",
    "solver_tol",
    "rmax",
    "seed",
    "out",
    "plot",
    "problem",
    "kappa",
    "b",
    "c",
];

/// Parses `key = value` lines. `#` and `;` start comments; blank lines are skipped;
/// keys may use `-` or `_`.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_text(&text, path)
}

pub fn parse_config_text(text: &str, path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                text: raw.trim().to_string(),
            });
        };
        let key = k.trim().replace('-', "_").to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                path: path.to_path_buf(),
                line: i + 1,
                key: k.trim().to_string(),
            });
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::DuplicateKey {
                path: path.to_path_buf(),
                line: i + 1,
                key,
            });
        }
    }
    Ok(map)
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| bad(key, format!("cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(bad(key, format!("expected true or false, found `{other}`"))),
    }
}

impl RunConfig {
    /// Built-in defaults for a command before any file or flag is applied.
    pub fn defaults(command: Command) -> Self {
        let grids = match command {
            Command::RankTable => vec![17, 33],
            Command::Convergence => vec![8, 16, 32],
            _ => vec![8],
        };
        let out_dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        RunConfig {
            command,
            grids,
            format: Format::Tt,
            tt_tol: 1e-10,
            solver_tol: 1e-6,
            rmax: 200,
            seed: 7,
            out_dir,
            plot: false,
            problem: ProblemName::Poisson,
            kappa: 1.0,
            b: [1.0, 1.0, 1.0],
            c: 1.0,
        }
    }

    fn apply_file(&mut self, map: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, v) in map {
            match key.as_str() {
                "grids" => self.grids = parse_list(key, v)?,
                "format" => self.format = v.parse().map_err(|e| bad(key, format!("{e}")))?,
                "tt_tol" => self.tt_tol = parse_num(key, v)?,
                "solver_tol" => self.solver_tol = parse_num(key, v)?,
                "rmax" => self.rmax = parse_num(key, v)?,
                "seed" => self.seed = parse_num(key, v)?,
                "out" => self.out_dir = PathBuf::from(v),
                "plot" => self.plot = parse_bool(key, v)?,
                "problem" => {
                    self.problem = ProblemName::parse(v)
                        .ok_or_else(|| bad(key, format!("unknown problem `{v}`")))?
                }
                "kappa" => self.kappa = parse_num(key, v)?,
                "b" => self.b = three(key, parse_list(key, v)?)?,
                "c" => self.c = parse_num(key, v)?,
                _ => unreachable!("keys are checked while reading"),
            }
        }
        Ok(())
    }

    fn apply_flags(&mut self, a: &CommonArgs) -> Result<(), ConfigError> {
        if let Some(g) = &a.grids {
            self.grids = g.clone();
        }
        if let Some(f) = &a.format {
            self.format = f.parse().map_err(|e| bad("format", format!("{e}")))?;
        }
        if let Some(v) = a.tt_tol {
            self.tt_tol = v;
        }
        if let Some(v) = a.solver_tol {
            self.solver_tol = v;
        }
        if let Some(v) = a.rmax {
            self.rmax = v;
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = &a.out {
            self.out_dir = v.clone();
        }
        if a.plot {
            self.plot = true;
        }
        if let Some(p) = &a.problem {
            self.problem = ProblemName::parse(p)
                .ok_or_else(|| bad("problem", format!("unknown problem `{p}`")))?;
        }
        if let Some(v) = a.kappa {
            self.kappa = v;
        }
        if let Some(b) = &a.b {
            self.b = three("b", b.clone())?;
        }
        if let Some(v) = a.c {
            self.c = v;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.grids.is_empty() {
            return Err(bad("grids", "at least one grid size is required"));
        }
        if let Some(g) = self.grids.iter().find(|&&g| g < 2) {
            return Err(bad(
                "grids",
                format!("grid sizes must be at least 2, found {g}"),
            ));
        }
        for (key, v) in [("tt_tol", self.tt_tol), ("solver_tol", self.solver_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(bad(key, format!("must lie in (0, 1), found {v}")));
            }
        }
        if self.rmax == 0 {
            return Err(bad("rmax", "must be at least 1"));
        }
        if self.command == Command::Convergence && self.grids.len() < 2 {
            return Err(bad("grids", "a convergence study needs at least two grids"));
        }
        if !(self.kappa > 0.0) {
            return Err(bad("kappa", "must be positive"));
        }
        Ok(())
    }

    /// Creates the output directory and checks that files can be written there.
    pub fn prepare_out_dir(&self) -> Result<(), ConfigError> {
        let err = |source| ConfigError::OutDir {
            path: self.out_dir.clone(),
            source,
        };
        fs::create_dir_all(&self.out_dir).map_err(err)?;
        let probe = self.out_dir.join(".stsem-write-test");
        fs::write(&probe, b"").map_err(err)?;
        fs::remove_file(&probe).map_err(err)
    }
}

fn three(key: &str, v: Vec<f64>) -> Result<[f64; 3], ConfigError> {
    v.try_into()
        .map_err(|v: Vec<f64>| bad(key, format!("expected 3 components, found {}", v.len())))
}

/// Defaults, then the config file, then flags.
pub fn parse_config(cli: Cli) -> Result<RunConfig, ConfigError> {
    let (command, args) = cli.command.split();
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = &args.config {
        cfg.apply_file(&read_config_file(path)?)?;
    }
    cfg.apply_flags(&args)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
        parse_config(Cli::try_parse_from(args).unwrap())
    }

    #[test]
    fn rank_table_flags() {
        let c = parse(&[
            "stsem",
            "rank-table",
            "--grids",
            "17,33",
            "--tt-tol",
            "1e-12",
        ])
        .unwrap();
        assert_eq!(c.command, Command::RankTable);
        assert_eq!(c.grids, vec![17, 33]);
        assert_eq!(c.tt_tol, 1e-12);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ini");
        fs::write(
            &path,
            "# defaults\nformat = tt\nsolver-tol = 1e-8 ; tight\ngrids = 4, 8\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["stsem", "poisson", "--config", p, "--format", "qtt"]).unwrap();
        assert_eq!(c.format, Format::Qtt);
        assert_eq!(c.solver_tol, 1e-8);
        assert_eq!(c.grids, vec![4, 8]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_text("grids = 8\nfromat = tt\n", Path::new("x.ini")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fromat") && msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn malformed_and_duplicate_lines_are_rejected() {
        let p = Path::new("x.ini");
        assert!(matches!(
            parse_config_text("grids 8\n", p),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config_text("seed = 1\nseed = 2\n", p),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse(&["stsem", "poisson", "--grids", "1"]).is_err());
        assert!(parse(&["stsem", "poisson", "--tt-tol", "2"]).is_err());
        assert!(parse(&["stsem", "poisson", "--format", "dense"]).is_err());
        assert!(parse(&["stsem", "convergence", "--grids", "8"]).is_err());
        assert!(parse(&["stsem", "custom", "--b", "1,2"]).is_err());
    }

    #[test]
    fn custom_coefficients_parse() {
        let c = parse(&[
            "stsem", "custom", "--kappa", "0.5", "--b", "1,-2,0", "--c", "-1",
        ])
        .unwrap();
        assert_eq!((c.kappa, c.b, c.c), (0.5, [1.0, -2.0, 0.0], -1.0));
    }
}
