use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use homogen::cell::SolveConfig;
use homogen::Matrix;

pub const OUTPUT_DIR_ENV: &str = "HOMOGEN_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "homogen-out";

#[derive(Parser, Debug)]
#[command(name = "homogen", version, about = "Periodic homogenization runs and counterexample verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate f_hom(Y) from cell solves on a schedule of cube sizes.
    Homogenize {
        #[command(flatten)]
        common: CommonArgs,
        /// Cube side lengths, comma separated.
        #[arg(long = "t", value_delimiter = ',')]
        t: Option<Vec<f64>>,
    },
    /// Solve one cell problem.
    Cell {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "t")]
        t: Option<f64>,
    },
    /// Oscillating minima for decreasing eps against the f_hom estimate.
    EpsilonSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// Schedule for the f_hom estimate.
        #[arg(long = "t", value_delimiter = ',')]
        t: Option<Vec<f64>>,
    },
    /// Build and check the box tiling of (0,s)^m by shifted copies of (0,t)^m.
    Tiling {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "t")]
        t: Option<i64>,
        #[arg(long)]
        s: Option<i64>,
        #[arg(long)]
        m: Option<usize>,
        /// Also run the g_s <= E_s <= bound chain for the model.
        #[arg(long)]
        subadditivity: bool,
    },
    /// Run verification checks.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// `all` or a comma-separated list of check groups.
        #[arg(long)]
        suite: Option<String>,
        /// Custom product-constraint system (TOML) to check as well.
        #[arg(long)]
        system: Option<PathBuf>,
    },
    /// Quasiconvexity and rank-one probes of a model density.
    QcCheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in model id or path to a quadratic-form file.
    #[arg(long)]
    pub model: Option<String>,
    /// Matrix literal, rows separated by `;`.
    #[arg(long = "Y", value_name = "MATRIX", allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Grid intervals per unit length.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Delimited,
    Structured,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Delimited => "csv",
            Format::Structured => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Homogenize,
    Cell,
    EpsilonSweep,
    Tiling,
    Verify,
    QcCheck,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Homogenize => "homogenize",
            CommandKind::Cell => "cell",
            CommandKind::EpsilonSweep => "epsilon-sweep",
            CommandKind::Tiling => "tiling",
            CommandKind::Verify => "verify",
            CommandKind::QcCheck => "qc-check",
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    run: Option<RunSection>,
    schedule: Option<ScheduleSection>,
    solver: Option<SolverSection>,
    tiling: Option<TilingSection>,
    verify: Option<VerifySection>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunSection {
    command: Option<String>,
    model: Option<String>,
    y: Option<String>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    t: Option<Vec<f64>>,
    eps: Option<Vec<f64>>,
    resolution: Option<usize>,
    samples: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    max_iterations: Option<usize>,
    restarts: Option<usize>,
    tolerance: Option<f64>,
    init_scale: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TilingSection {
    t: Option<i64>,
    s: Option<i64>,
    m: Option<usize>,
    subadditivity: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    suite: Option<String>,
    system: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ModelRef {
    Builtin(String),
    File(PathBuf),
}

/// Fully resolved run description; echoed into the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: Option<ModelRef>,
    #[serde(serialize_with = "serialize_matrix")]
    pub y: Option<Matrix>,
    pub t_values: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub resolution: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Format,
    pub solve: SolveConfig,
    pub tiling: Option<(i64, i64, usize)>,
    pub subadditivity: bool,
    pub suite: Vec<String>,
    pub system: Option<PathBuf>,
    pub samples: usize,
}

fn serialize_matrix<S: serde::Serializer>(y: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
    match y {
        Some(m) => s.serialize_some(&m.to_string()),
        None => s.serialize_none(),
    }
}

pub const SUITE_GROUPS: &[&str] =
    &["relative-density", "swap", "products", "dominance", "lsc", "closing", "parity", "bump", "tiling"];

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn parse_model(s: &str) -> Result<ModelRef, String> {
    if homogen::models::BUILTIN_IDS.contains(&s) {
        return Ok(ModelRef::Builtin(s.to_string()));
    }
    let p = Path::new(s);
    if p.is_file() {
        return Ok(ModelRef::File(p.to_path_buf()));
    }
    Err(format!("unknown model id or missing model file '{s}'"))
}

fn parse_suite(s: &str) -> Result<Vec<String>, String> {
    if s == "all" {
        return Ok(SUITE_GROUPS.iter().map(|g| g.to_string()).collect());
    }
    let mut out = Vec::new();
    for g in s.split(',').map(str::trim) {
        if !SUITE_GROUPS.contains(&g) {
            return Err(format!("unknown check group '{g}' (expected all or {})", SUITE_GROUPS.join(",")));
        }
        if !out.iter().any(|x| x == g) {
            out.push(g.to_string());
        }
    }
    Ok(out)
}

fn load_file(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config '{}': {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().lines().filter(|l| !l.trim().is_empty()).collect::<Vec<_>>().join(" ");
        format!("config '{}': {msg}", path.display())
    })
}

/// Merges flags over the config file and validates the result.
pub fn parse_config(cli: Cli) -> Result<RunConfig, String> {
    let (kind, common) = match &cli.command {
        Command::Homogenize { common, .. } => (CommandKind::Homogenize, common),
        Command::Cell { common, .. } => (CommandKind::Cell, common),
        Command::EpsilonSweep { common, .. } => (CommandKind::EpsilonSweep, common),
        Command::Tiling { common, .. } => (CommandKind::Tiling, common),
        Command::Verify { common, .. } => (CommandKind::Verify, common),
        Command::QcCheck { common, .. } => (CommandKind::QcCheck, common),
    };
    let file = match &common.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let run = file.run.unwrap_or_default();
    let sched = file.schedule.unwrap_or_default();
    let solver = file.solver.unwrap_or_default();
    let tiling = file.tiling.unwrap_or_default();
    let verify = file.verify.unwrap_or_default();

    if let Some(c) = &run.command {
        if c != kind.name() {
            return Err(format!("config file is for '{c}' but the command is '{}'", kind.name()));
        }
    }

    let model = pick(common.model.clone(), run.model).map(|m| parse_model(&m)).transpose()?;
    let y = pick(common.y.clone(), run.y).map(|s| s.parse::<Matrix>().map_err(|e| format!("--Y: {e}"))).transpose()?;
    let output_dir = common
        .output
        .clone()
        .or(run.output)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    let defaults = SolveConfig::default();
    let seed = pick(common.seed, run.seed).unwrap_or(0);
    let solve = SolveConfig {
        max_iterations: pick(common.max_iterations, solver.max_iterations).unwrap_or(defaults.max_iterations),
        restarts: pick(common.restarts, solver.restarts).unwrap_or(defaults.restarts),
        gradient_tolerance: pick(common.tolerance, solver.tolerance).unwrap_or(defaults.gradient_tolerance),
        init_scale: solver.init_scale.unwrap_or(defaults.init_scale),
        seed,
        ..defaults
    };
    solve.validate().map_err(|e| e.to_string())?;

    let mut cfg = RunConfig {
        command: kind,
        model,
        y,
        t_values: Vec::new(),
        eps_values: Vec::new(),
        resolution: pick(common.resolution, sched.resolution).unwrap_or(32),
        seed,
        output_dir,
        format: pick(common.format, run.format).unwrap_or(Format::Text),
        solve,
        tiling: None,
        subadditivity: false,
        suite: Vec::new(),
        system: None,
        samples: 200,
    };
    if cfg.resolution == 0 {
        return Err("resolution must be >= 1".into());
    }

    match cli.command {
        Command::Homogenize { t, .. } => {
            cfg.t_values = pick(t, sched.t).unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
        }
        Command::Cell { t, .. } => {
            cfg.t_values = vec![t.or_else(|| sched.t.and_then(|v| v.first().copied())).unwrap_or(1.0)];
        }
        Command::EpsilonSweep { eps, t, .. } => {
            cfg.eps_values = pick(eps, sched.eps).ok_or("epsilon-sweep needs --eps")?;
            cfg.t_values = pick(t, sched.t).unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
        }
        Command::Tiling { t, s, m, subadditivity, .. } => {
            let t = pick(t, tiling.t).ok_or("tiling needs --t")?;
            let s = pick(s, tiling.s).ok_or("tiling needs --s")?;
            let m = pick(m, tiling.m).or(cfg.y.as_ref().map(|y| y.cols())).unwrap_or(2);
            cfg.tiling = Some((t, s, m));
            cfg.subadditivity = subadditivity || tiling.subadditivity.unwrap_or(false);
            if let Some(y) = &cfg.y {
                if y.cols() != m {
                    return Err(format!("Y has {} columns but m = {m}", y.cols()));
                }
            }
        }
        Command::Verify { suite, system, .. } => {
            cfg.suite = parse_suite(&pick(suite, verify.suite).unwrap_or_else(|| "all".into()))?;
            cfg.system = pick(system, verify.system);
            if let Some(p) = &cfg.system {
                if !p.is_file() {
                    return Err(format!("missing constraint-system file '{}'", p.display()));
                }
            }
        }
        Command::QcCheck { samples, .. } => {
            cfg.samples = pick(samples, sched.samples).unwrap_or(200);
        }
    }

    let needs_model =
        matches!(kind, CommandKind::Homogenize | CommandKind::Cell | CommandKind::EpsilonSweep | CommandKind::QcCheck)
            || cfg.subadditivity;
    if needs_model {
        if cfg.model.is_none() {
            return Err(format!("{} needs --model", kind.name()));
        }
        if cfg.y.is_none() {
            return Err(format!("{} needs --Y", kind.name()));
        }
        crate::run::load_model(&cfg)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, String> {
        let cli =
            Cli::try_parse_from(std::iter::once("homogen").chain(args.iter().copied())).map_err(|e| e.to_string())?;
        parse_config(cli)
    }

    #[test]
    fn homogenize_schedule() {
        let c =
            parse(&["homogenize", "--model", "layered-1d", "--Y", "1", "--t", "1,2,4", "--resolution", "512"]).unwrap();
        assert_eq!(c.t_values, vec![1.0, 2.0, 4.0]);
        assert_eq!(c.resolution, 512);
        assert_eq!(c.command, CommandKind::Homogenize);
    }

    #[test]
    fn verify_all_and_tiling() {
        let c = parse(&["verify", "--suite", "all", "--seed", "7"]).unwrap();
        assert_eq!(c.suite.len(), SUITE_GROUPS.len());
        assert_eq!(c.seed, 7);
        let c = parse(&["tiling", "--t", "2", "--s", "13", "--m", "2"]).unwrap();
        assert_eq!(c.tiling, Some((2, 13, 2)));
    }

    #[test]
    fn errors_are_single_line() {
        for args in [
            &["homogenize", "--model", "nope", "--Y", "1"][..],
            &["homogenize", "--model", "layered-1d", "--Y", "1,x"],
            &["homogenize", "--model", "layered-1d", "--Y", "1,2"],
            &["verify", "--suite", "everything"],
            &["cell", "--config", "/does/not/exist.toml"],
        ] {
            let e = parse(args).unwrap_err();
            assert_eq!(e.lines().count(), 1, "{e}");
        }
    }

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[run]\nmodel = \"layered-1d\"\ny = \"1\"\nseed = 3\n[schedule]\nt = [1.0, 2.0]\n").unwrap();
        let c = parse(&["homogenize", "--config", p.to_str().unwrap(), "--seed", "9"]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.t_values, vec![1.0, 2.0]);
        std::fs::write(&p, "[run]\nmodle = \"layered-1d\"\n").unwrap();
        assert!(parse(&["homogenize", "--config", p.to_str().unwrap()]).is_err());
    }
}
