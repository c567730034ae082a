use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wd_cli::config::{Format, RunConfig};
use wd_cli::{output, run, write_outputs, Command, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "wd", version, about = "Bloch frames, Chern numbers and Wannier localization for tight-binding models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// haldane | hofstadter | matrixfile
    #[arg(long, global = true)]
    model: Option<String>,
    /// Model parameter or dotted config key, e.g. `M=1.0` or `tolerances.gap=1e-6`.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Mesh points per side.
    #[arg(long, global = true)]
    mesh: Option<usize>,
    /// Directory for the JSON report and CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Link-variable and curvature-integral Chern numbers.
    Chern,
    /// Frame construction with residuals, gradient bounds and H^s norms.
    Frame,
    /// Wannier functions and their moments.
    Wannier,
    /// Full localization dichotomy report.
    Dichotomy,
    /// Galerkin truncation diagnostics.
    Galerkin,
    /// Minimum spectral gap.
    Gap,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

fn config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::from_text(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.set("model", m).map_err(|e| e.to_string())?;
    }
    for p in &cli.params {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("--param expects KEY=VALUE, got '{p}'"))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())?;
    }
    if let Some(n) = cli.mesh {
        cfg.mesh_n = n;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("WD_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("WD_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("WD_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("wd: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("wd: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let cmd = match cli.command {
        Cmd::Chern => Command::Chern,
        Cmd::Frame => Command::Frame,
        Cmd::Wannier => Command::Wannier,
        Cmd::Dichotomy => Command::Dichotomy,
        Cmd::Galerkin => Command::Galerkin,
        Cmd::Gap => Command::Gap,
    };
    let out = match run(cmd, &cfg) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("wd {}: {}", cmd.name(), f.message);
            return ExitCode::from(f.code as u8);
        }
    };
    match cfg.format {
        Format::Json => print!("{}", output::render(&out.json)),
        Format::Csv => print!("{}", out.csv.first().map_or("", |c| c.1.as_str())),
    }
    if let Some(dir) = &cfg.output_dir {
        if let Err(e) = write_outputs(dir, cmd, &out) {
            eprintln!("wd: cannot write to {}: {e}", dir.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    ExitCode::from(out.code as u8)
}
