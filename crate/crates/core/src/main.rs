use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cqnmd::config::{Config, Experiment};
use cqnmd::experiments;

#[derive(Parser, Debug)]
#[command(name = "cqnmd", version, about = "Run a CQ-NMD experiment from a TOML config")]
struct Cli {
    /// modes | dispersion | hom | nldc | purcell | validate
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set hom.omega_p=2000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: [output] dir, else out/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(err: &cqnmd::Error) -> ExitCode {
    let line = serde_json::json!({ "category": err.category(), "message": err.to_string() });
    eprintln!("{line}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exp = match Experiment::parse(&cli.experiment) {
        Ok(e) => e,
        Err(e) => return fail(&e),
    };
    let (cfg, table) = match Config::load(&cli.config, &cli.set) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let out = cli
        .out
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(exp.name()));
    match experiments::run(exp, &cfg, &table, &out) {
        Ok(m) => {
            for c in &m.checks {
                println!("{:<28} {:>12.3e}  tol {:>9.1e}  {}", c.name, c.value, c.tolerance, if c.passed { "pass" } else { "FAIL" });
            }
            println!("{} -> {} ({} files)", m.experiment, out.display(), m.outputs.len());
            if m.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e),
    }
}
