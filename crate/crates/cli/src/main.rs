use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkf_bench::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "dkf-bench",
    version,
    about = "Discriminative Kalman filter benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trials and write spike and velocity CSVs into data_dir.
    Synth(Common),
    /// Bin, smooth and project trials; write processed CSVs into output.
    Preprocess(Common),
    /// Fit and score every method; write results.csv and the tables.
    Run(Common),
    /// Run the quick oracle checks.
    Verify,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to a single trial number.
    #[arg(long)]
    trial: Option<u32>,
    /// Use a single master seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated master seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated methods.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        if let Some(t) = self.trial {
            overrides.push(("trials".into(), t.to_string()));
        }
        if let Some(s) = self.seed {
            overrides.push(("seeds".into(), s.to_string()));
        }
        if let Some(s) = &self.seeds {
            overrides.push(("seeds".into(), s.clone()));
        }
        if let Some(m) = &self.methods {
            overrides.push(("methods".into(), m.clone()));
        }
        if let Some(o) = &self.output {
            overrides.push(("output".into(), o.display().to_string()));
        }
        if let Some(j) = self.jobs {
            overrides.push(("jobs".into(), j.to_string()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            overrides.push((k.trim().into(), v.into()));
        }
        for (k, v) in overrides {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let common = match &command {
        Command::Verify => {
            let (checks, status) = commands::verify();
            for c in &checks {
                println!("{c}");
            }
            return status;
        }
        Command::Synth(c) | Command::Preprocess(c) | Command::Run(c) => c,
    };
    let cfg = common.resolve()?;
    if common.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    match command {
        Command::Synth(_) => {
            for p in commands::synth(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Preprocess(_) => {
            for p in commands::preprocess(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run(_) => {
            let out = commands::run(&cfg)?;
            let failed = out.results.iter().filter(|r| !r.is_ok()).count();
            if let Some((nrmse, maae)) = &out.tables {
                println!("{}\n{}", nrmse.render(), maae.render());
            }
            if failed > 0 {
                eprintln!("{failed} of {} cells failed; see the status column", out.results.len());
            }
            println!("wrote {}", cfg.output.join("results.csv").display());
        }
        Command::Verify => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
