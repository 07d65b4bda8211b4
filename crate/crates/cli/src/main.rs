//! `reinfer`: resampled estimation and inference from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use reinfer_core::Error;

#[derive(Parser)]
#[command(name = "reinfer", version, about = "Resampled Newton-Raphson and quasi-Newton estimation with built-in inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and write draws, report and diagnostics.
    Fit(Common),
    /// Monte Carlo study on a simulated design.
    Mc(Common),
    /// Run several methods on the same data.
    Compare(Common),
    /// Gradient checks for every built-in model.
    Check(Common),
    /// Classical and resampled Newton-Raphson near a saddle point.
    SaddleDemo(Common),
}

#[derive(Args)]
struct Common {
    /// JSON file of dotted keys; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// ols, probit, nls-exp or mroz.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    /// Comma-separated; `name^k` for powers, `const` for an intercept.
    #[arg(long)]
    regressors: Option<String>,
    #[arg(long)]
    cluster: Option<String>,
    /// rnr, rqn or rgd.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated list for `compare`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Retained draws.
    #[arg(long, short = 'B')]
    draws: Option<usize>,
    #[arg(long)]
    burn: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    /// Any config key, as `key=value`; values are parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, Value)>, Error> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("data", self.data.clone().map(Value::from));
        put("model", self.model.clone().map(Value::from));
        put("outcome", self.outcome.clone().map(Value::from));
        put("regressors", self.regressors.clone().map(Value::from));
        put("cluster", self.cluster.clone().map(Value::from));
        put("method", self.method.clone().map(Value::from));
        put("methods", self.methods.clone().map(Value::from));
        put("scheme", self.scheme.clone().map(Value::from));
        put("m", self.m.map(Value::from));
        put("gamma", self.gamma.map(Value::from));
        put("draws", self.draws.map(Value::from));
        put("burn", self.burn.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("replications", self.replications.map(Value::from));
        put("out", self.out.clone().map(Value::from));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            out.push((k.trim().to_string(), config::parse_value(v.trim())));
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, cmd): (&Common, fn(&config::Flat) -> Result<(), Error>) = match &cli.command {
        Command::Fit(c) => (c, commands::fit),
        Command::Mc(c) => (c, commands::mc),
        Command::Compare(c) => (c, commands::compare_cmd),
        Command::Check(c) => (c, commands::check),
        Command::SaddleDemo(c) => (c, commands::saddle),
    };
    let flat = config::resolve(common.config.as_deref(), &common.overrides()?)?;
    cmd(&flat)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "category": e.category(), "message": e.to_string() } }));
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
