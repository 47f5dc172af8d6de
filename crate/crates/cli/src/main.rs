//! `fockcm`: verification suites, solver runs and semiclassical dumps driven
//! by a TOML experiment config.
//!
//! Exit codes: 0 ok, 1 suite failure, 2 config error.

mod commands;
mod config;
mod output;
mod queue;
mod svg;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toml::Value;

use commands::{Ctx, RunError, Sweep};
use config::{ExperimentConfig, FieldError};
use output::{sha256_hex, RunDir};

#[derive(Parser)]
#[command(name = "fockcm", version, about = "Fock-space CM-frame experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment config (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Sweep list to iterate: h, eps, gamma or delta.
    #[arg(long, global = true)]
    sweep: Option<String>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Operator algebra and CM-frame property suites.
    VerifyOps,
    /// L^p bound batches.
    VerifyIneq,
    /// Time-norm equivalence batches.
    VerifyNorms,
    /// Monte Carlo against chaos closed forms.
    McCrosscheck,
    /// Picard solve with split-step oracle and identity check.
    Solve,
    /// Number-cutoff scaling in eps.
    TruncateSweep,
    /// Short-time expansion remainders.
    Expansion,
    /// Stability under potential perturbations.
    Perturb,
    /// Phase-space dumps and band-mass scaling.
    Husimi,
    /// Summary table and plots over the output directory.
    Report,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::VerifyOps => "verify-ops",
            Cmd::VerifyIneq => "verify-ineq",
            Cmd::VerifyNorms => "verify-norms",
            Cmd::McCrosscheck => "mc-crosscheck",
            Cmd::Solve => "solve",
            Cmd::TruncateSweep => "truncate-sweep",
            Cmd::Expansion => "expansion",
            Cmd::Perturb => "perturb",
            Cmd::Husimi => "husimi",
            Cmd::Report => "report",
        }
    }

    fn sweeps(self) -> &'static [Sweep] {
        match self {
            Cmd::Solve => &[Sweep::H, Sweep::Gamma],
            Cmd::TruncateSweep => &[Sweep::H, Sweep::Eps],
            Cmd::Expansion => &[Sweep::Delta],
            Cmd::Husimi => &[Sweep::H],
            _ => &[],
        }
    }
}

fn config_error(errs: &[FieldError]) -> ExitCode {
    for e in errs {
        eprintln!("{e}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        None => String::new(),
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => return config_error(&[FieldError::new("--config", format!("{}: {e}", p.display()))]),
        },
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(errs) => return config_error(&errs),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    let mut errs = cfg.validate();
    if cli.threads == 0 {
        errs.push(FieldError::new("--threads", "must be >= 1"));
    }
    let sweep = match cli.sweep.as_deref() {
        None => None,
        Some(s) => match Sweep::parse(s) {
            Some(w) if cli.cmd.sweeps().contains(&w) => Some(w),
            Some(w) => {
                errs.push(FieldError::new("--sweep", format!("{} does not sweep {}", cli.cmd.name(), w.name())));
                None
            }
            None => {
                errs.push(FieldError::new("--sweep", format!("unknown sweep {s:?} (h, eps, gamma, delta)")));
                None
            }
        },
    };
    if !errs.is_empty() {
        return config_error(&errs);
    }

    let canonical = cfg.canonical();
    let hash = sha256_hex(canonical.as_bytes());
    let root = PathBuf::from(&cfg.out);
    let run = match RunDir::create(&root, cli.cmd.name()) {
        Ok(r) => r,
        Err(e) => return config_error(&[FieldError::new("out", format!("{}: {e}", root.display()))]),
    };
    let mut ctx = Ctx {
        cfg: &cfg,
        run,
        threads: cli.threads,
        sweep,
    };
    let res = ctx.run.text("config.toml", &canonical).map_err(RunError::from).and_then(|_| match cli.cmd {
        Cmd::VerifyOps => commands::verify_ops(&mut ctx),
        Cmd::VerifyIneq => commands::verify_ineq(&mut ctx),
        Cmd::VerifyNorms => commands::verify_norms(&mut ctx),
        Cmd::McCrosscheck => commands::mc_crosscheck(&mut ctx),
        Cmd::Solve => commands::solve(&mut ctx),
        Cmd::TruncateSweep => commands::truncate_sweep(&mut ctx),
        Cmd::Expansion => commands::expansion(&mut ctx),
        Cmd::Perturb => commands::perturb(&mut ctx),
        Cmd::Husimi => commands::husimi_cmd(&mut ctx),
        Cmd::Report => commands::report(&mut ctx, &root),
    });

    let (status, code, outcome) = match res {
        Ok(o) if o.violations.is_empty() => ("ok", ExitCode::SUCCESS, o),
        Ok(o) => ("failure", ExitCode::from(1), o),
        Err(RunError::Config(errs)) => return config_error(&errs),
        Err(RunError::Io(e)) => {
            eprintln!("io error: {e}");
            return ExitCode::from(1);
        }
        Err(RunError::Failed(m)) => (
            "failure",
            ExitCode::from(1),
            commands::Outcome {
                lines: Vec::new(),
                violations: vec![format!("seed={} error={m}", cfg.seed)],
            },
        ),
    };
    let manifest = [
        ("experiment", Value::String(cfg.experiment.clone())),
        ("subcommand", Value::String(cli.cmd.name().into())),
        ("seed", Value::Integer(cfg.seed as i64)),
        ("config_sha256", Value::String(hash.clone())),
        ("threads", Value::Integer(cli.threads as i64)),
        ("sweep", Value::String(sweep.map_or("none", Sweep::name).into())),
        ("rng_split_rule", Value::Integer(fockcm::rng::SPLIT_RULE_VERSION as i64)),
        ("version", Value::String(env!("CARGO_PKG_VERSION").into())),
        ("status", Value::String(status.into())),
        ("violations", Value::Integer(outcome.violations.len() as i64)),
    ];
    if let Err(e) = ctx.run.manifest(&manifest) {
        eprintln!("io error: {e}");
        return ExitCode::from(1);
    }
    // a closed pipe on stdout is not an error of the run
    let mut so = io::stdout().lock();
    let _ = writeln!(so, "{} [{}] seed={} config={}", cli.cmd.name(), cfg.experiment, cfg.seed, &hash[..16]);
    for l in &outcome.lines {
        let _ = writeln!(so, "  {l}");
    }
    for v in &outcome.violations {
        eprintln!("violation\t{v}");
    }
    let _ = writeln!(
        so,
        "{status}: {} violations; artifacts in {}",
        outcome.violations.len(),
        ctx.run.dir.display()
    );
    code
}
