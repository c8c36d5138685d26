use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use powgate::http::{self, ApiConfig};
use powgate::images::{self, Catalog};
use powgate::{fixtures, pow, sim};

#[derive(Parser)]
#[command(
    name = "powgate",
    version,
    about = "Proof-of-work gated image CAPTCHA service and attack-cost simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Output {
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Emit CSV instead of a table.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closed-form campaign cost.
    Simulate {
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        captchas: u64,
        /// Attacker hash rate in hashes per second.
        #[arg(long)]
        hashrate: f64,
        /// Human-solver price per 1,000 challenges.
        #[arg(long)]
        solver_price: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Empirical solve cost over fresh challenges.
    Trials {
        #[arg(long)]
        bits: u32,
        #[arg(long = "n")]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Random-guess attacker against assembled challenges.
    Guess {
        #[arg(long)]
        trials: usize,
        /// The guesser knows how many tiles are correct.
        #[arg(long)]
        knows_k: bool,
        /// Pin the number of correct tiles (2 or 3).
        #[arg(long)]
        k: Option<usize>,
        /// Use this catalog instead of a synthetic two-category one.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Server-side verification throughput.
    Bench {
        #[arg(long)]
        iters: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Solve one puzzle natively.
    Solve {
        #[arg(long)]
        salt: String,
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
    /// Write a placeholder image catalog and manifest.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = fixtures::DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect::<Vec<_>>())]
        categories: Vec<String>,
        #[arg(long, default_value_t = 6)]
        per_category: usize,
    },
}

fn emit<T: Serialize + std::fmt::Display>(value: &T, out: Output) -> anyhow::Result<()> {
    if out.json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else if out.csv {
        sim::write_csv(std::slice::from_ref(value), std::io::stdout().lock())?;
    } else {
        print!("{value}");
    }
    Ok(())
}

/// Table rendering for reports that only need key/value rows.
struct Table<T>(T);

impl<T: Serialize> Serialize for Table<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<T: Serialize> std::fmt::Display for Table<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let value = serde_json::to_value(&self.0).map_err(|_| std::fmt::Error)?;
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                writeln!(f, "{k:<24} {v}")?;
            }
        }
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config } => {
            let mut cfg = ApiConfig::load(&config)?;
            cfg.apply_env(|k| std::env::var(k).ok());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(http::serve(cfg))?;
        }
        Command::Simulate {
            bits,
            captchas,
            hashrate,
            solver_price,
            out,
        } => {
            let report = sim::simulate_campaign(&sim::CampaignSpec {
                difficulty_bits: bits,
                num_captchas: captchas,
                hash_rate: hashrate,
                solver_price_per_1000: solver_price,
            })?;
            emit(&report, out)?;
        }
        Command::Trials { bits, n, seed, out } => {
            let stats = sim::run_empirical_solve_trials(bits, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
            emit(&Table(stats), out)?;
        }
        Command::Guess {
            trials,
            knows_k,
            k,
            manifest,
            seed,
            out,
        } => {
            let catalog = match manifest {
                Some(p) => images::load_catalog(&p)?,
                None => Catalog::synthetic(&["cat", "dog"], 4)?,
            };
            let strategy = if knows_k {
                sim::GuessStrategy::KnowsK
            } else {
                sim::GuessStrategy::UnknownK
            };
            let report = sim::simulate_guesser(&catalog, trials, strategy, k, &mut ChaCha8Rng::seed_from_u64(seed))?;
            emit(&Table(report), out)?;
        }
        Command::Bench { iters, out } => {
            let report = sim::bench_verify(iters)?;
            emit(&Table(report), out)?;
        }
        Command::Solve { salt, bits, start } => {
            let salt: pow::Salt = salt.parse().context("salt must be 32 hex characters")?;
            let challenge = pow::PowChallenge::from_parts(pow::ChallengeId([0; 16]), salt, bits, 0, 1)?;
            match pow::solve(&challenge, start, pow::NONCE_LIMIT - start.min(pow::NONCE_LIMIT)) {
                pow::SolveOutcome::Found(n) => {
                    println!("{n} {}", pow::pow_digest(&salt, n));
                }
                pow::SolveOutcome::Exhausted => anyhow::bail!("no nonce below 2^53"),
            }
        }
        Command::Fixtures {
            out,
            categories,
            per_category,
        } => {
            let names: Vec<&str> = categories.iter().map(String::as_str).collect();
            let manifest = fixtures::write_placeholder_catalog(&out, &names, per_category)?;
            images::load_catalog(&manifest)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
