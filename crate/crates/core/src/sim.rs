//! Attack-cost arithmetic and desk-scale empirical checks.
//!
//! Everything here runs the real [`crate::pow`] and [`crate::images`] code, so
//! the simulator doubles as an integration harness.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::images::{self, binomial, Catalog, TARGET_SIZES, TILE_COUNT};
use crate::pow::{self, CountingHasher, Sha256Hasher, SolveOutcome, Verifier, MAX_DIFFICULTY_BITS, NONCE_LIMIT};

/// Quoted order-of-magnitude estimate for a 100,000-CAPTCHA campaign.
pub const REFERENCE_CAMPAIGN_HASHES: f64 = 1e11;
/// "Several days" of aggregate compute, read as three.
pub const REFERENCE_CAMPAIGN_DAYS: f64 = 3.0;
pub const MAX_TRIAL_DIFFICULTY_BITS: u32 = 14;
pub const MIN_SOLVE_TRIALS: usize = 100;
pub const MIN_GUESS_TRIALS: usize = 10_000;
pub const MIN_BENCH_ITERATIONS: u64 = 10_000;
const Z_95: f64 = 1.959_963_984_540_054;
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid campaign: {0}")]
    InvalidSpec(&'static str),
    #[error("difficulty {0} exceeds the desk-scale limit of {MAX_TRIAL_DIFFICULTY_BITS} bits")]
    DifficultyTooHigh(u32),
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("need at least {MIN_BENCH_ITERATIONS} iterations, got {0}")]
    TooFewIterations(u64),
    #[error("k={0} is not an admissible target count")]
    BadTargetCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CampaignSpec {
    pub difficulty_bits: u32,
    pub num_captchas: u64,
    /// Attacker throughput in hashes per second.
    pub hash_rate: f64,
    /// Human-solver price per 1,000 challenges, for comparison.
    pub solver_price_per_1000: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub difficulty_bits: u32,
    pub num_captchas: u64,
    pub hash_rate: f64,
    pub expected_hashes_per_captcha: f64,
    pub expected_total_hashes: f64,
    pub expected_seconds: f64,
    pub expected_days: f64,
    pub log10_total_hashes: f64,
    pub reference_hashes: f64,
    pub ratio_to_reference: f64,
    /// Hash rate at which this campaign would take `REFERENCE_CAMPAIGN_DAYS`.
    pub implied_hash_rate_for_reference_days: f64,
    pub guess_attempts_per_pass_knows_k: f64,
    pub guess_attempts_per_pass_unknown_k: f64,
    /// PoW work a random guesser burns per eventual pass.
    pub hashes_per_guessed_pass_knows_k: f64,
    pub hashes_per_guessed_pass_unknown_k: f64,
    pub human_farm_cost: Option<f64>,
}

/// Closed-form campaign cost. Performs no hashing.
pub fn simulate_campaign(spec: &CampaignSpec) -> Result<CampaignReport, SimError> {
    if spec.difficulty_bits > MAX_DIFFICULTY_BITS {
        return Err(SimError::InvalidSpec("difficulty above 256 bits"));
    }
    if spec.num_captchas == 0 || spec.num_captchas >= NONCE_LIMIT {
        return Err(SimError::InvalidSpec("num_captchas must be in [1, 2^53)"));
    }
    if !(spec.hash_rate.is_finite() && spec.hash_rate > 0.0) {
        return Err(SimError::InvalidSpec("hash rate must be positive"));
    }
    if spec.solver_price_per_1000.is_some_and(|p| !(p.is_finite() && p > 0.0)) {
        return Err(SimError::InvalidSpec("solver price must be positive"));
    }
    let per = pow::expected_trials(spec.difficulty_bits).expect("range checked");
    // Exact: an integer below 2^53 times a power of two.
    let total = spec.num_captchas as f64 * per;
    let seconds = total / spec.hash_rate;

    let p_known = TARGET_SIZES
        .iter()
        .map(|&k| 1.0 / binomial(TILE_COUNT as u64, k as u64) as f64)
        .sum::<f64>()
        / TARGET_SIZES.len() as f64;
    let p_unknown = images::random_guess_success_probability(TILE_COUNT as u64, 2, false).expect("valid");

    Ok(CampaignReport {
        difficulty_bits: spec.difficulty_bits,
        num_captchas: spec.num_captchas,
        hash_rate: spec.hash_rate,
        expected_hashes_per_captcha: per,
        expected_total_hashes: total,
        expected_seconds: seconds,
        expected_days: seconds / SECONDS_PER_DAY,
        log10_total_hashes: total.log10(),
        reference_hashes: REFERENCE_CAMPAIGN_HASHES,
        ratio_to_reference: total / REFERENCE_CAMPAIGN_HASHES,
        implied_hash_rate_for_reference_days: total / (REFERENCE_CAMPAIGN_DAYS * SECONDS_PER_DAY),
        guess_attempts_per_pass_knows_k: 1.0 / p_known,
        guess_attempts_per_pass_unknown_k: 1.0 / p_unknown,
        hashes_per_guessed_pass_knows_k: per / p_known,
        hashes_per_guessed_pass_unknown_k: per / p_unknown,
        human_farm_cost: spec
            .solver_price_per_1000
            .map(|p| spec.num_captchas as f64 / 1000.0 * p),
    })
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, k: &str, v: String| writeln!(f, "{k:<38} {v}");
        row(f, "difficulty (bits)", self.difficulty_bits.to_string())?;
        row(f, "captchas", self.num_captchas.to_string())?;
        row(f, "attacker hash rate (H/s)", format!("{:.4e}", self.hash_rate))?;
        row(
            f,
            "expected hashes per captcha",
            format!("{}", self.expected_hashes_per_captcha),
        )?;
        row(
            f,
            "expected total hashes",
            format!("{} ({:.4e})", self.expected_total_hashes, self.expected_total_hashes),
        )?;
        row(
            f,
            "expected wall time",
            format!("{:.1} s = {:.3} days", self.expected_seconds, self.expected_days),
        )?;
        row(
            f,
            "vs. quoted ~1e11 hashes",
            format!("{:.4}x (10^{:.2})", self.ratio_to_reference, self.log10_total_hashes),
        )?;
        row(
            f,
            &format!("hash rate for {REFERENCE_CAMPAIGN_DAYS} days"),
            format!("{:.4e} H/s", self.implied_hash_rate_for_reference_days),
        )?;
        row(
            f,
            "guesses per pass (k known / unknown)",
            format!(
                "{:.3} / {:.3}",
                self.guess_attempts_per_pass_knows_k, self.guess_attempts_per_pass_unknown_k
            ),
        )?;
        row(
            f,
            "hashes per guessed pass (known / unk.)",
            format!(
                "{:.4e} / {:.4e}",
                self.hashes_per_guessed_pass_knows_k, self.hashes_per_guessed_pass_unknown_k
            ),
        )?;
        if let Some(cost) = self.human_farm_cost {
            row(f, "human solver farm cost", format!("{cost:.2}"))?;
        }
        Ok(())
    }
}

pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    pub difficulty_bits: u32,
    pub trials: usize,
    pub expected_mean: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub min: u64,
    pub max: u64,
}

/// Solves `trials` fresh challenges and reports how many hashes each took.
///
/// Every trial gets its own ChaCha stream seeded from `rng`, so results do not
/// depend on how rayon schedules the work.
pub fn run_empirical_solve_trials<R: Rng + ?Sized>(
    difficulty_bits: u32,
    trials: usize,
    rng: &mut R,
) -> Result<TrialStats, SimError> {
    if difficulty_bits > MAX_TRIAL_DIFFICULTY_BITS {
        return Err(SimError::DifficultyTooHigh(difficulty_bits));
    }
    if trials < MIN_SOLVE_TRIALS {
        return Err(SimError::TooFewTrials {
            min: MIN_SOLVE_TRIALS,
            got: trials,
        });
    }
    let seeds: Vec<u64> = (0..trials).map(|_| rng.random()).collect();
    let counts: Vec<u64> = seeds
        .par_iter()
        .map(|&seed| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(seed);
            let challenge = pow::new_challenge(difficulty_bits, 1, 0, &mut trial_rng).expect("valid");
            let verifier = Verifier::new(CountingHasher::new(Sha256Hasher));
            match verifier.solve(&challenge, 0, NONCE_LIMIT) {
                SolveOutcome::Found(n) => debug_assert_eq!(verifier.hasher().count(), n + 1),
                SolveOutcome::Exhausted => unreachable!("2^53 nonces at <= 14 bits"),
            }
            verifier.hasher().count()
        })
        .collect();

    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(TrialStats {
        difficulty_bits,
        trials,
        expected_mean: pow::expected_trials(difficulty_bits).expect("valid"),
        mean,
        std_dev: var.sqrt(),
        min: *counts.iter().min().expect("non-empty"),
        max: *counts.iter().max().expect("non-empty"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessStrategy {
    /// Picks a uniform subset of the true target size.
    KnowsK,
    /// Picks uniformly among all 2- and 3-tile subsets.
    UnknownK,
    /// Submits nothing.
    EmptySet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessReport {
    pub strategy: GuessStrategy,
    pub forced_k: Option<usize>,
    pub trials: usize,
    pub passes: usize,
    pub rate: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub analytic: f64,
}

impl GuessReport {
    pub fn ci_covers_analytic(&self) -> bool {
        self.ci_low <= self.analytic && self.analytic <= self.ci_high
    }
}

pub fn wilson_interval(passes: usize, trials: usize) -> (f64, f64) {
    let n = trials as f64;
    let p = passes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if passes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if passes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

fn random_selection<R: Rng + ?Sized>(strategy: GuessStrategy, k: usize, rng: &mut R) -> Vec<usize> {
    let size = match strategy {
        GuessStrategy::EmptySet => return Vec::new(),
        GuessStrategy::KnowsK => k,
        GuessStrategy::UnknownK => {
            let small = binomial(TILE_COUNT as u64, 2);
            let total = small + binomial(TILE_COUNT as u64, 3);
            if rng.random_range(0..total) < small {
                2
            } else {
                3
            }
        }
    };
    rand::seq::index::sample(rng, TILE_COUNT, size).into_vec()
}

/// Assembles fresh challenges and grades a blind guess against each.
pub fn simulate_guesser<R: Rng + ?Sized>(
    catalog: &Catalog,
    trials: usize,
    strategy: GuessStrategy,
    forced_k: Option<usize>,
    rng: &mut R,
) -> Result<GuessReport, SimError> {
    if trials < MIN_GUESS_TRIALS {
        return Err(SimError::TooFewTrials {
            min: MIN_GUESS_TRIALS,
            got: trials,
        });
    }
    if let Some(k) = forced_k {
        if !TARGET_SIZES.contains(&k) {
            return Err(SimError::BadTargetCount(k));
        }
    }
    let mut passes = 0;
    for _ in 0..trials {
        let mut challenge = images::assemble_challenge_with_k(catalog, rng, 0, 1, forced_k)
            .expect("validated catalog always assembles");
        let guess = random_selection(strategy, challenge.target_count(), rng);
        if challenge.grade(&guess, 0).passed() {
            passes += 1;
        }
    }
    let n = TILE_COUNT as u64;
    let analytic = match (strategy, forced_k) {
        (GuessStrategy::EmptySet, _) => 0.0,
        (GuessStrategy::UnknownK, _) => images::random_guess_success_probability(n, 2, false).expect("valid"),
        (GuessStrategy::KnowsK, Some(k)) => images::random_guess_success_probability(n, k as u64, true).expect("valid"),
        (GuessStrategy::KnowsK, None) => {
            TARGET_SIZES
                .iter()
                .map(|&k| images::random_guess_success_probability(n, k as u64, true).expect("valid"))
                .sum::<f64>()
                / TARGET_SIZES.len() as f64
        }
    };
    let (ci_low, ci_high) = wilson_interval(passes, trials);
    Ok(GuessReport {
        strategy,
        forced_k,
        trials,
        passes,
        rate: passes as f64 / trials as f64,
        ci_low,
        ci_high,
        analytic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub iterations: u64,
    pub valid_seconds: f64,
    pub valid_per_second: f64,
    pub expired_seconds: f64,
    pub expired_per_second: f64,
}

/// Times `check_solution` over precomputed valid solutions, then over expired ones.
pub fn bench_verify(iterations: u64) -> Result<BenchReport, SimError> {
    if iterations < MIN_BENCH_ITERATIONS {
        return Err(SimError::TooFewIterations(iterations));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let solved: Vec<(pow::PowChallenge, u64)> = (0..64)
        .map(|_| {
            let c = pow::new_challenge(8, 60_000, 0, &mut rng).expect("valid");
            let n = pow::solve(&c, 0, NONCE_LIMIT).nonce().expect("8 bits always solves");
            (c, n)
        })
        .collect();
    let verifier = Verifier::new(Sha256Hasher);

    let time = |now: u64, expect_accept: bool| {
        let start = Instant::now();
        let mut accepted = 0u64;
        for i in 0..iterations {
            let (c, n) = &solved[(i % solved.len() as u64) as usize];
            accepted += verifier.check(black_box(c), black_box(*n), now).is_accept() as u64;
        }
        let secs = start.elapsed().as_secs_f64();
        assert_eq!(accepted, if expect_accept { iterations } else { 0 });
        secs
    };
    let valid_seconds = time(1, true);
    let expired_seconds = time(60_000, false);
    Ok(BenchReport {
        iterations,
        valid_seconds,
        valid_per_second: iterations as f64 / valid_seconds,
        expired_seconds,
        expired_per_second: iterations as f64 / expired_seconds,
    })
}
