use powgate::pow::{
    self, leading_zero_bits, pow_digest, pow_preimage, ChallengeId, CountingHasher, PowChallenge, PowVerdict,
    RejectReason, Salt, Sha256Hasher, SolveOutcome, Verifier,
};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Vectors {
    version: u32,
    vectors: Vec<Row>,
    min_solutions: Vec<MinSolution>,
}

#[derive(Deserialize)]
struct Row {
    salt_hex: String,
    nonce: u64,
    preimage: String,
    digest_hex: String,
    leading_zero_bits: u32,
}

#[derive(Deserialize)]
struct MinSolution {
    salt_hex: String,
    difficulty_bits: u32,
    min_nonce: u64,
    digest_hex: String,
}

fn vectors() -> Vectors {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/pow_vectors.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn challenge(salt: Salt, bits: u32) -> PowChallenge {
    PowChallenge::from_parts(ChallengeId([1; 16]), salt, bits, 0, 60_000).unwrap()
}

/// Plain scan used as the oracle; deliberately does not go through `solve`.
fn brute_force_min(salt: &Salt, bits: u32, limit: u64) -> Option<u64> {
    (0..limit).find(|&n| leading_zero_bits(&pow_digest(salt, n)) >= bits)
}

#[test]
fn fixture_vectors_match_bit_for_bit() {
    let v = vectors();
    assert_eq!(v.version, 1);
    assert!(!v.vectors.is_empty());
    for row in &v.vectors {
        let salt: Salt = row.salt_hex.parse().unwrap();
        assert_eq!(pow_preimage(&salt, row.nonce), row.preimage.as_bytes());
        let d = pow_digest(&salt, row.nonce);
        assert_eq!(d.to_hex(), row.digest_hex);
        assert_eq!(leading_zero_bits(&d), row.leading_zero_bits);
    }
}

#[test]
fn fixture_minimal_solutions() {
    for s in vectors().min_solutions {
        let salt: Salt = s.salt_hex.parse().unwrap();
        let c = challenge(salt, s.difficulty_bits);
        assert_eq!(pow::solve(&c, 0, 1 << 16), SolveOutcome::Found(s.min_nonce));
        assert_eq!(pow_digest(&salt, s.min_nonce).to_hex(), s.digest_hex);
        assert_eq!(pow::check_solution(&c, s.min_nonce, 1), PowVerdict::Accept);
        if s.min_nonce > 0 {
            assert_eq!(
                pow::check_solution(&c, s.min_nonce - 1, 1),
                PowVerdict::Reject(RejectReason::InsufficientZeroBits)
            );
        }
    }
}

#[test]
fn eight_bit_oracle_agrees_with_check_and_solve() {
    let salt: Salt = "0123456789abcdef0123456789abcdef".parse().unwrap();
    let c = challenge(salt, 8);
    let min = brute_force_min(&salt, 8, 1 << 16).expect("an 8-bit solution below 2^16");
    assert_eq!(pow::solve(&c, 0, 1 << 16), SolveOutcome::Found(min));
    assert_eq!(pow::check_solution(&c, min, 1), PowVerdict::Accept);
    if min > 0 {
        assert!(!pow::check_solution(&c, min - 1, 1).is_accept());
    }
    let next_ok = leading_zero_bits(&pow_digest(&salt, min + 1)) >= 8;
    assert_eq!(pow::check_solution(&c, min + 1, 1).is_accept(), next_ok);
}

#[test]
fn neighbouring_nonces_hash_differently() {
    let mut rng = rand::rng();
    for _ in 0..100 {
        let salt = Salt::random(&mut rng);
        let n = rand::Rng::random_range(&mut rng, 0..pow::NONCE_LIMIT - 1);
        assert_ne!(pow_digest(&salt, n), pow_digest(&salt, n + 1));
        assert_eq!(pow_digest(&salt, n), pow_digest(&salt, n));
    }
}

#[test]
fn high_difficulty_exhausts_small_budget() {
    let c = challenge(Salt([9; 16]), 64);
    assert_eq!(pow::solve(&c, 0, 10), SolveOutcome::Exhausted);
}

#[test]
fn check_hashes_at_most_once() {
    let verifier = Verifier::new(CountingHasher::new(Sha256Hasher));
    let c = challenge(Salt([2; 16]), 12);
    for n in 0..50 {
        let before = verifier.hasher().count();
        verifier.check(&c, n, 1);
        assert_eq!(verifier.hasher().count() - before, 1);
    }
    let before = verifier.hasher().count();
    for n in 0..50 {
        verifier.check(&c, n, 60_000);
        verifier.check_str(&c, "nope", 60_000);
    }
    assert_eq!(verifier.hasher().count(), before);
}

fn salt_strategy() -> impl Strategy<Value = Salt> {
    any::<[u8; 16]>().prop_map(Salt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_then_check_accepts(salt in salt_strategy(), bits in 0u32..=12) {
        let c = challenge(salt, bits);
        let nonce = pow::solve(&c, 0, 1 << 24).nonce().expect("found within 2^24");
        prop_assert_eq!(pow::check_solution(&c, nonce, c.expires_at() - 1), PowVerdict::Accept);
    }

    #[test]
    fn acceptance_is_monotone_in_difficulty(salt in salt_strategy(), nonce in 0u64..1_000_000) {
        let achieved = leading_zero_bits(&pow_digest(&salt, nonce));
        for d in 0..=achieved.min(20) {
            prop_assert!(pow::check_solution(&challenge(salt, d), nonce, 1).is_accept());
        }
        prop_assert!(!pow::check_solution(&challenge(salt, achieved + 1), nonce, 1).is_accept());
    }

    #[test]
    fn solve_returns_minimum(salt in salt_strategy(), bits in 0u32..=10, start in 0u64..5_000) {
        let c = challenge(salt, bits);
        let found = pow::solve(&c, start, 1 << 16).nonce();
        let oracle = (start..start + (1 << 16)).find(|&n| leading_zero_bits(&pow_digest(&salt, n)) >= bits);
        prop_assert_eq!(found, oracle);
    }

    #[test]
    fn preimage_is_hex_then_decimal(salt in salt_strategy(), nonce in any::<u64>()) {
        let expected = format!("{}{}", hex::encode(salt.0), nonce);
        prop_assert_eq!(pow_preimage(&salt, nonce), expected.into_bytes());
    }
}
