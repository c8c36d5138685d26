#ifndef POWGATE_H
#define POWGATE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PG_SALT_LEN 16

#define PG_ID_LEN 16

#define PG_DIGEST_LEN 32

typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_NULL_POINTER = 1,
  PG_STATUS_INVALID_ARGUMENT = 2,
  PG_STATUS_BUFFER_TOO_SMALL = 3,
  PG_STATUS_EXPIRED = 4,
  PG_STATUS_INSUFFICIENT_ZERO_BITS = 5,
  PG_STATUS_MALFORMED_NONCE = 6,
  PG_STATUS_EXHAUSTED = 7,
  PG_STATUS_UNKNOWN_TOKEN = 8,
  PG_STATUS_ALREADY_REDEEMED = 9,
  PG_STATUS_SESSION_MISMATCH = 10,
  PG_STATUS_ALREADY_CONSUMED = 11,
  PG_STATUS_IO = 12,
  PG_STATUS_INTERNAL = 13,
} PgStatus;

/**
 * Opaque token ledger.
 */
typedef struct PgLedger PgLedger;

typedef struct PgCampaignReport {
  double expected_hashes_per_captcha;
  double expected_total_hashes;
  double expected_seconds;
  double expected_days;
  double reference_hashes;
  double ratio_to_reference;
  double implied_hash_rate_for_reference_days;
} PgCampaignReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated description of a status code. Takes the raw value
 * so out-of-range codes from C are safe.
 */
const char *pg_status_message(uint32_t status);

/**
 * Writes the hash preimage into `out`. `*out_len` receives the length, and is
 * also set when the buffer is too small.
 *
 * # Safety
 * `salt` must point to 16 readable bytes, `out` to `cap` writable bytes and
 * `out_len` to a writable `size_t`.
 */
enum PgStatus pg_preimage(const uint8_t *salt,
                          uint64_t nonce,
                          uint8_t *out,
                          size_t cap,
                          size_t *out_len);

/**
 * # Safety
 * `salt` must point to 16 readable bytes and `out` to 32 writable bytes.
 */
enum PgStatus pg_digest(const uint8_t *salt, uint64_t nonce, uint8_t *out);

/**
 * Leading zero bits of a 32-byte digest; 0 for a null pointer.
 *
 * # Safety
 * `digest` must be null or point to 32 readable bytes.
 */
uint32_t pg_leading_zero_bits(const uint8_t *digest);

/**
 * `PG_STATUS_OK` means the nonce is accepted at time `now`.
 *
 * # Safety
 * `salt` must point to 16 readable bytes.
 */
enum PgStatus pg_check(const uint8_t *salt,
                       uint32_t difficulty_bits,
                       uint64_t issued_at,
                       uint64_t ttl_ms,
                       uint64_t nonce,
                       uint64_t now);

/**
 * Same as [`pg_check`] with the nonce as a NUL-terminated decimal string.
 *
 * # Safety
 * `salt` must point to 16 readable bytes and `nonce` to a NUL-terminated string.
 */
enum PgStatus pg_check_str(const uint8_t *salt,
                           uint32_t difficulty_bits,
                           uint64_t issued_at,
                           uint64_t ttl_ms,
                           const char *nonce,
                           uint64_t now);

/**
 * Smallest accepting nonce in `[start, start + max_iterations)`.
 *
 * # Safety
 * `salt` must point to 16 readable bytes and `out_nonce` to a writable `uint64_t`.
 */
enum PgStatus pg_solve(const uint8_t *salt,
                       uint32_t difficulty_bits,
                       uint64_t start,
                       uint64_t max_iterations,
                       uint64_t *out_nonce);

/**
 * # Safety
 * `out` must point to a writable `double`.
 */
enum PgStatus pg_expected_trials(uint32_t difficulty_bits, double *out);

/**
 * In-memory ledger. Release with [`pg_ledger_free`].
 */
struct PgLedger *pg_ledger_new(void);

/**
 * Ledger backed by an append-only journal, replayed on open. Returns null on
 * failure.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 path.
 */
struct PgLedger *pg_ledger_open(const char *path, uint64_t retention_ms);

/**
 * # Safety
 * `ledger` must be null or a pointer from `pg_ledger_new`/`pg_ledger_open`
 * that has not been freed.
 */
void pg_ledger_free(struct PgLedger *ledger);

/**
 * Mints a token for a verified challenge and writes its 16-byte id.
 *
 * # Safety
 * `ledger` must be live; `challenge_id` and `session_id` must point to 16
 * readable bytes and `out_token` to 16 writable bytes.
 */
enum PgStatus pg_ledger_mint(const struct PgLedger *ledger,
                             const uint8_t *challenge_id,
                             const uint8_t *session_id,
                             uint64_t now,
                             uint64_t ttl_ms,
                             uint8_t *out_token);

/**
 * # Safety
 * `ledger` must be live; `token_id` and `session_id` must point to 16 readable bytes.
 */
enum PgStatus pg_ledger_redeem(const struct PgLedger *ledger,
                               const uint8_t *token_id,
                               const uint8_t *session_id,
                               uint64_t now);

/**
 * Drops terminal entries past the retention horizon; `*out_removed` may be null.
 *
 * # Safety
 * `ledger` must be live; `out_removed` must be null or writable.
 */
enum PgStatus pg_ledger_purge(const struct PgLedger *ledger, uint64_t now, size_t *out_removed);

/**
 * Closed-form cost of solving `num_captchas` puzzles at `hash_rate` H/s.
 *
 * # Safety
 * `out` must point to a writable `PgCampaignReport`.
 */
enum PgStatus pg_simulate_campaign(uint32_t difficulty_bits,
                                   uint64_t num_captchas,
                                   double hash_rate,
                                   struct PgCampaignReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POWGATE_H */
