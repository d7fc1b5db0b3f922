#ifndef CVQKD_H
#define CVQKD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum CvqkdStatus {
  CVQKD_STATUS_OK = 0,
  CVQKD_STATUS_NULL_POINTER = 1,
  CVQKD_STATUS_INVALID_ARGUMENT = 2,
  CVQKD_STATUS_IO = 3,
  CVQKD_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A session ended without a key; see `cvqkd_session_abort_code`.
   */
  CVQKD_STATUS_ABORTED = 5,
  CVQKD_STATUS_PANIC = 6,
} CvqkdStatus;

/**
 * One parity-check matrix.
 */
typedef struct CvqkdCode CvqkdCode;

/**
 * Loaded set of parity-check matrices.
 */
typedef struct CvqkdCodebook CvqkdCodebook;

/**
 * Both parties' outcomes of one loopback session.
 */
typedef struct CvqkdSession CvqkdSession;

/**
 * Summary of one decoding run.
 */
typedef struct CvqkdDecodeInfo {
  size_t iterations;
  bool converged;
  bool syndrome_matched;
} CvqkdDecodeInfo;

/**
 * Inputs of a key-length evaluation.
 */
typedef struct CvqkdKeyLengthParams {
  size_t n_minus_k;
  size_t k;
  double alpha;
  uint32_t d;
  uint32_t d1;
  double epsilon;
  /**
   * False selects the stub γ/μ pair, true the reference pair.
   */
  bool reference_model;
  /**
   * Constant of the stub μ; ignored by the reference model.
   */
  double mu_c;
  double d_pe0;
  uint64_t leak_bits;
} CvqkdKeyLengthParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *cvqkd_last_error(void);

/**
 * Loads every code file in `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CvqkdStatus cvqkd_codebook_load(const char *dir, struct CvqkdCodebook **out);

/**
 * # Safety
 * `book` must come from `cvqkd_codebook_load` or be null.
 */
void cvqkd_codebook_free(struct CvqkdCodebook *book);

/**
 * Number of codes in the codebook, or 0 for a null handle.
 *
 * # Safety
 * `book` must be a live handle or null.
 */
size_t cvqkd_codebook_len(const struct CvqkdCodebook *book);

/**
 * Copies the code for field order `order` and rate `rate_percent` out of
 * the codebook.
 *
 * # Safety
 * `book` must be a live handle and `out` a valid pointer.
 */
enum CvqkdStatus cvqkd_codebook_get(const struct CvqkdCodebook *book,
                                    size_t order,
                                    uint16_t rate_percent,
                                    struct CvqkdCode **out);

/**
 * # Safety
 * `code` must come from `cvqkd_codebook_get` or be null.
 */
void cvqkd_code_free(struct CvqkdCode *code);

/**
 * Block length, or 0 for a null handle.
 *
 * # Safety
 * `code` must be a live handle or null.
 */
size_t cvqkd_code_n(const struct CvqkdCode *code);

/**
 * Number of checks, or 0 for a null handle.
 *
 * # Safety
 * `code` must be a live handle or null.
 */
size_t cvqkd_code_n_checks(const struct CvqkdCode *code);

/**
 * Field order, or 0 for a null handle.
 *
 * # Safety
 * `code` must be a live handle or null.
 */
size_t cvqkd_code_order(const struct CvqkdCode *code);

/**
 * Writes `H·x` into `out`, which must hold `cvqkd_code_n_checks` symbols.
 *
 * # Safety
 * `x` must point to `x_len` bytes and `out` to `out_len` writable bytes.
 */
enum CvqkdStatus cvqkd_syndrome(const struct CvqkdCode *code,
                                const uint8_t *x,
                                size_t x_len,
                                uint8_t *out,
                                size_t out_len);

/**
 * Belief-propagation decoding against `syndrome`.
 *
 * `priors` holds `n·q` probabilities, position-major. The estimate is
 * written to `out` (at least `n` bytes) even when decoding does not
 * converge; check `info.syndrome_matched`.
 *
 * # Safety
 * Pointers must cover the stated lengths; `info` may be null.
 */
enum CvqkdStatus cvqkd_decode(const struct CvqkdCode *code,
                              const uint8_t *syndrome,
                              size_t syndrome_len,
                              const double *priors,
                              size_t priors_len,
                              size_t max_iters,
                              uint8_t *out,
                              size_t out_len,
                              struct CvqkdDecodeInfo *info);

/**
 * Evaluates the finite-size key length. `out` receives ℓ, which may be
 * zero or negative.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum CvqkdStatus cvqkd_key_length(const struct CvqkdKeyLengthParams *params, int64_t *out);

/**
 * Seed length in bits for an `n`-bit input and `ell`-bit output.
 */
size_t cvqkd_pa_seed_bits(size_t n, size_t ell);

/**
 * Toeplitz hashing of `input_bits` bits down to `ell` bits. Bits are packed
 * least-significant first within each byte.
 *
 * # Safety
 * Byte buffers must hold at least `ceil(bits/8)` bytes.
 */
enum CvqkdStatus cvqkd_privacy_amplify(const uint8_t *input,
                                       size_t input_bits,
                                       const uint8_t *seed,
                                       size_t seed_bits,
                                       size_t ell,
                                       uint8_t *out,
                                       size_t out_len);

/**
 * Runs both parties in process over an in-memory link.
 *
 * `config_toml` uses the CLI configuration format. `book` may be null, in
 * which case the codebook directory named by the configuration is loaded.
 * Returns `Aborted` with a valid handle in `out` when the session ends
 * without a key.
 *
 * # Safety
 * `config_toml` must be NUL-terminated; `book` live or null; `out` valid.
 */
enum CvqkdStatus cvqkd_session_run(const char *config_toml,
                                   const struct CvqkdCodebook *book,
                                   struct CvqkdSession **out);

/**
 * # Safety
 * `s` must come from `cvqkd_session_run` or be null.
 */
void cvqkd_session_free(struct CvqkdSession *s);

/**
 * Abort code for one party (Alice if `bob` is false), or 0 when it holds a
 * key.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
uint8_t cvqkd_session_abort_code(const struct CvqkdSession *s, bool bob);

/**
 * Key length in bits for one party, or 0.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
size_t cvqkd_session_key_bits(const struct CvqkdSession *s, bool bob);

/**
 * Copies one party's key, packed least-significant bit first.
 *
 * # Safety
 * `s` must be a live handle and `out` hold `out_len` bytes.
 */
enum CvqkdStatus cvqkd_session_copy_key(const struct CvqkdSession *s,
                                        bool bob,
                                        uint8_t *out,
                                        size_t out_len);

/**
 * SHA-256 of one party's transcript into a 32-byte buffer.
 *
 * # Safety
 * `s` must be a live handle and `out` hold 32 bytes.
 */
enum CvqkdStatus cvqkd_session_transcript_sha256(const struct CvqkdSession *s,
                                                 bool bob,
                                                 uint8_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVQKD_H */
