#ifndef DGSAN_H
#define DGSAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DgsanStatus {
  DGSAN_STATUS_OK = 0,
  DGSAN_STATUS_NULL_POINTER = 1,
  DGSAN_STATUS_INVALID_ARGUMENT = 2,
  DGSAN_STATUS_SHAPE = 3,
  DGSAN_STATUS_DOMAIN = 4,
  DGSAN_STATUS_NON_FINITE = 5,
  DGSAN_STATUS_CHECKPOINT = 6,
  DGSAN_STATUS_IO = 7,
  DGSAN_STATUS_DIVERGED = 8,
  DGSAN_STATUS_INTERNAL = 9,
} DgsanStatus;

// Recurrent language model loaded from a checkpoint.
typedef struct DgsanModel DgsanModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `cap > 0`) and returns the full message length.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t dgsan_last_error(char *buf, size_t cap);

// Loads a recurrent model checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `model` writable.
enum DgsanStatus dgsan_model_load(const char *path, struct DgsanModel **model);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`dgsan_model_load`] and not be used afterwards.
void dgsan_model_free(struct DgsanModel *model);

// # Safety
// `model` must be a live handle and `vocab_size` writable.
enum DgsanStatus dgsan_model_vocab_size(const struct DgsanModel *model, size_t *vocab_size);

// `ln q(x | c)`: log-probability of the tokens `x` following prefix `c`.
//
// # Safety
// Arrays must hold the given number of elements; `logprob` writable.
enum DgsanStatus dgsan_model_seq_logprob(const struct DgsanModel *model,
                                         const size_t *x,
                                         size_t x_len,
                                         const size_t *c,
                                         size_t c_len,
                                         double *logprob);

// Draws `len` tokens after prefix `c` at `temperature` into `tokens`.
//
// # Safety
// `tokens` must have room for `len` values; `c` must hold `c_len`.
enum DgsanStatus dgsan_model_sample(const struct DgsanModel *model,
                                    const size_t *c,
                                    size_t c_len,
                                    size_t len,
                                    double temperature,
                                    uint64_t seed,
                                    size_t *tokens);

// Self-adversarial loss from per-example log-probabilities of the new and
// old generators on a real and a fake batch.
//
// # Safety
// Real arrays must hold `n_real` values, fake arrays `n_fake`.
enum DgsanStatus dgsan_loss(const double *new_real,
                            const double *old_real,
                            size_t n_real,
                            const double *new_fake,
                            const double *old_fake,
                            size_t n_fake,
                            double *value);

// `q_new / (q_new + q_old)` from log-probabilities.
double dgsan_implied_discriminator(double logq_new, double logq_old);

// Jensen-Shannon divergence in nats.
//
// # Safety
// `p` and `q` must hold `n` values.
enum DgsanStatus dgsan_js_divergence(const double *p, const double *q, size_t n, double *value);

// Residual of the JS decomposition into the lower-bound objective plus
// an expected Bregman divergence, for both ratio orientations.
//
// # Safety
// The three distributions must hold `n` values.
enum DgsanStatus dgsan_verify_decomposition(const double *p,
                                            const double *q_old,
                                            const double *q_theta,
                                            size_t n,
                                            double *residual);

// Residual of the conjugate form of the same decomposition for the named
// generator (`js`, `kl`, `revkl`, `chi2`).
//
// # Safety
// `f_name` must be NUL-terminated; distributions must hold `n` values.
enum DgsanStatus dgsan_verify_conjugate(const char *f_name,
                                        const double *p,
                                        const double *q_old,
                                        const double *q_theta,
                                        size_t n,
                                        double *residual);

// `D_f(P‖Q_old) − D_f(P‖Q_θ)` and whether `Q_θ` lies strictly between
// `Q_old` and `P` at every coordinate, or equals both where they agree
// (1), or not (0).
//
// # Safety
// `f_name` must be NUL-terminated; distributions must hold `n` values.
enum DgsanStatus dgsan_verify_monotone(const char *f_name,
                                       const double *p,
                                       const double *q_old,
                                       const double *q_theta,
                                       size_t n,
                                       double *delta,
                                       int32_t *between);

// Runs a named verification suite; `passed` is 1 when every instance met
// its threshold and `worst` receives the extreme recorded value.
//
// # Safety
// `suite` must be NUL-terminated; outputs writable.
enum DgsanStatus dgsan_verify_suite(const char *suite,
                                    size_t trials,
                                    uint64_t seed,
                                    size_t dim,
                                    int32_t *passed,
                                    double *worst);

// Mean sentence BLEU-`n` of candidates against the reference set.
//
// # Safety
// Each sentence set must be laid out as described in the crate docs.
enum DgsanStatus dgsan_bleu(const size_t *cand_tokens,
                            const size_t *cand_lens,
                            size_t n_cand,
                            const size_t *ref_tokens,
                            const size_t *ref_lens,
                            size_t n_ref,
                            size_t n,
                            double *value);

// BLEU-`n` of the test sentences with the generated ones as references.
//
// # Safety
// Each sentence set must be laid out as described in the crate docs.
enum DgsanStatus dgsan_backward_bleu(const size_t *test_tokens,
                                     const size_t *test_lens,
                                     size_t n_test,
                                     const size_t *gen_tokens,
                                     const size_t *gen_lens,
                                     size_t n_gen,
                                     size_t n,
                                     double *value);

// Multiset Jaccard similarity, geometric mean over orders `1..=k`.
//
// # Safety
// Each sentence set must be laid out as described in the crate docs.
enum DgsanStatus dgsan_ms_jaccard(const size_t *a_tokens,
                                  const size_t *a_lens,
                                  size_t n_a,
                                  const size_t *b_tokens,
                                  const size_t *b_lens,
                                  size_t n_b,
                                  size_t k,
                                  double *value);

// Fréchet distance between diagonal Gaussians over projected n-gram
// features, with projection dimension `dim`.
//
// # Safety
// Each sentence set must be laid out as described in the crate docs.
enum DgsanStatus dgsan_frechet_feature_distance(const size_t *real_tokens,
                                                const size_t *real_lens,
                                                size_t n_real,
                                                const size_t *gen_tokens,
                                                const size_t *gen_lens,
                                                size_t n_gen,
                                                size_t dim,
                                                uint64_t seed,
                                                double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGSAN_H */
