//! C interface to the dgsan library.
//!
//! Every function returns a [`DgsanStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read
//! with [`dgsan_last_error`]. Models are opaque handles created by
//! [`dgsan_model_load`] and released with [`dgsan_model_free`].
//!
//! Sentence sets are passed flattened: `tokens` holds every sentence back
//! to back and `lens[i]` is the length of sentence `i`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use dgsan::dgsan::{dgsan_loss as loss, implied_discriminator};
use dgsan::divergences::{js_divergence, verify_monotone_decrease, verify_theorem1, verify_theorem3, FGenerator, FiniteTriple};
use dgsan::metrics::{backward_bleu_n, bleu_n, frechet_feature_distance, ms_jaccard};
use dgsan::models::{read_checkpoint, RecurrentLM};
use dgsan::rng::rng_for;
use dgsan::verify::{run_suite, Suite};
use dgsan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgsanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Domain = 4,
    NonFinite = 5,
    Checkpoint = 6,
    Io = 7,
    Diverged = 8,
    Internal = 9,
}

/// Recurrent language model loaded from a checkpoint.
pub struct DgsanModel {
    inner: RecurrentLM,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DgsanStatus {
    match e {
        Error::Shape { .. } | Error::IdOutOfRange { .. } => DgsanStatus::Shape,
        Error::Domain { .. } => DgsanStatus::Domain,
        Error::NonFinite(_) => DgsanStatus::NonFinite,
        Error::Checkpoint(_) => DgsanStatus::Checkpoint,
        Error::Io { .. } => DgsanStatus::Io,
        Error::Diverged { .. } => DgsanStatus::Diverged,
        _ => DgsanStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DgsanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DgsanStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DgsanStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            DgsanStatus::Internal
        }
    }
}

/// Slice from a pointer and length; a null pointer is allowed when `len == 0`.
unsafe fn view<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not UTF-8")).into())
}

unsafe fn sentences(tokens: *const usize, lens: *const usize, count: usize) -> Result<Vec<Vec<usize>>, Fail> {
    let lens = view(lens, count, "lens")?;
    let total = lens.iter().try_fold(0usize, |a, &l| a.checked_add(l));
    let total = total.ok_or_else(|| Error::InvalidArgument("sentence lengths overflow".into()))?;
    let flat = view(tokens, total, "tokens")?;
    let mut out = Vec::with_capacity(count);
    let mut at = 0;
    for &l in lens {
        out.push(flat[at..at + l].to_vec());
        at += l;
    }
    Ok(out)
}

fn generator(name: &str) -> Result<FGenerator, Fail> {
    FGenerator::by_name(name).ok_or_else(|| Error::InvalidArgument(format!("unknown generator '{name}'")).into())
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `cap > 0`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dgsan_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a recurrent model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `model` writable.
#[no_mangle]
pub unsafe extern "C" fn dgsan_model_load(path: *const c_char, model: *mut *mut DgsanModel) -> DgsanStatus {
    guard(|| {
        let slot = out(model, "model")?;
        *slot = ptr::null_mut();
        let path = text(path, "path")?;
        let inner = RecurrentLM::from_params(read_checkpoint(Path::new(path))?)?;
        *slot = Box::into_raw(Box::new(DgsanModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`dgsan_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dgsan_model_free(model: *mut DgsanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `vocab_size` writable.
#[no_mangle]
pub unsafe extern "C" fn dgsan_model_vocab_size(model: *const DgsanModel, vocab_size: *mut usize) -> DgsanStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        *out(vocab_size, "vocab_size")? = m.inner.vocab_size();
        Ok(())
    })
}

/// `ln q(x | c)`: log-probability of the tokens `x` following prefix `c`.
///
/// # Safety
/// Arrays must hold the given number of elements; `logprob` writable.
#[no_mangle]
pub unsafe extern "C" fn dgsan_model_seq_logprob(
    model: *const DgsanModel,
    x: *const usize,
    x_len: usize,
    c: *const usize,
    c_len: usize,
    logprob: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        let (x, c) = (view(x, x_len, "x")?, view(c, c_len, "c")?);
        let slot = out(logprob, "logprob")?;
        *slot = m.inner.seq_logprob(x, c)?;
        Ok(())
    })
}

/// Draws `len` tokens after prefix `c` at `temperature` into `tokens`.
///
/// # Safety
/// `tokens` must have room for `len` values; `c` must hold `c_len`.
#[no_mangle]
pub unsafe extern "C" fn dgsan_model_sample(
    model: *const DgsanModel,
    c: *const usize,
    c_len: usize,
    len: usize,
    temperature: f64,
    seed: u64,
    tokens: *mut usize,
) -> DgsanStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        let c = view(c, c_len, "c")?;
        if tokens.is_null() {
            return Err(Fail::Null("tokens"));
        }
        let s = m.inner.seq_sample(c, len, temperature, &mut rng_for(seed, "ffi.sample"))?;
        slice::from_raw_parts_mut(tokens, len).copy_from_slice(&s);
        Ok(())
    })
}

/// Self-adversarial loss from per-example log-probabilities of the new and
/// old generators on a real and a fake batch.
///
/// # Safety
/// Real arrays must hold `n_real` values, fake arrays `n_fake`.
#[no_mangle]
pub unsafe extern "C" fn dgsan_loss(
    new_real: *const f64,
    old_real: *const f64,
    n_real: usize,
    new_fake: *const f64,
    old_fake: *const f64,
    n_fake: usize,
    value: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let v = loss(
            view(new_real, n_real, "new_real")?,
            view(old_real, n_real, "old_real")?,
            view(new_fake, n_fake, "new_fake")?,
            view(old_fake, n_fake, "old_fake")?,
        )?;
        *out(value, "value")? = v;
        Ok(())
    })
}

/// `q_new / (q_new + q_old)` from log-probabilities.
#[no_mangle]
pub extern "C" fn dgsan_implied_discriminator(logq_new: f64, logq_old: f64) -> f64 {
    implied_discriminator(logq_new, logq_old)
}

/// Jensen-Shannon divergence in nats.
///
/// # Safety
/// `p` and `q` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dgsan_js_divergence(p: *const f64, q: *const f64, n: usize, value: *mut f64) -> DgsanStatus {
    guard(|| {
        let (p, q) = (view(p, n, "p")?, view(q, n, "q")?);
        *out(value, "value")? = js_divergence(p, q);
        Ok(())
    })
}

unsafe fn triple(p: *const f64, q_old: *const f64, q_theta: *const f64, n: usize) -> Result<FiniteTriple, Fail> {
    Ok(FiniteTriple::new(
        view(p, n, "p")?.to_vec(),
        view(q_old, n, "q_old")?.to_vec(),
        view(q_theta, n, "q_theta")?.to_vec(),
    )?)
}

/// Residual of the JS decomposition into the lower-bound objective plus
/// an expected Bregman divergence, for both ratio orientations.
///
/// # Safety
/// The three distributions must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dgsan_verify_decomposition(
    p: *const f64,
    q_old: *const f64,
    q_theta: *const f64,
    n: usize,
    residual: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let r = verify_theorem1(&triple(p, q_old, q_theta, n)?)?;
        *out(residual, "residual")? = r.residual;
        Ok(())
    })
}

/// Residual of the conjugate form of the same decomposition for the named
/// generator (`js`, `kl`, `revkl`, `chi2`).
///
/// # Safety
/// `f_name` must be NUL-terminated; distributions must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dgsan_verify_conjugate(
    f_name: *const c_char,
    p: *const f64,
    q_old: *const f64,
    q_theta: *const f64,
    n: usize,
    residual: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let f = generator(text(f_name, "f_name")?)?;
        let r = verify_theorem3(&f, &triple(p, q_old, q_theta, n)?)?;
        *out(residual, "residual")? = r;
        Ok(())
    })
}

/// `D_f(P‖Q_old) − D_f(P‖Q_θ)` and whether `Q_θ` lies strictly between
/// `Q_old` and `P` at every coordinate, or equals both where they agree
/// (1), or not (0).
///
/// # Safety
/// `f_name` must be NUL-terminated; distributions must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dgsan_verify_monotone(
    f_name: *const c_char,
    p: *const f64,
    q_old: *const f64,
    q_theta: *const f64,
    n: usize,
    delta: *mut f64,
    between: *mut i32,
) -> DgsanStatus {
    guard(|| {
        let f = generator(text(f_name, "f_name")?)?;
        let c = verify_monotone_decrease(&f, &triple(p, q_old, q_theta, n)?)?;
        *out(delta, "delta")? = c.delta;
        *out(between, "between")? = c.hypothesis_held as i32;
        Ok(())
    })
}

/// Runs a named verification suite; `passed` is 1 when every instance met
/// its threshold and `worst` receives the extreme recorded value.
///
/// # Safety
/// `suite` must be NUL-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn dgsan_verify_suite(
    suite: *const c_char,
    trials: usize,
    seed: u64,
    dim: usize,
    passed: *mut i32,
    worst: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let s: Suite = text(suite, "suite")?.parse()?;
        let o = run_suite(s, trials, seed, dim)?;
        *out(passed, "passed")? = o.passed() as i32;
        *out(worst, "worst")? = o.worst().map_or(f64::NAN, |r| r.value);
        Ok(())
    })
}

/// Mean sentence BLEU-`n` of candidates against the reference set.
///
/// # Safety
/// Each sentence set must be laid out as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn dgsan_bleu(
    cand_tokens: *const usize,
    cand_lens: *const usize,
    n_cand: usize,
    ref_tokens: *const usize,
    ref_lens: *const usize,
    n_ref: usize,
    n: usize,
    value: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let c = sentences(cand_tokens, cand_lens, n_cand)?;
        let r = sentences(ref_tokens, ref_lens, n_ref)?;
        *out(value, "value")? = bleu_n(&c, &r, n)?;
        Ok(())
    })
}

/// BLEU-`n` of the test sentences with the generated ones as references.
///
/// # Safety
/// Each sentence set must be laid out as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn dgsan_backward_bleu(
    test_tokens: *const usize,
    test_lens: *const usize,
    n_test: usize,
    gen_tokens: *const usize,
    gen_lens: *const usize,
    n_gen: usize,
    n: usize,
    value: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let t = sentences(test_tokens, test_lens, n_test)?;
        let g = sentences(gen_tokens, gen_lens, n_gen)?;
        *out(value, "value")? = backward_bleu_n(&t, &g, n)?;
        Ok(())
    })
}

/// Multiset Jaccard similarity, geometric mean over orders `1..=k`.
///
/// # Safety
/// Each sentence set must be laid out as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn dgsan_ms_jaccard(
    a_tokens: *const usize,
    a_lens: *const usize,
    n_a: usize,
    b_tokens: *const usize,
    b_lens: *const usize,
    n_b: usize,
    k: usize,
    value: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let a = sentences(a_tokens, a_lens, n_a)?;
        let b = sentences(b_tokens, b_lens, n_b)?;
        *out(value, "value")? = ms_jaccard(&a, &b, k)?;
        Ok(())
    })
}

/// Fréchet distance between diagonal Gaussians over projected n-gram
/// features, with projection dimension `dim`.
///
/// # Safety
/// Each sentence set must be laid out as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn dgsan_frechet_feature_distance(
    real_tokens: *const usize,
    real_lens: *const usize,
    n_real: usize,
    gen_tokens: *const usize,
    gen_lens: *const usize,
    n_gen: usize,
    dim: usize,
    seed: u64,
    value: *mut f64,
) -> DgsanStatus {
    guard(|| {
        let r = sentences(real_tokens, real_lens, n_real)?;
        let g = sentences(gen_tokens, gen_lens, n_gen)?;
        *out(value, "value")? = frechet_feature_distance(&r, &g, dim, seed)?;
        Ok(())
    })
}
