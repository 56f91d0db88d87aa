//! C ABI over the `bcos` optimizers, schedules and noisy quadratic.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`BcosStatus`]; the message of the last
//! failure on the calling thread is available from [`bcos_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use bcos::optim::{Algorithm, Optimizer, OptimizerConfig};
use bcos::problems::{NoisyQuadratic, StochasticProblem};
use bcos::rng::{stream, Purpose, StreamRng};
use bcos::schedules::{ScheduleKind, StepSchedule};
use bcos::vector::BlockPartition;
use bcos::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    NonFinite = 4,
    DecayTooLarge = 5,
    Unsupported = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcosAlgorithm {
    Sgd = 0,
    SgdMomentum = 1,
    SignSgd = 2,
    SignMomentum = 3,
    BcosG = 4,
    BcosM = 5,
    BcosC = 6,
    Adam = 7,
}

impl From<BcosAlgorithm> for Algorithm {
    fn from(a: BcosAlgorithm) -> Self {
        match a {
            BcosAlgorithm::Sgd => Algorithm::Sgd,
            BcosAlgorithm::SgdMomentum => Algorithm::SgdMomentum,
            BcosAlgorithm::SignSgd => Algorithm::SignSgd,
            BcosAlgorithm::SignMomentum => Algorithm::SignMomentum,
            BcosAlgorithm::BcosG => Algorithm::BcosG,
            BcosAlgorithm::BcosM => Algorithm::BcosM,
            BcosAlgorithm::BcosC => Algorithm::BcosC,
            BcosAlgorithm::Adam => Algorithm::Adam,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcosScheduleKind {
    Constant = 0,
    InverseTime = 1,
    Power = 2,
    WarmupCosine = 3,
    WarmupLinear = 4,
}

impl From<BcosScheduleKind> for ScheduleKind {
    fn from(k: BcosScheduleKind) -> Self {
        match k {
            BcosScheduleKind::Constant => ScheduleKind::Constant,
            BcosScheduleKind::InverseTime => ScheduleKind::InverseTime,
            BcosScheduleKind::Power => ScheduleKind::Power,
            BcosScheduleKind::WarmupCosine => ScheduleKind::WarmupCosine,
            BcosScheduleKind::WarmupLinear => ScheduleKind::WarmupLinear,
        }
    }
}

/// Optimizer settings passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BcosOptimizerConfig {
    pub algorithm: BcosAlgorithm,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// True applies weight decay to the iterate instead of the gradient.
    pub decoupled: bool,
}

/// Opaque optimizer handle.
pub struct BcosOptimizer {
    inner: Optimizer,
}

/// Opaque noisy quadratic with its own gradient-noise stream.
pub struct BcosQuadratic {
    problem: NoisyQuadratic,
    rng: StreamRng,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BcosStatus {
    match e {
        Error::LengthMismatch { .. } => BcosStatus::LengthMismatch,
        Error::NonFinite { .. } => BcosStatus::NonFinite,
        Error::DecayTooLarge(_) => BcosStatus::DecayTooLarge,
        Error::MissingOracle | Error::MissingTarget => BcosStatus::Unsupported,
        _ => BcosStatus::InvalidArgument,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (BcosStatus, String)>) -> BcosStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            BcosStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            BcosStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (BcosStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (BcosStatus, String) {
    (BcosStatus::NullPointer, format!("`{name}` is null"))
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a>(
    ptr: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], (BcosStatus, String)> {
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bcos_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bcos_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Defaults for `algorithm`: beta1 0.9, beta2 0.99, epsilon 1e-6, no decay.
#[no_mangle]
pub extern "C" fn bcos_optimizer_config_default(algorithm: BcosAlgorithm) -> BcosOptimizerConfig {
    BcosOptimizerConfig {
        algorithm,
        beta1: 0.9,
        beta2: 0.99,
        epsilon: 1e-6,
        weight_decay: 0.0,
        decoupled: true,
    }
}

/// Creates an optimizer over `dim` parameters in blocks of `block_size`.
///
/// # Safety
/// `config` must point to a valid config and `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn bcos_optimizer_new(
    config: *const BcosOptimizerConfig,
    dim: usize,
    block_size: usize,
    out: *mut *mut BcosOptimizer,
) -> BcosStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = OptimizerConfig::new(c.algorithm.into())
            .with_betas(c.beta1, c.beta2)
            .with_epsilon(c.epsilon)
            .with_weight_decay(c.weight_decay, c.decoupled);
        let partition = BlockPartition::uniform(dim, block_size).map_err(lib_err)?;
        let inner = Optimizer::new(cfg, Arc::new(partition)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BcosOptimizer { inner }));
        Ok(())
    })
}

/// One step `x <- x - alpha * update(g)` in place. On error `x` is unchanged.
///
/// # Safety
/// `opt` must come from [`bcos_optimizer_new`]; `x` and `g` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn bcos_optimizer_step(
    opt: *mut BcosOptimizer,
    x: *mut f64,
    g: *const f64,
    len: usize,
    alpha: f64,
) -> BcosStatus {
    guard(|| {
        let opt = opt.as_mut().ok_or_else(|| null("opt"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        let g = slice(g, len, "g")?;
        let x = std::slice::from_raw_parts_mut(x, len);
        opt.inner.step_slice(x, g, alpha).map_err(lib_err)
    })
}

/// Number of steps taken, or 0 for a null handle.
///
/// # Safety
/// `opt` must be null or come from [`bcos_optimizer_new`].
#[no_mangle]
pub unsafe extern "C" fn bcos_optimizer_steps(opt: *const BcosOptimizer) -> u64 {
    opt.as_ref().map_or(0, |o| o.inner.state().t)
}

/// # Safety
/// `opt` must be null or come from [`bcos_optimizer_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bcos_optimizer_free(opt: *mut BcosOptimizer) {
    if !opt.is_null() {
        drop(Box::from_raw(opt));
    }
}

/// Stepsize at step `t` of a schedule.
///
/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn bcos_schedule_value(
    kind: BcosScheduleKind,
    alpha: f64,
    power: f64,
    warmup_steps: usize,
    total_steps: usize,
    alpha_min_ratio: f64,
    t: usize,
    out: *mut f64,
) -> BcosStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = StepSchedule::build(
            kind.into(),
            alpha,
            power,
            warmup_steps,
            total_steps,
            alpha_min_ratio,
        )
        .map_err(lib_err)?;
        *out = s.value_at(t);
        Ok(())
    })
}

/// `n + λ² ‖x*‖² + 2λ ‖x*‖₁` over `n` blocks.
///
/// # Safety
/// `x_star` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bcos_b_star(
    n_blocks: usize,
    lambda: f64,
    x_star: *const f64,
    len: usize,
    out: *mut f64,
) -> BcosStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let xs = slice(x_star, len, "x_star")?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err((
                BcosStatus::InvalidArgument,
                format!("lambda must be nonnegative, got {lambda}"),
            ));
        }
        *out = bcos::analysis::b_star(n_blocks, lambda, xs);
        Ok(())
    })
}

/// Quadratic `½ Σ h_i (x_i − c_i)²` with gradient noise `h_i σ_i z`, z standard
/// normal, drawn from a stream seeded by `seed`.
///
/// # Safety
/// `h`, `sigma` and `center` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bcos_quadratic_new(
    h: *const f64,
    sigma: *const f64,
    center: *const f64,
    n: usize,
    seed: u64,
    out: *mut *mut BcosQuadratic,
) -> BcosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (h, sigma, center) = (
            slice(h, n, "h")?,
            slice(sigma, n, "sigma")?,
            slice(center, n, "center")?,
        );
        let partition = BlockPartition::singletons(n).map_err(lib_err)?;
        let problem = NoisyQuadratic::new(
            h.to_vec(),
            sigma.to_vec(),
            center.to_vec(),
            Arc::new(partition),
        )
        .map_err(lib_err)?;
        let rng = stream(seed, 0, Purpose::Gradient);
        *out = Box::into_raw(Box::new(BcosQuadratic { problem, rng }));
        Ok(())
    })
}

/// Draws a stochastic gradient at `x` into `g`.
///
/// # Safety
/// `q` must come from [`bcos_quadratic_new`]; `x` and `g` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn bcos_quadratic_sample_gradient(
    q: *mut BcosQuadratic,
    x: *const f64,
    g: *mut f64,
    len: usize,
) -> BcosStatus {
    guard(|| {
        let q = q.as_mut().ok_or_else(|| null("q"))?;
        let x = slice(x, len, "x")?;
        if g.is_null() {
            return Err(null("g"));
        }
        if len != q.problem.dim() {
            return Err(lib_err(Error::LengthMismatch {
                expected: q.problem.dim(),
                got: len,
            }));
        }
        let g = std::slice::from_raw_parts_mut(g, len);
        q.problem.sample_gradient_into(x, &mut q.rng, g);
        Ok(())
    })
}

/// Expected loss at `x`.
///
/// # Safety
/// `q` must come from [`bcos_quadratic_new`]; `x` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn bcos_quadratic_loss(
    q: *const BcosQuadratic,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> BcosStatus {
    guard(|| {
        let q = q.as_ref().ok_or_else(|| null("q"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = slice(x, len, "x")?;
        if len != q.problem.dim() {
            return Err(lib_err(Error::LengthMismatch {
                expected: q.problem.dim(),
                got: len,
            }));
        }
        *out = q.problem.loss(x);
        Ok(())
    })
}

/// # Safety
/// `q` must be null or come from [`bcos_quadratic_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bcos_quadratic_free(q: *mut BcosQuadratic) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}
