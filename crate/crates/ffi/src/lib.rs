//! C ABI over `ducct-core`.
//!
//! Every fallible call returns a [`DucctStatus`]. On failure the message is
//! kept per thread and can be read with [`ducct_last_error_message`].
//! Objects are handed out as opaque pointers and must be released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ducct_core::cli::ExperimentConfig;
use ducct_core::dynamics::{RobotState, StateBelief};
use ducct_core::metrics;
use ducct_core::mppi::{Controller, Variant};
use ducct_core::occupancy::{occ_prob, PositionBelief};
use ducct_core::prediction::GaussianTube;
use ducct_core::rng::{Purpose, StreamKey};
use ducct_core::sim::{run_episode, Regime, RunLog, RunSpec, Status};
use ducct_core::{Error, Mat2, Mat3, Vec2};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DucctStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    Consistency = 4,
    Config = 5,
    Contract = 6,
    Io = 7,
    Serialization = 8,
    Panic = 9,
}

/// Outcome of a simulated episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DucctEpisodeStatus {
    Success = 0,
    Timeout = 1,
    Diverged = 2,
}

/// Robot state belief. `cov` is the row-major 3×3 covariance of (x, y, psi).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DucctBelief {
    pub mean: [f64; 3],
    pub cov: [f64; 9],
}

/// Predicted obstacle tube with `len` entries, starting at the current time.
/// `means` holds `2 * len` values (x, y pairs), `covs` holds `4 * len` values
/// (row-major 2×2 blocks).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DucctObstacleTube {
    pub means: *const f64,
    pub covs: *const f64,
    pub len: usize,
}

/// Result of one control cycle.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DucctCommand {
    pub v: f64,
    pub omega: f64,
    pub executed_risk: f64,
    pub all_rejected_fallback: u8,
}

/// One logged simulation step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DucctStep {
    pub t: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_psi: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_psi: f64,
    pub sigma_xx: f64,
    pub sigma_xy: f64,
    pub sigma_yy: f64,
    pub sigma_psipsi: f64,
    pub cmd_v: f64,
    pub cmd_w: f64,
    pub executed_risk: f64,
    pub collision: u8,
    pub min_ped_dist: f64,
    pub robot_social_force: f64,
    pub all_rejected_flag: u8,
}

/// Opaque controller handle.
pub struct DucctController {
    inner: Controller,
}

/// Opaque handle to a finished episode log.
pub struct DucctEpisode {
    log: RunLog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(DucctStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidState(_) => DucctStatus::InvalidState,
            Error::Consistency(_) => DucctStatus::Consistency,
            Error::Config(_) => DucctStatus::Config,
            Error::Contract(_) => DucctStatus::Contract,
            Error::Io(_) => DucctStatus::Io,
            Error::Serde(_) => DucctStatus::Serialization,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DucctStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DucctStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DucctStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DucctStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("panic: {msg}"));
            DucctStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn config_arg(p: *const c_char) -> Result<ExperimentConfig, Fail> {
    let text = if p.is_null() { "" } else { str_arg(p, "config")? };
    Ok(ExperimentConfig::from_toml_str(text, &[])?)
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, Fail>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| invalid(format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ducct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ducct_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a controller. `variant` is one of "vanilla", "dra", "ducct".
/// `config_toml` may be NULL for defaults; only the `mppi`, `risk` and `ut`
/// sections affect the controller.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_controller_new(
    variant: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut DucctController,
) -> DucctStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let variant: Variant = parse(str_arg(variant, "variant")?, "variant")?;
        let cfg = config_arg(config_toml)?;
        let inner = Controller::new(cfg.episode().settings(variant))?;
        *out = Box::into_raw(Box::new(DucctController { inner }));
        Ok(())
    })
}

/// Releases a controller. NULL is ignored.
///
/// # Safety
/// `ctrl` must come from [`ducct_controller_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ducct_controller_free(ctrl: *mut DucctController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// Planning horizon in steps. Obstacle tubes need at least `horizon + 1` entries.
///
/// # Safety
/// `ctrl` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_controller_horizon(ctrl: *const DucctController, out: *mut usize) -> DucctStatus {
    guard(|| {
        let ctrl = ctrl.as_ref().ok_or_else(|| null("ctrl"))?;
        *out_arg(out, "out")? = ctrl.inner.settings().mppi.horizon;
        Ok(())
    })
}

/// Runs one control cycle and keeps the shifted plan as the next warm start.
/// `seed` and `cycle` key the random streams, so equal inputs reproduce the
/// same command.
///
/// # Safety
/// `ctrl` must be a live handle, `belief` readable, `tubes` must point to
/// `n_tubes` valid descriptors (may be NULL when `n_tubes` is 0) and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_controller_cycle(
    ctrl: *mut DucctController,
    belief: *const DucctBelief,
    tubes: *const DucctObstacleTube,
    n_tubes: usize,
    goal_x: f64,
    goal_y: f64,
    seed: u64,
    cycle: u64,
    out: *mut DucctCommand,
) -> DucctStatus {
    guard(|| {
        let ctrl = ctrl.as_mut().ok_or_else(|| null("ctrl"))?;
        let b = belief.as_ref().ok_or_else(|| null("belief"))?;
        let out = out_arg(out, "out")?;
        let belief = StateBelief::new(
            RobotState::new(b.mean[0], b.mean[1], b.mean[2]),
            Mat3::from_row_slice(&b.cov),
        )?;
        let tubes = slice_arg(tubes, n_tubes, "tubes")?
            .iter()
            .enumerate()
            .map(|(i, t)| tube_from_raw(t, i))
            .collect::<Result<Vec<_>, Fail>>()?;
        let key = StreamKey::new(seed, Purpose::ControlNoise).cycle(cycle);
        let res = ctrl.inner.cycle(&belief, &tubes, Vec2::new(goal_x, goal_y), key)?;
        *out = DucctCommand {
            v: res.command.v,
            omega: res.command.omega,
            executed_risk: res.executed_risk,
            all_rejected_fallback: res.all_rejected_fallback as u8,
        };
        Ok(())
    })
}

unsafe fn tube_from_raw(t: &DucctObstacleTube, i: usize) -> Result<GaussianTube, Fail> {
    if t.len == 0 {
        return Err(invalid(format!("tube {i} is empty")));
    }
    let m = slice_arg(t.means, 2 * t.len, "tube means")?;
    let c = slice_arg(t.covs, 4 * t.len, "tube covs")?;
    Ok(GaussianTube {
        means: m.chunks_exact(2).map(|p| Vec2::new(p[0], p[1])).collect(),
        covs: c.chunks_exact(4).map(Mat2::from_row_slice).collect(),
    })
}

/// Runs a full closed-loop episode. Names follow the CLI: scenario
/// "c3p3"/"c6p6"/"c9p9"/"empty", variant "vanilla"/"dra"/"ducct", regimes
/// "standard"/"under"/"over". `config_toml` may be NULL for defaults.
///
/// # Safety
/// String arguments must be NUL-terminated (config may be NULL); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_run(
    scenario: *const c_char,
    variant: *const c_char,
    loc: *const c_char,
    pred: *const c_char,
    seed: u64,
    config_toml: *const c_char,
    out: *mut *mut DucctEpisode,
) -> DucctStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = RunSpec {
            scenario: str_arg(scenario, "scenario")?.to_string(),
            variant: parse(str_arg(variant, "variant")?, "variant")?,
            loc: parse::<Regime>(str_arg(loc, "loc")?, "loc")?,
            pred: parse::<Regime>(str_arg(pred, "pred")?, "pred")?,
            seed,
        };
        let cfg = config_arg(config_toml)?;
        let log = run_episode(&spec, &cfg.episode())?;
        *out = Box::into_raw(Box::new(DucctEpisode { log }));
        Ok(())
    })
}

/// Releases an episode. NULL is ignored.
///
/// # Safety
/// `ep` must come from [`ducct_episode_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_free(ep: *mut DucctEpisode) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

/// # Safety
/// `ep` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_status(ep: *const DucctEpisode, out: *mut DucctEpisodeStatus) -> DucctStatus {
    guard(|| {
        let ep = ep.as_ref().ok_or_else(|| null("ep"))?;
        *out_arg(out, "out")? = match ep.log.status {
            Status::Success => DucctEpisodeStatus::Success,
            Status::Timeout => DucctEpisodeStatus::Timeout,
            Status::Diverged => DucctEpisodeStatus::Diverged,
        };
        Ok(())
    })
}

/// Number of logged steps.
///
/// # Safety
/// `ep` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_len(ep: *const DucctEpisode, out: *mut usize) -> DucctStatus {
    guard(|| {
        let ep = ep.as_ref().ok_or_else(|| null("ep"))?;
        *out_arg(out, "out")? = ep.log.steps.len();
        Ok(())
    })
}

/// Copies step `index` into `out`.
///
/// # Safety
/// `ep` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_step(ep: *const DucctEpisode, index: usize, out: *mut DucctStep) -> DucctStatus {
    guard(|| {
        let ep = ep.as_ref().ok_or_else(|| null("ep"))?;
        let out = out_arg(out, "out")?;
        let s = ep
            .log
            .steps
            .get(index)
            .ok_or_else(|| invalid(format!("step {index} out of range ({} steps)", ep.log.steps.len())))?;
        *out = DucctStep {
            t: s.t,
            true_x: s.true_x,
            true_y: s.true_y,
            true_psi: s.true_psi,
            est_x: s.est_x,
            est_y: s.est_y,
            est_psi: s.est_psi,
            sigma_xx: s.sigma_xx,
            sigma_xy: s.sigma_xy,
            sigma_yy: s.sigma_yy,
            sigma_psipsi: s.sigma_psipsi,
            cmd_v: s.cmd_v,
            cmd_w: s.cmd_w,
            executed_risk: s.executed_risk,
            collision: s.collision,
            min_ped_dist: s.min_ped_dist,
            robot_social_force: s.robot_social_force,
            all_rejected_flag: s.all_rejected_flag,
        };
        Ok(())
    })
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, the same files the CLI
/// produces.
///
/// # Safety
/// `ep` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ducct_episode_write(ep: *const DucctEpisode, dir: *const c_char) -> DucctStatus {
    guard(|| {
        let ep = ep.as_ref().ok_or_else(|| null("ep"))?;
        let dir = str_arg(dir, "dir")?;
        ep.log.write(Path::new(dir))?;
        Ok(())
    })
}

/// Probability that `query` is covered by a square footprint of half side
/// `half_side` whose centre is Gaussian with `mean` and row-major 2×2 `cov`.
///
/// # Safety
/// `query` and `mean` must point to 2 values, `cov` to 4, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_occ_prob(
    query: *const f64,
    mean: *const f64,
    cov: *const f64,
    half_side: f64,
    out: *mut f64,
) -> DucctStatus {
    guard(|| {
        let q = slice_arg(query, 2, "query")?;
        let m = slice_arg(mean, 2, "mean")?;
        let c = slice_arg(cov, 4, "cov")?;
        let out = out_arg(out, "out")?;
        let belief = PositionBelief::new(Vec2::new(m[0], m[1]), Mat2::from_row_slice(c));
        *out = occ_prob(Vec2::new(q[0], q[1]), &belief, half_side)?;
        Ok(())
    })
}

unsafe fn pairs<'a>(preds: *const f64, outcomes: *const u8, n: usize) -> Result<(&'a [f64], Vec<bool>), Fail> {
    let p = slice_arg(preds, n, "preds")?;
    let o = slice_arg(outcomes, n, "outcomes")?.iter().map(|&b| b != 0).collect();
    Ok((p, o))
}

/// Brier score of `n` predicted probabilities against 0/1 outcomes.
///
/// # Safety
/// `preds` and `outcomes` must point to `n` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_brier(preds: *const f64, outcomes: *const u8, n: usize, out: *mut f64) -> DucctStatus {
    guard(|| {
        let (p, o) = pairs(preds, outcomes, n)?;
        *out_arg(out, "out")? = metrics::brier(p, &o)?;
        Ok(())
    })
}

/// Log loss with predictions clipped to `[eps, 1 - eps]`. Pass `eps <= 0` for
/// the library default.
///
/// # Safety
/// `preds` and `outcomes` must point to `n` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ducct_log_loss(
    preds: *const f64,
    outcomes: *const u8,
    n: usize,
    eps: f64,
    out: *mut f64,
) -> DucctStatus {
    guard(|| {
        let (p, o) = pairs(preds, outcomes, n)?;
        let eps = if eps > 0.0 { eps } else { metrics::DEFAULT_LL_EPS };
        *out_arg(out, "out")? = metrics::log_loss(p, &o, eps)?;
        Ok(())
    })
}
