//! C interface to the `mcload` allocators.
//!
//! Every fallible call returns a [`McloadStatus`]; on failure the message is kept per
//! thread and read back with [`mcload_last_error`]. Handles are opaque and owned by the
//! caller once returned, so each `*_new`/producing call pairs with its `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mcload::bitpower_moop::{allocate_discrete, BerTargets, LinearCap, MoopWeights};
use mcload::channel::{sample_rayleigh_channel, ChannelRealization, OfdmConfig};
use mcload::config::ExperimentConfig;
use mcload::cr_bitpower::{allocate_cr, CrCaps};
use mcload::ee_dinkelbach::{dinkelbach_solve, EeConfig, UncertainChannel};
use mcload::harness::{run_experiment, run_experiment_with_workers, write_csv};
use mcload::oracle::exhaustive_search;
use mcload::rng::substream;
use mcload::{Allocation, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McloadStatus {
    Ok = 0,
    NullPointer = 1,
    /// An argument is outside the model's domain.
    Domain = 2,
    /// No allocation meets the constraints.
    Infeasible = 3,
    Unbounded = 4,
    /// The exhaustive search space is too large.
    SearchSize = 5,
    /// Malformed experiment configuration.
    Config = 6,
    NoConvergence = 7,
    /// A caller buffer is shorter than the data.
    BufferTooSmall = 8,
    /// Internal failure; the message has details.
    Panic = 9,
}

/// Weights and targets of the power/bits objective.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McloadLoadingParams {
    /// Weight on power in [0, 1]; bits get `1 - alpha`.
    pub alpha: f64,
    /// Power normalization (W).
    pub u_power: f64,
    /// Bits normalization.
    pub u_bits: f64,
    /// Per-subcarrier BER target.
    pub ber_th: f64,
    pub b_max: u32,
}

/// Energy-efficiency model and solver settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct McloadEeParams {
    pub est_var: f64,
    pub path_gain: f64,
    pub noise_var: f64,
    pub spacing_hz: f64,
    pub kappa: f64,
    pub circuit_power_w: f64,
    /// Minimum rate (bit/s); 0 for none.
    pub rate_floor: f64,
    pub tol: f64,
}

/// Channel realization (per-subcarrier CNR).
pub struct McloadChannel(ChannelRealization);

/// Integer bit allocation with powers.
pub struct McloadAllocation(Allocation);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> McloadStatus {
    match e {
        Error::Domain(_) => McloadStatus::Domain,
        Error::Infeasible(_) => McloadStatus::Infeasible,
        Error::Unbounded(_) => McloadStatus::Unbounded,
        Error::SearchSize(_) => McloadStatus::SearchSize,
        Error::Config(_) => McloadStatus::Config,
        Error::NoConvergence(_) => McloadStatus::NoConvergence,
    }
}

/// Error raised inside a wrapper before any library call.
struct Fail(McloadStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(McloadStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, turning errors and panics into a status and the thread's error message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> McloadStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => McloadStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            McloadStatus::Panic
        }
    }
}

/// # Safety
/// `data` must point to `len` readable values when `len > 0`.
unsafe fn view<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        Ok(&[])
    } else if data.is_null() {
        Err(null(what))
    } else {
        Ok(slice::from_raw_parts(data, len))
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn weights_targets(p: &McloadLoadingParams, n: usize) -> Result<(MoopWeights, BerTargets), Fail> {
    Ok((MoopWeights::new(p.alpha, p.u_power, p.u_bits)?, BerTargets::uniform(n, p.ber_th)?))
}

/// Message of the last failed call on this thread; empty if none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcload_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcload_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Channel from `n` carrier-to-noise ratios.
///
/// # Safety
/// `cnr` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcload_channel_from_cnr(cnr: *const f64, n: usize, out: *mut *mut McloadChannel) -> McloadStatus {
    guard(|| {
        let cnr = view(cnr, n, "cnr")?;
        emit(out, McloadChannel(ChannelRealization::from_cnr(cnr.to_vec())?))
    })
}

/// Rayleigh-faded channel with mean CNR `avg_cnr`, reproducible from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcload_channel_rayleigh(n: usize, avg_cnr: f64, seed: u64, out: *mut *mut McloadChannel) -> McloadStatus {
    guard(|| {
        let ofdm = OfdmConfig::new(n, 1.0)?;
        let mut rng = substream(seed, 0);
        emit(out, McloadChannel(sample_rayleigh_channel(&ofdm, avg_cnr, 1.0, &[], &mut rng)?))
    })
}

/// # Safety
/// `ch` must be a live channel handle or null.
#[no_mangle]
pub unsafe extern "C" fn mcload_channel_len(ch: *const McloadChannel) -> usize {
    ch.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the CNRs into `buf` of capacity `cap`.
///
/// # Safety
/// `ch` must be a live handle; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcload_channel_cnr(ch: *const McloadChannel, buf: *mut f64, cap: usize) -> McloadStatus {
    guard(|| copy_out(&deref(ch, "channel")?.0.cnr, buf, cap))
}

/// # Safety
/// `ch` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcload_channel_free(ch: *mut McloadChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize) -> Result<(), Fail> {
    if cap < src.len() {
        return Err(Fail(McloadStatus::BufferTooSmall, format!("need room for {} values, got {cap}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Integer loading under a total power budget (`INFINITY` for none).
///
/// # Safety
/// `ch` and `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocate(
    ch: *const McloadChannel,
    params: *const McloadLoadingParams,
    budget_w: f64,
    out: *mut *mut McloadAllocation,
) -> McloadStatus {
    guard(|| {
        let ch = &deref(ch, "channel")?.0;
        let p = deref(params, "params")?;
        let (w, t) = weights_targets(p, ch.len())?;
        emit(out, McloadAllocation(allocate_discrete(ch, &w, &t, p.b_max, budget_w)?))
    })
}

/// Integer loading under a co-channel power cap and `bands` adjacent-band caps.
/// `leakage` is row-major, `bands` rows of one weight per subcarrier.
///
/// # Safety
/// `aci_caps` must hold `bands` doubles and `leakage` `bands * len(ch)`.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocate_cognitive(
    ch: *const McloadChannel,
    params: *const McloadLoadingParams,
    power_cap_w: f64,
    aci_caps_w: *const f64,
    leakage: *const f64,
    bands: usize,
    out: *mut *mut McloadAllocation,
) -> McloadStatus {
    guard(|| {
        let ch = &deref(ch, "channel")?.0;
        let p = deref(params, "params")?;
        let n = ch.len();
        let aci = view(aci_caps_w, bands, "aci_caps_w")?;
        let leak = view(leakage, bands * n, "leakage")?;
        let caps = CrCaps {
            power_cap_w,
            aci_caps_w: aci.to_vec(),
            leakage: leak.chunks(n.max(1)).map(<[f64]>::to_vec).collect(),
        };
        let (w, t) = weights_targets(p, n)?;
        emit(out, McloadAllocation(allocate_cr(ch, &w, &t, p.b_max, &caps)?))
    })
}

/// Exact integer optimum by exhaustive search under a total power budget; small `n` only.
///
/// # Safety
/// As [`mcload_allocate`].
#[no_mangle]
pub unsafe extern "C" fn mcload_oracle(
    ch: *const McloadChannel,
    params: *const McloadLoadingParams,
    budget_w: f64,
    out: *mut *mut McloadAllocation,
) -> McloadStatus {
    guard(|| {
        let ch = &deref(ch, "channel")?.0;
        let p = deref(params, "params")?;
        let (w, t) = weights_targets(p, ch.len())?;
        let caps: Vec<LinearCap> =
            if budget_w.is_finite() { vec![LinearCap::total_power(ch.len(), budget_w)] } else { Vec::new() };
        emit(out, McloadAllocation(exhaustive_search(ch, &w, &t, p.b_max, &caps)?))
    })
}

/// # Safety
/// `a` must be a live allocation handle or null.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocation_len(a: *const McloadAllocation) -> usize {
    a.as_ref().map_or(0, |a| a.0.bits.len())
}

/// Objective value; NaN for a null handle.
///
/// # Safety
/// `a` must be a live allocation handle or null.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocation_objective(a: *const McloadAllocation) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.0.objective)
}

/// # Safety
/// `a` must be a live handle; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocation_bits(a: *const McloadAllocation, buf: *mut u32, cap: usize) -> McloadStatus {
    guard(|| copy_out(&deref(a, "allocation")?.0.bits, buf, cap))
}

/// # Safety
/// `a` must be a live handle; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocation_power(a: *const McloadAllocation, buf: *mut f64, cap: usize) -> McloadStatus {
    guard(|| copy_out(&deref(a, "allocation")?.0.power_w, buf, cap))
}

/// # Safety
/// `a` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcload_allocation_free(a: *mut McloadAllocation) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Minimum energy per bit under a total power cap. `est_gains` and `interference` have
/// `n` entries each; the powers go to `power_out` (capacity `n`), the J/bit figure to
/// `q_out`.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mcload_energy_per_bit(
    est_gains: *const f64,
    interference: *const f64,
    n: usize,
    params: *const McloadEeParams,
    power_cap_w: f64,
    power_out: *mut f64,
    q_out: *mut f64,
) -> McloadStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let ch = UncertainChannel {
            est_gains: view(est_gains, n, "est_gains")?.to_vec(),
            est_var: p.est_var,
            path_loss_lin: p.path_gain,
            noise_var: p.noise_var,
            interference: view(interference, n, "interference")?.to_vec(),
            spacing: p.spacing_hz,
        };
        let cfg = EeConfig {
            kappa: p.kappa,
            circuit_power_w: p.circuit_power_w,
            rate_floor: p.rate_floor,
            tol: p.tol,
            q_init: None,
        };
        if q_out.is_null() {
            return Err(null("q_out"));
        }
        let res = dinkelbach_solve(&ch, &CrCaps::power_only(power_cap_w), &cfg)?;
        copy_out(&res.power_w, power_out, n)?;
        *q_out = res.q_star;
        Ok(())
    })
}

/// Runs an experiment from config text and returns the CSV as a new string (free with
/// [`mcload_string_free`]). `seed_override` replaces the config seed when `use_seed` is
/// nonzero; `workers` of 0 uses all cores.
///
/// # Safety
/// `config` must be NUL-terminated UTF-8; `csv_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcload_run_experiment(
    config: *const c_char,
    use_seed: i32,
    seed_override: u64,
    workers: usize,
    csv_out: *mut *mut c_char,
) -> McloadStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        if csv_out.is_null() {
            return Err(null("csv_out"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| Fail(McloadStatus::Config, "config is not valid UTF-8".into()))?;
        let mut cfg = ExperimentConfig::parse(text)?;
        if use_seed != 0 {
            cfg = cfg.with_seed(seed_override);
        }
        let records = if workers == 0 { run_experiment(&cfg)? } else { run_experiment_with_workers(&cfg, workers)? };
        let mut buf = Vec::new();
        write_csv(&cfg, &records, &mut buf).map_err(|e| Fail(McloadStatus::Panic, e.to_string()))?;
        let s = CString::new(buf).map_err(|_| Fail(McloadStatus::Panic, "CSV contains NUL".into()))?;
        *csv_out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mcload_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
