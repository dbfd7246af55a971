//! C ABI over the aerotwin library.
//!
//! Every fallible function returns an [`AtStatus`]. On failure the message is
//! kept per thread and can be fetched with [`at_last_error_message`]. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `*_free` function. Strings returned by this library must be
//! released with [`at_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aerotwin::channel::PathLossModel;
use aerotwin::flightsim::{mission_duration, position_at, FlightPlan};
use aerotwin::geodesy::{haversine_distance, slant_distance, GeoPosition};
use aerotwin::mac::{select_mcs, CellConfig, McsSelection, McsTable, RoundRobinScheduler, UeId};
use aerotwin::orchestrator::{run_experiment, ExperimentConfig, OrchestratorError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    OutputNotEmpty = 4,
    RunInProgress = 5,
    Io = 6,
    Internal = 7,
}

/// Experiment configuration.
pub struct AtConfig(ExperimentConfig);

/// Flight plan.
pub struct AtPlan(FlightPlan);

/// Round-robin scheduler over a fixed cell.
pub struct AtScheduler {
    inner: RoundRobinScheduler,
    cell: CellConfig,
    table: McsTable,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AtRunSummary {
    pub steps: u64,
    pub end_ms: u64,
    pub rejected_commands: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AtVehicleSample {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
    pub heading_deg: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: AtStatus, msg: impl Into<String>) -> AtStatus {
    set_error(msg);
    status
}

fn from_orchestrator(err: OrchestratorError) -> AtStatus {
    let status = match err {
        OrchestratorError::ConfigInvalid(_) => AtStatus::InvalidConfig,
        OrchestratorError::OutputNotEmpty(_) => AtStatus::OutputNotEmpty,
        OrchestratorError::RunInProgress(_) => AtStatus::RunInProgress,
        OrchestratorError::Io(_) | OrchestratorError::OutputNotWritable(..) => AtStatus::Io,
        _ => AtStatus::Internal,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> AtStatus) -> AtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AtStatus::Internal, "panic inside aerotwin"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AtStatus> {
    if p.is_null() {
        return Err(fail(AtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn position(lat: f64, lon: f64, alt: f64) -> Result<GeoPosition, AtStatus> {
    GeoPosition::new(lat, lon, alt).map_err(|e| fail(AtStatus::InvalidArgument, e.to_string()))
}

macro_rules! out_ptr {
    ($p:expr) => {
        if $p.is_null() {
            return fail(AtStatus::NullPointer, concat!(stringify!($p), " is null"));
        }
    };
}

macro_rules! handle {
    ($p:expr) => {
        match $p.as_ref() {
            Some(h) => h,
            None => return fail(AtStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the most recent failure on this thread, or null if the last
/// call succeeded. Release with [`at_string_free`].
#[no_mangle]
pub extern "C" fn at_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn at_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn at_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in two-UE reference scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_config_reference(out: *mut *mut AtConfig) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        *out = Box::into_raw(Box::new(AtConfig(ExperimentConfig::reference())));
        AtStatus::Ok
    })
}

/// Parse and validate an experiment configuration from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_config_from_json(json: *const c_char, out: *mut *mut AtConfig) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let text = tri!(str_arg(json, "json"));
        let cfg = match ExperimentConfig::from_json(text) {
            Ok(c) => c,
            Err(e) => return from_orchestrator(e),
        };
        if let Err(e) = cfg.validate() {
            return from_orchestrator(e);
        }
        *out = Box::into_raw(Box::new(AtConfig(cfg)));
        AtStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn at_config_set_seed(cfg: *mut AtConfig, seed: u64) -> AtStatus {
    guard(|| {
        let cfg = match cfg.as_mut() {
            Some(c) => c,
            None => return fail(AtStatus::NullPointer, "cfg is null"),
        };
        cfg.0.seed = seed;
        AtStatus::Ok
    })
}

/// Cap the run length. A non-positive value removes the cap.
///
/// # Safety
/// `cfg` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn at_config_set_duration(cfg: *mut AtConfig, seconds: f64) -> AtStatus {
    guard(|| {
        let cfg = match cfg.as_mut() {
            Some(c) => c,
            None => return fail(AtStatus::NullPointer, "cfg is null"),
        };
        if seconds.is_nan() {
            return fail(AtStatus::InvalidArgument, "duration is NaN");
        }
        cfg.0.duration_s = (seconds > 0.0).then_some(seconds);
        AtStatus::Ok
    })
}

/// Run the experiment to completion, writing logs into `out_dir`.
///
/// # Safety
/// `cfg` must be a handle from this library, `out_dir` a NUL-terminated
/// string and `summary` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_config_run(
    cfg: *const AtConfig,
    out_dir: *const c_char,
    summary: *mut AtRunSummary,
) -> AtStatus {
    guard(|| {
        let cfg = handle!(cfg);
        let dir = tri!(str_arg(out_dir, "out_dir"));
        match run_experiment(&cfg.0, Path::new(dir), &[]) {
            Ok(s) => {
                if let Some(out) = summary.as_mut() {
                    *out = AtRunSummary {
                        steps: s.steps,
                        end_ms: s.end_ms,
                        rejected_commands: s.rejected_commands as u64,
                    };
                }
                AtStatus::Ok
            }
            Err(e) => from_orchestrator(e),
        }
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn at_config_free(cfg: *mut AtConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Parse a flight plan from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_plan_from_json(json: *const c_char, out: *mut *mut AtPlan) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let text = tri!(str_arg(json, "json"));
        match FlightPlan::from_json(text) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(AtPlan(p)));
                AtStatus::Ok
            }
            Err(e) => fail(AtStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Copy of the flight plan inside a configuration.
///
/// # Safety
/// `cfg` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_plan_from_config(cfg: *const AtConfig, out: *mut *mut AtPlan) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let cfg = handle!(cfg);
        *out = Box::into_raw(Box::new(AtPlan(cfg.0.flight_plan.clone())));
        AtStatus::Ok
    })
}

/// Seconds from launch until the vehicle reaches its terminal point.
///
/// # Safety
/// `plan` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_plan_duration(plan: *const AtPlan, out: *mut f64) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        *out = mission_duration(&handle!(plan).0);
        AtStatus::Ok
    })
}

/// Open-loop vehicle position `t` seconds after launch.
///
/// # Safety
/// `plan` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_plan_position_at(plan: *const AtPlan, t: f64, out: *mut AtVehicleSample) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let plan = handle!(plan);
        if !t.is_finite() {
            return fail(AtStatus::InvalidArgument, "time must be finite");
        }
        let s = position_at(&plan.0, t);
        *out = AtVehicleSample {
            latitude_deg: s.position.latitude_deg(),
            longitude_deg: s.position.longitude_deg(),
            altitude_m: s.position.altitude_m(),
            heading_deg: s.heading_deg,
        };
        AtStatus::Ok
    })
}

/// # Safety
/// `plan` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn at_plan_free(plan: *mut AtPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Scheduler for a cell of `n_rb` resource blocks with the default MCS table
/// and the given disconnect threshold.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_scheduler_new(n_rb: u32, disconnect_snr_db: f64, out: *mut *mut AtScheduler) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let cell = CellConfig {
            n_rb,
            disconnect_snr_db,
            ..CellConfig::default()
        };
        if let Err(e) = cell.validate() {
            return fail(AtStatus::InvalidArgument, e.to_string());
        }
        *out = Box::into_raw(Box::new(AtScheduler {
            inner: RoundRobinScheduler::new(),
            cell,
            table: McsTable::default(),
        }));
        AtStatus::Ok
    })
}

/// Schedule one subframe for `n_ue` UEs with the given SNRs. Writes the RB
/// count and delivered bits of each UE into the output arrays.
///
/// # Safety
/// `sched` must be a handle from this library. `snr_db` must point to `n_ue`
/// readable values; `rb_out` and `bits_out` to `n_ue` writable values each.
#[no_mangle]
pub unsafe extern "C" fn at_scheduler_schedule(
    sched: *mut AtScheduler,
    snr_db: *const f64,
    n_ue: usize,
    rb_out: *mut u32,
    bits_out: *mut u64,
) -> AtStatus {
    guard(|| {
        let s = match sched.as_mut() {
            Some(s) => s,
            None => return fail(AtStatus::NullPointer, "sched is null"),
        };
        if n_ue == 0 {
            return AtStatus::Ok;
        }
        if snr_db.is_null() || rb_out.is_null() || bits_out.is_null() {
            return fail(AtStatus::NullPointer, "array argument is null");
        }
        let snrs = std::slice::from_raw_parts(snr_db, n_ue);
        let mut active = Vec::with_capacity(n_ue);
        for (i, &snr) in snrs.iter().enumerate() {
            match select_mcs(snr, s.table.entries(), s.cell.disconnect_snr_db) {
                Ok(sel) => active.push((UeId(i as u32), sel)),
                Err(e) => return fail(AtStatus::InvalidArgument, e.to_string()),
            }
        }
        let alloc = s.inner.schedule(&active, &s.cell);
        let rbs = std::slice::from_raw_parts_mut(rb_out, n_ue);
        let bits = std::slice::from_raw_parts_mut(bits_out, n_ue);
        for (i, e) in alloc.entries.iter().enumerate() {
            rbs[i] = e.rb_count;
            bits[i] = e.bits_delivered;
        }
        AtStatus::Ok
    })
}

/// # Safety
/// `sched` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn at_scheduler_free(sched: *mut AtScheduler) {
    if !sched.is_null() {
        drop(Box::from_raw(sched));
    }
}

/// Great-circle ground distance in meters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let a = tri!(position(lat1, lon1, 0.0));
        let b = tri!(position(lat2, lon2, 0.0));
        *out = haversine_distance(&a, &b);
        AtStatus::Ok
    })
}

/// Straight-line distance in meters between two points with altitudes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_slant_m(
    lat1: f64,
    lon1: f64,
    alt1: f64,
    lat2: f64,
    lon2: f64,
    alt2: f64,
    out: *mut f64,
) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        let a = tri!(position(lat1, lon1, alt1));
        let b = tri!(position(lat2, lon2, alt2));
        *out = slant_distance(&a, &b);
        AtStatus::Ok
    })
}

/// Free-space path loss in dB.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_fspl_db(distance_m: f64, freq_mhz: f64, out: *mut f64) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        if freq_mhz.is_nan() || freq_mhz <= 0.0 {
            return fail(AtStatus::InvalidArgument, "frequency must be > 0");
        }
        match PathLossModel::default().median_loss(distance_m, freq_mhz) {
            Ok(loss) => {
                *out = loss;
                AtStatus::Ok
            }
            Err(e) => fail(AtStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Bits per symbol of the scheme chosen by the default MCS table at `snr_db`,
/// or 0 when the link is below `disconnect_snr_db`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn at_select_mcs(snr_db: f64, disconnect_snr_db: f64, out: *mut u32) -> AtStatus {
    guard(|| {
        out_ptr!(out);
        match select_mcs(snr_db, McsTable::default().entries(), disconnect_snr_db) {
            Ok(McsSelection::Active(m)) => *out = m.bits_per_symbol(),
            Ok(McsSelection::Disconnected) => *out = 0,
            Err(e) => return fail(AtStatus::InvalidArgument, e.to_string()),
        }
        AtStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_internal_errors() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, AtStatus::Internal);
        let msg = at_last_error_message();
        assert!(!msg.is_null());
        unsafe { at_string_free(msg) };
    }

    #[test]
    fn success_clears_previous_error() {
        fail(AtStatus::Io, "old");
        assert_eq!(guard(|| AtStatus::Ok), AtStatus::Ok);
        assert!(at_last_error_message().is_null());
    }

    #[test]
    fn orchestrator_errors_map_to_codes() {
        let s = from_orchestrator(OrchestratorError::OutputNotEmpty("/x".into()));
        assert_eq!(s, AtStatus::OutputNotEmpty);
        let s = from_orchestrator(OrchestratorError::ConfigInvalid("bad".into()));
        assert_eq!(s, AtStatus::InvalidConfig);
    }
}
