//! C ABI for the coilalign simulator and estimator.
//!
//! Scenario and read-log objects are opaque handles created and destroyed
//! through this interface; every fallible call returns a [`CaStatus`] and
//! leaves a human-readable message readable via [`ca_last_error_message`].
//! The generated header lives at `include/coilalign.h`.
//!
//! Thread safety: handles are immutable after creation except through
//! `ca_scenario_set_seed`; concurrent calls on distinct handles are safe,
//! and the last-error message is thread-local.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::io::BufReader;
use std::path::Path;

use coilalign_core::error::Error;
use coilalign_core::geometry::Vec3;
use coilalign_core::harness::{
    estimate_events, simulate_scenario, trajectory_from_gps, EstimateOptions, TruthSidecar,
};
use coilalign_core::logio::{
    load_scenario, parse_gps_log, parse_read_log, parse_read_log_lenient, write_read_log,
    ScenarioConfig,
};
use coilalign_core::sim::ReadEvent;

// ---------------------------------------------------------------------------
// Status codes and error reporting
// ---------------------------------------------------------------------------

/// Result of a C API call. Mirrors the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    CaOk = 0,
    /// Scenario or grid configuration rejected.
    CaConfigError = 2,
    /// Log/GPS data missing, malformed, or insufficient.
    CaDataError = 3,
    /// The estimate completed but is ambiguous (no side prior).
    CaAmbiguous = 4,
    /// A required pointer argument was null.
    CaNullArgument = 5,
    /// A string argument was not valid UTF-8.
    CaInvalidUtf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> CaStatus {
    match e.exit_code() {
        2 => CaStatus::CaConfigError,
        4 => CaStatus::CaAmbiguous,
        _ => CaStatus::CaDataError,
    }
}

fn fail(e: Error) -> CaStatus {
    let status = status_of(&e);
    set_last_error(e.to_string());
    status
}

/// Copy the most recent error message for this thread into `buf` (at most
/// `len - 1` bytes plus a NUL). Returns the number of message bytes copied,
/// or 0 when there is no pending error or no room.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ca_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => {
            let bytes = msg.as_bytes();
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
            n
        }
        None => {
            *buf = 0;
            0
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn utf8_str<'a>(ptr: *const c_char) -> Result<&'a str, CaStatus> {
    if ptr.is_null() {
        set_last_error("null string argument".into());
        return Err(CaStatus::CaNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8".into());
        CaStatus::CaInvalidUtf8
    })
}

// ---------------------------------------------------------------------------
// Opaque handles
// ---------------------------------------------------------------------------

/// Opaque scenario handle.
pub struct CaScenario {
    cfg: ScenarioConfig,
}

/// Opaque read-log handle.
pub struct CaReadLog {
    events: Vec<ReadEvent>,
    /// Rows skipped during a lenient load.
    skipped: u64,
}

// ---------------------------------------------------------------------------
// Scenario lifecycle
// ---------------------------------------------------------------------------

/// Load and validate a scenario JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
/// On success `*out` owns a scenario that must be released with
/// [`ca_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn ca_scenario_load_file(
    path: *const c_char,
    out: *mut *mut CaScenario,
) -> CaStatus {
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    let path = match utf8_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return fail(Error::Config(format!("cannot open scenario {path}: {e}"))),
    };
    match load_scenario(BufReader::new(file)) {
        Ok(cfg) => {
            clear_last_error();
            *out = Box::into_raw(Box::new(CaScenario { cfg }));
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Load and validate a scenario from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid. See
/// [`ca_scenario_load_file`].
#[no_mangle]
pub unsafe extern "C" fn ca_scenario_load_json(
    json: *const c_char,
    out: *mut *mut CaScenario,
) -> CaStatus {
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    let text = match utf8_str(json) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match coilalign_core::logio::load_scenario_str(text) {
        Ok(cfg) => {
            clear_last_error();
            *out = Box::into_raw(Box::new(CaScenario { cfg }));
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Replace the scenario's run seed.
///
/// # Safety
/// `scenario` must be a live handle from a `ca_scenario_load_*` call.
#[no_mangle]
pub unsafe extern "C" fn ca_scenario_set_seed(scenario: *mut CaScenario, seed: u64) -> CaStatus {
    match scenario.as_mut() {
        Some(s) => {
            s.cfg.seed = seed;
            CaStatus::CaOk
        }
        None => {
            set_last_error("null scenario".into());
            CaStatus::CaNullArgument
        }
    }
}

/// True antenna start position of the scenario trajectory (the simulation
/// ground truth), for scoring estimates.
///
/// # Safety
/// `scenario` must be live; `x`, `y`, `z` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ca_scenario_true_start(
    scenario: *const CaScenario,
    x: *mut f64,
    y: *mut f64,
    z: *mut f64,
) -> CaStatus {
    let s = match scenario.as_ref() {
        Some(s) => s,
        None => {
            set_last_error("null scenario".into());
            return CaStatus::CaNullArgument;
        }
    };
    if x.is_null() || y.is_null() || z.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    match s.cfg.build_trajectory() {
        Ok(traj) => {
            let p = traj.first_position();
            *x = p.x;
            *y = p.y;
            *z = p.z;
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Release a scenario handle. Null is a no-op.
///
/// # Safety
/// `scenario` must be null or a pointer previously returned by a
/// `ca_scenario_load_*` call, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ca_scenario_free(scenario: *mut CaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

// ---------------------------------------------------------------------------
// Read logs
// ---------------------------------------------------------------------------

/// Simulate the scenario's reader log.
///
/// # Safety
/// `scenario` must be live; `out` must be valid. On success `*out` owns a
/// log handle to release with [`ca_read_log_free`].
#[no_mangle]
pub unsafe extern "C" fn ca_simulate(
    scenario: *const CaScenario,
    out: *mut *mut CaReadLog,
) -> CaStatus {
    let s = match scenario.as_ref() {
        Some(s) => s,
        None => {
            set_last_error("null scenario".into());
            return CaStatus::CaNullArgument;
        }
    };
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    match simulate_scenario(&s.cfg, None) {
        Ok(sim) => {
            clear_last_error();
            *out = Box::into_raw(Box::new(CaReadLog { events: sim.events, skipped: 0 }));
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Parse a read-log CSV file. With `lenient` set, malformed rows are
/// skipped and counted instead of failing the load.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid. See [`ca_simulate`].
#[no_mangle]
pub unsafe extern "C" fn ca_read_log_load_file(
    path: *const c_char,
    lenient: bool,
    out: *mut *mut CaReadLog,
) -> CaStatus {
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    let path = match utf8_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return fail(Error::Io(e)),
    };
    let reader = BufReader::new(file);
    let parsed = if lenient {
        parse_read_log_lenient(reader).map(|(events, skipped)| (events, skipped as u64))
    } else {
        parse_read_log(reader).map(|events| (events, 0))
    };
    match parsed {
        Ok((events, skipped)) => {
            clear_last_error();
            *out = Box::into_raw(Box::new(CaReadLog { events, skipped }));
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Write a read log as CSV.
///
/// # Safety
/// `log` must be live; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ca_read_log_save_file(
    log: *const CaReadLog,
    path: *const c_char,
) -> CaStatus {
    let l = match log.as_ref() {
        Some(l) => l,
        None => {
            set_last_error("null read log".into());
            return CaStatus::CaNullArgument;
        }
    };
    let path = match utf8_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let mut buf = Vec::new();
    if let Err(e) = write_read_log(&l.events, &mut buf) {
        return fail(e);
    }
    match fs::write(Path::new(path), buf) {
        Ok(()) => {
            clear_last_error();
            CaStatus::CaOk
        }
        Err(e) => fail(Error::Io(e)),
    }
}

/// Number of reads in the log; 0 for null.
///
/// # Safety
/// `log` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_read_log_len(log: *const CaReadLog) -> u64 {
    log.as_ref().map(|l| l.events.len() as u64).unwrap_or(0)
}

/// Rows skipped by the most recent lenient load of this handle.
///
/// # Safety
/// `log` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ca_read_log_skipped_rows(log: *const CaReadLog) -> u64 {
    log.as_ref().map(|l| l.skipped).unwrap_or(0)
}

/// Release a read-log handle. Null is a no-op.
///
/// # Safety
/// `log` must be null or a pointer returned by this library, unused after.
#[no_mangle]
pub unsafe extern "C" fn ca_read_log_free(log: *mut CaReadLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Flat estimate result for C callers. Optional members pair with a
/// `has_*` flag; unset members are zeroed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaEstimate {
    pub best_x: f64,
    pub best_y: f64,
    pub best_z: f64,
    pub best_likelihood: f64,
    pub has_mirror: bool,
    pub mirror_x: f64,
    pub mirror_y: f64,
    pub mirror_z: f64,
    pub mirror_likelihood: f64,
    /// Two near-equal peaks and no side prior.
    pub ambiguous: bool,
    pub has_misalignment: bool,
    pub lateral_m: f64,
    pub vertical_m: f64,
    pub reads_used: u64,
}

fn convert_estimate(report: &coilalign_core::harness::EstimateReport) -> CaEstimate {
    let e = &report.estimate;
    CaEstimate {
        best_x: e.best.x,
        best_y: e.best.y,
        best_z: e.best.z,
        best_likelihood: e.best_likelihood,
        has_mirror: e.mirror.is_some(),
        mirror_x: e.mirror.map(|m| m.x).unwrap_or(0.0),
        mirror_y: e.mirror.map(|m| m.y).unwrap_or(0.0),
        mirror_z: e.mirror.map(|m| m.z).unwrap_or(0.0),
        mirror_likelihood: e.mirror_likelihood.unwrap_or(0.0),
        ambiguous: e.ambiguous,
        has_misalignment: e.lateral_offset_m.is_some(),
        lateral_m: e.lateral_offset_m.unwrap_or(0.0),
        vertical_m: e.vertical_offset_m.unwrap_or(0.0),
        reads_used: report.reads_total as u64,
    }
}

unsafe fn run_estimate(
    scenario: *const CaScenario,
    log: *const CaReadLog,
    gps_path: Option<&str>,
    out: *mut CaEstimate,
) -> CaStatus {
    let s = match scenario.as_ref() {
        Some(s) => s,
        None => {
            set_last_error("null scenario".into());
            return CaStatus::CaNullArgument;
        }
    };
    let l = match log.as_ref() {
        Some(l) => l,
        None => {
            set_last_error("null read log".into());
            return CaStatus::CaNullArgument;
        }
    };
    if out.is_null() {
        set_last_error("null output pointer".into());
        return CaStatus::CaNullArgument;
    }
    let trajectory = match gps_path {
        Some(path) => {
            let file = match fs::File::open(path) {
                Ok(f) => f,
                Err(e) => return fail(Error::Io(e)),
            };
            let fixes = match parse_gps_log(BufReader::new(file)) {
                Ok(f) => f,
                Err(e) => return fail(e),
            };
            match trajectory_from_gps(&s.cfg, &fixes) {
                Ok(t) => t,
                Err(e) => return fail(e),
            }
        }
        None => match s.cfg.build_trajectory() {
            Ok(t) => t,
            Err(e) => return fail(e),
        },
    };
    let truth: Option<TruthSidecar> = None;
    match estimate_events(&s.cfg, &trajectory, &l.events, truth.as_ref(), &EstimateOptions::default())
    {
        Ok((report, _map)) => {
            clear_last_error();
            *out = convert_estimate(&report);
            CaStatus::CaOk
        }
        Err(e) => fail(e),
    }
}

/// Estimate the antenna start position from a read log, using the
/// scenario's own trajectory. An ambiguous result still returns `CaOk`;
/// check the `ambiguous` member.
///
/// # Safety
/// All handles must be live; `out` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ca_estimate(
    scenario: *const CaScenario,
    log: *const CaReadLog,
    out: *mut CaEstimate,
) -> CaStatus {
    run_estimate(scenario, log, None, out)
}

/// Estimate using a GPS track file for the trajectory (field replay).
///
/// # Safety
/// As [`ca_estimate`]; `gps_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ca_replay(
    scenario: *const CaScenario,
    gps_path: *const c_char,
    log: *const CaReadLog,
    out: *mut CaEstimate,
) -> CaStatus {
    let path = match utf8_str(gps_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    run_estimate(scenario, log, Some(path), out)
}

/// Euclidean distance between an estimate and a reference position, for
/// convenience when scoring against [`ca_scenario_true_start`].
#[no_mangle]
pub extern "C" fn ca_estimate_error(est: &CaEstimate, x: f64, y: f64, z: f64) -> f64 {
    coilalign_core::geometry::distance(
        Vec3::new(est.best_x, est.best_y, est.best_z),
        Vec3::new(x, y, z),
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    const QUICK_SCENARIO: &str = r#"{
        "tags": [{"epc": "E20034120000000000000001", "position": [0.75, 0.0, 0.0]}],
        "trajectory": {"type": "stepped", "start": [0.0, 0.2, 0.0],
                       "step": [0.005, 0.0, 0.0], "dwell_s": 0.1, "n_steps": 301},
        "read_rate_hz": 20.0,
        "grid": {
            "x": {"min": -0.1, "max": 0.1, "resolution_m": 0.01},
            "y": {"min": -0.4, "max": 0.4, "resolution_m": 0.01},
            "z": {"fixed": 0.0}
        },
        "side_prior": "left"
    }"#;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error() -> String {
        let mut buf = vec![0u8; 256];
        let n = unsafe { ca_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len()) };
        String::from_utf8(buf[..n].to_vec()).unwrap()
    }

    fn load_quick() -> *mut CaScenario {
        let json = cstr(QUICK_SCENARIO);
        let mut handle: *mut CaScenario = ptr::null_mut();
        let status = unsafe { ca_scenario_load_json(json.as_ptr(), &mut handle) };
        assert_eq!(status, CaStatus::CaOk, "{}", last_error());
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ca_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut handle: *mut CaScenario = ptr::null_mut();
        assert_eq!(
            unsafe { ca_scenario_load_file(ptr::null(), &mut handle) },
            CaStatus::CaNullArgument
        );
        assert_eq!(
            unsafe { ca_scenario_set_seed(ptr::null_mut(), 1) },
            CaStatus::CaNullArgument
        );
        assert_eq!(unsafe { ca_read_log_len(ptr::null()) }, 0);
        unsafe {
            ca_scenario_free(ptr::null_mut());
            ca_read_log_free(ptr::null_mut());
        }
    }

    #[test]
    fn bad_scenario_path_sets_error_message() {
        let path = cstr("/definitely/not/here.json");
        let mut handle: *mut CaScenario = ptr::null_mut();
        let status = unsafe { ca_scenario_load_file(path.as_ptr(), &mut handle) };
        assert_eq!(status, CaStatus::CaConfigError);
        assert!(last_error().contains("cannot open scenario"));
    }

    #[test]
    fn rejected_json_reports_config_error() {
        let json = cstr(
            r#"{"tags": [], "trajectory": {"type": "stepped", "start": [0,0,0],
                "step": [0,0,0], "dwell_s": 0.1, "n_steps": 1}, "bogus_key": true}"#,
        );
        let mut handle: *mut CaScenario = ptr::null_mut();
        let status = unsafe { ca_scenario_load_json(json.as_ptr(), &mut handle) };
        assert_eq!(status, CaStatus::CaConfigError);
        assert!(last_error().contains("bogus_key"));
    }

    #[test]
    fn simulate_estimate_roundtrip_through_c_api() {
        let scenario = load_quick();
        unsafe {
            assert_eq!(ca_scenario_set_seed(scenario, 9), CaStatus::CaOk);

            let mut log: *mut CaReadLog = ptr::null_mut();
            assert_eq!(ca_simulate(scenario, &mut log), CaStatus::CaOk, "{}", last_error());
            assert_eq!(ca_read_log_len(log), 600);

            let mut est = std::mem::zeroed::<CaEstimate>();
            assert_eq!(ca_estimate(scenario, log, &mut est), CaStatus::CaOk, "{}", last_error());
            assert!(!est.ambiguous);
            assert!(est.has_misalignment);
            assert!(est.best_likelihood > 0.8);
            assert_eq!(est.reads_used, 600);

            let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
            assert_eq!(
                ca_scenario_true_start(scenario, &mut x, &mut y, &mut z),
                CaStatus::CaOk
            );
            assert_eq!((x, y, z), (0.0, 0.2, 0.0));
            let err = ca_estimate_error(&est, x, y, z);
            assert!(err < 0.02, "error {err}");
            assert!((est.lateral_m - 0.2).abs() < 0.02);

            ca_read_log_free(log);
            ca_scenario_free(scenario);
        }
    }

    #[test]
    fn log_save_and_load_roundtrip() {
        let scenario = load_quick();
        let dir = tempfile::tempdir().unwrap();
        let path = cstr(dir.path().join("log.csv").to_str().unwrap());
        unsafe {
            let mut log: *mut CaReadLog = ptr::null_mut();
            assert_eq!(ca_simulate(scenario, &mut log), CaStatus::CaOk);
            assert_eq!(ca_read_log_save_file(log, path.as_ptr()), CaStatus::CaOk);

            let mut loaded: *mut CaReadLog = ptr::null_mut();
            assert_eq!(
                ca_read_log_load_file(path.as_ptr(), false, &mut loaded),
                CaStatus::CaOk
            );
            assert_eq!(ca_read_log_len(loaded), ca_read_log_len(log));
            assert_eq!(ca_read_log_skipped_rows(loaded), 0);

            ca_read_log_free(log);
            ca_read_log_free(loaded);
            ca_scenario_free(scenario);
        }
    }

    #[test]
    fn lenient_load_counts_skipped_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "epc,t_s,phase_deg,rssi_dbm,channel_mhz\nE1,0.0,10.0,-60.0,910.0\nE1,0.1,999.0,-60.0,910.0\n",
        )
        .unwrap();
        let cpath = cstr(path.to_str().unwrap());
        unsafe {
            let mut strict: *mut CaReadLog = ptr::null_mut();
            assert_eq!(
                ca_read_log_load_file(cpath.as_ptr(), false, &mut strict),
                CaStatus::CaDataError
            );
            assert!(last_error().contains("line 3"));

            let mut log: *mut CaReadLog = ptr::null_mut();
            assert_eq!(
                ca_read_log_load_file(cpath.as_ptr(), true, &mut log),
                CaStatus::CaOk
            );
            assert_eq!(ca_read_log_len(log), 1);
            assert_eq!(ca_read_log_skipped_rows(log), 1);
            ca_read_log_free(log);
        }
    }

    #[test]
    fn ambiguity_is_reported_in_struct() {
        let json = cstr(&QUICK_SCENARIO.replace("\"left\"", "\"none\""));
        let mut scenario: *mut CaScenario = ptr::null_mut();
        unsafe {
            assert_eq!(ca_scenario_load_json(json.as_ptr(), &mut scenario), CaStatus::CaOk);
            let mut log: *mut CaReadLog = ptr::null_mut();
            assert_eq!(ca_simulate(scenario, &mut log), CaStatus::CaOk);
            let mut est = std::mem::zeroed::<CaEstimate>();
            assert_eq!(ca_estimate(scenario, log, &mut est), CaStatus::CaOk);
            assert!(est.ambiguous, "symmetric peaks without prior are ambiguous");
            assert!(est.has_mirror);
            assert!(!est.has_misalignment);
            ca_read_log_free(log);
            ca_scenario_free(scenario);
        }
    }
}
