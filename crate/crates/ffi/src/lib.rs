//! C ABI over the conbatch engine.
//!
//! Every fallible function returns a `CbStatus`; on failure the message is
//! available from `cb_last_error_message` on the same thread. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use conbatch::acquisition::{self, ScorerConfig};
use conbatch::cost::{haversine, CostModel, Metric};
use conbatch::data::{gen_synthetic, load_dataset, Dataset, GeoPoint, SplitState, SynthSpec};
use conbatch::posterior::PredictiveCube;
use conbatch::runner::{run_experiment, RunConfig};
use conbatch::strategies::{select_batch, Budget, SelectionInputs, StrategyConfig, StrategyKind};
use conbatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidDataset = 4,
    NotInPool = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStrategy {
    Random = 0,
    Greedy = 1,
    Threshold = 2,
    Unconstrained = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbCostVariant {
    None = 0,
    Distance = 1,
    DistanceReturn = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbMetric {
    Haversine = 0,
    Planar = 1,
}

pub struct CbDataset {
    dataset: Dataset,
    split: SplitState,
}

pub struct CbCube {
    cube: PredictiveCube,
}

pub struct CbCostModel {
    model: CostModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> CbStatus {
    match e {
        Error::Io { .. } | Error::MissingFile(_) => CbStatus::Io,
        Error::Json { .. }
        | Error::Csv { .. }
        | Error::DimensionMismatch(_)
        | Error::InvalidDataset(_) => CbStatus::InvalidDataset,
        Error::NotInPool(_) => CbStatus::NotInPool,
        Error::InvalidConfig(_) | Error::Cost(_) | Error::Report(_) | Error::Shape { .. } => {
            CbStatus::InvalidArgument
        }
        Error::Divergence { .. }
        | Error::NegativeProbability(_)
        | Error::ConfigCapExceeded { .. }
        | Error::ImpossibleConfiguration(_) => CbStatus::Numeric,
    }
}

struct Fail(CbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CbStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            CbStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn cb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Great-circle distance in meters.
#[no_mangle]
pub extern "C" fn cb_haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine(GeoPoint::new(lat1, lon1), GeoPoint::new(lat2, lon2))
}

/// Shannon entropy in nats.
///
/// # Safety
/// `probs` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_entropy(probs: *const f64, len: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let p = slice_arg(probs, len, "probs")?;
        let out = out_arg(out, "out")?;
        *out = acquisition::entropy(p)?;
        Ok(())
    })
}

/// Loads a dataset directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_dataset_load(
    path: *const c_char,
    out: *mut *mut CbDataset,
) -> CbStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let (dataset, split) = load_dataset(&path)?;
        *out = Box::into_raw(Box::new(CbDataset { dataset, split }));
        Ok(())
    })
}

/// Generates a synthetic dataset from a JSON spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_dataset_synth(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut CbDataset,
) -> CbStatus {
    guard(|| {
        let raw = str_arg(spec_json, "spec_json")?;
        let out = out_arg(out, "out")?;
        let spec: SynthSpec = serde_json::from_str(raw)
            .map_err(|e| Fail(CbStatus::InvalidArgument, e.to_string()))?;
        let (dataset, split) = gen_synthetic(&spec, seed)?;
        *out = Box::into_raw(Box::new(CbDataset { dataset, split }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_dataset_len(ds: *const CbDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.dataset.len())
}

/// Copies the pool indices into `buf`. `out_len` always receives the pool
/// size; `BUFFER_TOO_SMALL` is returned if it exceeds `cap`.
///
/// # Safety
/// `ds` must be a live handle, `buf` writable for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn cb_dataset_pool(
    ds: *const CbDataset,
    buf: *mut usize,
    cap: usize,
    out_len: *mut usize,
) -> CbStatus {
    guard(|| {
        let ds = ref_arg(ds, "ds")?;
        let out_len = out_arg(out_len, "out_len")?;
        let pool = &ds.split.pool_idx;
        *out_len = pool.len();
        copy_out(pool, buf, cap)
    })
}

unsafe fn copy_out(src: &[usize], buf: *mut usize, cap: usize) -> Result<(), Fail> {
    if src.len() > cap {
        return Err(Fail(
            CbStatus::BufferTooSmall,
            format!("need {} entries, have {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cb_dataset_free(ds: *mut CbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Builds a predictive cube from `rows * draws * classes` probabilities laid
/// out row, draw, class. `index_map[r]` is the dataset index of row `r`.
///
/// # Safety
/// Pointers must be readable for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_cube_new(
    probs: *const f64,
    rows: usize,
    draws: usize,
    classes: usize,
    index_map: *const usize,
    out: *mut *mut CbCube,
) -> CbStatus {
    guard(|| {
        let n = rows
            .checked_mul(draws)
            .and_then(|v| v.checked_mul(classes))
            .ok_or_else(|| Fail(CbStatus::InvalidArgument, "size overflow".into()))?;
        let p = slice_arg(probs, n, "probs")?;
        let map = slice_arg(index_map, rows, "index_map")?;
        let out = out_arg(out, "out")?;
        let cube = PredictiveCube::from_probs(p.to_vec(), draws, classes, map.to_vec())?;
        *out = Box::into_raw(Box::new(CbCube { cube }));
        Ok(())
    })
}

/// Single-point mutual information of cube row `row`.
///
/// # Safety
/// `cube` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_cube_bald(cube: *const CbCube, row: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let c = &ref_arg(cube, "cube")?.cube;
        let out = out_arg(out, "out")?;
        if row >= c.samples() {
            return Err(Fail(
                CbStatus::InvalidArgument,
                format!("row {row} out of range"),
            ));
        }
        *out = acquisition::bald(c, row);
        Ok(())
    })
}

/// Joint mutual information of a set of cube rows.
///
/// # Safety
/// `cube` must be a live handle; `rows` readable for `len`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_cube_batch_mutual_information(
    cube: *const CbCube,
    rows: *const usize,
    len: usize,
    exact_config_cap: usize,
    n_sim: usize,
    seed: u64,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let c = &ref_arg(cube, "cube")?.cube;
        let r = slice_arg(rows, len, "rows")?;
        let out = out_arg(out, "out")?;
        if let Some(&bad) = r.iter().find(|&&m| m >= c.samples()) {
            return Err(Fail(
                CbStatus::InvalidArgument,
                format!("row {bad} out of range"),
            ));
        }
        *out = acquisition::batch_mutual_information(
            c,
            r,
            &ScorerConfig {
                exact_config_cap,
                n_sim,
            },
            seed,
        )?;
        Ok(())
    })
}

/// # Safety
/// `cube` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cb_cube_free(cube: *mut CbCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Cost model without area costs. `ref_lat_deg` is used by the planar metric.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_cost_model_new(
    variant: CbCostVariant,
    metric: CbMetric,
    ref_lat_deg: f64,
    out: *mut *mut CbCostModel,
) -> CbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let metric = match metric {
            CbMetric::Haversine => Metric::Haversine,
            CbMetric::Planar => Metric::Planar { ref_lat_deg },
        };
        let model = match variant {
            CbCostVariant::None => CostModel::none(),
            CbCostVariant::Distance => CostModel::distance(metric),
            CbCostVariant::DistanceReturn => CostModel::distance_return(metric),
        };
        model.validate()?;
        *out = Box::into_raw(Box::new(CbCostModel { model }));
        Ok(())
    })
}

/// Area-cost model from parallel arrays of area ids and costs.
///
/// # Safety
/// `ids` and `costs` must be readable for `len`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_cost_model_area(
    ids: *const u32,
    costs: *const f64,
    len: usize,
    out: *mut *mut CbCostModel,
) -> CbStatus {
    guard(|| {
        let ids = slice_arg(ids, len, "ids")?;
        let costs = slice_arg(costs, len, "costs")?;
        let out = out_arg(out, "out")?;
        let table = ids.iter().copied().zip(costs.iter().copied()).collect();
        let model = CostModel::area(table)?;
        *out = Box::into_raw(Box::new(CbCostModel { model }));
        Ok(())
    })
}

/// # Safety
/// `cost` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cb_cost_model_free(cost: *mut CbCostModel) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// Selects one batch from `pool` (dataset indices, each present in the cube's
/// index map). `budget` may be `INFINITY`. Selected dataset indices are
/// written to `out_indices` in selection order.
///
/// # Safety
/// Handles must be live; `pool` readable for `pool_len`; `out_indices`
/// writable for `out_cap`; `out_len` and `out_total_cost` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_select_batch(
    strategy: CbStrategy,
    cube: *const CbCube,
    ds: *const CbDataset,
    cost: *const CbCostModel,
    pool: *const usize,
    pool_len: usize,
    budget: f64,
    n_max: usize,
    exact_config_cap: usize,
    n_sim: usize,
    seed: u64,
    out_indices: *mut usize,
    out_cap: usize,
    out_len: *mut usize,
    out_total_cost: *mut f64,
) -> CbStatus {
    guard(|| {
        let cube = &ref_arg(cube, "cube")?.cube;
        let ds = ref_arg(ds, "ds")?;
        let cost = &ref_arg(cost, "cost")?.model;
        let pool = slice_arg(pool, pool_len, "pool")?;
        let out_len = out_arg(out_len, "out_len")?;
        let out_total = out_arg(out_total_cost, "out_total_cost")?;
        let kind = match strategy {
            CbStrategy::Random => StrategyKind::Random,
            CbStrategy::Greedy => StrategyKind::Greedy,
            CbStrategy::Threshold => StrategyKind::Threshold,
            CbStrategy::Unconstrained => StrategyKind::BatchBaldUnconstrained,
        };
        let config = StrategyConfig {
            kind,
            n_max,
            budget: Budget(budget),
        };
        config.validate()?;
        let inputs = SelectionInputs {
            cube,
            dataset: &ds.dataset,
            cost,
            scorer: ScorerConfig {
                exact_config_cap,
                n_sim,
            },
        };
        let outcome = select_batch(&config, &inputs, pool, seed)?;
        *out_len = outcome.selected.len();
        *out_total = outcome.total_cost();
        copy_out(&outcome.selected, out_indices, out_cap)
    })
}

/// Runs one seed of an experiment described by a JSON run config and returns
/// the result series as JSON. Free the string with `cb_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cb_run_experiment(
    config_json: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> CbStatus {
    guard(|| {
        let raw = str_arg(config_json, "config_json")?;
        let out = out_arg(out_json, "out_json")?;
        let config: RunConfig = serde_json::from_str(raw)
            .map_err(|e| Fail(CbStatus::InvalidArgument, e.to_string()))?;
        let series = run_experiment(&config, seed)?;
        let json = serde_json::to_string(&series)
            .map_err(|e| Fail(CbStatus::InvalidArgument, e.to_string()))?;
        *out = CString::new(json)
            .map_err(|e| Fail(CbStatus::InvalidArgument, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
