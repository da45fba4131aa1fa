//! Datasets, splits, the on-disk dataset directory format and the synthetic
//! geolocated generator.
//!
//! A dataset directory holds three files:
//!
//! * `manifest.json`: `{n_samples, dim, class_count, class_names[]}`
//! * `metadata.csv`: header `id,lat,lon,label,split,area_id`, one row per
//!   sample; `split` is one of `train|test|pool`, `area_id` may be blank
//! * `embeddings.f32`: raw little-endian `f32`, row-major `n_samples × dim`
//!
//! Sample identity everywhere in the engine is the zero-based metadata row
//! index. External ids are carried along but never used as keys.
//!
//! Coordinates are read as WGS84 latitude/longitude in degrees.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "metadata.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.f32";

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    /// Row-major `n × dim`.
    pub embeddings: Vec<f32>,
    pub labels: Vec<usize>,
    pub geoloc: Vec<GeoPoint>,
    pub area_id: Vec<Option<u32>>,
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// True when every sample carries an area id.
    pub fn has_area_ids(&self) -> bool {
        !self.area_id.is_empty() && self.area_id.iter().all(Option::is_some)
    }

    /// Checks the structural invariants. Used by every constructor path.
    pub fn check(&self) -> Result<()> {
        let n = self.labels.len();
        if self.embeddings.len() != n * self.dim {
            return Err(Error::DimensionMismatch(format!(
                "{} embedding values for {} rows of dim {}",
                self.embeddings.len(),
                n,
                self.dim
            )));
        }
        if self.geoloc.len() != n || self.area_id.len() != n || self.ids.len() != n {
            return Err(Error::InvalidDataset(
                "per-sample columns differ in length".into(),
            ));
        }
        if self.class_names.len() != self.class_count {
            return Err(Error::InvalidDataset(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.class_count
            )));
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.class_count)
        {
            return Err(Error::InvalidDataset(format!(
                "row {i}: label {l} >= class count {}",
                self.class_count
            )));
        }
        if let Some(i) = self.embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite embedding value in row {}",
                i / self.dim.max(1)
            )));
        }
        if let Some(i) = self.geoloc.iter().position(|g| !g.is_valid()) {
            return Err(Error::InvalidDataset(format!(
                "row {i}: coordinates out of range"
            )));
        }
        Ok(())
    }
}

/// Train/test/pool partition over dataset row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitState {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub pool_idx: Vec<usize>,
}

impl SplitState {
    pub fn new(
        train_idx: Vec<usize>,
        test_idx: Vec<usize>,
        pool_idx: Vec<usize>,
        n: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(train_idx.len() + test_idx.len() + pool_idx.len());
        for &i in train_idx.iter().chain(&test_idx).chain(&pool_idx) {
            if i >= n {
                return Err(Error::InvalidDataset(format!(
                    "split index {i} out of range for {n} samples"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidDataset(format!(
                    "index {i} appears in more than one split"
                )));
            }
        }
        Ok(Self {
            train_idx,
            test_idx,
            pool_idx,
        })
    }

    pub fn total(&self) -> usize {
        self.train_idx.len() + self.test_idx.len() + self.pool_idx.len()
    }

    /// Moves `batch` from the pool to the end of the training set.
    ///
    /// Returns a new state; `self` is untouched.
    pub fn apply_acquisition(&self, batch: &[usize]) -> Result<SplitState> {
        let pool: HashSet<usize> = self.pool_idx.iter().copied().collect();
        let mut taken = HashSet::with_capacity(batch.len());
        for &b in batch {
            if !pool.contains(&b) || !taken.insert(b) {
                return Err(Error::NotInPool(b));
            }
        }
        let mut train_idx = self.train_idx.clone();
        train_idx.extend_from_slice(batch);
        let pool_idx = self
            .pool_idx
            .iter()
            .copied()
            .filter(|i| !taken.contains(i))
            .collect();
        Ok(SplitState {
            train_idx,
            test_idx: self.test_idx.clone(),
            pool_idx,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_samples: usize,
    pub dim: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Test,
    Pool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetaRow {
    id: String,
    lat: f64,
    lon: f64,
    label: i64,
    split: String,
    area_id: Option<u32>,
}

// ---------------------------------------------------------------------------
// Validation findings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    MissingFile,
    Malformed,
    DimensionMismatch,
    LabelRange,
    DuplicateId,
    Coordinates,
    NonFinite,
    Split,
    Layout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    fn error(kind: FindingKind, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            kind,
            message: message.into(),
        }
    }

    fn warning(kind: FindingKind, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            kind,
            message: message.into(),
        }
    }

    fn into_error(self, dir: &Path) -> Error {
        match self.kind {
            FindingKind::MissingFile => Error::MissingFile(dir.join(self.message)),
            FindingKind::DimensionMismatch => Error::DimensionMismatch(self.message),
            _ => Error::InvalidDataset(self.message),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}", self.message)
    }
}

/// One row of a dataset summary table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub classes: usize,
    pub samples: usize,
    pub train: usize,
    pub test: usize,
    pub pool: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} classes={:<3} samples={:<6} train={:<5} test={:<5} pool={}",
            self.name, self.classes, self.samples, self.train, self.test, self.pool
        )
    }
}

/// Published layouts of the released datasets: (name, classes, samples, train, test, pool).
pub const KNOWN_LAYOUTS: [(&str, usize, usize, usize, usize, usize); 3] = [
    ("build6k", 2, 5999, 30, 1500, 4469),
    ("nieman17k", 7, 17500, 70, 3500, 13930),
    ("mnist6k", 10, 5999, 30, 1500, 4469),
];

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub summary: Option<DatasetSummary>,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn worst(&self) -> Option<Severity> {
        self.findings.iter().map(|f| f.severity).max()
    }

    pub fn has_errors(&self) -> bool {
        self.worst() == Some(Severity::Error)
    }
}

/// Everything parsed from a directory, before any consistency checks.
struct RawDir {
    manifest: Manifest,
    rows: Vec<MetaRow>,
    blob: Vec<u8>,
}

fn read_raw(dir: &Path, findings: &mut Vec<Finding>) -> Option<RawDir> {
    let mut missing = false;
    for f in [MANIFEST_FILE, METADATA_FILE, EMBEDDINGS_FILE] {
        if !dir.join(f).is_file() {
            findings.push(Finding::error(FindingKind::MissingFile, f));
            missing = true;
        }
    }
    if missing {
        return None;
    }

    let manifest: Manifest = match fs::read(dir.join(MANIFEST_FILE))
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(e) => {
            findings.push(Finding::error(
                FindingKind::Malformed,
                format!("{MANIFEST_FILE}: {e}"),
            ));
            return None;
        }
    };

    let mut rows = Vec::new();
    match csv::Reader::from_path(dir.join(METADATA_FILE)) {
        Ok(mut rdr) => {
            let headers = rdr
                .headers()
                .map(|h| h.iter().map(str::to_owned).collect::<Vec<_>>());
            let expected = ["id", "lat", "lon", "label", "split", "area_id"];
            match headers {
                Ok(h) if h == expected => {}
                Ok(h) => {
                    findings.push(Finding::error(
                        FindingKind::Malformed,
                        format!(
                            "{METADATA_FILE}: header {:?}, expected {:?}",
                            h.join(","),
                            expected.join(",")
                        ),
                    ));
                    return None;
                }
                Err(e) => {
                    findings.push(Finding::error(
                        FindingKind::Malformed,
                        format!("{METADATA_FILE}: {e}"),
                    ));
                    return None;
                }
            }
            for (i, rec) in rdr.deserialize::<MetaRow>().enumerate() {
                match rec {
                    Ok(r) => rows.push(r),
                    Err(e) => {
                        findings.push(Finding::error(
                            FindingKind::Malformed,
                            format!("{METADATA_FILE} row {i}: {e}"),
                        ));
                        return None;
                    }
                }
            }
        }
        Err(e) => {
            findings.push(Finding::error(
                FindingKind::Malformed,
                format!("{METADATA_FILE}: {e}"),
            ));
            return None;
        }
    }

    let blob = match fs::read(dir.join(EMBEDDINGS_FILE)) {
        Ok(b) => b,
        Err(e) => {
            findings.push(Finding::error(
                FindingKind::Malformed,
                format!("{EMBEDDINGS_FILE}: {e}"),
            ));
            return None;
        }
    };
    Some(RawDir {
        manifest,
        rows,
        blob,
    })
}

/// Runs every consistency check; returns the parsed dataset only when no
/// error-severity finding was raised.
fn check_raw(
    raw: RawDir,
    name: &str,
    findings: &mut Vec<Finding>,
) -> (Option<(Dataset, SplitState)>, Option<DatasetSummary>) {
    let RawDir {
        manifest,
        rows,
        blob,
    } = raw;
    let n = manifest.n_samples;
    let dim = manifest.dim;
    let k = manifest.class_count;
    let start = findings.len();

    if dim == 0 {
        findings.push(Finding::error(
            FindingKind::DimensionMismatch,
            "manifest dim is 0",
        ));
    }
    if manifest.class_names.len() != k {
        findings.push(Finding::error(
            FindingKind::Malformed,
            format!(
                "manifest lists {} class names for class_count {k}",
                manifest.class_names.len()
            ),
        ));
    }
    if k < 2 {
        findings.push(Finding::warning(
            FindingKind::Malformed,
            format!("class_count {k} < 2"),
        ));
    }
    if rows.len() != n {
        findings.push(Finding::error(
            FindingKind::DimensionMismatch,
            format!(
                "metadata has {} rows, manifest says n_samples = {n}",
                rows.len()
            ),
        ));
    }
    let expected_bytes = n * dim * 4;
    if blob.len() != expected_bytes {
        let blob_rows = if dim > 0 {
            blob.len() as f64 / (dim * 4) as f64
        } else {
            f64::NAN
        };
        findings.push(Finding::error(
            FindingKind::DimensionMismatch,
            format!(
                "{EMBEDDINGS_FILE} has {} bytes ({blob_rows} rows of dim {dim}), expected {expected_bytes} bytes for {n} rows",
                blob.len()
            ),
        ));
    }

    let mut ids = HashSet::with_capacity(rows.len());
    let (mut train, mut test, mut pool) = (Vec::new(), Vec::new(), Vec::new());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if !ids.insert(r.id.as_str()) {
            findings.push(Finding::error(
                FindingKind::DuplicateId,
                format!("row {i}: duplicate id {:?}", r.id),
            ));
        }
        if r.label < 0 || r.label as usize >= k {
            findings.push(Finding::error(
                FindingKind::LabelRange,
                format!("row {i}: label {} outside 0..{k}", r.label),
            ));
        }
        labels.push(r.label.max(0) as usize);
        if !GeoPoint::new(r.lat, r.lon).is_valid() {
            findings.push(Finding::error(
                FindingKind::Coordinates,
                format!("row {i}: coordinates ({}, {}) out of range", r.lat, r.lon),
            ));
        }
        match r.split.as_str() {
            "train" => train.push(i),
            "test" => test.push(i),
            "pool" => pool.push(i),
            other => findings.push(Finding::error(
                FindingKind::Split,
                format!("row {i}: unknown split {other:?}"),
            )),
        }
    }

    let embeddings: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = embeddings.iter().position(|v| !v.is_finite()) {
        findings.push(Finding::error(
            FindingKind::NonFinite,
            format!("non-finite embedding value at row {}", i / dim.max(1)),
        ));
    }
    let with_area = rows.iter().filter(|r| r.area_id.is_some()).count();
    if with_area > 0 && with_area < rows.len() {
        findings.push(Finding::warning(
            FindingKind::Malformed,
            format!(
                "{} of {} rows have no area_id",
                rows.len() - with_area,
                rows.len()
            ),
        ));
    }

    let summary = DatasetSummary {
        name: name.to_owned(),
        classes: k,
        samples: rows.len(),
        train: train.len(),
        test: test.len(),
        pool: pool.len(),
    };
    if let Some(&(_, kc, ns, tr, te, po)) = KNOWN_LAYOUTS.iter().find(|l| l.0 == name) {
        if (kc, ns, tr, te, po) != (k, rows.len(), train.len(), test.len(), pool.len()) {
            findings.push(Finding::warning(
                FindingKind::Layout,
                format!("{name}: layout differs from the published counts ({kc}, {ns}, {tr}, {te}, {po})"),
            ));
        }
    }

    if findings[start..]
        .iter()
        .any(|f| f.severity == Severity::Error)
    {
        return (None, Some(summary));
    }

    let dataset = Dataset {
        dim,
        embeddings,
        labels,
        geoloc: rows.iter().map(|r| GeoPoint::new(r.lat, r.lon)).collect(),
        area_id: rows.iter().map(|r| r.area_id).collect(),
        class_count: k,
        class_names: manifest.class_names,
        ids: rows.into_iter().map(|r| r.id).collect(),
    };
    let split = SplitState {
        train_idx: train,
        test_idx: test,
        pool_idx: pool,
    };
    (Some((dataset, split)), Some(summary))
}

fn dir_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Dataset, SplitState)> {
    let dir = dir.as_ref();
    let mut findings = Vec::new();
    let loaded = read_raw(dir, &mut findings)
        .and_then(|raw| check_raw(raw, &dir_name(dir), &mut findings).0);
    match loaded {
        Some(ds) => Ok(ds),
        None => {
            let first = findings
                .into_iter()
                .find(|f| f.severity == Severity::Error)
                .expect("load failed without an error finding");
            Err(first.into_error(dir))
        }
    }
}

/// Checks a dataset directory and reports every finding instead of stopping
/// at the first one.
pub fn validate_dir(dir: impl AsRef<Path>) -> ValidationReport {
    let dir = dir.as_ref();
    let mut findings = Vec::new();
    let summary = read_raw(dir, &mut findings)
        .and_then(|raw| check_raw(raw, &dir_name(dir), &mut findings).1);
    ValidationReport { summary, findings }
}

/// Writes `dataset` and `split` in the directory format read by [`load_dataset`].
pub fn write_dataset(dataset: &Dataset, split: &SplitState, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.check()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = Manifest {
        n_samples: dataset.len(),
        dim: dataset.dim,
        class_count: dataset.class_count,
        class_names: dataset.class_names.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let mut split_of = vec![None; dataset.len()];
    for (list, name) in [
        (&split.train_idx, "train"),
        (&split.test_idx, "test"),
        (&split.pool_idx, "pool"),
    ] {
        for &i in list {
            split_of[i] = Some(name);
        }
    }
    let path = dir.join(METADATA_FILE);
    let csv_err = |e| Error::Csv {
        path: path.clone(),
        source: e,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["id", "lat", "lon", "label", "split", "area_id"])
        .map_err(csv_err)?;
    for (i, split) in split_of.iter().enumerate() {
        let split =
            split.ok_or_else(|| Error::InvalidDataset(format!("row {i} belongs to no split")))?;
        let g = dataset.geoloc[i];
        w.write_record([
            dataset.ids[i].clone(),
            g.lat.to_string(),
            g.lon.to_string(),
            dataset.labels[i].to_string(),
            split.to_owned(),
            dataset.area_id[i]
                .map(|a| a.to_string())
                .unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(EMBEDDINGS_FILE);
    let blob: Vec<u8> = dataset
        .embeddings
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBox {
    pub fn center(&self) -> GeoPoint {
        GeoPoint::new(
            (self.lat_min + self.lat_max) / 2.0,
            (self.lon_min + self.lon_max) / 2.0,
        )
    }

    pub fn south_west(&self) -> GeoPoint {
        GeoPoint::new(self.lat_min, self.lon_min)
    }

    pub fn north_east(&self) -> GeoPoint {
        GeoPoint::new(self.lat_max, self.lon_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub dim: usize,
    pub class_count: usize,
    pub cluster_spread: f64,
    pub geo_bbox: GeoBox,
    /// (rows, cols) of the area grid laid over the bounding box.
    pub area_grid: (u32, u32),
    /// (train, test, pool) fractions, summing to one.
    pub split_fractions: (f64, f64, f64),
    /// When set, geolocations are drawn around this many hotspots instead of
    /// uniformly, which makes area populations uneven.
    #[serde(default)]
    pub geo_hotspots: Option<usize>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split_fractions;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions {a}, {b}, {c} must sum to 1"
            )));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig(
                "class_count must be at least 2".into(),
            ));
        }
        if self.n_samples < self.class_count {
            return Err(Error::InvalidConfig(format!(
                "n_samples {} < class_count {}",
                self.n_samples, self.class_count
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::InvalidConfig(
                "cluster_spread must be finite and non-negative".into(),
            ));
        }
        let g = &self.geo_bbox;
        if !(g.south_west().is_valid()
            && g.north_east().is_valid()
            && g.lat_min < g.lat_max
            && g.lon_min < g.lon_max)
        {
            return Err(Error::InvalidConfig(
                "geo_bbox is empty or out of range".into(),
            ));
        }
        if self.area_grid.0 == 0 || self.area_grid.1 == 0 {
            return Err(Error::InvalidConfig(
                "area_grid dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Split sizes implied by the fractions: (train, test, pool).
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.n_samples as f64;
        let train = (n * self.split_fractions.0).round() as usize;
        let test = ((n * self.split_fractions.1).round() as usize).min(self.n_samples - train);
        (train, test, self.n_samples - train - test)
    }
}

/// Grid cell of a point inside `bbox`, numbered row-major from the south-west
/// corner. Points on the north/east edges fall into the last row/column.
pub fn grid_cell(bbox: &GeoBox, grid: (u32, u32), p: GeoPoint) -> u32 {
    let (rows, cols) = grid;
    let r = cell_along(bbox.lat_min, bbox.lat_max, rows, p.lat);
    let c = cell_along(bbox.lon_min, bbox.lon_max, cols, p.lon);
    r * cols + c
}

// Index of the half-open interval [edge(i), edge(i+1)) holding x, clamped.
fn cell_along(lo: f64, hi: f64, n: u32, x: f64) -> u32 {
    let edge = |i: u32| lo + (hi - lo) * i as f64 / n as f64;
    let mut i = (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as u32).min(n - 1);
    while i + 1 < n && x >= edge(i + 1) {
        i += 1;
    }
    while i > 0 && x < edge(i) {
        i -= 1;
    }
    i
}

/// Generates class-balanced Gaussian blobs with geolocations in a bounding box.
pub fn gen_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Dataset, SplitState)> {
    spec.validate()?;
    let mut rng = seeds::rng(seed);
    let (n, dim, k) = (spec.n_samples, spec.dim, spec.class_count);

    let centers: Vec<f64> = (0..k * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut embeddings = Vec::with_capacity(n * dim);
    for &l in &labels {
        for d in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            embeddings.push((centers[l * dim + d] + spec.cluster_spread * noise) as f32);
        }
    }

    let g = spec.geo_bbox;
    let geoloc: Vec<GeoPoint> = match spec.geo_hotspots {
        None | Some(0) => (0..n)
            .map(|_| {
                GeoPoint::new(
                    rng.random_range(g.lat_min..=g.lat_max),
                    rng.random_range(g.lon_min..=g.lon_max),
                )
            })
            .collect(),
        Some(h) => {
            let spots: Vec<GeoPoint> = (0..h)
                .map(|_| {
                    GeoPoint::new(
                        rng.random_range(g.lat_min..=g.lat_max),
                        rng.random_range(g.lon_min..=g.lon_max),
                    )
                })
                .collect();
            let (sy, sx) = (
                (g.lat_max - g.lat_min) * 0.08,
                (g.lon_max - g.lon_min) * 0.08,
            );
            (0..n)
                .map(|_| {
                    let s = spots[rng.random_range(0..h)];
                    let dy: f64 = StandardNormal.sample(&mut rng);
                    let dx: f64 = StandardNormal.sample(&mut rng);
                    GeoPoint::new(
                        (s.lat + sy * dy).clamp(g.lat_min, g.lat_max),
                        (s.lon + sx * dx).clamp(g.lon_min, g.lon_max),
                    )
                })
                .collect()
        }
    };
    let area_id = geoloc
        .iter()
        .map(|&p| Some(grid_cell(&g, spec.area_grid, p)))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (n_train, n_test, _) = spec.split_counts();
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..n_train + n_test].to_vec();
    let mut pool_idx = order[n_train + n_test..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    pool_idx.sort_unstable();

    let dataset = Dataset {
        dim,
        embeddings,
        labels,
        geoloc,
        area_id,
        class_count: k,
        class_names: (0..k).map(|c| format!("class_{c}")).collect(),
        ids: (0..n).map(|i| format!("s{i}")).collect(),
    };
    Ok((
        dataset,
        SplitState {
            train_idx,
            test_idx,
            pool_idx,
        },
    ))
}
