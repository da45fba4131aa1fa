//! Sequential marginal acquisition costs.
//!
//! * `none`: every point is free.
//! * `distance`: the first point of a batch is free, each later point costs
//!   the distance from the previously selected point (open tour).
//! * `distance_return`: like `distance`, but the tour must close back at the
//!   first point. A candidate is charged the tour-extension increment
//!   `d(prev, x) + d(x, first) − d(prev, first)`, so the charged costs of a
//!   batch telescope to the closed tour length.
//! * `area_cost`: a fixed per-area cost in `[1, 100]` units, independent of
//!   the order of selection.
//!
//! Distances are in meters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GeoPoint};
use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Euclidean distance after an equirectangular projection around a fixed
/// reference latitude.
pub fn planar(a: GeoPoint, b: GeoPoint, ref_lat_deg: f64) -> f64 {
    let kx = ref_lat_deg.to_radians().cos();
    let dx = (b.lon - a.lon).to_radians() * kx;
    let dy = (b.lat - a.lat).to_radians();
    EARTH_RADIUS_M * dx.hypot(dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Haversine,
    Planar { ref_lat_deg: f64 },
}

impl Metric {
    pub fn distance(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        match *self {
            Metric::Haversine => haversine(a, b),
            Metric::Planar { ref_lat_deg } => planar(a, b, ref_lat_deg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    None,
    Distance,
    DistanceReturn,
    AreaCost,
}

impl CostVariant {
    pub fn is_distance(self) -> bool {
        matches!(self, CostVariant::Distance | CostVariant::DistanceReturn)
    }

    /// Name used on the command line and in result file names.
    pub fn cli_name(self) -> &'static str {
        match self {
            CostVariant::None => "none",
            CostVariant::Distance => "distance",
            CostVariant::DistanceReturn => "distance-return",
            CostVariant::AreaCost => "area",
        }
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for CostVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CostVariant::None),
            "distance" => Ok(CostVariant::Distance),
            "distance-return" | "distance_return" => Ok(CostVariant::DistanceReturn),
            "area" | "area_cost" | "area-cost" => Ok(CostVariant::AreaCost),
            other => Err(Error::InvalidConfig(format!(
                "unknown cost model {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub variant: CostVariant,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_costs: Option<BTreeMap<u32, f64>>,
}

/// Where the current batch's tour starts and where it currently ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TourContext {
    first: Option<usize>,
    prev: Option<usize>,
}

impl TourContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn first(&self) -> Option<usize> {
        self.first
    }

    pub fn prev(&self) -> Option<usize> {
        self.prev
    }

    pub fn advance(&mut self, idx: usize) {
        if self.first.is_none() {
            self.first = Some(idx);
        }
        self.prev = Some(idx);
    }
}

impl CostModel {
    pub fn none() -> Self {
        Self {
            variant: CostVariant::None,
            metric: Metric::Haversine,
            area_costs: None,
        }
    }

    pub fn distance(metric: Metric) -> Self {
        Self {
            variant: CostVariant::Distance,
            metric,
            area_costs: None,
        }
    }

    pub fn distance_return(metric: Metric) -> Self {
        Self {
            variant: CostVariant::DistanceReturn,
            metric,
            area_costs: None,
        }
    }

    pub fn area(area_costs: BTreeMap<u32, f64>) -> Result<Self> {
        let model = Self {
            variant: CostVariant::AreaCost,
            metric: Metric::Haversine,
            area_costs: Some(area_costs),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(costs) = &self.area_costs {
            if let Some((a, c)) = costs.iter().find(|(_, &c)| !(1.0..=100.0).contains(&c)) {
                return Err(Error::Cost(format!(
                    "area {a} has cost {c} outside [1, 100]"
                )));
            }
        }
        if self.variant == CostVariant::AreaCost && self.area_costs.is_none() {
            return Err(Error::Cost("area_cost needs an area cost map".into()));
        }
        Ok(())
    }

    /// Checks that every point of `idx` carries what this model needs.
    pub fn check_dataset(&self, dataset: &Dataset, idx: &[usize]) -> Result<()> {
        if self.variant == CostVariant::AreaCost {
            let costs = self
                .area_costs
                .as_ref()
                .ok_or_else(|| Error::Cost("missing area cost map".into()))?;
            for &i in idx {
                let a = dataset.area_id[i]
                    .ok_or_else(|| Error::Cost(format!("sample {i} has no area id")))?;
                if !costs.contains_key(&a) {
                    return Err(Error::Cost(format!("area {a} of sample {i} has no cost")));
                }
            }
        }
        Ok(())
    }

    pub fn marginal_cost(
        &self,
        ctx: &TourContext,
        candidate: usize,
        dataset: &Dataset,
    ) -> Result<f64> {
        let geo = &dataset.geoloc;
        match self.variant {
            CostVariant::None => Ok(0.0),
            CostVariant::Distance => Ok(match ctx.prev {
                None => 0.0,
                Some(prev) => self.metric.distance(geo[prev], geo[candidate]),
            }),
            CostVariant::DistanceReturn => match (ctx.first, ctx.prev) {
                (Some(first), Some(prev)) => {
                    let d = &self.metric;
                    let inc = d.distance(geo[prev], geo[candidate])
                        + d.distance(geo[candidate], geo[first])
                        - d.distance(geo[prev], geo[first]);
                    if inc < -1e-9 {
                        return Err(Error::Cost(format!("negative tour increment {inc}: metric violates the triangle inequality")));
                    }
                    Ok(inc)
                }
                _ => Ok(0.0),
            },
            CostVariant::AreaCost => {
                let costs = self
                    .area_costs
                    .as_ref()
                    .ok_or_else(|| Error::Cost("missing area cost map".into()))?;
                let area = dataset.area_id[candidate]
                    .ok_or_else(|| Error::Cost(format!("sample {candidate} has no area id")))?;
                costs
                    .get(&area)
                    .copied()
                    .ok_or_else(|| Error::Cost(format!("area {area} has no cost")))
            }
        }
    }

    pub fn marginal_costs(
        &self,
        ctx: &TourContext,
        candidates: &[usize],
        dataset: &Dataset,
    ) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|&c| self.marginal_cost(ctx, c, dataset))
            .collect()
    }
}

/// Per-area cost `1 + 99 (n_a − n_min) / (n_max − n_min)`, rounded half to
/// even, where `n_a` counts the samples in area `a`. Equal counts give cost 1
/// everywhere.
pub fn build_area_costs(dataset: &Dataset) -> Result<BTreeMap<u32, f64>> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for a in dataset.area_id.iter().flatten() {
        *counts.entry(*a).or_default() += 1;
    }
    area_costs_from_counts(&counts)
}

pub fn area_costs_from_counts(counts: &BTreeMap<u32, usize>) -> Result<BTreeMap<u32, f64>> {
    let min = *counts
        .values()
        .min()
        .ok_or_else(|| Error::Cost("no areas defined".into()))?;
    let max = *counts.values().max().expect("nonempty");
    Ok(counts
        .iter()
        .map(|(&a, &n)| {
            let cost = if max == min {
                1.0
            } else {
                (1.0 + 99.0 * (n - min) as f64 / (max - min) as f64).round_ties_even()
            };
            (a, cost)
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct AreaRow {
    area_id: u32,
    cost: f64,
}

/// Reads an `area_id,cost` override file.
pub fn load_area_costs(path: impl AsRef<Path>) -> Result<BTreeMap<u32, f64>> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<AreaRow>() {
        let row = row.map_err(csv_err)?;
        if !(1.0..=100.0).contains(&row.cost) {
            return Err(Error::Cost(format!(
                "area {} has cost {} outside [1, 100]",
                row.area_id, row.cost
            )));
        }
        if out.insert(row.area_id, row.cost).is_some() {
            return Err(Error::Cost(format!("area {} listed twice", row.area_id)));
        }
    }
    if out.is_empty() {
        return Err(Error::Cost("no areas defined".into()));
    }
    Ok(out)
}

pub fn write_area_costs(costs: &BTreeMap<u32, f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (&area_id, &cost) in costs {
        w.serialize(AreaRow { area_id, cost }).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
