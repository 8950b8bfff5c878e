//! Multi-layer radio environmental maps.
//!
//! A [`Rem`] buckets measurement samples into a square grid of width
//! `cell_width` and keeps one layer per network-context feature. Numeric
//! layers store the per-cell arithmetic mean, the cell-id layer stores the
//! per-cell mode. Lookups resolve a position to its cell by floor division
//! relative to the map origin; misses can be compensated by falling back to
//! the nearest populated cell.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval;
use crate::geom::Point;
use crate::measurement::MeasurementSample;

/// The network-context features maintained as REM layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFeature {
    Rsrp,
    Rsrq,
    Sinr,
    Cqi,
    Ta,
    CellId,
}

impl NetworkFeature {
    pub const ALL: [NetworkFeature; 6] = [
        NetworkFeature::Rsrp,
        NetworkFeature::Rsrq,
        NetworkFeature::Sinr,
        NetworkFeature::Cqi,
        NetworkFeature::Ta,
        NetworkFeature::CellId,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NetworkFeature::Rsrp => "rsrp",
            NetworkFeature::Rsrq => "rsrq",
            NetworkFeature::Sinr => "sinr",
            NetworkFeature::Cqi => "cqi",
            NetworkFeature::Ta => "ta",
            NetworkFeature::CellId => "cell_id",
        }
    }

    /// Cell id is categorical (mode-aggregated); everything else is numeric
    /// (mean-aggregated).
    pub fn is_numeric(&self) -> bool {
        !matches!(self, NetworkFeature::CellId)
    }

    fn of_sample(&self, s: &MeasurementSample) -> f64 {
        match self {
            NetworkFeature::Rsrp => s.rsrp,
            NetworkFeature::Rsrq => s.rsrq,
            NetworkFeature::Sinr => s.sinr,
            NetworkFeature::Cqi => s.cqi,
            NetworkFeature::Ta => s.ta,
            NetworkFeature::CellId => f64::from(s.cell_id),
        }
    }
}

impl std::fmt::Display for NetworkFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid cell address obtained by floor division of a position by the cell
/// width relative to the map origin. Ordering is lexicographic on (i, j).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub i: i64,
    pub j: i64,
}

/// Aggregate stored per populated cell: value plus contributing sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub value: f64,
    pub count: u32,
}

/// One REM layer: a sparse grid for a single feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RemLayer {
    pub feature: NetworkFeature,
    pub cells: BTreeMap<GridIndex, CellStat>,
}

/// The feature set served by a REM lookup for one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub rsrp: f64,
    pub rsrq: f64,
    pub sinr: f64,
    pub cqi: f64,
    pub ta: f64,
    pub cell_id: u32,
}

impl FeatureBundle {
    pub fn get(&self, feature: NetworkFeature) -> f64 {
        match feature {
            NetworkFeature::Rsrp => self.rsrp,
            NetworkFeature::Rsrq => self.rsrq,
            NetworkFeature::Sinr => self.sinr,
            NetworkFeature::Cqi => self.cqi,
            NetworkFeature::Ta => self.ta,
            NetworkFeature::CellId => f64::from(self.cell_id),
        }
    }
}

#[derive(Debug, Error)]
pub enum RemError {
    #[error("cannot build a REM from an empty sample set")]
    EmptySamples,
    #[error("all {rejected} samples were rejected as non-finite or invalid")]
    NoValidSamples { rejected: usize },
    #[error("cell width must be > 0, got {0}")]
    InvalidCellWidth(f64),
    #[error("REM has no populated cells")]
    NoPopulatedCells,
    #[error("position list is empty")]
    EmptyPositions,
    #[error("holdout sample set is empty")]
    EmptyHoldout,
    #[error("layer {0} is categorical; use the mismatch rate instead")]
    CategoricalLayer(NetworkFeature),
    #[error("invalid REM description: {0}")]
    InvalidFormat(String),
}

/// Multi-layer radio environmental map. Immutable after build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RemJson", into = "RemJson")]
pub struct Rem {
    cell_width: f64,
    origin: Point,
    layers: Vec<RemLayer>,
    rejected_samples: usize,
}

impl Rem {
    /// Buckets `samples` into a grid of width `cell_width` and aggregates
    /// every network-context feature per cell.
    ///
    /// The grid origin is the bounding-box minimum of the accepted samples.
    /// Samples with non-finite positions or features are rejected and
    /// counted, not fatal.
    pub fn build(samples: &[MeasurementSample], cell_width: f64) -> Result<Rem, RemError> {
        if samples.is_empty() {
            return Err(RemError::EmptySamples);
        }
        if !(cell_width > 0.0) || !cell_width.is_finite() {
            return Err(RemError::InvalidCellWidth(cell_width));
        }

        let accepted: Vec<&MeasurementSample> =
            samples.iter().filter(|s| s.validate().is_ok()).collect();
        let rejected = samples.len() - accepted.len();
        if accepted.is_empty() {
            return Err(RemError::NoValidSamples { rejected });
        }

        let origin = Point::new(
            accepted.iter().map(|s| s.position.x).fold(f64::INFINITY, f64::min),
            accepted.iter().map(|s| s.position.y).fold(f64::INFINITY, f64::min),
        );

        let index_of = |p: Point| GridIndex {
            i: ((p.x - origin.x) / cell_width).floor() as i64,
            j: ((p.y - origin.y) / cell_width).floor() as i64,
        };

        // Numeric layers accumulate (sum, count); the cell-id layer counts ids.
        let mut numeric: Vec<BTreeMap<GridIndex, (f64, u32)>> =
            vec![BTreeMap::new(); NetworkFeature::ALL.len() - 1];
        let mut ids: BTreeMap<GridIndex, HashMap<u32, u32>> = BTreeMap::new();

        for s in &accepted {
            let idx = index_of(s.position);
            for (li, feature) in NetworkFeature::ALL.iter().filter(|f| f.is_numeric()).enumerate() {
                let e = numeric[li].entry(idx).or_insert((0.0, 0));
                e.0 += feature.of_sample(s);
                e.1 += 1;
            }
            *ids.entry(idx).or_default().entry(s.cell_id).or_insert(0) += 1;
        }

        let mut layers = Vec::with_capacity(NetworkFeature::ALL.len());
        for (li, feature) in NetworkFeature::ALL.iter().filter(|f| f.is_numeric()).enumerate() {
            let cells = numeric[li]
                .iter()
                .map(|(idx, (sum, count))| {
                    (*idx, CellStat { value: sum / f64::from(*count), count: *count })
                })
                .collect();
            layers.push(RemLayer { feature: *feature, cells });
        }
        // Mode per cell; ties broken by the smallest identifier.
        let id_cells = ids
            .iter()
            .map(|(idx, histogram)| {
                let count: u32 = histogram.values().sum();
                let mode = histogram
                    .iter()
                    .map(|(id, n)| (*id, *n))
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(id, _)| id)
                    .expect("histogram has at least one entry");
                (*idx, CellStat { value: f64::from(mode), count })
            })
            .collect();
        layers.push(RemLayer { feature: NetworkFeature::CellId, cells: id_cells });

        Ok(Rem { cell_width, origin, layers, rejected_samples: rejected })
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn layers(&self) -> &[RemLayer] {
        &self.layers
    }

    pub fn layer(&self, feature: NetworkFeature) -> &RemLayer {
        self.layers
            .iter()
            .find(|l| l.feature == feature)
            .expect("all layers present by construction")
    }

    /// Number of samples rejected as invalid during the build.
    pub fn rejected_samples(&self) -> usize {
        self.rejected_samples
    }

    /// Number of populated cells (identical across layers).
    pub fn populated_cells(&self) -> usize {
        self.layers[0].cells.len()
    }

    /// The cell owning `position`.
    pub fn grid_index(&self, position: Point) -> GridIndex {
        GridIndex {
            i: ((position.x - self.origin.x) / self.cell_width).floor() as i64,
            j: ((position.y - self.origin.y) / self.cell_width).floor() as i64,
        }
    }

    /// Center of a grid cell in the local frame.
    pub fn cell_center(&self, idx: GridIndex) -> Point {
        Point::new(
            self.origin.x + (idx.i as f64 + 0.5) * self.cell_width,
            self.origin.y + (idx.j as f64 + 0.5) * self.cell_width,
        )
    }

    /// Per-layer aggregates of the cell containing `position`, or `None`
    /// when that cell holds no samples.
    pub fn lookup(&self, position: Point) -> Option<FeatureBundle> {
        self.bundle_at(self.grid_index(position))
    }

    /// Like [`Rem::lookup`], but a miss resolves to the populated cell whose
    /// center is nearest to `position` (ties: lexicographically smallest
    /// index). Fails only when the map has no populated cells at all.
    pub fn lookup_with_fallback(&self, position: Point) -> Result<FeatureBundle, RemError> {
        if let Some(bundle) = self.lookup(position) {
            return Ok(bundle);
        }
        let nearest = self.nearest_populated_cell(position)?;
        Ok(self.bundle_at(nearest).expect("nearest cell is populated"))
    }

    /// Fraction of positions whose plain lookup misses.
    pub fn miss_ratio(&self, positions: &[Point]) -> Result<f64, RemError> {
        if positions.is_empty() {
            return Err(RemError::EmptyPositions);
        }
        let misses = positions.iter().filter(|p| self.lookup(**p).is_none()).count();
        Ok(misses as f64 / positions.len() as f64)
    }

    /// RMSE and MAE of fallback lookups for one numeric layer against the
    /// holdout samples' own values.
    pub fn layer_lookup_error(
        &self,
        holdout: &[MeasurementSample],
        feature: NetworkFeature,
    ) -> Result<(f64, f64), RemError> {
        if !feature.is_numeric() {
            return Err(RemError::CategoricalLayer(feature));
        }
        if holdout.is_empty() {
            return Err(RemError::EmptyHoldout);
        }
        let mut looked_up = Vec::with_capacity(holdout.len());
        let mut observed = Vec::with_capacity(holdout.len());
        for s in holdout {
            let bundle = self.lookup_with_fallback(s.position)?;
            looked_up.push(bundle.get(feature));
            observed.push(feature.of_sample(s));
        }
        let rmse = eval::rmse(&looked_up, &observed).expect("non-empty, equal lengths");
        let mae = eval::mae(&looked_up, &observed).expect("non-empty, equal lengths");
        Ok((rmse, mae))
    }

    /// Fraction of holdout samples whose fallback-looked-up cell id differs
    /// from their own serving cell. The categorical counterpart of
    /// [`Rem::layer_lookup_error`].
    pub fn cell_id_mismatch_rate(&self, holdout: &[MeasurementSample]) -> Result<f64, RemError> {
        if holdout.is_empty() {
            return Err(RemError::EmptyHoldout);
        }
        let mut mismatches = 0usize;
        for s in holdout {
            if self.lookup_with_fallback(s.position)?.cell_id != s.cell_id {
                mismatches += 1;
            }
        }
        Ok(mismatches as f64 / holdout.len() as f64)
    }

    fn bundle_at(&self, idx: GridIndex) -> Option<FeatureBundle> {
        let value = |f: NetworkFeature| self.layer(f).cells.get(&idx).map(|c| c.value);
        Some(FeatureBundle {
            rsrp: value(NetworkFeature::Rsrp)?,
            rsrq: value(NetworkFeature::Rsrq)?,
            sinr: value(NetworkFeature::Sinr)?,
            cqi: value(NetworkFeature::Cqi)?,
            ta: value(NetworkFeature::Ta)?,
            cell_id: value(NetworkFeature::CellId)? as u32,
        })
    }

    fn nearest_populated_cell(&self, position: Point) -> Result<GridIndex, RemError> {
        // BTreeMap iteration is ascending in (i, j), so keeping the first
        // strictly-smaller distance implements the lexicographic tie-break.
        let mut best: Option<(f64, GridIndex)> = None;
        for idx in self.layers[0].cells.keys() {
            let d = self.cell_center(*idx).distance(&position);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, *idx));
            }
        }
        best.map(|(_, idx)| idx).ok_or(RemError::NoPopulatedCells)
    }
}

// JSON shape: origin, cell width and per-layer sparse cell lists
// [i, j, value, count].
#[derive(Serialize, Deserialize)]
struct RemJson {
    origin: Point,
    cell_width: f64,
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    name: NetworkFeature,
    cells: Vec<(i64, i64, f64, u32)>,
}

impl From<Rem> for RemJson {
    fn from(rem: Rem) -> Self {
        RemJson {
            origin: rem.origin,
            cell_width: rem.cell_width,
            layers: rem
                .layers
                .iter()
                .map(|l| LayerJson {
                    name: l.feature,
                    cells: l
                        .cells
                        .iter()
                        .map(|(idx, stat)| (idx.i, idx.j, stat.value, stat.count))
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<RemJson> for Rem {
    type Error = RemError;

    fn try_from(json: RemJson) -> Result<Self, Self::Error> {
        if !(json.cell_width > 0.0) {
            return Err(RemError::InvalidCellWidth(json.cell_width));
        }
        let mut layers = Vec::with_capacity(NetworkFeature::ALL.len());
        for feature in NetworkFeature::ALL {
            let layer = json
                .layers
                .iter()
                .find(|l| l.name == feature)
                .ok_or_else(|| RemError::InvalidFormat(format!("missing layer {feature}")))?;
            let mut cells = BTreeMap::new();
            for (i, j, value, count) in &layer.cells {
                if *count == 0 {
                    return Err(RemError::InvalidFormat(format!(
                        "layer {feature} cell ({i}, {j}) has zero count"
                    )));
                }
                cells.insert(GridIndex { i: *i, j: *j }, CellStat { value: *value, count: *count });
            }
            layers.push(RemLayer { feature, cells });
        }
        let index_set: Vec<&GridIndex> = layers[0].cells.keys().collect();
        for layer in &layers[1..] {
            if layer.cells.keys().collect::<Vec<_>>() != index_set {
                return Err(RemError::InvalidFormat(format!(
                    "layer {} has a different populated index set",
                    layer.feature
                )));
            }
        }
        if index_set.is_empty() {
            return Err(RemError::NoPopulatedCells);
        }
        Ok(Rem { cell_width: json.cell_width, origin: json.origin, layers, rejected_samples: 0 })
    }
}
