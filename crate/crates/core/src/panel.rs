//! Return panels, portfolio weights and sector labels.
//!
//! The on-disk format is a wide CSV: a `date` column (ISO-8601) followed by one
//! column per asset. A column with any blank or non-finite cell is dropped at
//! ingestion and reported back to the caller; there is no imputation. Values are
//! stored in whatever unit the file uses.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported ingest formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelFormat {
    #[default]
    Csv,
}

/// A validated `T × p` matrix of log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    asset_ids: Vec<String>,
    timestamps: Vec<NaiveDate>,
    groups: Option<Vec<String>>,
}

impl ReturnPanel {
    /// Build a panel, checking shape, finiteness, unique ids and strictly
    /// increasing dates.
    pub fn new(
        returns: DMatrix<f64>,
        asset_ids: Vec<String>,
        timestamps: Vec<NaiveDate>,
    ) -> Result<Self> {
        let (t, p) = returns.shape();
        if t < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: t,
            });
        }
        if p < 1 {
            return Err(Error::Data("panel has no assets".to_string()));
        }
        if asset_ids.len() != p {
            return Err(Error::DimensionMismatch {
                context: "asset ids",
                expected: p,
                actual: asset_ids.len(),
            });
        }
        if timestamps.len() != t {
            return Err(Error::DimensionMismatch {
                context: "timestamps",
                expected: t,
                actual: timestamps.len(),
            });
        }
        let mut seen = HashSet::with_capacity(p);
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("duplicate asset id {id:?}")));
            }
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at {}",
                w[1]
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("panel contains non-finite values".to_string()));
        }
        Ok(Self {
            returns,
            asset_ids,
            timestamps,
            groups: None,
        })
    }

    /// Panel with synthetic consecutive calendar dates starting 2000-01-01.
    pub fn with_synthetic_dates(returns: DMatrix<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let timestamps = (0..returns.nrows())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        let asset_ids = (0..returns.ncols()).map(|j| format!("A{j:04}")).collect();
        Self::new(returns, asset_ids, timestamps)
    }

    /// Attach one group label per asset.
    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.n_assets() {
            return Err(Error::DimensionMismatch {
                context: "group labels",
                expected: self.n_assets(),
                actual: groups.len(),
            });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    /// Attach group labels looked up by asset id.
    pub fn with_group_map(self, map: &HashMap<String, String>) -> Result<Self> {
        let groups = self
            .asset_ids
            .iter()
            .map(|id| {
                map.get(id)
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("no group label for asset {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_groups(groups)
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    /// Number of periods `T`.
    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of assets `p`.
    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.asset_ids.iter().position(|a| a == id)
    }

    /// Rows `[start, end)` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.n_periods() || start >= end {
            return Err(Error::InvalidArgument(format!(
                "row range {start}..{end} outside panel of {} rows",
                self.n_periods()
            )));
        }
        let mut out = Self::new(
            self.returns.rows(start, end - start).into_owned(),
            self.asset_ids.clone(),
            self.timestamps[start..end].to_vec(),
        )?;
        out.groups = self.groups.clone();
        Ok(out)
    }
}

/// A panel together with the ids of the columns that were dropped for gaps.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnPanel,
    pub dropped: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Read a wide-format return panel.
pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<LoadedPanel> {
    let path = path.as_ref();
    match format {
        PanelFormat::Csv => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_panel_csv(file)
        }
    }
}

/// Parse a wide-format CSV panel from any reader.
pub fn read_panel_csv<R: std::io::Read>(reader: R) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Data(
            "header must contain a date column and at least one asset".to_string(),
        ));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate asset id {id:?}")));
        }
    }
    let p = ids.len();
    let mut dates = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut complete = vec![true; p];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let date_str = record.get(0).unwrap_or("").trim();
        let date = date_str.parse::<NaiveDate>().map_err(|e| {
            Error::Data(format!("row {}: bad date {date_str:?}: {e}", row + 2))
        })?;
        dates.push(date);
        for (j, cell) in record.iter().skip(1).enumerate() {
            if is_missing(cell) {
                complete[j] = false;
                cells.push(None);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column {:?}: cannot parse {cell:?}",
                    row + 2,
                    ids[j]
                ))
            })?;
            if !v.is_finite() {
                complete[j] = false;
                cells.push(None);
            } else {
                cells.push(Some(v));
            }
        }
    }
    let t = dates.len();
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    let keep: Vec<usize> = (0..p).filter(|&j| complete[j]).collect();
    let dropped: Vec<String> = (0..p)
        .filter(|&j| !complete[j])
        .map(|j| ids[j].clone())
        .collect();
    if keep.is_empty() {
        return Err(Error::Data(
            "every asset column has missing values".to_string(),
        ));
    }
    let returns = DMatrix::from_fn(t, keep.len(), |i, k| {
        cells[i * p + keep[k]].expect("complete column")
    });
    if !dropped.is_empty() {
        log::warn!("dropped {} asset(s) with missing data", dropped.len());
    }
    let panel = ReturnPanel::new(returns, keep.iter().map(|&j| ids[j].clone()).collect(), dates)?;
    Ok(LoadedPanel { panel, dropped })
}

/// Write a panel in the wide CSV format accepted by [`load_panel`].
pub fn write_panel(panel: &ReturnPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["date".to_string()];
    header.extend(panel.asset_ids().iter().cloned());
    w.write_record(&header)?;
    let r = panel.returns();
    for (i, date) in panel.timestamps().iter().enumerate() {
        let mut rec = Vec::with_capacity(panel.n_assets() + 1);
        rec.push(date.to_string());
        // `{}` on f64 prints the shortest string that round-trips exactly.
        rec.extend((0..panel.n_assets()).map(|j| format!("{}", r[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read the `asset_id,group` sidecar file.
pub fn load_groups(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (Some(id), Some(g)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Data("group file rows need asset_id,group".to_string()));
        };
        map.insert(id.trim().to_string(), g.trim().to_string());
    }
    Ok(map)
}

/// Subtract column means. Returns the centered matrix and the mean vector.
pub fn demean_matrix(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let t = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / t));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (centered, mean)
}

/// Center every asset on its sample mean.
pub fn demean(panel: &ReturnPanel) -> (DMatrix<f64>, DVector<f64>) {
    demean_matrix(panel.returns())
}

/// Portfolio weight vector over all panel assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".to_string()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite portfolio weight".to_string()));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidArgument("portfolio has no nonzero weight".to_string()));
        }
        Ok(Self { weights })
    }

    /// Equal weights `1/s` on the given assets of a `p`-asset universe.
    pub fn equal_weighted(p: usize, assets: &[usize]) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::InvalidArgument("no assets selected".to_string()));
        }
        let mut w = vec![0.0; p];
        let share = 1.0 / assets.len() as f64;
        for &a in assets {
            if a >= p {
                return Err(Error::InvalidArgument(format!("asset index {a} >= {p}")));
            }
            w[a] = share;
        }
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    /// `‖w‖₁`.
    pub fn gross_exposure(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Indices of nonzero weights.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] != 0.0)
            .collect()
    }

    pub fn check_width(&self, p: usize) -> Result<()> {
        if self.weights.len() != p {
            return Err(Error::DimensionMismatch {
                context: "portfolio weights",
                expected: p,
                actual: self.weights.len(),
            });
        }
        Ok(())
    }
}

/// `r_t = wᵀ y_t` for every row of a `T × p` matrix.
pub fn portfolio_returns_matrix(x: &DMatrix<f64>, w: &Portfolio) -> Result<DVector<f64>> {
    w.check_width(x.ncols())?;
    Ok(x * w.as_vector())
}

/// Portfolio return series of a panel.
pub fn portfolio_returns(panel: &ReturnPanel, w: &Portfolio) -> Result<DVector<f64>> {
    portfolio_returns_matrix(panel.returns(), w)
}

/// Read named portfolios from a long CSV `portfolio,asset_id,weight`.
pub fn load_portfolios(
    path: impl AsRef<Path>,
    panel: &ReturnPanel,
) -> Result<Vec<(String, Portfolio)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut order: Vec<String> = Vec::new();
    let mut weights: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::Data(
                "portfolio rows need portfolio,asset_id,weight".to_string(),
            ));
        }
        let name = rec[0].trim().to_string();
        let asset = rec[1].trim();
        let idx = panel
            .asset_index(asset)
            .ok_or_else(|| Error::Data(format!("portfolio {name:?} references unknown asset {asset:?}")))?;
        let w: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad weight {:?}", &rec[2])))?;
        let entry = weights.entry(name.clone()).or_insert_with(|| {
            order.push(name.clone());
            vec![0.0; panel.n_assets()]
        });
        entry[idx] += w;
    }
    order
        .into_iter()
        .map(|name| {
            let w = weights.remove(&name).expect("registered portfolio");
            Portfolio::new(w).map(|p| (name, p))
        })
        .collect()
}
