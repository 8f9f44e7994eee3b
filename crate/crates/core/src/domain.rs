//! Discretized spatial domains and point observations.

use std::collections::BTreeMap;
use std::path::Path;

use crate::csvio::{fmt_f64, parse_f64};
use crate::{Error, Result};

/// Distance used by the univariate covariances.
///
/// Interaction functions always work on raw coordinate displacements, so under
/// `Chordal` they see longitude-latitude offsets in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Euclidean,
    /// Straight-line distance through a sphere of the given radius; coordinates are
    /// (longitude, latitude) in degrees.
    Chordal { radius: f64 },
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Chordal { radius } => 2.0 * radius * haversine(a, b).sqrt(),
        }
    }

    fn check_location(&self, loc: &[f64]) -> Result<()> {
        if loc.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate in {loc:?}")));
        }
        if let Metric::Chordal { radius } = *self {
            if loc.len() != 2 {
                return Err(Error::Domain(
                    "chordal metric needs (longitude, latitude) locations".into(),
                ));
            }
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::Domain(format!("sphere radius must be positive, got {radius}")));
            }
            if !(-90.0..=90.0).contains(&loc[1]) {
                return Err(Error::Domain(format!("latitude {} outside [-90, 90]", loc[1])));
            }
        }
        Ok(())
    }
}

/// `sin²(Δφ/2) + cos φ1 cos φ2 sin²(Δλ/2)` for lon-lat degrees.
fn haversine(a: &[f64], b: &[f64]) -> f64 {
    let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
    let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
    let s_lat = ((lat2 - lat1) / 2.0).sin();
    let s_lon = ((lon2 - lon1) / 2.0).sin();
    (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).clamp(0.0, 1.0)
}

fn check_lon_lat(p: &[f64; 2]) -> Result<()> {
    if p.iter().any(|x| !x.is_finite()) || !(-90.0..=90.0).contains(&p[1]) {
        return Err(Error::Domain(format!(
            "invalid longitude-latitude pair ({}, {})",
            p[0], p[1]
        )));
    }
    Ok(())
}

/// Chord length `2R sin(θ/2)` between two (longitude, latitude) points in degrees.
pub fn chordal_distance(a: [f64; 2], b: [f64; 2], radius: f64) -> Result<f64> {
    check_lon_lat(&a)?;
    check_lon_lat(&b)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain(format!("sphere radius must be positive, got {radius}")));
    }
    Ok(Metric::Chordal { radius }.distance(&a, &b))
}

/// Great-circle (arc) distance `Rθ` between two (longitude, latitude) points in degrees.
pub fn great_circle_distance(a: [f64; 2], b: [f64; 2], radius: f64) -> Result<f64> {
    check_lon_lat(&a)?;
    check_lon_lat(&b)?;
    Ok(2.0 * radius * haversine(&a, &b).sqrt().asin())
}

/// Ordered vertices with quadrature weights: `∫ f ≈ Σ_k weight_k f(vertex_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    metric: Metric,
}

impl Grid {
    /// `coords` holds `weights.len()` vertices of dimension `dim`, back to back.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>, metric: Metric) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if weights.is_empty() {
            return Err(Error::Domain("grid needs at least one vertex".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::Domain(format!(
                "{} coordinates do not match {} vertices of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Validation(format!(
                "vertex {k} has nonpositive weight {w}"
            )));
        }
        for loc in coords.chunks(dim) {
            metric.check_location(loc)?;
        }
        Ok(Grid {
            dim,
            coords,
            weights,
            metric,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn vertex(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vertices(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric.distance(a, b)
    }

    pub fn check_location(&self, loc: &[f64]) -> Result<()> {
        if loc.len() != self.dim {
            return Err(Error::Domain(format!(
                "location {loc:?} does not have dimension {}",
                self.dim
            )));
        }
        self.metric.check_location(loc)
    }

    /// Same grid under a different metric.
    pub fn with_metric(self, metric: Metric) -> Result<Self> {
        Grid::new(self.dim, self.coords, self.weights, metric)
    }

    /// Writes the mesh CSV format read by [`load_mesh`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut header: Vec<&str> = ["x", "y", "z"][..self.dim].to_vec();
        header.push("weight");
        w.write_record(&header)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        for (loc, wt) in self.vertices().zip(&self.weights) {
            let row: Vec<String> = loc.iter().chain([wt]).map(|&v| fmt_f64(v)).collect();
            w.write_record(&row)
                .map_err(|e| Error::parse(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Cell-centred regular grid; every weight is the cell volume.
///
/// Vertices are ordered with the last axis varying fastest.
pub fn regular_grid(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Grid> {
    if bounds.is_empty() || bounds.len() != counts.len() {
        return Err(Error::Domain(
            "bounds and counts must be nonempty and of equal length".into(),
        ));
    }
    let dim = bounds.len();
    let mut steps = Vec::with_capacity(dim);
    for (&(lo, hi), &n) in bounds.iter().zip(counts) {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::Domain(format!("interval [{lo}, {hi}] has no width")));
        }
        if n == 0 {
            return Err(Error::Domain("every axis needs at least one cell".into()));
        }
        steps.push((hi - lo) / n as f64);
    }
    let volume: f64 = steps.iter().product();
    let total: usize = counts.iter().product();
    let mut coords = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for a in 0..dim {
            coords.push(bounds[a].0 + (idx[a] as f64 + 0.5) * steps[a]);
        }
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Grid::new(dim, coords, vec![volume; total], Metric::Euclidean)
}

/// Reads a mesh CSV with header `x[, y[, z]], weight`.
pub fn load_mesh(path: &Path, metric: Metric) -> Result<Grid> {
    let (header, rows) = read_numeric_csv(path)?;
    let ncols = header.len();
    if !(2..=4).contains(&ncols) || header[ncols - 1] != "weight" {
        return Err(Error::parse(
            path,
            "mesh header must be `x[, y[, z]], weight`",
        ));
    }
    let dim = ncols - 1;
    let mut coords = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for row in rows {
        coords.extend_from_slice(&row[..dim]);
        weights.push(row[dim]);
    }
    Grid::new(dim, coords, weights, metric)
}

/// Data for one variable: values observed at arbitrary (not necessarily grid) locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observations {
    /// Zero-based variable (node) index.
    pub variable: usize,
    pub locations: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Extra named columns, aligned with `values`; usable as mean covariates.
    pub covariates: BTreeMap<String, Vec<f64>>,
}

impl Observations {
    pub fn new(variable: usize, locations: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let obs = Observations {
            variable,
            locations,
            values,
            covariates: BTreeMap::new(),
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn empty(variable: usize) -> Self {
        Observations {
            variable,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "variable {}: {} locations but {} values",
                self.variable + 1,
                self.locations.len(),
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "variable {}: non-finite value {v}",
                self.variable + 1
            )));
        }
        for (name, col) in &self.covariates {
            if col.len() != self.values.len() {
                return Err(Error::Validation(format!(
                    "covariate column '{name}' has the wrong length"
                )));
            }
        }
        Ok(())
    }

    /// Subset with the given row indices, keeping covariates aligned.
    pub fn select(&self, rows: &[usize]) -> Observations {
        Observations {
            variable: self.variable,
            locations: rows.iter().map(|&i| self.locations[i].clone()).collect(),
            values: rows.iter().map(|&i| self.values[i]).collect(),
            covariates: self
                .covariates
                .iter()
                .map(|(k, col)| (k.clone(), rows.iter().map(|&i| col[i]).collect()))
                .collect(),
        }
    }
}

/// Reads observations from CSV with header `variable, x[, y[, z]], value[, covariates...]`.
///
/// Variables are numbered from 1 in the file. The result holds one entry per
/// variable up to `nvars` (empty where nothing was observed).
pub fn load_observations(path: &Path, nvars: usize) -> Result<Vec<Observations>> {
    let (header, rows) = read_numeric_csv(path)?;
    let value_col = header
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::parse(path, "observation header needs a `value` column"))?;
    if header.first().map(String::as_str) != Some("variable") || !(2..=4).contains(&value_col) {
        return Err(Error::parse(
            path,
            "observation header must be `variable, x[, y[, z]], value[, covariates...]`",
        ));
    }
    let dim = value_col - 1;
    let extra: Vec<String> = header[value_col + 1..].to_vec();
    let mut out: Vec<Observations> = (0..nvars).map(Observations::empty).collect();
    for (line, row) in rows.iter().enumerate() {
        let var = row[0];
        if var.fract() != 0.0 || var < 1.0 || var as usize > nvars {
            return Err(Error::parse(
                path,
                format!("row {}: variable {var} is not in 1..={nvars}", line + 2),
            ));
        }
        let obs = &mut out[var as usize - 1];
        obs.locations.push(row[1..=dim].to_vec());
        obs.values.push(row[value_col]);
        for (name, v) in extra.iter().zip(&row[value_col + 1..]) {
            obs.covariates.entry(name.clone()).or_default().push(*v);
        }
    }
    for obs in &mut out {
        if obs.is_empty() {
            for name in &extra {
                obs.covariates.insert(name.clone(), Vec::new());
            }
        }
        obs.validate()?;
    }
    Ok(out)
}

/// Writes observations in the format read by [`load_observations`].
pub fn write_observations(path: &Path, obs: &[Observations]) -> Result<()> {
    let dim = obs
        .iter()
        .flat_map(|o| o.locations.first())
        .map(Vec::len)
        .next()
        .unwrap_or(1);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut header = vec!["variable"];
    header.extend_from_slice(&["x", "y", "z"][..dim]);
    header.push("value");
    w.write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for o in obs {
        for (loc, v) in o.locations.iter().zip(&o.values) {
            let mut row = vec![(o.variable + 1).to_string()];
            row.extend(loc.iter().chain([v]).map(|&x| fmt_f64(x)));
            w.write_record(&row)
                .map_err(|e| Error::parse(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file whose cells are all numbers.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => Error::parse(path, e.to_string()),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::parse(
                path,
                format!(
                    "row {} has {} fields, header has {}",
                    line + 2,
                    record.len(),
                    header.len()
                ),
            ));
        }
        let row = record
            .iter()
            .map(|f| parse_f64(f).map_err(|m| Error::parse(path, format!("row {}: {m}", line + 2))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
