//! Spectral data model and CSV interchange.
//!
//! Spectra travel as *wide* CSV: one row per wavenumber channel, the first
//! column holding the shared axis (`wavenumber_cm-1`) and every other column
//! one spectrum. Concentrations travel as `species,unit,<label1>,<label2>,...`
//! with one row per species.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AXIS_HEADER: &str = "wavenumber_cm-1";
pub const MIN_CHANNELS: usize = 8;

/// A single spectrum on its own axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavenumbers: Vec<f64>,
    intensities: Vec<f64>,
    label: String,
    /// Free-form annotations such as exposure time or acquisition count.
    pub meta: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn new(wavenumbers: Vec<f64>, intensities: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        validate_axis(&wavenumbers)?;
        if intensities.len() != wavenumbers.len() {
            return Err(Error::RaggedRows {
                row: 0,
                expected: wavenumbers.len(),
                found: intensities.len(),
            });
        }
        if let Some(row) = intensities.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row,
                column: label,
                value: intensities[row].to_string(),
            });
        }
        Ok(Self {
            wavenumbers,
            intensities,
            label,
            meta: BTreeMap::new(),
        })
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Spectra sharing one wavenumber axis; rows are samples, columns channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraSet {
    axis: Vec<f64>,
    matrix: DMatrix<f64>,
    labels: Vec<String>,
}

fn validate_axis(axis: &[f64]) -> Result<()> {
    if axis.len() < MIN_CHANNELS {
        return Err(Error::TooFewChannels {
            found: axis.len(),
            required: MIN_CHANNELS,
        });
    }
    if let Some(row) = axis.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row,
            column: AXIS_HEADER.to_string(),
            value: axis[row].to_string(),
        });
    }
    if let Some(w) = axis.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonmonotonicAxis { row: w + 1 });
    }
    Ok(())
}

impl SpectraSet {
    /// Builds a validated set. `matrix` is `labels.len() x axis.len()`.
    pub fn new(axis: Vec<f64>, matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        validate_axis(&axis)?;
        if labels.is_empty() {
            return Err(Error::TooFewSpectra { found: 0, required: 1 });
        }
        if matrix.ncols() != axis.len() || matrix.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: (labels.len(), axis.len()),
                found: matrix.shape(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel { label: l.clone() });
            }
        }
        for (n, label) in labels.iter().enumerate() {
            if let Some(c) = matrix.row(n).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    row: c,
                    column: label.clone(),
                    value: matrix[(n, c)].to_string(),
                });
            }
        }
        Ok(Self { axis, matrix, labels })
    }

    /// Stacks spectra that share one axis exactly. Mismatched axes are
    /// rejected rather than resampled.
    pub fn from_spectra(spectra: &[Spectrum]) -> Result<Self> {
        let first = spectra.first().ok_or(Error::TooFewSpectra { found: 0, required: 1 })?;
        let axis = first.wavenumbers.clone();
        if spectra.iter().any(|s| s.wavenumbers != axis) {
            return Err(Error::AxisMismatch);
        }
        let matrix = DMatrix::from_fn(spectra.len(), axis.len(), |n, c| spectra[n].intensities[c]);
        let labels = spectra.iter().map(|s| s.label.clone()).collect();
        Self::new(axis, matrix, labels)
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_spectra(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.axis.len()
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.matrix.row(n).iter().copied().collect()
    }

    pub fn spectrum(&self, n: usize) -> Spectrum {
        Spectrum {
            wavenumbers: self.axis.clone(),
            intensities: self.row(n),
            label: self.labels[n].clone(),
            meta: BTreeMap::new(),
        }
    }

    /// Subset of rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SpectraSet {
        let matrix = self.matrix.select_rows(rows);
        let labels = rows.iter().map(|&r| self.labels[r].clone()).collect();
        SpectraSet {
            axis: self.axis.clone(),
            matrix,
            labels,
        }
    }

    /// Same axis and labels with new intensities.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Result<SpectraSet> {
        Self::new(self.axis.clone(), matrix, self.labels.clone())
    }

    pub fn require_spectra(&self, required: usize) -> Result<()> {
        if self.n_spectra() < required {
            return Err(Error::TooFewSpectra {
                found: self.n_spectra(),
                required,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub unit: String,
}

impl Species {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

/// Known concentrations, `q` species by `i` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSet {
    matrix: DMatrix<f64>,
    species: Vec<Species>,
    labels: Vec<String>,
}

impl ConcentrationSet {
    pub fn new(matrix: DMatrix<f64>, species: Vec<Species>, labels: Vec<String>) -> Result<Self> {
        if species.is_empty() || labels.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if matrix.shape() != (species.len(), labels.len()) {
            return Err(Error::ShapeMismatch {
                expected: (species.len(), labels.len()),
                found: matrix.shape(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel { label: l.clone() });
            }
        }
        for (s, sp) in species.iter().enumerate() {
            for (n, label) in labels.iter().enumerate() {
                let v = matrix[(s, n)];
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: s,
                        column: label.clone(),
                        value: v.to_string(),
                    });
                }
                if v < 0.0 {
                    return Err(Error::NegativeConcentration {
                        species: sp.name.clone(),
                        label: label.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            matrix,
            species,
            labels,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn select_columns(&self, cols: &[usize]) -> ConcentrationSet {
        ConcentrationSet {
            matrix: self.matrix.select_columns(cols),
            species: self.species.clone(),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
        }
    }

    /// Re-orders columns so column `n` belongs to `labels[n]`.
    pub fn align_to(&self, labels: &[String]) -> Result<ConcentrationSet> {
        let index: HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(n, l)| (l.as_str(), n))
            .collect();
        let mut cols = Vec::with_capacity(labels.len());
        for l in labels {
            match index.get(l.as_str()) {
                Some(&c) => cols.push(c),
                None => return Err(Error::LabelMismatch { label: l.clone() }),
            }
        }
        let wanted: HashSet<&str> = labels.iter().map(String::as_str).collect();
        if let Some(extra) = self.labels.iter().find(|l| !wanted.contains(l.as_str())) {
            return Err(Error::LabelMismatch { label: extra.clone() });
        }
        Ok(self.select_columns(&cols))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectraFormat {
    #[default]
    WideCsv,
}

/// Shortest text that parses back to the same `f64`. Plain notation for
/// magnitudes in `[1e-5, 1e15)`, exponent notation otherwise.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = v.abs();
    if v == 0.0 || (1e-5..1e15).contains(&mag) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonFiniteValue {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn load_spectra(path: impl AsRef<Path>, format: SpectraFormat) -> Result<SpectraSet> {
    let path = path.as_ref();
    match format {
        SpectraFormat::WideCsv => read_spectra(open(path)?),
    }
}

/// Parses a wide CSV. Reported `row` numbers are file line numbers.
pub fn read_spectra<R: Read>(reader: R) -> Result<SpectraSet> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let first = headers.get(0).unwrap_or("");
    if first.trim_start_matches('\u{feff}') != AXIS_HEADER {
        return Err(Error::MissingAxisHeader {
            found: first.to_string(),
        });
    }
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(Error::TooFewSpectra { found: 0, required: 1 });
    }
    let width = headers.len();
    let mut axis = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::RaggedRows {
                row: line,
                expected: width,
                found: rec.len(),
            });
        }
        let nu = parse_cell(&rec[0], line, AXIS_HEADER)?;
        if let Some(&prev) = axis.last() {
            if nu <= prev {
                return Err(Error::NonmonotonicAxis { row: line });
            }
        }
        axis.push(nu);
        for (c, cell) in rec.iter().enumerate().skip(1) {
            values.push(parse_cell(cell, line, &labels[c - 1])?);
        }
    }
    let i = labels.len();
    let j = axis.len();
    // values is channel-major: values[ch * i + n]
    let matrix = DMatrix::from_fn(i, j, |n, ch| values[ch * i + n]);
    SpectraSet::new(axis, matrix, labels)
}

pub fn save_spectra(path: impl AsRef<Path>, set: &SpectraSet) -> Result<()> {
    let path = path.as_ref();
    write_spectra(create(path)?, set)
}

pub fn write_spectra<W: Write>(writer: W, set: &SpectraSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![AXIS_HEADER.to_string()];
    header.extend(set.labels.iter().cloned());
    w.write_record(&header)?;
    for (ch, nu) in set.axis.iter().enumerate() {
        let mut rec = Vec::with_capacity(set.n_spectra() + 1);
        rec.push(format_float(*nu));
        rec.extend(set.matrix.column(ch).iter().map(|v| format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Loads concentrations in file order. Use [`ConcentrationSet::align_to`] or
/// [`load_concentrations_for`] to match a spectra set.
pub fn load_concentrations(path: impl AsRef<Path>) -> Result<ConcentrationSet> {
    read_concentrations(open(path.as_ref())?)
}

pub fn load_concentrations_for(path: impl AsRef<Path>, set: &SpectraSet) -> Result<ConcentrationSet> {
    load_concentrations(path)?.align_to(set.labels())
}

pub fn read_concentrations<R: Read>(reader: R) -> Result<ConcentrationSet> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let has_unit = headers.get(1).map(|h| h.eq_ignore_ascii_case("unit")).unwrap_or(false);
    let skip = if has_unit { 2 } else { 1 };
    let labels: Vec<String> = headers.iter().skip(skip).map(str::to_string).collect();
    if labels.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut species = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(Error::RaggedRows {
                row: line,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        let unit = if has_unit { rec[1].to_string() } else { String::new() };
        let sp = Species::new(&rec[0], unit);
        for (n, cell) in rec.iter().skip(skip).enumerate() {
            let v = parse_cell(cell, line, &labels[n])?;
            if v < 0.0 {
                return Err(Error::NegativeConcentration {
                    species: sp.name.clone(),
                    label: labels[n].clone(),
                    value: v,
                });
            }
            values.push(v);
        }
        species.push(sp);
    }
    let q = species.len();
    let i = labels.len();
    if q == 0 {
        return Err(Error::EmptyMatrix);
    }
    let matrix = DMatrix::from_row_slice(q, i, &values);
    ConcentrationSet::new(matrix, species, labels)
}

pub fn save_concentrations(path: impl AsRef<Path>, conc: &ConcentrationSet) -> Result<()> {
    write_concentrations(create(path.as_ref())?, conc)
}

pub fn write_concentrations<W: Write>(writer: W, conc: &ConcentrationSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["species".to_string(), "unit".to_string()];
    header.extend(conc.labels.iter().cloned());
    w.write_record(&header)?;
    for (s, sp) in conc.species.iter().enumerate() {
        let mut rec = vec![sp.name.clone(), sp.unit.clone()];
        rec.extend(conc.matrix.row(s).iter().map(|v| format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Writes a rectangular matrix as CSV with one header per column.
pub fn save_matrix(path: impl AsRef<Path>, matrix: &DMatrix<f64>, headers: &[String]) -> Result<()> {
    let path = path.as_ref();
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    write_matrix(create(path)?, matrix, headers, None)
}

/// Like [`save_matrix`] with a leading label column named `corner`.
pub fn save_labeled_matrix(
    path: impl AsRef<Path>,
    matrix: &DMatrix<f64>,
    headers: &[String],
    corner: &str,
    row_labels: &[String],
) -> Result<()> {
    let path = path.as_ref();
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    write_matrix(create(path)?, matrix, headers, Some((corner, row_labels)))
}

pub fn write_matrix<W: Write>(
    writer: W,
    matrix: &DMatrix<f64>,
    headers: &[String],
    row_labels: Option<(&str, &[String])>,
) -> Result<()> {
    if matrix.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if headers.len() != matrix.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (matrix.nrows(), headers.len()),
            found: matrix.shape(),
        });
    }
    if let Some((_, labels)) = row_labels {
        if labels.len() != matrix.nrows() {
            return Err(Error::ShapeMismatch {
                expected: (labels.len(), matrix.ncols()),
                found: matrix.shape(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = Vec::new();
    if let Some((corner, _)) = row_labels {
        header.push(corner.to_string());
    }
    header.extend(headers.iter().cloned());
    w.write_record(&header)?;
    for r in 0..matrix.nrows() {
        let mut rec = Vec::with_capacity(header.len());
        if let Some((_, labels)) = row_labels {
            rec.push(labels[r].clone());
        }
        rec.extend(matrix.row(r).iter().map(|v| format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}
