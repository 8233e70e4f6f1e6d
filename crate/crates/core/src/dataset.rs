//! Field datasets on disk: a full-grid CSV plus a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::biot::PoroelasticParams;
use crate::error::{Error, Result};
use crate::fields::NoiseSpec;
use crate::spectral::{FluidSource, FocalField, GridSpec, SourceSpec, WindowSpec};

/// Column names of the field CSV.
pub const CSV_HEADER: [&str; 12] =
    ["x", "y", "re_ux", "im_ux", "re_uy", "im_uy", "re_p", "im_p", "re_fux", "im_fux", "re_fp", "im_fp"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    re_ux: f64,
    im_ux: f64,
    re_uy: f64,
    im_uy: f64,
    re_p: f64,
    im_p: f64,
    re_fux: f64,
    im_fux: f64,
    re_fp: f64,
    im_fp: f64,
}

/// Sidecar metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub omega: f64,
    pub grid: GridSpec<f64>,
    pub window: WindowSpec<f64>,
    pub center: [f64; 2],
    /// Ground truth for scoring reconstructions.
    pub truth: PoroelasticParams<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid_source: Option<FluidSource>,
    /// Present for ensemble-averaged noisy data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Row ordering of the CSV.
    pub layout: String,
}

const LAYOUT: &str = "row-major: index = ix * n + iy";

impl DatasetMeta {
    pub fn for_field(field: &FocalField<f64>, truth: PoroelasticParams<f64>) -> Self {
        Self {
            omega: field.omega,
            grid: field.grid,
            window: field.window,
            center: field.center,
            truth,
            source: None,
            fluid_source: None,
            noise: None,
            layout: LAYOUT.into(),
        }
    }
}

/// The sidecar path for a CSV path (`.csv` replaced by `.json`).
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn dataset_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Dataset { path: path.to_path_buf(), message: message.into() }
}

/// Writes `field` to `csv` and its metadata next to it.
pub fn write_dataset(csv: &Path, field: &FocalField<f64>, meta: &DatasetMeta) -> Result<()> {
    field.validate()?;
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv)?));
    let n = field.grid.n;
    for ix in 0..n {
        for iy in 0..n {
            let i = ix * n + iy;
            w.serialize(Row {
                x: field.grid.coordinate(ix),
                y: field.grid.coordinate(iy),
                re_ux: field.ux[i].re,
                im_ux: field.ux[i].im,
                re_uy: field.uy[i].re,
                im_uy: field.uy[i].im,
                re_p: field.p[i].re,
                im_p: field.p[i].im,
                re_fux: field.f_ux[i].re,
                im_fux: field.f_ux[i].im,
                re_fp: field.f_p[i].re,
                im_fp: field.f_p[i].im,
            })?;
        }
    }
    w.flush()?;
    let mut side = BufWriter::new(File::create(sidecar_path(csv))?);
    serde_json::to_writer_pretty(&mut side, meta)?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(csv: &Path) -> Result<(FocalField<f64>, DatasetMeta)> {
    let side = sidecar_path(csv);
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(
        File::open(&side).map_err(|e| dataset_error(&side, format!("cannot open sidecar: {e}")))?,
    ))?;
    meta.grid.validate()?;
    let mut r = csv::Reader::from_reader(BufReader::new(
        File::open(csv).map_err(|e| dataset_error(csv, format!("cannot open: {e}")))?,
    ));
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(dataset_error(csv, format!("unexpected header {header:?}")));
    }
    let len = meta.grid.len();
    let mut cols: [Vec<Complex<f64>>; 5] = std::array::from_fn(|_| Vec::with_capacity(len));
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row?;
        let (ix, iy) = (i / meta.grid.n, i % meta.grid.n);
        let tol = 1e-9 * meta.grid.side;
        if i >= len
            || (row.x - meta.grid.coordinate(ix)).abs() > tol
            || (row.y - meta.grid.coordinate(iy)).abs() > tol
        {
            return Err(dataset_error(csv, format!("row {i} does not match the grid in the sidecar")));
        }
        cols[0].push(Complex::new(row.re_ux, row.im_ux));
        cols[1].push(Complex::new(row.re_uy, row.im_uy));
        cols[2].push(Complex::new(row.re_p, row.im_p));
        cols[3].push(Complex::new(row.re_fux, row.im_fux));
        cols[4].push(Complex::new(row.re_fp, row.im_fp));
    }
    if cols[0].len() != len {
        return Err(dataset_error(csv, format!("expected {len} rows, found {}", cols[0].len())));
    }
    let [ux, uy, p, f_ux, f_p] = cols;
    let field = FocalField {
        grid: meta.grid,
        window: meta.window,
        center: meta.center,
        omega: meta.omega,
        ux,
        uy,
        p,
        f_ux,
        f_p,
    };
    field.validate()?;
    Ok((field, meta))
}
