use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{project_sinusoidal, EvalGrid, GeoCoord, PlanarCoord, SpatialFunctionalDataset};
use crate::error::{FessError, Result};

/// How the two coordinate columns are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordKind {
    /// `lon,lat` if both are present, otherwise `x,y`.
    #[default]
    Auto,
    /// Degrees, projected with the sinusoidal projection.
    Geographic,
    /// Kilometres, used as-is.
    Planar,
}

/// Column mapping for the wide CSV layout. Doubles as the sidecar JSON config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub coords: CoordKind,
    /// First coordinate column (defaults to `lon` or `x`).
    pub x_column: Option<String>,
    /// Second coordinate column (defaults to `lat` or `y`).
    pub y_column: Option<String>,
    /// Ordered value columns; defaults to every other column in header order.
    pub value_columns: Option<Vec<String>>,
    /// Central meridian override; defaults to the mean longitude of the file.
    pub lon0: Option<f64>,
    /// Subtract the pointwise mean curve after loading.
    pub center: bool,
}

impl CsvSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| FessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| FessError::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: SpatialFunctionalDataset,
    /// Central meridian used for projection, `None` for planar input.
    pub lon0: Option<f64>,
    pub warnings: Vec<String>,
}

/// Read a wide CSV: one record per location, one column per grid level.
pub fn load_wide_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedDataset> {
    let file = File::open(path).map_err(|source| FessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| FessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let schema_err = |message: String| FessError::Schema {
        path: path.to_path_buf(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let kind = match schema.coords {
        CoordKind::Auto => {
            if col("lon").is_some() && col("lat").is_some() {
                CoordKind::Geographic
            } else {
                CoordKind::Planar
            }
        }
        k => k,
    };
    let (dx, dy) = match kind {
        CoordKind::Geographic => ("lon", "lat"),
        _ => ("x", "y"),
    };
    let x_name = schema.x_column.as_deref().unwrap_or(dx);
    let y_name = schema.y_column.as_deref().unwrap_or(dy);
    let x_idx = col(x_name).ok_or_else(|| schema_err(format!("missing coordinate column '{x_name}'")))?;
    let y_idx = col(y_name).ok_or_else(|| schema_err(format!("missing coordinate column '{y_name}'")))?;

    let value_idx: Vec<usize> = match &schema.value_columns {
        Some(names) => names
            .iter()
            .map(|c| col(c).ok_or_else(|| schema_err(format!("missing value column '{c}'"))))
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != x_idx && i != y_idx).collect(),
    };
    if value_idx.len() < 2 {
        return Err(schema_err(format!(
            "need at least 2 value columns, found {}",
            value_idx.len()
        )));
    }
    let levels = value_idx
        .iter()
        .map(|&i| {
            headers[i]
                .parse::<f64>()
                .map_err(|_| schema_err(format!("value column label '{}' is not numeric", headers[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = EvalGrid::new(levels).map_err(|e| schema_err(e.to_string()))?;

    let mut coords = Vec::new();
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    let mut seen: HashMap<(u64, u64), u64> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line()) as usize;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let fail = |message: &str| FessError::Cell {
                path: path.to_path_buf(),
                row: line,
                column: headers[i].clone(),
                message: message.to_owned(),
            };
            if raw.is_empty() {
                return Err(fail("empty cell"));
            }
            let v: f64 = raw.parse().map_err(|_| fail(&format!("'{raw}' is not a number")))?;
            if !v.is_finite() {
                return Err(fail("non-finite value"));
            }
            Ok(v)
        };
        let x = cell(x_idx)?;
        let y = cell(y_idx)?;
        if kind == CoordKind::Geographic {
            GeoCoord::new(x, y).map_err(|e| FessError::Cell {
                path: path.to_path_buf(),
                row: line,
                column: format!("{x_name}/{y_name}"),
                message: e.to_string(),
            })?;
        }
        if let Some(first) = seen.insert((x.to_bits(), y.to_bits()), line as u64) {
            warnings.push(format!(
                "duplicate location ({x}, {y}) at line {line}, first seen at line {first}"
            ));
            seen.insert((x.to_bits(), y.to_bits()), first);
        }
        coords.push((x, y));
        for &i in &value_idx {
            values.push(cell(i)?);
        }
    }
    if coords.is_empty() {
        return Err(schema_err("no data rows".into()));
    }

    let (locations, lon0) = match kind {
        CoordKind::Geographic => {
            let lon0 = schema
                .lon0
                .unwrap_or_else(|| coords.iter().map(|c| c.0).sum::<f64>() / coords.len() as f64);
            let locs = coords
                .iter()
                .map(|&(lon, lat)| project_sinusoidal(GeoCoord { lon, lat }, lon0))
                .collect();
            (locs, Some(lon0))
        }
        _ => (coords.iter().map(|&(x, y)| PlanarCoord::new(x, y)).collect(), None),
    };
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }

    let mut dataset = SpatialFunctionalDataset::from_flat(grid, locations, values)?;
    if schema.center {
        dataset = dataset.centered();
    }
    Ok(LoadedDataset {
        dataset,
        lon0,
        warnings,
    })
}

/// Write planar locations and curves as `x,y,<level_1>,...,<level_m>`.
pub fn write_wide_csv<W: Write>(dataset: &SpatialFunctionalDataset, out: W) -> Result<()> {
    let io_err = |e: csv::Error| FessError::Csv {
        path: "<output>".into(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_owned(), "y".to_owned()];
    header.extend(dataset.grid().points().iter().map(|t| t.to_string()));
    w.write_record(&header).map_err(io_err)?;
    for (loc, curve) in dataset.locations().iter().zip(dataset.curves()) {
        let mut row = vec![loc.x.to_string(), loc.y.to_string()];
        row.extend(curve.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| io_err(e.into()))?;
    Ok(())
}
