//! Station table: identifier, planar coordinates and covariates.

use std::collections::HashSet;
use std::io::{Read, Write};

use maxstable::gaussian::SiteSet;
use nalgebra::DMatrix;

use crate::{csv_error, header_index, line_of, parse_f64, reader, Error, Result};

pub const ID: &str = "id";
pub const X: &str = "x_km";
pub const Y: &str = "y_km";

#[derive(Debug, Clone, PartialEq)]
pub struct StationTable {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// Names of the covariate columns, in file order.
    pub covariate_names: Vec<String>,
    /// One row per station.
    pub covariates: Vec<Vec<f64>>,
}

/// Column-wise centring and scaling applied to covariates before they enter
/// the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Design row `(1, standardized covariates)`.
    pub fn design_row(&self, values: &[f64]) -> Vec<f64> {
        let mut row = vec![1.0];
        row.extend(
            values
                .iter()
                .zip(self.means.iter().zip(&self.sds))
                .map(|(v, (m, s))| (v - m) / s),
        );
        row
    }
}

impl StationTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn site_set(&self) -> Result<SiteSet> {
        SiteSet::new(self.coords.clone(), self.ids.clone())
    }

    /// Values of the named covariates per station; the coordinate columns
    /// may be selected too.
    pub fn select(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<Column> = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<_>>()?;
        Ok((0..self.len())
            .map(|i| {
                cols.iter()
                    .map(|c| match c {
                        Column::X => self.coords[i][0],
                        Column::Y => self.coords[i][1],
                        Column::Cov(k) => self.covariates[i][*k],
                    })
                    .collect()
            })
            .collect())
    }

    fn column(&self, name: &str) -> Result<Column> {
        match name {
            X => Ok(Column::X),
            Y => Ok(Column::Y),
            _ => self
                .covariate_names
                .iter()
                .position(|n| n == name)
                .map(Column::Cov)
                .ok_or_else(|| Error::Schema(format!("unknown covariate {name:?}"))),
        }
    }

    /// All coordinate and covariate columns.
    pub fn all_covariates(&self) -> Vec<String> {
        let mut v = vec![X.to_string(), Y.to_string()];
        v.extend(self.covariate_names.iter().cloned());
        v
    }

    /// Intercept plus the named covariates, each standardized to mean 0 and
    /// standard deviation 1 over the stations. Constant columns are only
    /// centred.
    pub fn design_matrix(&self, names: &[String]) -> Result<(DMatrix<f64>, Standardization)> {
        let vals = self.select(names)?;
        let n = self.len() as f64;
        let k = names.len();
        let mut means = vec![0.0; k];
        let mut sds = vec![1.0; k];
        for c in 0..k {
            means[c] = vals.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = vals.iter().map(|r| (r[c] - means[c]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                sds[c] = var.sqrt();
            }
        }
        let std = Standardization {
            names: names.to_vec(),
            means,
            sds,
        };
        let x = DMatrix::from_fn(self.len(), k + 1, |i, j| std.design_row(&vals[i])[j]);
        Ok((x, std))
    }
}

enum Column {
    X,
    Y,
    Cov(usize),
}

/// Parse a station table. Required columns are `id`, `x_km` and `y_km`;
/// every other column is a numeric covariate.
pub fn read_stations<R: Read>(r: R) -> Result<StationTable> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let missing: Vec<&str> = [ID, X, Y]
        .into_iter()
        .filter(|c| header_index(&headers, c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "station table lacks columns: {}",
            missing.join(", ")
        )));
    }
    let (i_id, i_x, i_y) = (
        header_index(&headers, ID).unwrap(),
        header_index(&headers, X).unwrap(),
        header_index(&headers, Y).unwrap(),
    );
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|c| ![i_id, i_x, i_y].contains(c))
        .collect();
    let mut seen_names = HashSet::new();
    for h in headers.iter() {
        if !seen_names.insert(h) {
            return Err(Error::Schema(format!("duplicate column {h:?}")));
        }
    }
    let mut t = StationTable {
        ids: Vec::new(),
        coords: Vec::new(),
        covariate_names: cov_cols.iter().map(|&c| headers[c].to_string()).collect(),
        covariates: Vec::new(),
    };
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let id = rec[i_id].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty station id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate station id {id:?}"),
            });
        }
        t.coords.push([
            parse_f64(&rec[i_x], line, X)?,
            parse_f64(&rec[i_y], line, Y)?,
        ]);
        t.covariates.push(
            cov_cols
                .iter()
                .map(|&c| parse_f64(&rec[c], line, &headers[c]))
                .collect::<Result<_>>()?,
        );
        t.ids.push(id);
    }
    if t.ids.is_empty() {
        return Err(Error::Schema("station table has no rows".into()));
    }
    Ok(t)
}

pub fn write_stations<W: Write>(w: W, t: &StationTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![ID.to_string(), X.to_string(), Y.to_string()];
    header.extend(t.covariate_names.iter().cloned());
    wtr.write_record(&header).map_err(csv_error)?;
    for i in 0..t.len() {
        let mut row = vec![
            t.ids[i].clone(),
            t.coords[i][0].to_string(),
            t.coords[i][1].to_string(),
        ];
        row.extend(t.covariates[i].iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Prediction points with covariates: columns `x_km`, `y_km` and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub coords: Vec<[f64; 2]>,
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
}

pub fn read_points<R: Read>(r: R) -> Result<PointTable> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (Some(i_x), Some(i_y)) = (header_index(&headers, X), header_index(&headers, Y)) else {
        return Err(Error::Schema("point table needs x_km and y_km".into()));
    };
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|c| *c != i_x && *c != i_y)
        .collect();
    let mut t = PointTable {
        coords: Vec::new(),
        covariate_names: cov_cols.iter().map(|&c| headers[c].to_string()).collect(),
        covariates: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        t.coords.push([
            parse_f64(&rec[i_x], line, X)?,
            parse_f64(&rec[i_y], line, Y)?,
        ]);
        t.covariates.push(
            cov_cols
                .iter()
                .map(|&c| parse_f64(&rec[c], line, &headers[c]))
                .collect::<Result<_>>()?,
        );
    }
    Ok(t)
}

impl PointTable {
    /// Design matrix of the points under a station standardization.
    pub fn design_matrix(&self, std: &Standardization) -> Result<DMatrix<f64>> {
        let cols: Vec<Option<usize>> = std
            .names
            .iter()
            .map(|n| match n.as_str() {
                X | Y => Ok(None),
                _ => self
                    .covariate_names
                    .iter()
                    .position(|c| c == n)
                    .map(Some)
                    .ok_or_else(|| Error::Schema(format!("point table lacks covariate {n:?}"))),
            })
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = (0..self.coords.len())
            .map(|i| {
                let vals: Vec<f64> = std
                    .names
                    .iter()
                    .zip(&cols)
                    .map(|(n, c)| match (n.as_str(), c) {
                        (X, _) => self.coords[i][0],
                        (Y, _) => self.coords[i][1],
                        (_, Some(k)) => self.covariates[i][*k],
                        _ => unreachable!(),
                    })
                    .collect();
                std.design_row(&vals)
            })
            .collect();
        Ok(DMatrix::from_fn(rows.len(), std.names.len() + 1, |i, j| {
            rows[i][j]
        }))
    }
}

/// Design matrix of arbitrary points whose covariates are borrowed from the
/// nearest station; coordinates themselves are the points' own.
pub fn nearest_station_design(
    t: &StationTable,
    std: &Standardization,
    points: &[[f64; 2]],
) -> Result<DMatrix<f64>> {
    let vals = t.select(&std.names)?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|&p| {
            let near = (0..t.len())
                .min_by(|&a, &b| {
                    maxstable::gaussian::distance(p, t.coords[a])
                        .total_cmp(&maxstable::gaussian::distance(p, t.coords[b]))
                })
                .unwrap_or(0);
            let v: Vec<f64> = std
                .names
                .iter()
                .enumerate()
                .map(|(c, n)| match n.as_str() {
                    X => p[0],
                    Y => p[1],
                    _ => vals[near][c],
                })
                .collect();
            std.design_row(&v)
        })
        .collect();
    Ok(DMatrix::from_fn(rows.len(), std.names.len() + 1, |i, j| {
        rows[i][j]
    }))
}
