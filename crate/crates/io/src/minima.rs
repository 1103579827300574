//! Winter-minimum table and assembly of the model data set.
//!
//! Columns: `station`, `winter` (year of the December that opens the
//! winter), `minimum` (°C, empty when missing) and either `days`
//! (`;`-joined day indices, day 1 = 1 December) or `dates` (`;`-joined
//! ISO-8601 dates). Several days record ties for the minimum.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use maxstable::declustering::{resolve_ties, OccurrenceRecord};
use maxstable::likelihood::{time_covariate, Dataset, YearData, WINTER_DAYS};

use crate::stations::{Standardization, StationTable};
use crate::{csv_error, header_index, line_of, parse_f64, reader, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaRow {
    pub station: String,
    pub winter: i32,
    pub minimum: Option<f64>,
    pub days: Vec<u32>,
}

/// Day index of `date` within the winter opening in December of `winter`.
pub fn day_of_winter(winter: i32, date: NaiveDate) -> Option<u32> {
    let start = NaiveDate::from_ymd_opt(winter, 12, 1)?;
    let d = (date - start).num_days() + 1;
    (1..=WINTER_DAYS as i64).contains(&d).then_some(d as u32)
}

pub fn date_of_day(winter: i32, day: u32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(winter, 12, 1)?.checked_add_days(chrono::Days::new(u64::from(day) - 1))
}

fn parse_days(s: &str, winter: i32, iso: bool, line: usize) -> Result<Vec<u32>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|tok| {
            let tok = tok.trim();
            let day = if iso {
                let date =
                    NaiveDate::parse_from_str(tok, "%Y-%m-%d").map_err(|_| Error::Parse {
                        line,
                        message: format!("bad date {tok:?}"),
                    })?;
                day_of_winter(winter, date).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("date {tok} is outside winter {winter}"),
                })?
            } else {
                tok.parse::<u32>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad day {tok:?}"),
                })?
            };
            if !(1..=WINTER_DAYS).contains(&day) {
                return Err(Error::Parse {
                    line,
                    message: format!("day {day} outside 1..={WINTER_DAYS}"),
                });
            }
            Ok(day)
        })
        .collect()
}

pub fn read_minima<R: Read>(r: R) -> Result<Vec<MinimaRow>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let req = ["station", "winter", "minimum"];
    let missing: Vec<&str> = req
        .into_iter()
        .filter(|c| header_index(&headers, c).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "minima table lacks columns: {}",
            missing.join(", ")
        )));
    }
    let i_s = header_index(&headers, "station").unwrap();
    let i_w = header_index(&headers, "winter").unwrap();
    let i_m = header_index(&headers, "minimum").unwrap();
    let (i_d, iso) = match (
        header_index(&headers, "days"),
        header_index(&headers, "dates"),
    ) {
        (Some(i), None) => (Some(i), false),
        (None, Some(i)) => (Some(i), true),
        (None, None) => (None, false),
        (Some(_), Some(_)) => {
            return Err(Error::Schema("give either days or dates, not both".into()))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let winter: i32 = rec[i_w].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad winter {:?}", &rec[i_w]),
        })?;
        if !(1000..=9999).contains(&winter) {
            return Err(Error::Parse {
                line,
                message: format!("winter {winter} out of range"),
            });
        }
        let minimum = if rec[i_m].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[i_m], line, "minimum")?)
        };
        let days = match i_d {
            Some(i) => parse_days(&rec[i], winter, iso, line)?,
            None => Vec::new(),
        };
        if rec[i_s].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty station id".into(),
            });
        }
        rows.push(MinimaRow {
            station: rec[i_s].to_string(),
            winter,
            minimum,
            days,
        });
    }
    if rows.is_empty() {
        return Err(Error::Schema("minima table has no rows".into()));
    }
    Ok(rows)
}

pub fn write_minima<W: Write>(w: W, rows: &[MinimaRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["station", "winter", "minimum", "days"])
        .map_err(csv_error)?;
    for r in rows {
        let days: Vec<String> = r.days.iter().map(|d| d.to_string()).collect();
        wtr.write_record([
            r.station.clone(),
            r.winter.to_string(),
            r.minimum.map_or(String::new(), |m| m.to_string()),
            days.join(";"),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Observation counts of a loaded data set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub per_year: BTreeMap<i32, usize>,
    /// Indexed like the station table.
    pub per_station: Vec<usize>,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: Dataset,
    pub report: ValidationReport,
    pub standardization: Standardization,
    /// Occurrence records of every present minimum, for declustering.
    pub records: Vec<OccurrenceRecord>,
}

/// Assemble the model data set. Covariates are standardized; tied
/// occurrence days are resolved with `tie_seed` to fix the time covariate.
pub fn build_dataset(
    stations: &StationTable,
    rows: &[MinimaRow],
    covariates: &[String],
    tie_seed: u64,
) -> Result<LoadedData> {
    let (x, standardization) = stations.design_matrix(covariates)?;
    let mut report = ValidationReport {
        per_station: vec![0; stations.len()],
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut by_year: BTreeMap<i32, Vec<(usize, f64, Vec<u32>)>> = BTreeMap::new();
    let mut records = Vec::new();
    for r in rows {
        let site = stations
            .index_of(&r.station)
            .ok_or_else(|| Error::Schema(format!("unknown station {:?}", r.station)))?;
        if !seen.insert((site, r.winter)) {
            return Err(Error::Schema(format!(
                "station {:?} has two rows for winter {}",
                r.station, r.winter
            )));
        }
        let Some(m) = r.minimum else {
            report.n_missing += 1;
            continue;
        };
        if r.days.is_empty() {
            return Err(Error::Schema(format!(
                "station {:?}, winter {}: minimum without occurrence day",
                r.station, r.winter
            )));
        }
        report.per_station[site] += 1;
        *report.per_year.entry(r.winter).or_default() += 1;
        records.push(OccurrenceRecord {
            year: r.winter,
            site,
            days: r.days.clone(),
            minimum: m,
        });
        by_year
            .entry(r.winter)
            .or_default()
            .push((site, m, r.days.clone()));
    }
    let mut years = Vec::with_capacity(by_year.len());
    for (winter, mut obs) in by_year {
        obs.sort_by_key(|o| o.0);
        let mut y = YearData {
            year: winter,
            sites: Vec::new(),
            minima: Vec::new(),
            t: Vec::new(),
            days: Vec::new(),
        };
        for (site, m, days) in obs {
            let rec = OccurrenceRecord {
                year: winter,
                site,
                days: days.clone(),
                minimum: m,
            };
            let day = resolve_ties(&rec, tie_seed)?;
            y.sites.push(site);
            y.minima.push(m);
            y.t.push(time_covariate(winter, day)?);
            y.days.push(days);
        }
        years.push(y);
    }
    if years.is_empty() {
        return Err(Error::Schema("no present minima".into()));
    }
    let data = Dataset::new(stations.site_set()?, x, years)?;
    Ok(LoadedData {
        data,
        report,
        standardization,
        records,
    })
}

/// Rows of a data set, one per observed station and winter, for writing.
pub fn dataset_rows(data: &Dataset, ids: &[String]) -> Vec<MinimaRow> {
    let mut rows = Vec::with_capacity(data.n_observed());
    for y in &data.years {
        for (k, &s) in y.sites.iter().enumerate() {
            rows.push(MinimaRow {
                station: ids[s].clone(),
                winter: y.year,
                minimum: Some(y.minima[k]),
                days: y.days[k].clone(),
            });
        }
    }
    rows
}
