//! Per-winter partition tables: `winter,partition` with partitions written
//! as 1-based station indices, blocks separated by `|`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use maxstable::likelihood::Dataset;
use maxstable::partitions::SetPartition;

use crate::{csv_error, header_index, line_of, reader, Error, Result};

pub fn read_partitions<R: Read>(r: R) -> Result<BTreeMap<i32, SetPartition>> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (Some(i_w), Some(i_p)) = (
        header_index(&headers, "winter"),
        header_index(&headers, "partition"),
    ) else {
        return Err(Error::Schema(
            "partition table needs winter and partition columns".into(),
        ));
    };
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let winter: i32 = rec[i_w].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad winter {:?}", &rec[i_w]),
        })?;
        let p: SetPartition = rec[i_p].parse().map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { line, message },
            other => Error::Parse {
                line,
                message: other.to_string(),
            },
        })?;
        if out.insert(winter, p).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("winter {winter} listed twice"),
            });
        }
    }
    Ok(out)
}

pub fn write_partitions<W: Write>(w: W, parts: &BTreeMap<i32, SetPartition>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["winter", "partition"])
        .map_err(csv_error)?;
    for (winter, p) in parts {
        wtr.write_record([winter.to_string(), p.to_string()])
            .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Partitions in data-set year order; every winter must be present and
/// match its observed stations.
pub fn align_partitions(
    data: &Dataset,
    parts: &BTreeMap<i32, SetPartition>,
) -> Result<Vec<SetPartition>> {
    data.years
        .iter()
        .map(|y| {
            let p = parts
                .get(&y.year)
                .ok_or_else(|| Error::Schema(format!("no partition for winter {}", y.year)))?;
            if p.ground() != y.sites.as_slice() {
                return Err(Error::Schema(format!(
                    "partition of winter {} does not match its stations",
                    y.year
                )));
            }
            Ok(p.clone())
        })
        .collect()
}
