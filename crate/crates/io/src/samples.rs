//! Posterior sample tables: `chain,iteration,<parameter columns>` and the
//! thinned partition draws `chain,iteration,winter,partition`.

use std::io::{Read, Write};

use maxstable::gaussian::StableVariogram;
use maxstable::likelihood::{Dataset, ParameterState};
use maxstable::margins::GevField;
use maxstable::mcmc::PosteriorSamples;
use maxstable::partitions::SetPartition;
use nalgebra::DVector;

use crate::{csv_error, header_index, line_of, parse_f64, reader, Error, Result};

/// Parameter draws read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub names: Vec<String>,
    pub chain: Vec<usize>,
    pub iteration: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn from_posterior(post: &PosteriorSamples) -> Self {
        let mut t = SampleTable {
            names: post.names.clone(),
            chain: Vec::new(),
            iteration: Vec::new(),
            rows: Vec::new(),
        };
        for c in &post.chains {
            for (it, row) in c.iterations.iter().zip(&c.rows) {
                t.chain.push(c.chain);
                t.iteration.push(*it);
                t.rows.push(row.clone());
            }
        }
        t
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-chain draws of one column, for convergence summaries.
    pub fn chain_draws(&self, col: usize) -> Vec<Vec<f64>> {
        let n_chains = self.chain.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); n_chains];
        for (c, r) in self.chain.iter().zip(&self.rows) {
            out[*c].push(r[col]);
        }
        out.retain(|v| !v.is_empty());
        out
    }

    /// Model state of draw `i`; the design matrix comes from the data set.
    pub fn state(&self, i: usize, data: &Dataset) -> Result<ParameterState> {
        let col = |n: &str| {
            self.column(n)
                .ok_or_else(|| Error::Schema(format!("sample table lacks column {n:?}")))
        };
        let r = &self.rows[i];
        let p = data.x.ncols();
        let d = data.n_sites();
        let beta = (1..=p)
            .map(|k| col(&format!("beta_{k}")).map(|c| r[c]))
            .collect::<Result<Vec<_>>>()?;
        let u = (1..=d)
            .map(|k| col(&format!("U_{k}")).map(|c| r[c]))
            .collect::<Result<Vec<_>>>()?;
        let field = GevField {
            beta: DVector::from_vec(beta),
            u: DVector::from_vec(u),
            alpha: r[col("alpha")?],
            sigma: r[col("sigma")?],
            xi: r[col("xi")?],
            tau2: r[col("tau2")?],
            delta: r[col("delta")?],
            x: data.x.clone(),
        };
        Ok(ParameterState {
            field,
            variogram: StableVariogram::new(r[col("lambda")?], r[col("kappa")?])?,
        })
    }

    /// Up to `n` draws spread evenly over the table.
    pub fn spread_indices(&self, n: usize) -> Vec<usize> {
        let m = self.len();
        if m == 0 || n == 0 {
            return Vec::new();
        }
        let n = n.min(m);
        (0..n).map(|k| k * m / n).collect()
    }
}

pub fn write_samples<W: Write>(w: W, t: &SampleTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(t.names.iter().cloned());
    wtr.write_record(&header).map_err(csv_error)?;
    for i in 0..t.len() {
        let mut row = vec![t.chain[i].to_string(), t.iteration[i].to_string()];
        row.extend(t.rows[i].iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<SampleTable> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if header_index(&headers, "chain") != Some(0) || header_index(&headers, "iteration") != Some(1)
    {
        return Err(Error::Schema(
            "sample table must start with chain,iteration".into(),
        ));
    }
    let mut t = SampleTable {
        names: headers.iter().skip(2).map(String::from).collect(),
        chain: Vec::new(),
        iteration: Vec::new(),
        rows: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let int = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("bad integer {s:?}"),
            })
        };
        t.chain.push(int(&rec[0])?);
        t.iteration.push(int(&rec[1])?);
        // Log-likelihood columns may hold -inf; parameters must be finite.
        let row = rec
            .iter()
            .skip(2)
            .map(|s| {
                if s == "-inf" {
                    Ok(f64::NEG_INFINITY)
                } else {
                    parse_f64(s, line, "sample")
                }
            })
            .collect::<Result<Vec<_>>>()?;
        t.rows.push(row);
    }
    Ok(t)
}

/// Thinned partition draws: one entry per (chain, iteration), partitions
/// in data-set year order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionDraws {
    pub draws: Vec<(usize, usize, Vec<SetPartition>)>,
}

impl PartitionDraws {
    pub fn from_posterior(post: &PosteriorSamples) -> Self {
        let mut d = PartitionDraws::default();
        for c in &post.chains {
            for (it, ps) in &c.partitions {
                d.draws.push((c.chain, *it, ps.clone()));
            }
        }
        d
    }
}

pub fn write_partition_draws<W: Write>(w: W, data: &Dataset, d: &PartitionDraws) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["chain", "iteration", "winter", "partition"])
        .map_err(csv_error)?;
    for (c, it, ps) in &d.draws {
        for (y, p) in data.years.iter().zip(ps) {
            wtr.write_record([
                c.to_string(),
                it.to_string(),
                y.year.to_string(),
                p.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_partition_draws<R: Read>(r: R, data: &Dataset) -> Result<PartitionDraws> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["chain", "iteration", "winter", "partition"] {
        return Err(Error::Schema(
            "partition draws need chain,iteration,winter,partition".into(),
        ));
    }
    let mut out = PartitionDraws::default();
    let mut current: Option<(usize, usize, Vec<SetPartition>)> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let bad = |m: String| Error::Parse { line, message: m };
        let c: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad chain {:?}", &rec[0])))?;
        let it: usize = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad iteration {:?}", &rec[1])))?;
        let w: i32 = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad winter {:?}", &rec[2])))?;
        let p: SetPartition = rec[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        if current
            .as_ref()
            .is_none_or(|(cc, ii, _)| (*cc, *ii) != (c, it))
        {
            if let Some(done) = current.take() {
                out.draws.push(done);
            }
            current = Some((c, it, Vec::new()));
        }
        let entry = current.as_mut().unwrap();
        let k = entry.2.len();
        let y = data
            .years
            .get(k)
            .ok_or_else(|| bad("more winters than the data set".into()))?;
        if y.year != w || p.ground() != y.sites.as_slice() {
            return Err(bad(format!(
                "partition for winter {w} does not match the data set"
            )));
        }
        entry.2.push(p);
    }
    if let Some(done) = current {
        out.draws.push(done);
    }
    if out.draws.iter().any(|d| d.2.len() != data.n_years()) {
        return Err(Error::Schema("incomplete partition draw".into()));
    }
    Ok(out)
}
