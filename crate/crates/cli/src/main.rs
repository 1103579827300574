use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use maxstable::declustering::{decluster, DistanceCap};
use maxstable::likelihood::ParameterState;
use maxstable::margins::GevParams;
use maxstable::mcmc::{initial_state, run_chains, summarize};
use maxstable::partitions::SetPartition;
use maxstable::seed;
use maxstable::simulation::{
    group_extreme_predictive, simulate_dataset, simulate_temperature_field, GridSpec,
    SyntheticDesign,
};
use maxstable::Error;
use maxstable_io::config::{FitMode, KeyValues, Settings};
use maxstable_io::diagnostics::{
    group_qq, marginal_qq, partition_sizes, rand_index_table, GroupStat, QqRow,
};
use maxstable_io::extremal::empirical_extremal_coefficients;
use maxstable_io::minima::{build_dataset, dataset_rows, read_minima, write_minima, LoadedData};
use maxstable_io::partitions::{align_partitions, read_partitions, write_partitions};
use maxstable_io::predict::{latent_effect_map, mean_and_exceedance, mid_winter};
use maxstable_io::samples::{
    read_partition_draws, read_samples, write_partition_draws, write_samples, PartitionDraws,
    SampleTable,
};
use maxstable_io::stations::{nearest_station_design, read_points, read_stations, StationTable};
use nalgebra::DMatrix;

const CONFIG_OUT: &str = "resolved.cfg";

#[derive(Parser)]
#[command(
    name = "maxstable",
    version,
    about = "Brown-Resnick models for winter minimum temperatures"
)]
struct Cli {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel chains and simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Extra `key=value` settings applied after the configuration file.
    /// Repeat before the subcommand; a later group replaces earlier ones.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic data set, or temperature fields over the grid.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimKind::Dataset)]
        kind: SimKind,
    },
    /// Turn occurrence days into one partition per winter.
    Decluster,
    /// Run the sampler and write draws and summaries.
    Fit {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<FitMode>,
    },
    /// Posterior-mean maps and group predictive draws.
    Predict,
    /// Extremal coefficients, QQ tables and partition diagnostics.
    Diagnose,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Dataset,
    Field,
}

fn parse_mode(s: &str) -> Result<FitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(e) if !e.is_validation() => 3,
            _ => 2,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut kv = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<KeyValues>()
                .map_err(|e| anyhow::Error::from(e).context(format!("in {}", p.display())))?
        }
        None => KeyValues::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::from(anyhow!("--set expects key=value, got {o:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    let mut s = Settings::from_key_values(&kv)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Command::Fit { mode: Some(m) } = &cli.command {
        s.mode = *m;
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut settings = load_settings(&cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!(e))?;
    }
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let out = Output {
        dir: cli.out_dir.clone(),
    };
    match cli.command {
        Command::Simulate { kind } => simulate(&settings, &out, kind)?,
        Command::Decluster => declustered(&settings, &out)?,
        Command::Fit { .. } => fit(&mut settings, &out)?,
        Command::Predict => predict(&settings, &out)?,
        Command::Diagnose => diagnose(&settings, &out)?,
    }
    out.text(CONFIG_OUT, &settings.to_string())?;
    Ok(())
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let p = self.dir.join(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn text(&self, name: &str, s: &str) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        w.write_all(s.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Plain csv table from a header and rows of displayable cells.
    fn table(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()?;
        log::info!("wrote {}", self.dir.join(name).display());
        Ok(())
    }
}

fn open(path: &Option<String>, what: &str) -> anyhow::Result<BufReader<File>> {
    let p = path
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid(format!("{what} is not set")))?;
    Ok(BufReader::new(
        File::open(Path::new(p)).with_context(|| format!("opening {p}"))?,
    ))
}

fn stations(s: &Settings) -> anyhow::Result<StationTable> {
    Ok(read_stations(open(&s.stations, "data.stations")?)?)
}

fn covariates(s: &Settings, t: &StationTable) -> Vec<String> {
    if s.covariates.is_empty() {
        t.all_covariates()
    } else {
        s.covariates.clone()
    }
}

fn load(s: &Settings) -> anyhow::Result<(StationTable, LoadedData)> {
    let t = stations(s)?;
    let rows = read_minima(open(&s.minima, "data.minima")?)?;
    let loaded = build_dataset(
        &t,
        &rows,
        &covariates(s, &t),
        seed::derive(s.seed, &[0x5449_4553]),
    )?;
    let r = &loaded.report;
    log::info!(
        "{} winters, {} stations, {} minima, {} missing",
        r.per_year.len(),
        t.len(),
        loaded.data.n_observed(),
        r.n_missing
    );
    Ok((t, loaded))
}

fn simulate(s: &Settings, out: &Output, kind: SimKind) -> anyhow::Result<()> {
    let t = stations(s)?;
    let (x, std) = t.design_matrix(&covariates(s, &t))?;
    let truth = s.truth.state(&x)?;
    match kind {
        SimKind::Dataset => {
            let design = SyntheticDesign {
                sites: t.site_set()?,
                truth,
                winters: s.winters.clone(),
                missing_prob: s.missing_prob,
                event_spread: s.event_spread,
            };
            let syn = simulate_dataset(&design, s.seed)?;
            write_minima(out.create("minima.csv")?, &dataset_rows(&syn.data, &t.ids))?;
            let parts = syn
                .data
                .years
                .iter()
                .map(|y| y.year)
                .zip(syn.partitions)
                .collect();
            write_partitions(out.create("partitions.csv")?, &parts)?;
        }
        SimKind::Field => {
            let (points, gx) = prediction_points(s, &t, &std)?;
            let beta = &truth.field.beta;
            let mean = &gx * beta;
            for &w in &s.winters {
                let tc = mid_winter(w)?;
                let params: Vec<GevParams> = (0..points.len())
                    .map(|g| {
                        GevParams::new(
                            mean[g] + truth.field.alpha * tc,
                            truth.field.sigma,
                            truth.field.xi,
                        )
                    })
                    .collect::<Result<_, _>>()?;
                let f = simulate_temperature_field(
                    &points,
                    &params,
                    &truth.variogram,
                    seed::derive(s.seed, &[w as i64 as u64]),
                )?;
                out.table(
                    &format!("field_{w}.csv"),
                    &["x_km", "y_km", "minimum"],
                    grid_rows(&points, &f),
                )?;
            }
        }
    }
    Ok(())
}

fn grid_rows<'a>(points: &'a [[f64; 2]], v: &'a [f64]) -> impl Iterator<Item = Vec<String>> + 'a {
    points
        .iter()
        .zip(v)
        .map(|(p, v)| vec![p[0].to_string(), p[1].to_string(), v.to_string()])
}

/// Points from `grid.points` with their own covariates, or a regular grid
/// over the station hull with covariates of the nearest station.
fn prediction_points(
    s: &Settings,
    t: &StationTable,
    std: &maxstable_io::stations::Standardization,
) -> anyhow::Result<(Vec<[f64; 2]>, DMatrix<f64>)> {
    if s.grid_points.is_some() {
        let pts = read_points(open(&s.grid_points, "grid.points")?)?;
        let x = pts.design_matrix(std)?;
        return Ok((pts.coords, x));
    }
    let grid = GridSpec::over_hull(&t.coords, s.grid_resolution)?;
    let points = grid.points();
    let x = nearest_station_design(t, std, &points)?;
    Ok((points, x))
}

fn declustered_partitions(
    s: &Settings,
    t: &StationTable,
    loaded: &LoadedData,
) -> anyhow::Result<Vec<SetPartition>> {
    let sites = t.site_set()?;
    let cap = s.max_km.map(|max_km| DistanceCap {
        sites: &sites,
        max_km,
    });
    let parts = decluster(
        &loaded.records,
        s.lag,
        cap,
        seed::derive(s.seed, &[0x5449_4553]),
    )?;
    Ok(align_partitions(&loaded.data, &parts)?)
}

fn declustered(s: &Settings, out: &Output) -> anyhow::Result<()> {
    let (t, loaded) = load(s)?;
    let parts = declustered_partitions(s, &t, &loaded)?;
    let map = loaded
        .data
        .years
        .iter()
        .map(|y| y.year)
        .zip(parts)
        .collect();
    write_partitions(out.create("partitions.csv")?, &map)?;
    Ok(())
}

fn fit(s: &mut Settings, out: &Output) -> anyhow::Result<()> {
    let (t, loaded) = load(s)?;
    let data = &loaded.data;
    s.fit_beta_prior(data.x.ncols());
    let fixed = match s.mode {
        FitMode::M3 => None,
        FitMode::M2 => Some(match &s.partitions {
            Some(_) => align_partitions(
                data,
                &read_partitions(open(&s.partitions, "data.partitions")?)?,
            )?,
            None => declustered_partitions(s, &t, &loaded)?,
        }),
    };
    let cfg = s.chain_config(fixed);
    let init = initial_state(data)?;
    log::info!(
        "{} chains x {} iterations, mode {}",
        cfg.n_chains,
        cfg.n_iter,
        s.mode
    );
    let post = run_chains(&cfg, data, &s.priors, Some(&init), s.seed)?;
    write_samples(
        out.create("samples.csv")?,
        &SampleTable::from_posterior(&post),
    )?;
    if s.mode == FitMode::M3 {
        write_partition_draws(
            out.create("partition_draws.csv")?,
            data,
            &PartitionDraws::from_posterior(&post),
        )?;
    }
    out.table(
        "summary.csv",
        &["name", "mean", "sd", "q025", "q975", "rhat", "ess"],
        post.summary().into_iter().map(|p| {
            vec![
                p.name,
                p.mean.to_string(),
                p.sd.to_string(),
                p.q025.to_string(),
                p.q975.to_string(),
                p.rhat.to_string(),
                p.ess.to_string(),
            ]
        }),
    )?;
    out.table(
        "acceptance.csv",
        &["chain", "kernel", "rate", "year_evaluations"],
        post.chains.iter().flat_map(|c| {
            c.acceptance.iter().map(move |(k, r)| {
                vec![
                    c.chain.to_string(),
                    k.clone(),
                    r.to_string(),
                    c.n_year_evals.to_string(),
                ]
            })
        }),
    )?;
    Ok(())
}

fn posterior_draws(
    s: &Settings,
    loaded: &LoadedData,
) -> anyhow::Result<(SampleTable, Vec<ParameterState>)> {
    let table = read_samples(open(&s.samples, "data.samples")?)?;
    if table.is_empty() {
        return Err(Error::Schema("sample table has no rows".into()).into());
    }
    let draws = table
        .spread_indices(s.n_draws)
        .into_iter()
        .map(|i| table.state(i, &loaded.data))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((table, draws))
}

/// Station groups converted to 0-based indices.
fn groups(s: &Settings, n: usize) -> anyhow::Result<Vec<(String, Vec<usize>)>> {
    s.groups
        .iter()
        .map(|(name, idx)| {
            if let Some(bad) = idx.iter().find(|&&j| j > n) {
                return Err(Error::ConfigInvalid(format!(
                    "group {name} names station {bad} of {n}"
                ))
                .into());
            }
            Ok((name.clone(), idx.iter().map(|j| j - 1).collect()))
        })
        .collect()
}

fn predict(s: &Settings, out: &Output) -> anyhow::Result<()> {
    let (t, loaded) = load(s)?;
    let data = &loaded.data;
    let (_, draws) = posterior_draws(s, &loaded)?;
    let (points, gx) = prediction_points(s, &t, &loaded.standardization)?;
    out.table(
        "latent_effect.csv",
        &["x_km", "y_km", "value"],
        grid_rows(&points, &latent_effect_map(data, &draws, &points, &gx)?),
    )?;
    for &w in &s.predict_years {
        let (mean, exceed) = mean_and_exceedance(data, &draws, &points, &gx, w, s.threshold)?;
        out.table(
            &format!("mean_{w}.csv"),
            &["x_km", "y_km", "value"],
            grid_rows(&points, &mean),
        )?;
        out.table(
            &format!("exceedance_{w}.csv"),
            &["x_km", "y_km", "value"],
            grid_rows(&points, &exceed),
        )?;
    }
    let per_draw = (s.n_sims / draws.len().max(1)).max(1);
    for (name, g) in groups(s, t.len())? {
        let mut rows = Vec::new();
        for &w in &s.predict_years {
            let tc = mid_winter(w)?;
            for (d, st) in draws.iter().enumerate() {
                let params: Vec<GevParams> = (0..t.len()).map(|j| st.field.params(j, tc)).collect();
                let sample = group_extreme_predictive(
                    &g,
                    &data.sites,
                    &params,
                    &st.variogram,
                    per_draw,
                    seed::derive(s.seed, &[w as i64 as u64, d as u64]),
                )?;
                for k in 0..per_draw {
                    rows.push(vec![
                        w.to_string(),
                        d.to_string(),
                        sample.max[k].to_string(),
                        sample.min[k].to_string(),
                        sample.mean[k].to_string(),
                    ]);
                }
            }
        }
        out.table(
            &format!("group_{name}.csv"),
            &["winter", "draw", "max", "min", "mean"],
            rows,
        )?;
    }
    Ok(())
}

fn qq_rows(rows: &[QqRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.rank.to_string(),
                r.observed.to_string(),
                r.predicted.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
            ]
        })
        .collect()
}

fn diagnose(s: &Settings, out: &Output) -> anyhow::Result<()> {
    let (t, loaded) = load(s)?;
    let data = &loaded.data;
    let mut rng = seed::rng_from(s.seed, &[0x4449_4147]);
    let bins = empirical_extremal_coefficients(data, &s.bins, s.n_boot, &mut rng)?;
    for b in bins.iter().filter(|b| b.clamped) {
        log::warn!(
            "extremal coefficient {} in bin [{}, {}) clamped to {}",
            b.raw,
            b.lo,
            b.hi,
            b.theta
        );
    }
    out.table(
        "extremal_coefficients.csv",
        &[
            "lo_km", "hi_km", "pairs", "theta", "raw", "clamped", "ci_lo", "ci_hi",
        ],
        bins.iter().map(|b| {
            vec![
                b.lo.to_string(),
                b.hi.to_string(),
                b.n_pairs.to_string(),
                b.theta.to_string(),
                b.raw.to_string(),
                b.clamped.to_string(),
                b.ci_lo.to_string(),
                b.ci_hi.to_string(),
            ]
        }),
    )?;
    if s.samples.is_some() {
        let (table, draws) = posterior_draws(s, &loaded)?;
        let header = ["label", "rank", "observed", "predicted", "lo", "hi"];
        out.table(
            "qq_marginal.csv",
            &header,
            qq_rows(&marginal_qq(data, &draws, &mut rng)),
        )?;
        let mut rows = Vec::new();
        for (name, g) in groups(s, t.len())? {
            for stat in GroupStat::ALL {
                rows.extend(qq_rows(&group_qq(
                    data,
                    &name,
                    &g,
                    stat,
                    &draws,
                    seed::derive(s.seed, &[0x4752_4f55]),
                )?));
            }
        }
        out.table("qq_groups.csv", &header, rows)?;
        out.table(
            "convergence.csv",
            &["name", "rhat", "ess"],
            table.names.iter().enumerate().map(|(c, n)| {
                let p = summarize(n, &table.chain_draws(c));
                vec![p.name, p.rhat.to_string(), p.ess.to_string()]
            }),
        )?;
    }
    if s.partition_draws.is_some() {
        let draws = read_partition_draws(open(&s.partition_draws, "data.partition_draws")?, data)?;
        out.table(
            "partition_sizes.csv",
            &["winter", "blocks", "probability"],
            partition_sizes(data, &draws)
                .into_iter()
                .map(|(w, k, p)| vec![w.to_string(), k.to_string(), p.to_string()]),
        )?;
        let reference = declustered_partitions(s, &t, &loaded)?;
        out.table(
            "rand_index.csv",
            &["winter", "mean_rand_index"],
            rand_index_table(data, &draws, &reference)?
                .into_iter()
                .map(|(w, r)| vec![w.to_string(), r.to_string()]),
        )?;
    }
    Ok(())
}
