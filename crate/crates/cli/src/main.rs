mod out;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use synthstation::eval::ExceedanceMap;
use synthstation::features::{correlation_report, FeatureClustering, StationSeries};
use synthstation::gbdt::{Ensemble, RowMatrix};
use synthstation::grid::{CellId, StationSite};
use synthstation::ingest::store::load_inputs;
use synthstation::ingest::temporal::hourly_range;
use synthstation::ingest::{parse_timestamp, Pollutant, Timestamp};
use synthstation::predict::{fill_gaps, grid_predict, DEFAULT_BATCH_ROWS};
use synthstation::train::{build_labeled_rows, run_experiment, write_reports, FamilySelection, Recipe};
use synthstation::world::{generate_world, WorldSpec};

use out::OutDir;

#[derive(Parser)]
#[command(name = "synthstation", version, about = "Hourly air-quality modelling on a regular grid")]
struct Cli {
    /// Seed for every random choice; overrides the recipe or world seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Where outputs go.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RecipeArg {
    #[arg(long)]
    recipe: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic input directory with a known generating function.
    GenerateWorld {
        #[arg(long, default_value_t = 20)]
        rows: u32,
        #[arg(long, default_value_t = 20)]
        cols: u32,
        /// Stations per environment class.
        #[arg(long, default_value_t = 2)]
        stations_per_class: usize,
        #[arg(long, default_value_t = 1)]
        adversarial: usize,
        #[arg(long, default_value = "2016-07-01")]
        start: String,
        #[arg(long, default_value = "2018-07-01")]
        end: String,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Load and validate an input directory.
    IngestCheck {
        #[arg(long)]
        input: PathBuf,
    },
    /// Feature/target correlations and feature clustering.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "NO2")]
        pollutant: String,
        /// Dendrogram cut height on 1 - rho.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Rows kept for clustering (evenly thinned).
        #[arg(long, default_value_t = 20_000)]
        max_rows: usize,
    },
    /// Search and refit, without station validation.
    Train(RecipeArg),
    /// Search, refit and leave-stations-out validation.
    Loov(RecipeArg),
    /// Run the recipe on the given family selections instead of its own.
    Subset {
        #[command(flatten)]
        recipe: RecipeArg,
        /// Presets (All, Global, Forecasting) or family lists; repeatable.
        #[arg(long = "families", required = true)]
        families: Vec<String>,
    },
    /// Predict every cell over an hourly span.
    PredictGrid {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
        #[arg(long, default_value_t = DEFAULT_BATCH_ROWS)]
        batch_rows: usize,
    },
    /// Fill a station's unmeasured hours with model predictions.
    FillGaps {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        station: String,
        #[arg(long, default_value = "NO2")]
        pollutant: String,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
    },
    /// Hours above each threshold per cell of a predicted map.
    Exceedance {
        /// A map written by predict-grid.
        #[arg(long)]
        map: PathBuf,
        /// Comma-separated thresholds.
        #[arg(long)]
        thresholds: String,
        /// Input directory; when given, rasters are written too.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Everything the recipe asks for.
    #[command(alias = "run")]
    Report(RecipeArg),
}

/// Bad arguments that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<synthstation::Error>() {
            if e.is_data_gap() {
                return 3;
            }
            if e.is_validation() {
                return 2;
            }
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    match pool.install(|| dispatch(&cli, &pool)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli, pool: &rayon::ThreadPool) -> Result<()> {
    let mut out = OutDir::create(&cli.out_dir)?;
    match &cli.cmd {
        Cmd::GenerateWorld {
            rows,
            cols,
            stations_per_class,
            adversarial,
            start,
            end,
            noise,
        } => {
            let spec = WorldSpec {
                rows: *rows,
                cols: *cols,
                start: parse_timestamp(start)?,
                end: parse_timestamp(end)?,
                stations_per_class: [*stations_per_class; 6],
                adversarial: *adversarial,
                noise_sigma: *noise,
                seed: cli.seed.unwrap_or(WorldSpec::default().seed),
                ..WorldSpec::default()
            };
            let s = generate_world(&spec, &out.root)?;
            out.log(format!("world seed {}", spec.seed));
            out.log(format!("stations {}", s.stations.join(",")));
            out.log(format!("adversarial {}", s.adversarial.join(",")));
            out.log(format!("measurements {}", s.n_measurements));
        }
        Cmd::IngestCheck { input } => ingest_check(input, &mut out)?,
        Cmd::Features {
            input,
            pollutant,
            threshold,
            max_rows,
        } => features(input, pollutant, *threshold, *max_rows, &mut out)?,
        Cmd::Train(r) => experiments(&r.recipe, cli.seed, Some(false), None, &mut out)?,
        Cmd::Loov(r) => experiments(&r.recipe, cli.seed, Some(true), None, &mut out)?,
        Cmd::Subset { recipe, families } => {
            let subsets = families
                .iter()
                .map(|f| f.parse::<FamilySelection>())
                .collect::<synthstation::Result<Vec<_>>>()?;
            experiments(&recipe.recipe, cli.seed, None, Some(subsets), &mut out)?
        }
        Cmd::Report(r) => experiments(&r.recipe, cli.seed, None, None, &mut out)?,
        Cmd::PredictGrid {
            input,
            model,
            start,
            end,
            batch_rows,
        } => predict_grid(input, model, start, end, *batch_rows, pool, &mut out)?,
        Cmd::FillGaps {
            input,
            model,
            station,
            pollutant,
            start,
            end,
        } => {
            let inputs = load_inputs(input)?;
            let model = Ensemble::load(model)?;
            let pollutant: Pollutant = pollutant.parse()?;
            let site: &StationSite = inputs
                .stations
                .iter()
                .find(|s| &s.station_id == station)
                .ok_or_else(|| Usage(format!("unknown station {station}")))?;
            let s = fill_gaps(
                site,
                pollutant,
                &inputs.measurements.kept,
                &model,
                &inputs.store,
                parse_timestamp(start)?,
                parse_timestamp(end)?,
            )?;
            use synthstation::predict::Source;
            let name = format!("series_{}_{}.csv", station, pollutant);
            s.write_csv(&out.path(&name))?;
            out.log(format!(
                "station {station} {pollutant}: {} measured, {} predicted",
                s.count(Source::Measured),
                s.count(Source::Predicted)
            ));
        }
        Cmd::Exceedance { map, thresholds, input } => exceedance(map, thresholds, input.as_deref(), &mut out)?,
    }
    out.finish()
}

fn ingest_check(input: &Path, out: &mut OutDir) -> Result<()> {
    let inputs = load_inputs(input)?;
    let cols = inputs.store.columns();
    let mut per_family: BTreeMap<String, usize> = BTreeMap::new();
    for c in cols {
        *per_family.entry(c.family.as_str().to_string()).or_default() += 1;
    }
    let mut w = csv::Writer::from_path(out.path("ingest_check.csv"))?;
    w.write_record(["item", "value"])?;
    let mut put = |k: String, v: String| -> Result<()> {
        out.log(format!("{k} {v}"));
        w.write_record([k, v])?;
        Ok(())
    };
    put("cells".into(), inputs.area().len().to_string())?;
    put("stations".into(), inputs.stations.len().to_string())?;
    put("measurements_kept".into(), inputs.measurements.kept.len().to_string())?;
    for (p, n) in &inputs.measurements.removed {
        put(format!("measurements_removed_{p}"), n.to_string())?;
    }
    put("feature_columns".into(), cols.len().to_string())?;
    for (f, n) in per_family {
        put(format!("columns_{f}"), n.to_string())?;
    }
    put(
        "road_years".into(),
        inputs.store.road_years().map(|y| y.to_string()).collect::<Vec<_>>().join(";"),
    )?;
    put("schema_hash".into(), synthstation::ingest::schema_hash(cols))?;
    w.flush()?;
    Ok(())
}

fn features(input: &Path, pollutant: &str, threshold: f64, max_rows: usize, out: &mut OutDir) -> Result<()> {
    let pollutant: Pollutant = pollutant.parse()?;
    let inputs = load_inputs(input)?;
    let rows = build_labeled_rows(&inputs.store, &inputs.stations, &inputs.measurements.kept, pollutant)?;
    if rows.n_rows() == 0 {
        bail!(synthstation::Error::invalid(format!("no {pollutant} measurements")));
    }
    let names: Vec<String> = rows.matrix.columns.iter().map(|c| c.name.clone()).collect();
    let classes: BTreeMap<&str, _> = inputs
        .stations
        .iter()
        .map(|s| (s.station_id.as_str(), s.environment_class))
        .collect();

    let per_station: Vec<_> = rows
        .rows_by_station()
        .into_iter()
        .map(|(s, idx)| (rows.station_ids[s as usize].clone(), rows.subset(&idx)))
        .collect();
    let series: Vec<StationSeries> = per_station
        .iter()
        .map(|(id, r)| {
            Ok(StationSeries {
                station_id: id,
                class: classes[id.as_str()],
                features: r.x()?,
                targets: &r.targets,
            })
        })
        .collect::<synthstation::Result<_>>()?;
    let report = correlation_report(&names, &series)?;
    report.write_csv(&out.path("correlation.csv"))?;

    let step = rows.n_rows().div_ceil(max_rows.max(1));
    let thinned: Vec<usize> = (0..rows.n_rows()).step_by(step).collect();
    let sample = rows.subset(&thinned);
    let clustering = FeatureClustering::build(RowMatrix::new(&sample.matrix.values, sample.matrix.n_cols())?)?;
    clustering.dendrogram.write_csv(&out.path("dendrogram.csv"))?;
    let mut w = csv::Writer::from_path(out.path("clusters.csv"))?;
    w.write_record(["feature", "family", "cluster"])?;
    for (j, label) in clustering.clusters(threshold) {
        let c = &rows.matrix.columns[j];
        w.write_record([c.name.clone(), c.family.as_str().to_string(), label.to_string()])?;
    }
    w.flush()?;
    out.log(format!("{pollutant}: {} rows at {} stations", rows.n_rows(), per_station.len()));
    out.log(format!(
        "clustering on {} rows, {} columns, {} constant columns left out",
        sample.n_rows(),
        clustering.included.len(),
        clustering.excluded.len()
    ));
    out.log(format!("threshold {threshold}: {} clusters", clustering.n_clusters(threshold)));
    Ok(())
}

fn experiments(
    recipe_path: &Path,
    seed: Option<u64>,
    loov: Option<bool>,
    subsets: Option<Vec<FamilySelection>>,
    out: &mut OutDir,
) -> Result<()> {
    let mut recipe = Recipe::load(recipe_path)?;
    if let Some(s) = seed {
        recipe.protocol.seed = s;
    }
    if let Some(l) = loov {
        recipe.protocol.run_loov = l;
    }
    if let Some(s) = subsets {
        recipe.subsets = s;
    }
    let inputs = load_inputs(&recipe.input_dir)?;
    out.log(format!("seed {}", recipe.protocol.seed));
    let models = out.subdir("models")?;
    let mut reports = Vec::new();
    for &pollutant in &recipe.pollutants {
        let rows = build_labeled_rows(&inputs.store, &inputs.stations, &inputs.measurements.kept, pollutant)?;
        for sel in &recipe.subsets {
            let r = run_experiment(&rows, pollutant, sel, &recipe.protocol)?;
            out.log(format!("experiment {pollutant} {}", r.subset));
            out.log(format!(
                "  families: {}",
                r.families.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", ")
            ));
            out.log(format!("  columns: {} schema {}", r.columns.len(), r.schema_hash));
            out.log(format!("  rows train/validation/test: {}/{}/{}", r.rows[0], r.rows[1], r.rows[2]));
            out.log(format!("  chosen trial {}", r.best_index));
            let r2 = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
            out.log(format!("  test r2 {}", r2(r.test.r2)));
            if let Some(s) = r.loov.as_ref().and_then(|l| l.summary.as_ref()) {
                out.log(format!("  loov median r2 {:.6} over {} stations", s.median, s.n_scored));
            }
            r.model.save(&models.join(format!("{pollutant}_{}.model", r.subset)))?;
            reports.push(r);
        }
    }
    write_reports(&reports, &out.root)?;
    Ok(())
}

fn predict_grid(
    input: &Path,
    model: &Path,
    start: &str,
    end: &str,
    batch_rows: usize,
    pool: &rayon::ThreadPool,
    out: &mut OutDir,
) -> Result<()> {
    let (start, end) = (parse_timestamp(start)?, parse_timestamp(end)?);
    if end <= start {
        return Err(Usage("--end must be after --start".into()).into());
    }
    let inputs = load_inputs(input)?;
    let model = Ensemble::load(model)?;
    let cells: Vec<CellId> = inputs.area().cells().iter().map(|c| c.cell_id).collect();
    let times: Vec<Timestamp> = hourly_range(start, end).collect();
    let (map, thr) = grid_predict(&model, &inputs.store, &cells, &times, pool, batch_rows)?;
    map.write_csv(&out.path("map.csv"))?;
    std::fs::write(out.path("map_first_hour.pgm"), map.pgm_bytes(inputs.area(), 0)?)?;
    out.log(format!("{} cells x {} hours", cells.len(), times.len()));
    eprintln!(
        "{} rows in {:.3} s ({:.0} rows/s, {} workers)",
        thr.rows,
        thr.seconds,
        thr.rows_per_sec,
        pool.current_num_threads()
    );
    Ok(())
}

/// Reads a `cell_id,timestamp,value` map back into per-cell series.
fn read_map(path: &Path) -> Result<Vec<(CellId, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut series: Vec<(CellId, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            bail!(synthstation::Error::invalid(format!("{}: expected 3 fields", path.display())));
        }
        let cell: CellId = rec[0]
            .parse()
            .map_err(|_| synthstation::Error::invalid(format!("bad cell id {:?}", &rec[0])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| synthstation::Error::invalid(format!("bad value {:?}", &rec[2])))?;
        match series.last_mut() {
            Some((c, vals)) if *c == cell => vals.push(v),
            _ => series.push((cell, vec![v])),
        }
    }
    Ok(series)
}

fn exceedance(map: &Path, thresholds: &str, input: Option<&Path>, out: &mut OutDir) -> Result<()> {
    let parsed: Vec<(&str, f64)> = thresholds
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((t, v)),
            _ => Err(Usage(format!("bad threshold {t:?}"))),
        })
        .collect::<Result<_, _>>()?;
    if parsed.is_empty() {
        return Err(Usage("empty threshold list".into()).into());
    }
    let series = read_map(map)?;
    let area = input.map(synthstation::ingest::store::load_area).transpose()?;
    for (label, t) in parsed {
        let m = ExceedanceMap::from_series(t, &series)?;
        m.write_csv(&out.path(&format!("exceedance_{label}.csv")))?;
        if let Some(area) = &area {
            m.write_pgm(&out.path(&format!("exceedance_{label}.pgm")), area)?;
        }
        out.log(format!("threshold {label}: max {} of {} hours", m.max_count(), m.hours_in_period));
    }
    Ok(())
}
