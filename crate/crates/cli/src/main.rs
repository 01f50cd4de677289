use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ego_core::indexes::{
    p_uniform, read_index_csv, write_index_csv, IndexConfig, IndexPoles, IndexRow, PUniformVariant,
};
use ego_core::pyramids::{
    self, combined_cohorts, exponential_model, uniform_model, PyramidTable, Sex,
};
use ego_core::report::{self, Axis, Format, IndicatorTable};
use ego_core::{batch_compare, compare, EgoConfig, IncrementStore, ObjectRecord};

/// File looked up inside the data directory when `--data` is not given.
const DEFAULT_DATA_FILE: &str = "pyramids.csv";

#[derive(Parser)]
#[command(
    name = "ego",
    version,
    about = "Computer-ego pattern dissimilarity for population pyramids"
)]
struct Cli {
    /// HP difference between the two query clones, in (0, 1].
    #[arg(long, global = true, default_value_t = 1e-4, value_parser = parse_delta)]
    delta: f64,
    /// Per-parameter similarity metric. Only R is implemented.
    #[arg(long, global = true, default_value = "R")]
    metric: String,
    /// Worker threads for batch work. Output does not depend on it.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit 0 even when some rows fail.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Wide pyramid CSV. Defaults to pyramids.csv in $EGO_DATA_DIR.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, env = "EGO_DATA_DIR", hide_env_values = true)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a pyramid CSV to percentage shares.
    Ingest {
        input: PathBuf,
        /// Input is long format: name,sex,cohort,value.
        #[arg(long)]
        long: bool,
    },
    /// Compare one query pyramid with one target.
    Compare {
        query: String,
        target: String,
        #[command(flatten)]
        data: DataArgs,
        /// Print the per-parameter increments.
        #[arg(long)]
        increments: bool,
    },
    /// Compare a query (named or model) with every pyramid in the table.
    Batch {
        query: Option<String>,
        /// Model query: `uniform` or `exp:RATE`.
        #[arg(long, conflicts_with = "query")]
        model: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        /// Append every increment to this store file.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Full index table relative to two polar queries.
    Mu {
        /// The pole scored 100 (aged pyramids).
        query_a: String,
        /// The pole scored 0 (young pyramids).
        query_b: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.30)]
        exp_rate: f64,
        #[arg(long, default_value = "normalized", value_parser = parse_variant)]
        variant: PUniformVariant,
    },
    /// Print a model pyramid.
    Model {
        #[arg(long, value_enum)]
        kind: ModelKind,
        #[arg(long, default_value_t = 0.30)]
        rate: f64,
    },
    /// Recompute the uniform share of an index table.
    Punif {
        index: PathBuf,
        #[arg(long, default_value = "normalized", value_parser = parse_variant)]
        variant: PUniformVariant,
    },
    /// Work with a persisted increment store.
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    /// Join an index table with indicators and emit a scatter series.
    Report {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        indicators: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        /// Optional name,tag CSV used to color points.
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum StoreAction {
    /// Compare and append the increments.
    Put {
        store: PathBuf,
        query: String,
        target: String,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Sum stored increments, over all parameters or a subset.
    Combine {
        store: PathBuf,
        query: String,
        target: String,
        /// Comma-separated parameter names.
        #[arg(long, value_delimiter = ',', conflicts_with = "sex")]
        params: Vec<String>,
        /// Restrict to one sex: male or female.
        #[arg(long)]
        sex: Option<String>,
    },
    /// Print all stored records.
    List { store: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Uniform,
    Exp,
}

fn parse_delta(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid number {s:?}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("delta must lie in (0, 1], got {v}"))
    }
}

fn parse_variant(s: &str) -> std::result::Result<PUniformVariant, String> {
    s.parse().map_err(|e: ego_core::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: ego_core::Error| e.to_string())
}

impl DataArgs {
    fn path(&self) -> Result<PathBuf> {
        match (&self.data, &self.data_dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(DEFAULT_DATA_FILE)),
            (None, None) => bail!("no data file: pass --data or set EGO_DATA_DIR"),
        }
    }

    fn load(&self) -> Result<PyramidTable> {
        let path = self.path()?;
        let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        pyramids::ingest(file).with_context(|| format!("reading {}", path.display()))
    }
}

fn lookup<'a>(table: &'a PyramidTable, name: &str) -> Result<&'a ObjectRecord> {
    table
        .get(name)
        .ok_or_else(|| anyhow!("name not found: {name:?}"))
}

fn parse_model(spec: &str) -> Result<ObjectRecord> {
    if spec == "uniform" {
        return Ok(uniform_model());
    }
    let rate = spec
        .strip_prefix("exp:")
        .ok_or_else(|| anyhow!("model must be uniform or exp:RATE, got {spec:?}"))?;
    let rate: f64 = rate
        .parse()
        .with_context(|| format!("invalid rate {rate:?}"))?;
    Ok(exponential_model(rate)?)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_file(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

/// Number of row-level failures; the process exits nonzero when positive.
type RowErrors = usize;

fn run(cli: &Cli) -> Result<RowErrors> {
    if !cli.metric.eq_ignore_ascii_case("r") {
        bail!("unknown metric {:?}; only R is available", cli.metric);
    }
    let cfg = EgoConfig::with_delta(cli.delta);
    cfg.validate()?;

    match &cli.command {
        Command::Ingest { input, long } => {
            let (table, rejected) = if *long {
                (pyramids::ingest_long(read_file(input)?)?, Vec::new())
            } else {
                let report = pyramids::ingest_lenient(read_file(input)?)?;
                (report.table, report.rejected)
            };
            for r in &rejected {
                eprintln!("line {}: {}", r.line, r.message);
            }
            let mut out = open_out(&cli.out)?;
            table.write_csv(&mut out)?;
            out.flush()?;
            Ok(rejected.len())
        }

        Command::Compare {
            query,
            target,
            data,
            increments,
        } => {
            let table = data.load()?;
            let r = compare(lookup(&table, query)?, lookup(&table, target)?, &cfg)?;
            let mut out = open_out(&cli.out)?;
            writeln!(out, "{r}")?;
            if *increments {
                writeln!(out, "param\tk_increment")?;
                for (p, k) in &r.increments {
                    writeln!(out, "{p}\t{k}")?;
                }
                let total: f64 = r.increments.iter().map(|(_, k)| k).sum();
                writeln!(out, "total\t{total}")?;
            }
            out.flush()?;
            Ok(0)
        }

        Command::Batch {
            query,
            model,
            data,
            store,
        } => {
            let table = data.load()?;
            let q = match (query, model) {
                (_, Some(m)) => parse_model(m)?,
                (Some(name), None) => lookup(&table, name)?.clone(),
                (None, None) => bail!("give a query name or --model"),
            };
            let results = batch_compare(&q, table.rows(), &cfg);
            let mut store = store.as_ref().map(IncrementStore::open).transpose()?;
            let mut out = open_out(&cli.out)?;
            writeln!(out, "query,target,delta,d,k,k_cont")?;
            let mut errors = 0;
            for (t, r) in table.rows().iter().zip(results) {
                match r {
                    Ok(r) => {
                        writeln!(
                            out,
                            "{},{},{},{},{},{}",
                            csv_field(&r.query),
                            csv_field(&r.target),
                            r.delta,
                            r.d,
                            r.k,
                            r.k_cont
                        )?;
                        if let Some(s) = store.as_mut() {
                            s.put(&r)?;
                        }
                    }
                    Err(e) => {
                        errors += 1;
                        eprintln!("{}: {e}", t.name());
                    }
                }
            }
            out.flush()?;
            Ok(errors)
        }

        Command::Mu {
            query_a,
            query_b,
            data,
            exp_rate,
            variant,
        } => {
            let table = data.load()?;
            let (a, b) = (lookup(&table, query_a)?, lookup(&table, query_b)?);
            let icfg = IndexConfig {
                ego: cfg,
                exp_rate: *exp_rate,
                variant: *variant,
            };
            let poles = IndexPoles::new(a, b, icfg)?;
            let mut rows = Vec::new();
            let mut errors = 0;
            for (t, r) in table.rows().iter().zip(poles.rows(table.rows())) {
                match r {
                    Ok(row) => {
                        if row.mu.is_none() {
                            errors += 1;
                            eprintln!("{}: MU undefined (both K values are zero)", row.name);
                        }
                        rows.push(row);
                    }
                    Err(e) => {
                        errors += 1;
                        eprintln!("{}: {e}", t.name());
                    }
                }
            }
            let mut out = open_out(&cli.out)?;
            write_index_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(errors)
        }

        Command::Model { kind, rate } => {
            let p = match kind {
                ModelKind::Uniform => uniform_model(),
                ModelKind::Exp => exponential_model(*rate)?,
            };
            let male = pyramids::sex_slice(&p, Sex::Male)?;
            let female = pyramids::sex_slice(&p, Sex::Female)?;
            let mut out = open_out(&cli.out)?;
            writeln!(out, "# model {}", p.name())?;
            writeln!(out, "cohort,male,female,combined")?;
            for (i, c) in combined_cohorts(&p)?.iter().enumerate() {
                writeln!(
                    out,
                    "{},{:.2},{:.2},{c:.2}",
                    pyramids::COHORT_STARTS[i],
                    male.values()[i],
                    female.values()[i]
                )?;
            }
            out.flush()?;
            Ok(0)
        }

        Command::Punif { index, variant } => {
            let rows = read_index_csv(read_file(index)?)?;
            let mut out = open_out(&cli.out)?;
            writeln!(out, "name,d_un,d_e30,p_un")?;
            let mut errors = 0;
            for r in &rows {
                let p = match p_uniform(r.d_un, r.d_e, *variant) {
                    Ok(p) => p.to_string(),
                    Err(e) => {
                        errors += 1;
                        eprintln!("{}: {e}", r.name);
                        "undefined".into()
                    }
                };
                writeln!(out, "{},{},{},{p}", csv_field(&r.name), r.d_un, r.d_e)?;
            }
            out.flush()?;
            Ok(errors)
        }

        Command::Store { action } => run_store(cli, &cfg, action),

        Command::Report {
            index,
            indicators,
            x,
            y,
            log_x,
            log_y,
            tags,
            format,
        } => {
            let rows: Vec<IndexRow> = read_index_csv(read_file(index)?)?;
            let table = IndicatorTable::from_csv(read_file(indicators)?)?;
            let axis = |f: &str, log: bool| if log { Axis::log10(f) } else { Axis::new(f) };
            let mut joined = report::join(&rows, &table, &axis(x, *log_x), &axis(y, *log_y))?;
            if let Some(t) = tags {
                joined.series.apply_tags(&report::read_tags(read_file(t)?)?);
            }
            for name in &joined.unmatched_index {
                eprintln!("unmatched index row: {name}");
            }
            for name in &joined.unmatched_indicator {
                eprintln!("unmatched indicator name: {name}");
            }
            let mut out = open_out(&cli.out)?;
            report::emit(&joined.series, *format, &mut out)?;
            out.flush()?;
            Ok(0)
        }
    }
}

fn run_store(cli: &Cli, cfg: &EgoConfig, action: &StoreAction) -> Result<RowErrors> {
    let mut out = open_out(&cli.out)?;
    match action {
        StoreAction::Put {
            store,
            query,
            target,
            data,
        } => {
            let table = data.load()?;
            let r = compare(lookup(&table, query)?, lookup(&table, target)?, cfg)?;
            IncrementStore::open(store)?.put(&r)?;
            writeln!(
                out,
                "stored {} increments, K_cont {}",
                r.increments.len(),
                r.k_cont
            )?;
        }
        StoreAction::Combine {
            store,
            query,
            target,
            params,
            sex,
        } => {
            let store = IncrementStore::read_from(io::BufReader::new(read_file(store)?))?;
            let k = match sex {
                Some(s) => {
                    let sex = Sex::parse(s)
                        .ok_or_else(|| anyhow!("sex must be male or female, got {s:?}"))?;
                    store.combine(query, target, cfg.delta, &pyramids::sex_param_names(sex))?
                }
                None if params.is_empty() => store.combine_all(query, target, cfg.delta)?,
                None => store.combine(query, target, cfg.delta, params)?,
            };
            writeln!(out, "{k}")?;
        }
        StoreAction::List { store } => {
            let store = IncrementStore::read_from(io::BufReader::new(read_file(store)?))?;
            writeln!(out, "{}", ego_core::infothyristor::store::HEADER)?;
            for r in store.records() {
                writeln!(out, "{}", r.to_line())?;
            }
        }
    }
    out.flush()?;
    Ok(0)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.parallel {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(anyhow!("cannot start thread pool: {e}")),
        },
        None => run(&cli),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) if cli.lenient => {
            eprintln!("{n} row(s) failed (ignored with --lenient)");
            ExitCode::SUCCESS
        }
        Ok(n) => {
            eprintln!("{n} row(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
