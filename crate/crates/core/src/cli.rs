//! Command-line front end. The JSON config is the source of truth; flags
//! only pick the config, seed, paths and whether existing outputs may be
//! replaced.
//!
//! Exit codes: 0 success, 1 invalid input (config, arguments, files,
//! refusal to overwrite), 2 failure while running (including a failed
//! gradcheck/oracle suite). Errors are reported on stderr as
//! `{"error": {"kind": ..., "message": ..., "exit_code": ...}}`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::datasynth;
use crate::error::{Error, Result};
use crate::evalmetrics::TopKTable;
use crate::experiment::{self, EvaluationReport};
use crate::gan::{self, GeneratorState, QualitySourceKind};
use crate::nn::Checkpoint;
use crate::quality::{self, Surrogate};
use crate::verify::{self, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PADGAN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "padgan", version, about = "DPP-augmented GAN experiments on synthetic design problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic training dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the performance surrogate and report its held-out error.
    TrainSurrogate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a generator/discriminator pair.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training data CSV; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Surrogate checkpoint, used when train.quality_source is "surrogate".
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Evaluate a generator checkpoint or a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Generator checkpoint to sample the pool from.
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        generator: Option<PathBuf>,
        /// Dataset CSV to evaluate directly.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training data for the novelty metric; generated from the config
        /// when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write generated designs and their performances.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        generator: PathBuf,
        /// Defaults to evaluation.pool_size.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run every finite-difference gradient suite.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Run the DPP subset-probability and log-det identity suites.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Train with the configured gamma1 and with gamma1 = 0 on every
    /// configured seed and tabulate the evaluation metrics.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            report_error("usage", &e.to_string(), EXIT_INVALID);
            return EXIT_INVALID;
        }
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> i32 {
    let code = if e.is_validation() { EXIT_INVALID } else { EXIT_RUNTIME };
    report_error(e.kind(), &e.to_string(), code);
    code
}

fn report_error(kind: &str, message: &str, code: i32) {
    let body = json!({ "error": { "kind": kind, "message": message.trim_end(), "exit_code": code } });
    eprintln!("{body}");
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // a pool may already exist when called more than once in-process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Context {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
    force: bool,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let seed = common.seed.unwrap_or(cfg.seed);
        let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Self {
            cfg,
            seed,
            out,
            force: common.force,
        })
    }

    /// Creates the output directory and checks none of `names` exists
    /// (unless forced), before any work is done.
    fn prepare(&self, names: &[&str]) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        if !self.force {
            for name in names {
                let p = self.out.join(name);
                if p.exists() {
                    return Err(Error::WouldOverwrite(p));
                }
            }
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn training_data(&self, data: Option<&Path>) -> Result<Vec<Vec<f64>>> {
        let rows = match data {
            Some(path) => {
                let (dim, rows) = datasynth::load_dataset(path)?;
                if dim != self.cfg.quality.domain.dim {
                    return Err(Error::InvalidArgument(format!(
                        "{} has {dim} columns, the domain has {}",
                        path.display(),
                        self.cfg.quality.domain.dim
                    )));
                }
                rows
            }
            None => datasynth::generate_dataset(&self.cfg.dataset)?,
        };
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(rows)
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::GenData { common } => gen_data(&Context::new(&common)?),
        Command::TrainSurrogate { common } => train_surrogate(&Context::new(&common)?),
        Command::Train { common, data, surrogate } => {
            train(&Context::new(&common)?, data.as_deref(), surrogate.as_deref())
        }
        Command::Evaluate {
            common,
            generator,
            dataset,
            data,
        } => evaluate(&Context::new(&common)?, generator.as_deref(), dataset.as_deref(), data.as_deref()),
        Command::Sample {
            common,
            generator,
            count,
        } => sample(&Context::new(&common)?, &generator, count),
        Command::Gradcheck { common } => {
            let ctx = Context::new(&common)?;
            print_verify("gradcheck", &verify::gradcheck(ctx.seed)?)
        }
        Command::Oracle { common } => {
            let ctx = Context::new(&common)?;
            print_verify("oracle", &verify::oracle(ctx.seed)?)
        }
        Command::Compare { common, data } => compare(&Context::new(&common)?, data.as_deref()),
    }
}

fn gen_data(ctx: &Context) -> Result<i32> {
    ctx.prepare(&["dataset.csv"])?;
    let rows = datasynth::generate_dataset(&ctx.cfg.dataset)?;
    datasynth::save_dataset(&ctx.path("dataset.csv"), ctx.cfg.dataset.domain.dim, &rows)?;
    println!("wrote {} designs to {}", rows.len(), ctx.path("dataset.csv").display());
    Ok(EXIT_OK)
}

fn train_surrogate(ctx: &Context) -> Result<i32> {
    ctx.prepare(&["surrogate.json", "surrogate_metrics.json"])?;
    let fit = experiment::fit_surrogate(&ctx.cfg)?;
    Checkpoint::new("surrogate", &fit.surrogate.spec, &fit.surrogate.params, None).save(&ctx.path("surrogate.json"))?;
    let metrics = json!({
        "samples": ctx.cfg.surrogate.samples,
        "holdout_size": fit.holdout_size,
        "holdout_mse": fit.holdout_mse,
        "holdout_rmse": fit.holdout_rmse(),
    });
    write_json(&ctx.path("surrogate_metrics.json"), &metrics)?;
    println!("surrogate held-out RMSE per objective: {:?}", fit.holdout_rmse());
    Ok(EXIT_OK)
}

fn load_surrogate(path: &Path) -> Result<Surrogate> {
    let ck = Checkpoint::load(path)?;
    if ck.role != "surrogate" {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("expected role \"surrogate\", found {:?}", ck.role),
        });
    }
    Ok(Surrogate {
        params: ck.params(),
        spec: ck.spec,
    })
}

fn train(ctx: &Context, data: Option<&Path>, surrogate: Option<&Path>) -> Result<i32> {
    ctx.prepare(&["generator.json", "discriminator.json", "train_log.csv", "config.resolved.json"])?;
    if surrogate.is_some() && ctx.cfg.train.quality_source != QualitySourceKind::Surrogate {
        return Err(Error::InvalidArgument(
            "--surrogate given but train.quality_source is not \"surrogate\"".into(),
        ));
    }
    let rows = ctx.training_data(data)?;
    let surrogate = surrogate.map(load_surrogate).transpose()?;
    let source = experiment::quality_source(&ctx.cfg, surrogate)?;
    let tc = ctx.cfg.train_config(ctx.seed);
    let outcome = gan::train(&tc, &rows, &source, &ctx.cfg.quality.domain)?;
    outcome.generator.checkpoint().save(&ctx.path("generator.json"))?;
    outcome.discriminator.checkpoint().save(&ctx.path("discriminator.json"))?;
    let log_file = BufWriter::new(File::create(ctx.path("train_log.csv"))?);
    outcome.log.write_csv(log_file, source.num_objectives())?;
    write_resolved_config(ctx)?;
    if let Some(last) = outcome.log.records.last() {
        println!(
            "step {}: d_loss {:.4} g_adv_loss {:.4} pad_loss {:.4} mean_q {:?} batch_diversity {:.3}",
            last.step, last.d_loss, last.g_adv_loss, last.pad_loss, last.mean_quality, last.batch_diversity
        );
    }
    Ok(EXIT_OK)
}

fn write_resolved_config(ctx: &Context) -> Result<()> {
    let resolved = ExperimentConfig {
        seed: ctx.seed,
        output_dir: ctx.out.clone(),
        ..ctx.cfg.clone()
    };
    fs::write(ctx.path("config.resolved.json"), resolved.to_json()?)?;
    Ok(())
}

const EVAL_FILES: [&str; 5] = ["report.json", "diversity.csv", "pareto.csv", "top_k.csv", "novelty.csv"];

fn evaluate(ctx: &Context, generator: Option<&Path>, dataset: Option<&Path>, data: Option<&Path>) -> Result<i32> {
    let names: Vec<&str> = if generator.is_some() {
        EVAL_FILES.to_vec()
    } else {
        EVAL_FILES[..4].to_vec()
    };
    ctx.prepare(&names)?;
    let eval = &ctx.cfg.evaluation;
    let (pool, training) = match (generator, dataset) {
        (Some(path), _) => {
            let g = GeneratorState::from_checkpoint(&Checkpoint::load(path)?)?;
            let pool = gan::sample(&g, eval.pool_size, experiment::pool_seed(ctx.seed))?;
            (pool, Some(ctx.training_data(data)?))
        }
        (None, Some(path)) => {
            let (_, rows) = datasynth::load_dataset(path)?;
            let pool: Vec<Vec<f64>> = rows.into_iter().take(eval.pool_size).collect();
            let training = data.map(|d| ctx.training_data(Some(d))).transpose()?;
            (pool, training)
        }
        (None, None) => return Err(Error::InvalidArgument("pass --generator or --dataset".into())),
    };
    if pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = pool.iter().find(|x| x.len() != ctx.cfg.quality.domain.dim) {
        return Err(Error::ShapeMismatch {
            context: "evaluated design width",
            expected: ctx.cfg.quality.domain.dim,
            actual: bad.len(),
        });
    }
    let report = experiment::evaluate_pool(
        &pool,
        &ctx.cfg.quality,
        training.as_deref(),
        eval,
        &ctx.cfg.train.similarity,
        ctx.seed,
    )?;
    write_evaluation(ctx, &pool, &report)?;
    let d = &report.diversity.summary;
    println!(
        "pool {}: diversity mean {:.3} (std {:.3}); objective means {:?}; hypervolume {:?}; front size {}",
        pool.len(),
        d.mean,
        d.std,
        report.mean_objectives(),
        report.pareto.hypervolume,
        report.pareto.front.len()
    );
    if let Some(n) = &report.novelty {
        println!("novelty mean {:.4} max {:.4} fraction above {}: {:.3}", n.mean, n.max, n.threshold, n.fraction_above);
    }
    Ok(EXIT_OK)
}

fn design_header(dim: usize, objectives: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    h.extend((1..=objectives).map(|j| format!("p{j}")));
    h
}

fn write_evaluation(ctx: &Context, pool: &[Vec<f64>], report: &EvaluationReport) -> Result<()> {
    write_json(&ctx.path("report.json"), report)?;
    let dim = ctx.cfg.quality.domain.dim;
    let k = ctx.cfg.quality.num_objectives();

    let mut w = csv::Writer::from_path(ctx.path("diversity.csv"))?;
    w.write_record(["repetition", "diversity"])?;
    for (i, v) in report.diversity.values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(ctx.path("pareto.csv"))?;
    let mut header = vec!["index".to_string()];
    header.extend(design_header(dim, k));
    w.write_record(&header)?;
    for &i in &report.pareto.front {
        let mut row = vec![i.to_string()];
        row.extend(pool[i].iter().map(|v| v.to_string()));
        row.extend(quality::evaluate_performance(&ctx.cfg.quality, &pool[i]).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    write_top_k(&ctx.path("top_k.csv"), &report.top_k, dim, k)?;

    if let Some(n) = &report.novelty {
        let mut w = csv::Writer::from_path(ctx.path("novelty.csv"))?;
        w.write_record(["index", "distance"])?;
        for (i, d) in n.distances.iter().enumerate() {
            w.write_record([i.to_string(), d.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn write_top_k(path: &Path, tables: &[TopKTable], dim: usize, k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["criterion", "rank", "index", "score"].map(String::from).to_vec();
    header.extend(design_header(dim, k));
    w.write_record(&header)?;
    for t in tables {
        for r in &t.rows {
            let mut row = vec![t.criterion.clone(), r.rank.to_string(), r.index.to_string(), r.score.to_string()];
            row.extend(r.design.iter().map(|v| v.to_string()));
            row.extend(r.performance.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sample(ctx: &Context, generator: &Path, count: Option<usize>) -> Result<i32> {
    ctx.prepare(&["samples.csv"])?;
    let g = GeneratorState::from_checkpoint(&Checkpoint::load(generator)?)?;
    let count = count.unwrap_or(ctx.cfg.evaluation.pool_size);
    let designs = gan::sample(&g, count, ctx.seed)?;
    let k = ctx.cfg.quality.num_objectives();
    let mut w = csv::Writer::from_path(ctx.path("samples.csv"))?;
    w.write_record(design_header(g.lo.len(), k))?;
    for x in &designs {
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.extend(quality::evaluate_performance(&ctx.cfg.quality, x).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("wrote {count} samples to {}", ctx.path("samples.csv").display());
    Ok(EXIT_OK)
}

fn print_verify(what: &str, report: &VerifyReport) -> Result<i32> {
    println!("{:<28} {:>8} {:>8} {:>12} {:>10} {:>10}  result", "suite", "checked", "skipped", "max_error", "rel_tol", "abs_tol");
    for s in &report.suites {
        println!(
            "{:<28} {:>8} {:>8} {:>12.3e} {:>10.1e} {:>10.1e}  {}",
            s.name,
            s.checked,
            s.skipped,
            s.max_error,
            s.tolerance.rel,
            s.tolerance.abs,
            if s.passed { "PASS" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!("{what}: all suites passed");
        Ok(EXIT_OK)
    } else {
        let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
        report_error("verification_failed", &format!("{what}: failing suites {failed:?}"), EXIT_RUNTIME);
        Ok(EXIT_RUNTIME)
    }
}

fn compare(ctx: &Context, data: Option<&Path>) -> Result<i32> {
    ctx.prepare(&["compare.csv", "compare.json", "config.resolved.json"])?;
    let rows = ctx.training_data(data)?;
    let source = experiment::quality_source(&ctx.cfg, None)?;
    let (report, _) = experiment::compare(&ctx.cfg, &rows, &source)?;
    report.write_csv(BufWriter::new(File::create(ctx.path("compare.csv"))?))?;
    write_json(&ctx.path("compare.json"), &report)?;
    write_resolved_config(ctx)?;
    let mut stdout = std::io::stdout().lock();
    report.write_csv(&mut stdout)?;
    writeln!(
        stdout,
        "seeds where gamma1={} beat gamma1=0: diversity+quality {}/{}, hypervolume {}/{}, novelty {}/{}",
        report.gamma1,
        report.wins_diversity_and_quality(),
        report.seeds.len(),
        report.wins_hypervolume(),
        report.seeds.len(),
        report.wins_novelty(),
        report.seeds.len()
    )?;
    Ok(EXIT_OK)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
