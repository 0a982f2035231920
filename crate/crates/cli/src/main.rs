//! `loadplan` command-line interface.

mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use loadplan::conformal::{calibrate, RapsCalibration, RapsConfig};
use loadplan::data::{read_records_path, split::gather, temporal_split, write_records_path, FeatureSchema, Stage};
use loadplan::harness::{
    render_text, run_experiment, to_csv, train_cascade, DataSource, ExperimentConfig,
    ExperimentReport,
};
use loadplan::predictor::Cascade;
use loadplan::synth::{generate, summarize, GeneratorConfig};

#[derive(Parser)]
#[command(name = "loadplan", version, about = "Two-stage inbound load-plan prediction")]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "LOADPLAN_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Train the three-stage cascade on one horizon.
    Train(TrainArgs),
    /// Calibrate prediction sets from a predictions CSV.
    Calibrate(CalibrateArgs),
    /// Run a trained cascade on a CSV of loads.
    Predict(PredictArgs),
    /// Run the full multi-horizon experiment.
    Evaluate(EvaluateArgs),
    /// Render a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_loads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (default: <out-dir>/loads.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the distribution summary as CSV.
    #[arg(long)]
    summary_csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ExperimentOverrides {
    /// Experiment config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV, replacing the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_loads: Option<usize>,
    #[arg(long)]
    test_window_days: Option<u32>,
    /// Also lowers patience to at most this value.
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Backbone for all stages (mlp, resnet).
    #[arg(long)]
    backbone: Option<String>,
    /// Numeric embedding for all stages (none, ql, plr).
    #[arg(long)]
    embedding: Option<String>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long)]
    d_block: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentOverrides,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// Model directory (default: <out-dir>/model).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Predictions CSV with probability and actual-label columns.
    #[arg(long)]
    predictions: PathBuf,
    /// Model directory, for the label vocabulary.
    #[arg(long)]
    model: PathBuf,
    /// building_week, sort_week or sort_day; all three when omitted.
    #[arg(long)]
    stage: Option<Stage>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k_reg: Option<usize>,
    /// Output directory for <stage>.json (default: <model>/calibration).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV (default: <out-dir>/predictions.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add prediction sets from the calibration directory.
    #[arg(long)]
    sets: bool,
    /// Calibration directory (default: <model>/calibration).
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    exp: ExperimentOverrides,
    #[arg(long)]
    horizons: Option<usize>,
    /// Report directory (default: configured output_dir, else <out-dir>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Also write the long-format CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

impl ExperimentOverrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.data {
            let topology = match &c.dataset {
                DataSource::Generate(g) => Some(g.topology()?),
                DataSource::Csv { topology, .. } => topology.clone(),
            };
            c.dataset = DataSource::Csv {
                path: p.clone(),
                topology,
            };
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let DataSource::Generate(g) = &mut c.dataset {
            if let Some(n) = self.n_loads {
                g.n_loads = n;
            }
            if let Some(s) = self.seed {
                g.seed = s;
            }
        } else if self.n_loads.is_some() {
            bail!("--n-loads only applies to generated datasets");
        }
        if let Some(w) = self.test_window_days {
            c.test_window_days = w;
        }
        if let Some(e) = self.max_epochs {
            c.train.max_epochs = e;
            c.train.patience = c.train.patience.min(e);
        }
        if let Some(p) = self.patience {
            c.train.patience = p;
        }
        if let Some(b) = self.batch_size {
            c.train.batch_size = b;
        }
        for stage in Stage::ALL {
            let spec = match stage {
                Stage::BuildingWeek => &mut c.stages.building_week,
                Stage::SortWeek => &mut c.stages.sort_week,
                Stage::SortDay => &mut c.stages.sort_day,
            };
            if let Some(b) = &self.backbone {
                spec.backbone.kind = b.clone();
            }
            if let Some(e) = &self.embedding {
                spec.numeric_embedding.kind = e.clone();
            }
            if let Some(n) = self.n_blocks {
                spec.backbone.n_blocks = n;
            }
            if let Some(d) = self.d_block {
                spec.backbone.d_block = d;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn cmd_generate(out_dir: &Path, a: GenerateArgs) -> Result<()> {
    let mut c = match &a.config {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.n_loads {
        c.n_loads = n;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    let records = generate(&c)?;
    let out = a.out.unwrap_or_else(|| out_dir.join("loads.csv"));
    ensure_parent(&out)?;
    write_records_path(&out, &records)?;
    let summary = summarize(&c.topology()?, &records)?;
    if let Some(p) = &a.summary_csv {
        write_file(p, &summary.to_csv())?;
    }
    print!("{}", summary.to_text());
    eprintln!("wrote {} loads to {}", records.len(), out.display());
    Ok(())
}

fn cmd_train(out_dir: &Path, a: TrainArgs) -> Result<()> {
    let config = a.exp.resolve()?;
    let (records, topology) = config.dataset.load()?;
    let splits = temporal_split(&records, a.horizon, config.test_window_days)?;
    let train = gather(&records, &splits.train);
    let validation = gather(&records, &splits.validation);
    let calibration = gather(&records, &splits.calibration);
    let test = gather(&records, &splits.test);
    let schema = FeatureSchema::fit(&train, &topology, config.schema_options(a.horizon))?;
    let (cascade, epochs) = train_cascade(&config, &schema, &train, &validation, a.horizon)?;
    let dir = a.out.unwrap_or_else(|| out_dir.join("model"));
    cascade.save(&dir)?;
    write_file(&dir.join("experiment.json"), &serde_json::to_string_pretty(&config)?)?;
    let cal_pred = cascade.predict_records(&calibration)?;
    table::write_predictions(&dir.join("calibration_predictions.csv"), &topology, &calibration, &cal_pred, None)?;
    write_records_path(dir.join("calibration_loads.csv"), &calibration)?;
    write_records_path(dir.join("test_loads.csv"), &test)?;
    for (stage, e) in &epochs {
        eprintln!(
            "{stage}: best epoch {} of {}, validation loss {:.5}",
            e.best_epoch, e.epochs_run, e.best_validation_loss
        );
    }
    eprintln!("saved cascade to {}", dir.display());
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let cascade = Cascade::load(&a.model)?;
    let topology = &cascade.schema.topology;
    let dir = a.out.unwrap_or_else(|| a.model.join("calibration"));
    std::fs::create_dir_all(&dir)?;
    let stages = match a.stage {
        Some(s) => vec![s],
        None => Stage::ALL.to_vec(),
    };
    for stage in stages {
        let defaults = if stage.predicts_building() {
            RapsConfig::building()
        } else {
            RapsConfig::sort()
        };
        let config = RapsConfig {
            alpha: a.alpha.unwrap_or(defaults.alpha),
            lambda: a.lambda.unwrap_or(defaults.lambda),
            k_reg: a.k_reg.unwrap_or(defaults.k_reg),
        };
        let (proba, labels) = table::read_probabilities(&a.predictions, topology, stage)?;
        let cal = calibrate(&proba, &labels, config)?;
        let path = dir.join(format!("{stage}.json"));
        write_file(&path, &serde_json::to_string_pretty(&cal)?)?;
        eprintln!("{stage}: tau_hat = {} from n = {}", cal.tau_hat, cal.n);
    }
    Ok(())
}

fn cmd_predict(out_dir: &Path, a: PredictArgs) -> Result<()> {
    let cascade = Cascade::load(&a.model)?;
    let records = read_records_path(&a.data)?;
    for r in &records {
        r.validate(&cascade.schema.topology)?;
    }
    let pred = cascade.predict_records(&records)?;
    let calibrations = if a.sets {
        let dir = a.calibration.unwrap_or_else(|| a.model.join("calibration"));
        let mut m = BTreeMap::new();
        for stage in Stage::ALL {
            let c: RapsCalibration = read_json(&dir.join(format!("{stage}.json")))?;
            m.insert(stage, c);
        }
        Some(m)
    } else {
        None
    };
    let out = a.out.unwrap_or_else(|| out_dir.join("predictions.csv"));
    ensure_parent(&out)?;
    table::write_predictions(&out, &cascade.schema.topology, &records, &pred, calibrations.as_ref())?;
    eprintln!("wrote {} predictions to {}", records.len(), out.display());
    Ok(())
}

fn cmd_evaluate(out_dir: &Path, a: EvaluateArgs) -> Result<bool> {
    let mut config = a.exp.resolve()?;
    if let Some(h) = a.horizons {
        config.horizons = h;
    }
    let dir = a
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| out_dir.to_path_buf());
    let report = run_experiment(&config)?;
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    write_file(&dir.join("report.csv"), &to_csv(&report)?)?;
    print!("{}", render_text(&report));
    eprintln!("wrote report to {}", dir.display());
    Ok(report.is_complete())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let report = ExperimentReport::from_json(&text)?;
    if let Some(p) = &a.csv {
        write_file(p, &to_csv(&report)?)?;
    }
    print!("{}", render_text(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let out = cli.out_dir;
    match cli.command {
        Command::Generate(a) => cmd_generate(&out, a)?,
        Command::Train(a) => cmd_train(&out, a)?,
        Command::Calibrate(a) => cmd_calibrate(a)?,
        Command::Predict(a) => cmd_predict(&out, a)?,
        Command::Evaluate(a) => return cmd_evaluate(&out, a),
        Command::Report(a) => cmd_report(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some horizons did not complete");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
