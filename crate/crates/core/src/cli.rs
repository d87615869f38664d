//! The `wet` command line: prepare, train, eval, ablate, compare, predict.
//!
//! Settings resolve as flags over config file over defaults. Artifacts go
//! to the `out` directory; later commands read what earlier ones wrote.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ProviderKind, RunConfig, WeightsMode};
use crate::dataprep::{
    ingest, parse_list, prepare, synthetic_corpus, to_examples, write_jsonl, Label, Lexicon,
    PrepareOptions, PreparedDataset, TweetRecord, DEFAULT_EXCLUSIONS, DEFAULT_KEYWORDS,
    DEFAULT_STOPWORDS,
};
use crate::ensemble::{train, Example, TrainingReport, WetModel};
use crate::error::{Result, WetError};
use crate::eval::{
    ablate, ablation_csv, ablation_svg, ablation_table, compare_configs, score, validation_split,
    AblationGrid, DataSplits, MetricsReport,
};
use crate::numerics::{derive_seed, ActivationKind, LossKind, OptimizerKind};
use crate::pipeline::{EmbeddingSettings, ModelBundle, Predictor, Preprocessor};

pub const DATASET_FILE: &str = "dataset.json";
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Parser)]
#[command(
    name = "wet",
    version,
    about = "Suicide-ideation tweet classifier: data preparation, training, and evaluation"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override config keys of the same name.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub keywords: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    /// WETEMB file for `--provider file`.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// pseudo | file
    #[arg(long, global = true)]
    pub provider: Option<ProviderKind>,
    /// uniform | valderived | learned
    #[arg(long, global = true)]
    pub weights_mode: Option<WeightsMode>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub activation: Option<ActivationKind>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub fc_width: Option<usize>,
    #[arg(long, global = true)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long, global = true)]
    pub loss: Option<LossKind>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub split_ratio: Option<f64>,
    /// Allow dropout above the grid bound.
    #[arg(long, global = true)]
    pub no_grid_guard: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic JSONL corpus.
    Generate {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        noise: usize,
        /// Drop labels so preparation falls back to rule suggestions.
        #[arg(long)]
        unlabelled: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Filter, label, split, and featurise a JSONL corpus.
    Prepare,
    /// Train on a prepared dataset.
    Train,
    /// Score a trained model on the prepared test split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_parser = ["test", "train"], default_value = "test")]
        split: String,
    },
    /// Sweep the hyperparameter grid one axis at a time.
    Ablate {
        /// Also write an SVG plot of accuracy per case study.
        #[arg(long)]
        plot: bool,
    },
    /// Paired t-test over k folds between this config and another.
    Compare {
        #[arg(long)]
        against: PathBuf,
    },
    /// Score unlabelled JSONL records.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV destination; defaults to `<out>/predictions.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f { cfg.$f = v.clone().into(); }
            )*};
        }
        set!(input, keywords, lexicon, stopwords, embeddings);
        set!(
            out,
            seed,
            provider,
            weights_mode,
            threshold,
            dropout,
            activation,
            batch_size,
            fc_width
        );
        set!(
            optimizer,
            loss,
            learning_rate,
            max_epochs,
            patience,
            split_ratio
        );
        if self.no_grid_guard {
            cfg.grid_guard = false;
        }
    }
}

/// Defaults, then the config file, then flags; validated as a whole.
pub fn resolve_config(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn read_list(path: Option<&Path>, fallback: &str) -> Result<Vec<String>> {
    match path {
        Some(p) => Ok(parse_list(
            &std::fs::read_to_string(p).map_err(|e| WetError::io(p, e))?,
        )),
        None => Ok(parse_list(fallback)),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| WetError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| WetError::Internal(e.to_string()))?;
    s.push('\n');
    write_file(path, s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| WetError::Parse(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| WetError::io(dir, e))
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    seed: u64,
    train: Vec<&'a str>,
    test: Vec<&'a str>,
}

fn cmd_prepare(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| WetError::invalid("prepare needs --input"))?;
    let ingested = ingest(input)?;
    let lexicon = match &cfg.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::bundled(),
    };
    let opts = PrepareOptions {
        keywords: read_list(cfg.keywords.as_deref(), DEFAULT_KEYWORDS)?,
        exclusions: parse_list(DEFAULT_EXCLUSIONS),
        lexicon: lexicon.clone(),
        split_ratio: cfg.split_ratio,
        seed: derive_seed(cfg.seed, "split"),
    };
    let dataset = prepare(&ingested.records, ingested.rejects, &opts)?;
    let out = &cfg.out;
    ensure_dir(out)?;
    dataset.save(&out.join(DATASET_FILE))?;
    let records: Vec<_> = dataset
        .train
        .iter()
        .chain(&dataset.test)
        .map(|r| TweetRecord {
            label: Some(r.label),
            ..r.record.clone()
        })
        .collect();
    write_jsonl(&out.join("records.jsonl"), &records)?;
    write_file(&out.join("features.csv"), dataset.features_csv()?)?;
    let manifest = SplitManifest {
        seed: opts.seed,
        train: dataset.train.iter().map(|r| r.record.id.as_str()).collect(),
        test: dataset.test.iter().map(|r| r.record.id.as_str()).collect(),
    };
    write_json(&out.join("split.json"), &manifest)?;
    write_json(&out.join("stats.json"), &dataset.stats)?;
    let pre = Preprocessor {
        lexicon,
        stats: dataset.stats.clone(),
        stopwords: read_list(cfg.stopwords.as_deref(), DEFAULT_STOPWORDS)?,
    };
    write_json(&out.join(PREPROCESS_FILE), &pre)?;
    #[derive(Serialize)]
    struct Report<'a> {
        stages: &'a [crate::dataprep::StageCount],
        rejects: &'a [crate::dataprep::Reject],
    }
    write_json(
        &out.join("prepare_report.json"),
        &Report {
            stages: &dataset.stages,
            rejects: &dataset.rejects,
        },
    )?;
    for s in &dataset.stages {
        writeln!(w, "{:<16}{}", s.stage, s.count).map_err(stdout_err)?;
    }
    if !dataset.rejects.is_empty() {
        writeln!(w, "{:<16}{}", "rejected_lines", dataset.rejects.len()).map_err(stdout_err)?;
    }
    Ok(())
}

fn stdout_err(e: std::io::Error) -> WetError {
    WetError::io("<stdout>", e)
}

struct Loaded {
    pre: Preprocessor,
    embedding: EmbeddingSettings,
    train: Vec<Example>,
    test: Vec<Example>,
}

fn load_prepared(cfg: &RunConfig) -> Result<Loaded> {
    let dataset = PreparedDataset::load(&cfg.out.join(DATASET_FILE))?;
    let pre: Preprocessor = read_json(&cfg.out.join(PREPROCESS_FILE))?;
    let embedding = EmbeddingSettings::from_config(cfg);
    let provider = embedding.build()?;
    let train = to_examples(&dataset.train, &provider, &pre.stopwords, cfg.max_seq_len)?;
    let test = to_examples(&dataset.test, &provider, &pre.stopwords, cfg.max_seq_len)?;
    Ok(Loaded {
        pre,
        embedding,
        train,
        test,
    })
}

fn split_validation(cfg: &RunConfig, examples: &[Example]) -> Result<(Vec<Example>, Vec<Example>)> {
    validation_split(
        examples,
        cfg.val_fraction,
        derive_seed(cfg.seed, "validation"),
    )
}

#[derive(Serialize)]
struct TrainReportFile<'a> {
    config: &'a RunConfig,
    param_count: usize,
    branches: Vec<String>,
    training: &'a TrainingReport,
    test: &'a MetricsReport,
}

fn cmd_train(cfg: &RunConfig, w: &mut dyn Write) -> Result<()> {
    let data = load_prepared(cfg)?;
    let (tr, val) = split_validation(cfg, &data.train)?;
    let mut model = WetModel::new(
        cfg.model(),
        cfg.weights_mode,
        derive_seed(cfg.seed, "model"),
    )?;
    let report = train(&mut model, &tr, &val, &cfg.train())?;
    let test = score(&model, &data.test, cfg.threshold)?;
    let bundle = ModelBundle::new(&model, data.pre, data.embedding, cfg.threshold);
    bundle.save(&cfg.out.join(MODEL_FILE))?;
    let file = TrainReportFile {
        config: cfg,
        param_count: model.param_count(),
        branches: model.branch_names(),
        training: &report,
        test: &test,
    };
    write_json(&cfg.out.join("train_report.json"), &file)?;
    let last = report.epochs.last();
    writeln!(
        w,
        "epochs {} (best {}), val accuracy {:.4}, test accuracy {:.4}",
        report.epochs.len(),
        report.best_epoch,
        last.map_or(0.0, |e| e.val_accuracy),
        test.accuracy
    )
    .map_err(stdout_err)?;
    let weights: Vec<String> = report
        .final_weights
        .a
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect();
    writeln!(w, "ensemble weights [{}]", weights.join(", ")).map_err(stdout_err)?;
    Ok(())
}

fn model_path(cfg: &RunConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out.join(MODEL_FILE))
}

fn cmd_eval(
    cfg: &RunConfig,
    model: &Option<PathBuf>,
    split: &str,
    w: &mut dyn Write,
) -> Result<()> {
    let predictor = Predictor::load(&model_path(cfg, model))?;
    let dataset = PreparedDataset::load(&cfg.out.join(DATASET_FILE))?;
    let records = if split == "train" {
        &dataset.train
    } else {
        &dataset.test
    };
    let p = &predictor.preprocess;
    let examples = to_examples(
        records,
        &predictor.provider,
        &p.stopwords,
        predictor.model.config.max_seq_len,
    )?;
    let report = score(&predictor.model, &examples, predictor.threshold)?;
    write_json(&cfg.out.join(format!("eval_{split}.json")), &report)?;
    write!(w, "{}", crate::eval::metrics_table(&report)).map_err(stdout_err)?;
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, plot: bool, w: &mut dyn Write) -> Result<()> {
    let data = load_prepared(cfg)?;
    let (train, val) = split_validation(cfg, &data.train)?;
    let splits = DataSplits {
        train,
        val,
        test: data.test,
    };
    let report = ablate(
        &cfg.model(),
        &cfg.train(),
        &AblationGrid::default(),
        &splits,
        cfg.seed,
    )?;
    write_file(&cfg.out.join("ablation.csv"), ablation_csv(&report)?)?;
    let table = ablation_table(&report);
    write_file(&cfg.out.join("ablation.txt"), &table)?;
    write_json(&cfg.out.join("ablation.json"), &report)?;
    if plot {
        write_file(&cfg.out.join("ablation.svg"), ablation_svg(&report))?;
    }
    write!(w, "{table}").map_err(stdout_err)?;
    let failed = report.rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        return Err(WetError::Internal(format!(
            "{failed} ablation cell(s) failed"
        )));
    }
    Ok(())
}

fn cmd_compare(
    cfg: &RunConfig,
    against: &Path,
    overrides: &Overrides,
    w: &mut dyn Write,
) -> Result<()> {
    let other = resolve_config(Some(against), overrides)?;
    let data = load_prepared(cfg)?;
    let all: Vec<Example> = data.train.into_iter().chain(data.test).collect();
    let cmp = compare_configs(
        (&cfg.model(), &cfg.train()),
        (&other.model(), &other.train()),
        &all,
        cfg.kfold,
        derive_seed(cfg.seed, "compare"),
    )?;
    write_json(&cfg.out.join("compare.json"), &cmp)?;
    writeln!(
        w,
        "mean difference {:.4}, t = {:.4}, df = {}, p = {:.4}",
        cmp.t_test.mean_diff, cmp.t_test.t, cmp.t_test.df, cmp.t_test.p_value
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn cmd_predict(
    cfg: &RunConfig,
    model: &Option<PathBuf>,
    output: &Option<PathBuf>,
    w: &mut dyn Write,
) -> Result<()> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| WetError::invalid("predict needs --input"))?;
    let mut predictor = Predictor::load(&model_path(cfg, model))?;
    predictor.threshold = cfg.threshold;
    let ingested = ingest(input)?;
    if !ingested.rejects.is_empty() {
        return Err(WetError::invalid(format!(
            "{} input line(s) rejected",
            ingested.rejects.len()
        )));
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "probability".into(), "label".into()];
    header.extend(
        predictor
            .model
            .branch_names()
            .iter()
            .map(|b| format!("p_{b}")),
    );
    csv.write_record(&header)
        .map_err(|e| WetError::Internal(e.to_string()))?;
    let mut positives = 0;
    for r in &ingested.records {
        let p = predictor.predict(r)?;
        let positive = predictor.is_positive(&p);
        positives += positive as usize;
        let mut row = vec![
            r.id.clone(),
            format!("{}", p.probability),
            Label::from_bool(positive).name().to_string(),
        ];
        row.extend(p.branch_probs.iter().map(|v| format!("{v}")));
        csv.write_record(&row)
            .map_err(|e| WetError::Internal(e.to_string()))?;
    }
    let bytes = csv
        .into_inner()
        .map_err(|e| WetError::Internal(e.to_string()))?;
    let dest = match output {
        Some(p) => p.clone(),
        None => {
            ensure_dir(&cfg.out)?;
            cfg.out.join("predictions.csv")
        }
    };
    write_file(&dest, bytes)?;
    writeln!(
        w,
        "{} records scored, {} positive",
        ingested.records.len(),
        positives
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn cmd_generate(
    count: usize,
    noise: usize,
    unlabelled: bool,
    output: &Path,
    seed: u64,
    w: &mut dyn Write,
) -> Result<()> {
    let mut records = synthetic_corpus(count, noise, derive_seed(seed, "synthetic"));
    if unlabelled {
        records.iter_mut().for_each(|r| r.label = None);
    }
    write_jsonl(output, &records)?;
    writeln!(w, "{} records written", records.len()).map_err(stdout_err)?;
    Ok(())
}

/// Runs a parsed command line, writing human output to `w`.
pub fn execute(cli: &Cli, w: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(cli.config.as_deref(), &cli.overrides)?;
    log::debug!("resolved config: {cfg:?}");
    match &cli.command {
        Command::Generate {
            count,
            noise,
            unlabelled,
            output,
        } => cmd_generate(*count, *noise, *unlabelled, output, cfg.seed, w),
        Command::Prepare => cmd_prepare(&cfg, w),
        Command::Train => cmd_train(&cfg, w),
        Command::Eval { model, split } => cmd_eval(&cfg, model, split, w),
        Command::Ablate { plot } => cmd_ablate(&cfg, *plot, w),
        Command::Compare { against } => cmd_compare(&cfg, against, &cli.overrides, w),
        Command::Predict { model, output } => cmd_predict(&cfg, model, output, w),
    }
}

/// Entry point for the binary. `WET_LOG` sets the log filter.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("WET_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                WetError::Validation(_) | WetError::Parse(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("wet").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_parse_anywhere() {
        let cli = parse(&[
            "train",
            "--dropout",
            "0.6",
            "--seed",
            "9",
            "--weights-mode",
            "learned",
        ]);
        assert_eq!(cli.overrides.dropout, Some(0.6));
        assert_eq!(cli.overrides.seed, Some(9));
        assert_eq!(cli.overrides.weights_mode, Some(WeightsMode::Learned));
        let cli = parse(&["--provider", "file", "prepare"]);
        assert_eq!(cli.overrides.provider, Some(ProviderKind::PrecomputedFile));
    }

    #[test]
    fn defaults_resolve_to_default_config() {
        let cfg = resolve_config(None, &Overrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn grid_guard_rejects_high_dropout_unless_disabled() {
        let o = Overrides {
            dropout: Some(0.9),
            ..Default::default()
        };
        assert!(matches!(
            resolve_config(None, &o),
            Err(WetError::Validation(_))
        ));
        let o = Overrides {
            dropout: Some(0.9),
            no_grid_guard: true,
            ..Default::default()
        };
        assert_eq!(resolve_config(None, &o).unwrap().dropout, 0.9);
    }

    #[test]
    fn unknown_subcommand_rejected() {
        assert!(Cli::try_parse_from(["wet", "serve"]).is_err());
        assert!(Cli::try_parse_from(["wet", "train", "--weights-mode", "best"]).is_err());
    }
}
