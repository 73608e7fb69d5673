//! Command-line front end.

mod record;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

pub use record::{
    read_jsonl, read_records, to_jsonl, write_atomic, AnnotationRecord, Pipeline, SCHEMA_VERSION,
};

use crate::analyze;
use crate::corpus::{load_multiwoz, load_transcript, Corpus, Split};
use crate::error::{Error, Result};
use crate::filter::FilterDictionaries;
use crate::lexicon::LexiconConfig;
use crate::normalize::{NormalizationConfig, StemmerKind};
use crate::task::{self, ExtractionSample, HistoryLen, Prediction, Roles, SampleOptions};

#[derive(Debug, Parser)]
#[command(
    name = "entrain",
    version,
    about = "Lexical entrainment annotation and analysis for task-oriented dialogues"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate dialogues and write one JSON record per dialogue.
    Annotate(AnnotateArgs),
    /// Corpus statistics over annotation records.
    Stats(StatsArgs),
    /// Compare mean agent entrainment of system corpora against a reference.
    Compare(CompareArgs),
    /// Build extraction samples from annotation records.
    Task(TaskArgs),
    /// Score span predictions against extraction samples.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// `.json` files are read as MultiWOZ, everything else as transcripts.
    Auto,
    Multiwoz,
    Transcript,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// MultiWOZ data file or one or more transcript files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// MultiWOZ split: train, valid, test or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// TOML normalization config; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for punctuation masks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Width of punctuation masks in bits (16 to 64).
    #[arg(long)]
    pub mask_bits: Option<u32>,
    /// porter or none.
    #[arg(long)]
    pub stemmer: Option<String>,
    /// Directory with dictionary files overriding the bundled ones.
    #[arg(long, env = "ENTRAIN_DICTS")]
    pub dicts: Option<PathBuf>,
    /// Longest n-gram considered.
    #[arg(long, default_value_t = 20)]
    pub max_ngram: usize,
}

impl PipelineArgs {
    pub fn build(&self) -> Result<Pipeline> {
        let mut normalization = match &self.config {
            Some(p) => NormalizationConfig::from_file(p)?,
            None => NormalizationConfig::default(),
        };
        if let Some(seed) = self.seed {
            normalization.rng_seed = seed;
        }
        if let Some(bits) = self.mask_bits {
            normalization.mask_bits = bits;
        }
        if let Some(s) = &self.stemmer {
            normalization.stemmer = s.parse::<StemmerKind>()?;
        }
        normalization.validate()?;
        if self.max_ngram == 0 {
            return Err(Error::Config("max-ngram must be at least 1".into()));
        }
        let dictionaries = match &self.dicts {
            Some(dir) => FilterDictionaries::from_dir(dir, &normalization)?,
            None => FilterDictionaries::bundled(&normalization),
        };
        Ok(Pipeline {
            normalization,
            lexicon: LexiconConfig {
                max_ngram: self.max_ngram,
            },
            dictionaries,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub annotations: PathBuf,
    /// One-way ANOVA of ELS across domains.
    #[arg(long)]
    pub anova: bool,
    /// Overlap between dialogue-act and expression vocabularies.
    #[arg(long)]
    pub overlap: bool,
    /// ENTR_agent by dialogue length, smoothed with this Gaussian sigma.
    #[arg(long, visible_alias = "sigma", value_name = "SIGMA")]
    pub curve: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: TableFormat,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference (human) annotations.
    pub reference: PathBuf,
    /// System annotations to test against the reference.
    #[arg(required = true)]
    pub systems: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    pub annotations: PathBuf,
    /// Prior turns given as context: a positive number or `full`.
    #[arg(long, default_value = "full")]
    pub history: String,
    /// Target utterances: agent, user or both.
    #[arg(long, default_value = "agent")]
    pub roles: String,
    /// Only emit targets that contain at least one gold instance.
    #[arg(long)]
    pub with_gold: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write predictions of the reference within-window predictor.
    #[arg(long, value_name = "PATH")]
    pub oracle_predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub samples: PathBuf,
    pub predictions: PathBuf,
}

fn emit(output: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<()> {
    match output {
        Some(p) => write_atomic(p, bytes),
        None => out.write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

fn load_inputs(args: &AnnotateArgs) -> Result<Corpus> {
    let split: Split = args.split.parse()?;
    let is_multiwoz = |p: &Path| match args.format {
        InputFormat::Multiwoz => true,
        InputFormat::Transcript => false,
        InputFormat::Auto => p
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json")),
    };
    if args.inputs.iter().any(|p| is_multiwoz(p)) {
        if args.inputs.len() != 1 {
            return Err(Error::Config(
                "a MultiWOZ file must be the only input".into(),
            ));
        }
        return load_multiwoz(&args.inputs[0], split);
    }
    let dialogues = args
        .inputs
        .iter()
        .map(|p| load_transcript(p))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(Split::Unsplit, dialogues)
}

/// Annotates every dialogue in parallel, keeping input order.
pub fn annotate_corpus(corpus: Corpus, pipeline: &Pipeline) -> Result<Vec<AnnotationRecord>> {
    corpus
        .dialogues
        .into_par_iter()
        .map(|d| pipeline.annotate(d))
        .collect()
}

fn cmd_annotate(args: &AnnotateArgs, out: &mut dyn Write) -> Result<()> {
    let pipeline = args.pipeline.build()?;
    let corpus = load_inputs(args)?;
    let records = annotate_corpus(corpus, &pipeline)?;
    emit(args.output.as_deref(), &to_jsonl(&records)?, out)
}

#[derive(Debug, Serialize)]
struct StatsReport {
    els_distribution: analyze::ElsDistribution,
    summaries: std::collections::BTreeMap<String, analyze::SummaryStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    anova: Option<analyze::AnovaResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap: Option<analyze::ActOverlap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<analyze::CurveRow>>,
}

fn stats_csv(r: &StatsReport) -> String {
    let mut s = String::from("measure,count,mean,std,min,max,median,mode\n");
    for (name, m) in &r.summaries {
        s += &format!(
            "{name},{},{},{},{},{},{},{}\n",
            m.count, m.mean, m.std, m.min, m.max, m.median, m.mode
        );
    }
    s += "\nels,dialogues\n";
    for (els, n) in &r.els_distribution.histogram {
        s += &format!("{els},{n}\n");
    }
    if let Some(a) = &r.anova {
        s += &format!("\nf_statistic,p_value\n{},{}\n", a.f_statistic, a.p_value);
    }
    if let Some(o) = &r.overlap {
        s += &format!(
            "\nact_tokens,expression_tokens,shared\n{},{},{}\n",
            o.act_tokens, o.expression_tokens, o.shared
        );
    }
    if let Some(rows) = &r.curve {
        s += "\nturn_count,dialogues,raw_mean,smoothed_mean,std\n";
        for c in rows {
            s += &format!(
                "{},{},{},{},{}\n",
                c.turn_count, c.dialogues, c.raw_mean, c.smoothed_mean, c.std
            );
        }
    }
    s
}

fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_records(&args.annotations)?;
    let report = StatsReport {
        els_distribution: analyze::els_distribution(&records)?,
        summaries: analyze::measure_summaries(&records)?,
        anova: args
            .anova
            .then(|| analyze::anova_domains(&records))
            .transpose()
            .map_err(|e| Error::Analysis(format!("--anova: {e}")))?,
        overlap: args
            .overlap
            .then(|| analyze::act_overlap(&records, &NormalizationConfig::default()))
            .transpose()?,
        curve: args
            .curve
            .map(|s| analyze::entr_by_turncount(&records, s))
            .transpose()?,
    };
    let bytes = match args.format {
        TableFormat::Json => json_line(&report)?,
        TableFormat::Csv => stats_csv(&report).into_bytes(),
    };
    emit(args.output.as_deref(), &bytes, out)
}

fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let reference = read_records(&args.reference)?;
    let systems = args
        .systems
        .iter()
        .map(|p| Ok((p.display().to_string(), read_records(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let ref_name = args.reference.display().to_string();
    let borrowed: Vec<(&str, &[AnnotationRecord])> = systems
        .iter()
        .map(|(n, r)| (n.as_str(), r.as_slice()))
        .collect();
    let cmp = analyze::compare((&ref_name, &reference), &borrowed)?;
    for w in &cmp.warnings {
        eprintln!("warning: {w}");
    }
    let bytes = if args.json {
        json_line(&cmp)?
    } else {
        let mut s = String::from("corpus\tdialogues\tmean_entr_agent\tt\tdf\tp_value\n");
        for r in &cmp.rows {
            let (t, df, p) = match r.test {
                Some(t) => (
                    format!("{:.4}", t.t),
                    format!("{:.2}", t.df),
                    format!("{:.3e}", t.p_value),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            s += &format!(
                "{}\t{}\t{:.3}\t{t}\t{df}\t{p}\n",
                r.name, r.dialogues, r.mean_entr_agent
            );
        }
        s.into_bytes()
    };
    emit(None, &bytes, out)
}

fn cmd_task(args: &TaskArgs, out: &mut dyn Write) -> Result<()> {
    let opts = SampleOptions {
        history: args.history.parse::<HistoryLen>()?,
        roles: args.roles.parse::<Roles>()?,
        with_gold: args.with_gold,
    };
    let records = read_records(&args.annotations)?;
    let samples = task::build_samples(&records, &opts);
    if let Some(p) = &args.oracle_predictions {
        write_atomic(p, &to_jsonl(&task::oracle_within_window(&samples))?)?;
    }
    emit(args.output.as_deref(), &to_jsonl(&samples)?, out)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    recall: f64,
    precision: f64,
    f1: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let samples: Vec<ExtractionSample> = read_jsonl(&args.samples)?;
    let predictions: Vec<Prediction> = read_jsonl(&args.predictions)?;
    let r = task::evaluate(&predictions, &samples)?;
    let f = |x: num_rational::Rational64| *x.numer() as f64 / *x.denom() as f64;
    let report = EvalReport {
        recall: f(r.recall),
        precision: f(r.precision),
        f1: f(r.f1),
        tp: r.tp,
        fp: r.fp,
        fn_: r.fn_,
    };
    emit(None, &json_line(&report)?, out)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Annotate(a) => cmd_annotate(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Task(a) => cmd_task(a, out),
        Command::Eval(a) => cmd_eval(a, out),
    }
}

/// Process exit code for a command outcome.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_internal() => 2,
        Err(_) => 1,
    }
}
