//! `sim2real` command-line front end.
//!
//! Exit codes: 0 on success, 1 on a fatal error, 2 when `run` finished but
//! some images failed.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use sim2real_core::report::{ResultLabel, Variant};

mod metrics;
mod pipeline;
mod report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sim2real",
    about = "Photorealism enhancement pipeline and sim2real gap metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the enhancement pipeline over a dataset.
    Run(RunArgs),
    /// Embed a dataset's images through a remote embedder.
    Embed(EmbedArgs),
    /// CMMD between two embedding files.
    Cmmd(CmmdArgs),
    /// Mean IoU of segmentation predictions.
    EvalSeg(EvalSegArgs),
    /// mAP of detections.
    EvalDet(EvalDetArgs),
    /// Comparison table across pipeline variants.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset manifest; overrides `dataset` in the config.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Cache directory; overrides `cache_dir` in the config.
    #[arg(long, env = "SIM2REAL_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Replaces the prompt of every diffusion phase with this file's contents.
    #[arg(long)]
    pub prompt_file: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Maximum attempts per request.
    #[arg(long)]
    pub retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedder base URL.
    #[arg(long)]
    pub endpoint: String,
    /// Output embedding file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 300)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Biased,
    Unbiased,
}

#[derive(Debug, Args)]
pub struct CmmdArgs {
    /// Reference (real) embeddings.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Generated (synthetic or enhanced) embeddings.
    #[arg(long = "gen")]
    pub generated: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Biased)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 1024)]
    pub block: usize,
    /// Use rows as stored instead of scaling them to unit norm.
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Ground-truth label maps `<id>.png` in source categories.
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Predicted label maps `<id>.png` in target categories.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Category mapping JSON, or `vkitti2-cityscapes` for the bundled one.
    /// Defaults to the identity over the manifest's categories.
    #[arg(long)]
    pub mapping: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Ground-truth boxes, one `image_id class x0 y0 x1 y1` per line.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detections, one `image_id class x0 y0 x1 y1 confidence` per line.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric result files written by `cmmd`, `eval-seg` or `eval-det`.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Run manifests to cite in the report metadata.
    #[arg(long = "run")]
    pub runs: Vec<PathBuf>,
    /// Format printed on stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Also write the text table here.
    #[arg(long)]
    pub text_out: Option<PathBuf>,
}

/// Where a metric result goes and which report cell it fills.
#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pipeline variant the evaluated data came from.
    #[arg(long, requires_all = ["dataset", "domain"])]
    pub variant: Option<Variant>,
    /// Source dataset name for the report column.
    #[arg(long, requires_all = ["variant", "domain"])]
    pub dataset: Option<String>,
    /// Target domain for the report column.
    #[arg(long, requires_all = ["variant", "dataset"])]
    pub domain: Option<String>,
}

impl OutputArgs {
    pub fn label(&self) -> Option<ResultLabel> {
        Some(ResultLabel {
            variant: self.variant?,
            dataset: self.dataset.clone()?,
            domain: self.domain.clone()?,
        })
    }

    pub fn emit(&self, json: &serde_json::Value) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(json)? + "\n";
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

pub fn version_string() -> String {
    format!(
        "{} (output schema v{})",
        sim2real_core::VERSION,
        sim2real_core::SCHEMA_VERSION
    )
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let version: &'static str = Box::leak(version_string().into_boxed_str());
    let matches = match Cli::command().version(version).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_FATAL;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(args) => pipeline::run(args),
        Command::Embed(args) => pipeline::embed(args),
        Command::Cmmd(args) => metrics::cmmd(args),
        Command::EvalSeg(args) => metrics::eval_seg(args),
        Command::EvalDet(args) => metrics::eval_det(args),
        Command::Report(args) => report::report(args),
    }
}
