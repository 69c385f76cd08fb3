//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

mod commands;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// The inputs were well-formed but the work failed; exit code 1.
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(flag: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{flag}: {msg}"))
}

#[derive(Debug, Parser)]
#[command(name = "artic", version, about = "Articulated object generation from a single image")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory [default: $ARTIC_HOME/out, else ./artic-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice the command makes
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with per-module sections (augment, model, train, sampler,
    /// eval, retrieval, vlm, service) overriding the defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write procedurally generated objects and a manifest
    Synth(SynthArgs),
    /// Validate AOJ files and build a split manifest
    Ingest(IngestArgs),
    /// Apply seeded augmentations to the training split
    Augment(AugmentArgs),
    /// Render synthetic patch features for every manifest object
    Features(FeaturesArgs),
    /// Train the denoiser and write checkpoints and a loss log
    Train(TrainArgs),
    /// Sample abstractions from a checkpoint
    Sample(SampleArgs),
    /// Predict a connectivity graph with the heuristic stub or a VLM
    PredictGraph(PredictGraphArgs),
    /// Assemble an abstraction from a part library and export a URDF package
    Retrieve(RetrieveArgs),
    /// Compare generated and ground-truth objects
    Evaluate(EvaluateArgs),
    /// Export one layer of image cross-attention as a CSV heat grid
    Attn(AttnArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of objects
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    /// Categories to cycle through (all when omitted)
    #[arg(long = "category")]
    pub categories: Vec<String>,
    /// Also write box-shaped part meshes next to each object
    #[arg(long)]
    pub meshes: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// AOJ files or directories of them
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Fraction of objects assigned to the training split
    #[arg(long, default_value_t = 0.9)]
    pub train_ratio: f64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cameras sampled per object
    #[arg(long, default_value_t = 1)]
    pub views: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest; without one, synthetic cabinets are used
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Number of synthetic cabinets when no manifest is given
    #[arg(long, default_value_t = 50)]
    pub synthetic: usize,
    /// Overrides the configured epoch count
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Write an extra checkpoint every this many epochs
    #[arg(long)]
    pub save_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeatureSource {
    /// Patch feature file
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// AOJ object; supplies synthetic features, graph and category
    #[arg(long)]
    pub object: Option<PathBuf>,
    /// Camera azimuth in degrees for synthetic features
    #[arg(long, default_value_t = 0.0)]
    pub azimuth: f64,
    /// Camera elevation in degrees for synthetic features
    #[arg(long, default_value_t = 0.0)]
    pub elevation: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub source: FeatureSource,
    /// Connectivity graph JSON; defaults to the object's graph, then the stub
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub num_samples: usize,
    /// Guidance weight [default: sampler.omega from the config]
    #[arg(long)]
    pub omega: Option<f64>,
    /// JSON list of pinned attribute rows
    #[arg(long)]
    pub pins: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictGraphArgs {
    #[command(flatten)]
    pub source: FeatureSource,
    /// Image path or URL; sends it to the configured VLM
    #[arg(long)]
    pub image: Option<String>,
    #[arg(long)]
    pub vlm_endpoint: Option<String>,
    #[arg(long)]
    pub vlm_model: Option<String>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Abstraction to assemble
    #[arg(long)]
    pub object: PathBuf,
    /// Directory of library objects with meshes
    #[arg(long)]
    pub library: PathBuf,
    /// Package directory name under the output directory
    #[arg(long)]
    pub name: Option<String>,
    /// Match meshes per part instead of reusing one per label
    #[arg(long)]
    pub no_reuse: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generated objects, paired in order with --gt
    #[arg(long)]
    pub gen: Vec<PathBuf>,
    /// Ground-truth objects
    #[arg(long)]
    pub gt: Vec<PathBuf>,
    /// CSV of `gen,gt` path pairs
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub source: FeatureSource,
    /// Diffusion step to noise the object to [default: half the schedule]
    #[arg(long)]
    pub t: Option<usize>,
    /// Transformer layer [default: the last]
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// AOJ files registered for evaluation at startup
    #[arg(long)]
    pub objects: Option<PathBuf>,
    /// Where exported packages are stored [default: <out>/assets]
    #[arg(long)]
    pub assets: Option<PathBuf>,
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    /// Required token (also read from ARTIC_TOKEN)
    #[arg(long)]
    pub token: Option<String>,
}

const SECTIONS: [&str; 8] = ["augment", "model", "train", "sampler", "eval", "retrieval", "vlm", "service"];

/// The parsed `--config` file.
pub struct ConfigFile {
    root: serde_json::Map<String, Value>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile { root: Default::default() });
        };
        let text = std::fs::read_to_string(path).map_err(|e| usage("--config", format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| usage("--config", e))?;
        let Value::Object(root) = v else {
            return Err(usage("--config", "expected a JSON object"));
        };
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(usage("--config", format!("unknown section {k:?}")));
        }
        Ok(ConfigFile { root })
    }

    pub fn has_key(&self, section: &str, key: &str) -> bool {
        self.root.get(section).and_then(|v| v.get(key)).is_some()
    }

    /// `base` with the keys of one section laid over it.
    pub fn section<T: Serialize + DeserializeOwned>(&self, name: &str, base: T) -> CliResult<T> {
        let Some(over) = self.root.get(name) else {
            return Ok(base);
        };
        let mut v = serde_json::to_value(&base).map_err(|e| CliError::Domain(e.into()))?;
        merge(&mut v, over);
        serde_json::from_value(v).map_err(|e| usage("--config", format!("section {name}: {e}")))
    }
}

fn merge(into: &mut Value, over: &Value) {
    match (into, over) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    pub config: ConfigFile,
}

impl Ctx {
    pub fn out_dir(&self) -> CliResult<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| usage("--out", format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    pub fn subdir(&self, rel: impl AsRef<Path>) -> CliResult<PathBuf> {
        let p = self.out_dir()?.join(rel);
        std::fs::create_dir_all(&p)?;
        Ok(p)
    }

    pub fn out_path(&self, rel: impl AsRef<Path>) -> CliResult<PathBuf> {
        let p = self.out_dir()?.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }
}

fn default_out() -> PathBuf {
    match std::env::var_os("ARTIC_HOME").filter(|v| !v.is_empty()) {
        Some(home) => PathBuf::from(home).join("out"),
        None => PathBuf::from("artic-out"),
    }
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        out: cli.common.out.clone().unwrap_or_else(default_out),
        seed: cli.common.seed,
        config: ConfigFile::load(cli.common.config.as_deref())?,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Augment(a) => commands::augment(&ctx, a),
        Command::Features(a) => commands::features(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Sample(a) => commands::sample(&ctx, a),
        Command::PredictGraph(a) => commands::predict_graph(&ctx, a),
        Command::Retrieve(a) => commands::retrieve(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Attn(a) => commands::attn(&ctx, a),
        Command::Serve(a) => commands::serve(&ctx, a),
    }
}
