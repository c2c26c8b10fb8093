//! The `binkit` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classical::{self, Method};
use crate::error::{Error, Result};
use crate::evaluation::{
    default_taus, domain_matrix, error_heatmap, evaluate_method, evaluate_model, threshold_sweep, CorpusScore,
};
use crate::imagery::{load_gray, save_mask};
use crate::sae::{binarize_document, read_checkpoint, write_checkpoint, Kind, Model, TopologySpec, DEFAULT_TAU};
use crate::training::{generate_synthetic_corpus, train, CorpusSpec, DatasetManifest, Degradation, Split, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "binkit", version, about = "Document image binarization")]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "BINKIT_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Binarize one image with a classical method or a trained model.
    Binarize(BinarizeArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Train a selectional auto-encoder.
    Train(TrainArgs),
    /// F-measure of a model or classical method on a corpus split.
    Eval(EvalArgs),
    /// F-measure of a model across thresholds.
    Sweep(SweepArgs),
    /// Positional error heat map over the inference window.
    Heatmap(HeatmapArgs),
    /// Cross-corpus evaluation of several trained models.
    Matrix(MatrixArgs),
    /// Train and score every window / filter / kernel combination.
    Gridsearch(GridArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Otsu,
    Niblack,
    Sauvola,
    Wolf,
    Sae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Cae,
    Swwae,
    Rednet,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Kind {
        match k {
            KindArg::Cae => Kind::Cae,
            KindArg::Swwae => Kind::Swwae,
            KindArg::Rednet => Kind::RedNet,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 64 window, 16 filters, 5×5 kernels.
    Small,
    /// 256 window, 64 filters, 5×5 kernels.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Parameters of the classical methods.
#[derive(Debug, Args)]
pub struct ClassicalArgs {
    /// Local window side (odd).
    #[arg(long, default_value_t = classical::DEFAULT_WINDOW)]
    pub window: usize,
    /// k of Niblack / Sauvola / Wolf (defaults -0.2 / 0.5 / 0.5).
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Sauvola's dynamic range R.
    #[arg(long, default_value_t = classical::DEFAULT_SAUVOLA_R)]
    pub r: f64,
}

impl ClassicalArgs {
    fn method(&self, name: MethodName) -> Result<Method> {
        Ok(match name {
            MethodName::Otsu => Method::Otsu,
            MethodName::Niblack => Method::Niblack {
                window: self.window,
                k: self.k.unwrap_or(classical::DEFAULT_NIBLACK_K),
            },
            MethodName::Sauvola => Method::Sauvola {
                window: self.window,
                k: self.k.unwrap_or(classical::DEFAULT_SAUVOLA_K),
                r: self.r,
            },
            MethodName::Wolf => Method::Wolf {
                window: self.window,
                k: self.k.unwrap_or(classical::DEFAULT_WOLF_K),
            },
            MethodName::Sae => return Err(Error::invalid("--method sae requires --model")),
        })
    }
}

#[derive(Debug, Args)]
pub struct BinarizeArgs {
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    /// Checkpoint of a trained model (implies --method sae).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f32,
    #[command(flatten)]
    pub classical: ClassicalArgs,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub train: usize,
    #[arg(long, default_value_t = 4)]
    pub val: usize,
    #[arg(long, default_value_t = 6)]
    pub test: usize,
    /// Page side in pixels.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Gaussian noise standard deviation (unit intensity scale).
    #[arg(long)]
    pub noise: Option<f64>,
    /// No degradations at all: flat paper and ink.
    #[arg(long)]
    pub clean: bool,
}

#[derive(Debug, Args)]
pub struct ModelShapeArgs {
    #[arg(long, value_enum, default_value_t = Preset::Paper)]
    pub preset: Preset,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
}

impl ModelShapeArgs {
    fn spec(&self) -> Result<TopologySpec> {
        let base = match self.preset {
            Preset::Small => TopologySpec::small(),
            Preset::Paper => TopologySpec::reference(),
        };
        let window = self.window.unwrap_or(base.window_side);
        TopologySpec::with_depth(
            self.kind.map(Kind::from).unwrap_or(base.kind),
            window,
            self.filters.unwrap_or(base.filters),
            self.kernel.unwrap_or(base.kernel),
            self.depth.unwrap_or_else(|| TopologySpec::default_depth(window)),
        )
    }
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Augmented copies per training window.
    #[arg(long, default_value_t = 3)]
    pub augment: usize,
}

impl OptimArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.epochs,
            patience: self.patience.min(self.epochs),
            batch_size: self.batch,
            learning_rate: self.lr,
            augment_factor: self.augment,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory holding train.tsv / val.tsv.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss / validation F-m as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub shape: ModelShapeArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f32,
    #[command(flatten)]
    pub classical: ClassicalArgs,
    /// Per-image scores as CSV.
    #[arg(long)]
    pub per_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Comma-separated thresholds (default 0.1,…,0.9).
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<f32>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f32,
    /// Output prefix; writes <prefix>_errors.pgm, _fp.pgm, _fn.pgm, _gt.pgm and <prefix>.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Trained model as NAME=CHECKPOINT; repeatable.
    #[arg(long = "model", required = true, value_parser = parse_named)]
    pub models: Vec<(String, PathBuf)>,
    /// Corpus as NAME=DIR; repeatable. Its test split is used.
    #[arg(long = "corpus", required = true, value_parser = parse_named)]
    pub corpora: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [KindArg::Cae, KindArg::Swwae, KindArg::Rednet])]
    pub kinds: Vec<KindArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 384])]
    pub windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64, 96, 128])]
    pub filters: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7])]
    pub kernels: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f32,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got '{s}'")),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("binkit: error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        // Only the first call can configure the global pool; later ones are no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let seed = cli.seed;
    match cli.command {
        Command::Binarize(a) => binarize_cmd(a),
        Command::Synth(a) => synth_cmd(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Heatmap(a) => heatmap_cmd(a),
        Command::Matrix(a) => matrix_cmd(a),
        Command::Gridsearch(a) => grid_cmd(a, seed),
    }
}

fn binarize_cmd(a: BinarizeArgs) -> Result<()> {
    enum Binarizer {
        Sae(Model),
        Classical(Method),
    }
    let binarizer = match (a.method, &a.model) {
        (Some(MethodName::Sae) | None, Some(ckpt)) => Binarizer::Sae(read_checkpoint(ckpt)?),
        (Some(m), Some(_)) => {
            return Err(Error::invalid(format!(
                "--model cannot be combined with --method {m:?}"
            )))
        }
        (Some(m), None) => Binarizer::Classical(a.classical.method(m)?),
        (None, None) => return Err(Error::invalid("give --method or --model")),
    };
    let img = load_gray(&a.input)?;
    let mask = match binarizer {
        Binarizer::Sae(model) => binarize_document(&model, &img, a.tau)?,
        Binarizer::Classical(method) => method.binarize(&img)?,
    };
    save_mask(&mask, &a.output)
}

fn synth_cmd(a: SynthArgs, seed: u64) -> Result<()> {
    let mut spec = CorpusSpec::new(seed, a.train, a.val, a.test, a.size);
    if a.clean {
        spec.degradation = Degradation::clean();
    }
    if let Some(noise) = a.noise {
        spec.degradation.noise_sigma = noise;
    }
    let manifest = generate_synthetic_corpus(&spec, &a.out)?;
    println!(
        "wrote {} pages to {} (train {}, val {}, test {})",
        manifest.records.len(),
        a.out.display(),
        a.train,
        a.val,
        a.test
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<()> {
    let manifest = DatasetManifest::load_dir(&a.corpus)?;
    let spec = a.shape.spec()?;
    let config = a.optim.config(seed);
    let model = Model::build(spec, seed)?;
    let (model, history) = train(model, &manifest, &config)?;
    write_checkpoint(&model, &a.out)?;
    if let Some(path) = &a.history {
        write_text(path, &history.to_csv())?;
    }
    println!(
        "best epoch {} of {} (validation F-m {:.4}, stop: {})",
        history.best_epoch,
        history.epochs.len(),
        history.best_validation_fm(),
        history.stop_reason
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let pages = DatasetManifest::load_dir(&a.corpus)?.load_pages(a.split.into())?;
    let score: CorpusScore = match (a.method, &a.model) {
        (Some(MethodName::Sae) | None, Some(ckpt)) => evaluate_model(&read_checkpoint(ckpt)?, &pages, a.tau)?,
        (Some(m), None) => evaluate_method(&a.classical.method(m)?, &pages)?,
        (Some(_), Some(_)) => return Err(Error::invalid("--model cannot be combined with a classical --method")),
        (None, None) => return Err(Error::invalid("give --method or --model")),
    };
    let total = score.total();
    println!(
        "micro_fm {:.6} macro_fm {:.6} tp {} fp {} fn {} pages {}",
        score.micro_f_measure(),
        score.macro_f_measure(),
        total.tp,
        total.fp,
        total.fn_,
        score.per_image.len()
    );
    if let Some(path) = &a.per_image {
        write_text(path, &score.to_csv())?;
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let pages = DatasetManifest::load_dir(&a.corpus)?.load_pages(a.split.into())?;
    let taus = if a.taus.is_empty() { default_taus() } else { a.taus };
    let table = threshold_sweep(&model, &pages, &taus)?;
    emit(a.out.as_deref(), &table.to_csv())?;
    eprintln!("spread {:.6}", table.spread());
    Ok(())
}

fn heatmap_cmd(a: HeatmapArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let pages = DatasetManifest::load_dir(&a.corpus)?.load_pages(a.split.into())?;
    let map = error_heatmap(&model, &pages, a.tau)?;
    map.write(&a.out)?;
    println!("windows {} errors {}", map.windows, map.total_errors());
    Ok(())
}

fn matrix_cmd(a: MatrixArgs) -> Result<()> {
    let models = a
        .models
        .iter()
        .map(|(name, path)| Ok((name.clone(), read_checkpoint(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let tests = a
        .corpora
        .iter()
        .map(|(name, dir)| Ok((name.clone(), DatasetManifest::load_dir(dir)?.load_pages(Split::Test)?)))
        .collect::<Result<Vec<_>>>()?;
    let matrix = domain_matrix(&models, &tests, a.tau)?;
    emit(a.out.as_deref(), &matrix.to_csv())
}

fn grid_cmd(a: GridArgs, seed: u64) -> Result<()> {
    let manifest = DatasetManifest::load_dir(&a.corpus)?;
    let test = manifest.load_pages(Split::Test)?;
    let config = a.optim.config(seed);
    let mut csv = String::from("kind,window,filters,kernel,depth,val_fm,test_fm,epochs\n");
    for &kind in &a.kinds {
        for &window in &a.windows {
            for &filters in &a.filters {
                for &kernel in &a.kernels {
                    let spec = TopologySpec::new(kind.into(), window, filters, kernel)?;
                    let (model, history) = train(Model::build(spec, seed)?, &manifest, &config)?;
                    let test_fm = if test.is_empty() {
                        f64::NAN
                    } else {
                        evaluate_model(&model, &test, a.tau)?.micro_f_measure()
                    };
                    let line = format!(
                        "{},{},{},{},{},{:.6},{:.6},{}\n",
                        spec.kind,
                        window,
                        filters,
                        kernel,
                        spec.depth,
                        history.best_validation_fm(),
                        test_fm,
                        history.epochs.len()
                    );
                    eprint!("{line}");
                    csv.push_str(&line);
                }
            }
        }
    }
    emit(a.out.as_deref(), &csv)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
