//! Command-line front end: `synth`, `fit`, `eval`, `crossval`, `simulate`.
//!
//! Exit codes: 0 success, 2 usage, 3 data or contract error, 4 numeric failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dsp::{BandSpec, Epoch, SSVEP_ORDER, SSVEP_WIDTH_HZ};
use crate::error::{Error, Result};
use crate::features::{stack_subjects, FeatureRecipe, Modality, Preprocess, Shrinkage, SsvepBank};
use crate::io::synth::{
    generate_mi, generate_p300, generate_ssvep, MiSpec, P300Spec, P300Subject, SsvepSpec, SubjectShape,
    DEFAULT_P300_SNR,
};
use crate::io::{read_model, write_atomic, write_model, EpochFile};
use crate::mdm::{auc, MdmModel};
use crate::session::{compare_modes, random_levels, session_slope, write_paired_csv, write_session_csv};
use crate::session::{LevelResult, PairedSession, SyntheticSource, DEFAULT_ITEMS, DEFAULT_MAX_REPETITIONS};
use crate::spd::MeanConfig;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Sampling rate ERP data is decimated to by default.
pub const ERP_RATE_HZ: f64 = 128.0;

#[derive(Debug, Parser)]
#[command(name = "riemann-bci", version, about = "Riemannian minimum-distance-to-mean EEG classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic epoch file.
    Synth(SynthArgs),
    /// Fit an MDM model on a labelled epoch file.
    Fit(FitArgs),
    /// Evaluate a model on an epoch file.
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Replay synthetic game sessions in adaptive and non-adaptive mode.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub modality: Modality,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trials per class (targets for ERP modalities).
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Non-target trials for ERP modalities; defaults to 5 x `--trials`.
    #[arg(long)]
    pub non_targets: Option<usize>,
    /// Motor-imagery classes.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    /// Motor-imagery sampling rate.
    #[arg(long, default_value_t = 128.0)]
    pub fs: f64,
    #[arg(long, default_value_t = DEFAULT_P300_SNR)]
    pub snr: f64,
    /// SSVEP segment length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// SSVEP background noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Subjects stacked per multi-user trial.
    #[arg(long, default_value_t = 2)]
    pub subjects: usize,
}

/// Feature recipe and mean settings shared by `fit` and `crossval`.
#[derive(Debug, Args)]
pub struct RecipeArgs {
    /// Defaults to the modality recorded in the input file.
    #[arg(long)]
    pub modality: Option<Modality>,
    /// Disables the default band-pass and decimation.
    #[arg(long, conflicts_with_all = ["band_low", "band_high", "filter_order", "causal"])]
    pub no_filter: bool,
    #[arg(long)]
    pub band_low: Option<f64>,
    #[arg(long)]
    pub band_high: Option<f64>,
    #[arg(long)]
    pub filter_order: Option<usize>,
    /// Single forward pass instead of zero-phase filtering.
    #[arg(long)]
    pub causal: bool,
    /// Target sampling rate after filtering (ERP default: 128 Hz when faster).
    #[arg(long)]
    pub decimate: Option<f64>,
    /// `auto` or a fixed coefficient in [0, 1].
    #[arg(long, default_value = "auto")]
    pub shrinkage: Shrinkage,
    /// Karcher residual tolerance (default 1e-8 x dimension).
    #[arg(long)]
    pub mean_tol: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub mean_max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub target_class: u32,
    /// Subjects per multi-user trial; inferred from `s<k>:` channel prefixes.
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [12.0, 15.0, 20.0])]
    pub ssvep_freqs: Vec<f64>,
    #[arg(long, default_value_t = SSVEP_WIDTH_HZ)]
    pub ssvep_width: f64,
    #[arg(long, default_value_t = SSVEP_ORDER)]
    pub ssvep_order: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub recipe: RecipeArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub recipe: RecipeArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Paired per-level table.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-repetition table for both modes.
    #[arg(long)]
    pub detail_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    #[arg(long, default_value_t = 12)]
    pub levels: usize,
    #[arg(long, default_value_t = DEFAULT_ITEMS)]
    pub items: usize,
    #[arg(long, alias = "cap", default_value_t = DEFAULT_MAX_REPETITIONS)]
    pub max_repetitions: usize,
    #[arg(long, default_value_t = DEFAULT_P300_SNR)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generic model for adaptive mode; by default one is fitted on a
    /// different synthetic subject.
    #[arg(long)]
    pub generic: Option<PathBuf>,
    /// P300 latency of the default generic model's subject, in seconds.
    #[arg(long, default_value_t = 0.45)]
    pub generic_latency: f64,
    /// Target trials used to calibrate the non-adaptive model (5x non-targets).
    #[arg(long, default_value_t = 30)]
    pub train_targets: usize,
    #[arg(long, default_value_t = 60)]
    pub mean_max_iter: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_DATA
            }
        }
    }
}

/// Runs a parsed command and returns the human-readable summary.
pub fn execute(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Crossval(a) => cmd_crossval(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Independent seed for `(stream, index)` derived from a user seed.
fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

fn erp_subjects(a: &SynthArgs, n: usize) -> Result<Vec<Vec<Epoch>>> {
    let non_targets = a.non_targets.unwrap_or(5 * a.trials);
    (0..n as u64)
        .map(|k| {
            let subject = P300Subject::generate(SubjectShape::default(), sub_seed(a.seed, 1, k))?;
            let spec = P300Spec {
                subject,
                snr: a.snr,
                n_targets: a.trials,
                n_non_targets: non_targets,
                seed: sub_seed(a.seed, 2, k),
            };
            Ok(generate_p300(&spec)?.0)
        })
        .collect()
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let epochs = match a.modality {
        Modality::Mi => {
            let mut spec = MiSpec::diagonal(a.channels, a.classes, a.samples, a.trials, a.seed);
            spec.fs = a.fs;
            generate_mi(&spec)?
        }
        Modality::P300 | Modality::ErpMulti => erp_subjects(a, 1)?.remove(0),
        Modality::MuP300 => {
            if a.subjects == 0 {
                return Err(Error::contract("--subjects must be >= 1"));
            }
            let per_subject = erp_subjects(a, a.subjects)?;
            (0..per_subject[0].len())
                .map(|i| {
                    let trial: Vec<Epoch> = per_subject.iter().map(|s| s[i].clone()).collect();
                    stack_subjects(&trial)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Modality::Ssvep => {
            let mut spec = SsvepSpec::standard(a.duration, a.trials, a.seed);
            if let Some(noise) = a.noise {
                spec.noise_std = noise;
            }
            generate_ssvep(&spec)?
        }
    };
    EpochFile::new(epochs.clone(), Some(a.modality)).write(&a.out)?;
    let e = &epochs[..];
    let (n, t, fs) = e.first().map_or((0, 0, 0.0), |x| (x.n_channels(), x.n_samples(), x.fs()));
    Ok(format!(
        "synth {}: {} trials, {n} channels x {t} samples at {fs} Hz, seed {} -> {}\n",
        a.modality,
        e.len(),
        a.seed,
        a.out.display()
    ))
}

fn read_input(path: &Path) -> Result<EpochFile> {
    EpochFile::read(path)
}

fn labelled(epochs: Vec<Epoch>) -> Vec<Epoch> {
    epochs.into_iter().filter(|e| e.label().is_some()).collect()
}

fn infer_subjects(e: &Epoch) -> Option<usize> {
    let prefixes: BTreeSet<&str> = e
        .channels()
        .iter()
        .map(|c| c.split_once(':').map(|(p, _)| p))
        .collect::<Option<_>>()?;
    (prefixes.len() > 1 || prefixes.iter().all(|p| p.starts_with('s'))).then_some(prefixes.len())
}

impl RecipeArgs {
    fn modality(&self, file: Option<Modality>) -> Result<Modality> {
        self.modality
            .or(file)
            .ok_or_else(|| Error::contract("modality not given and not recorded in the input file"))
    }

    fn mean_config(&self) -> Result<MeanConfig> {
        if let Some(tol) = self.mean_tol {
            if !(tol > 0.0) {
                return Err(Error::contract(format!("--mean-tol must be > 0, got {tol}")));
            }
        }
        if self.mean_max_iter == 0 {
            return Err(Error::contract("--mean-max-iter must be >= 1"));
        }
        Ok(MeanConfig { tol: self.mean_tol, max_iter: self.mean_max_iter, ..MeanConfig::default() })
    }

    /// Band-pass and decimation for `modality` at sampling rate `fs`.
    fn preprocess(&self, modality: Modality, fs: f64) -> Result<Preprocess> {
        let erp = matches!(modality, Modality::P300 | Modality::ErpMulti | Modality::MuP300);
        let mut p = Preprocess::none();
        if !self.no_filter {
            let base = match modality {
                Modality::Mi => Some(BandSpec::motor_imagery()),
                Modality::Ssvep => None,
                _ => Some(BandSpec::erp()),
            };
            let overridden = self.band_low.is_some() || self.band_high.is_some() || self.filter_order.is_some();
            let band = match (base, overridden) {
                (Some(b), _) => Some(b),
                (None, true) => Some(BandSpec::new(1.0, fs / 2.0 * 0.9, 4)),
                (None, false) => None,
            };
            p.band = band.map(|mut b| {
                b.low_hz = self.band_low.unwrap_or(b.low_hz);
                b.high_hz = self.band_high.unwrap_or(b.high_hz);
                b.order = self.filter_order.unwrap_or(b.order);
                if self.causal {
                    b = b.causal();
                }
                b
            });
            if let Some(b) = &p.band {
                b.validate(fs)?;
            }
            if erp && fs > ERP_RATE_HZ {
                p.decimate_to = Some(ERP_RATE_HZ);
            }
        }
        if let Some(target) = self.decimate {
            p.decimate_to = Some(target);
        }
        Ok(p)
    }

    /// Builds the recipe for `training` (prototypes come from it).
    fn recipe(&self, modality: Modality, training: &[Epoch]) -> Result<FeatureRecipe> {
        let first = training
            .first()
            .ok_or_else(|| Error::contract("no labelled trials to fit on"))?;
        let pre = self.preprocess(modality, first.fs())?;
        let recipe = match modality {
            Modality::Mi => FeatureRecipe::mi(self.shrinkage, pre),
            Modality::Ssvep => {
                let bank = SsvepBank { freqs: self.ssvep_freqs.clone(), width_hz: self.ssvep_width, order: self.ssvep_order };
                FeatureRecipe::ssvep(bank, self.shrinkage, pre)
            }
            Modality::P300 => FeatureRecipe::p300_from_training(training, self.target_class, self.shrinkage, pre)?,
            Modality::ErpMulti => FeatureRecipe::erp_from_training(training, self.shrinkage, pre)?,
            Modality::MuP300 => {
                let m = self
                    .subjects
                    .or_else(|| infer_subjects(first))
                    .ok_or_else(|| Error::contract("--subjects not given and channel names carry no subject prefix"))?;
                FeatureRecipe::mu_p300_from_training(training, m, self.target_class, self.shrinkage, pre)?
            }
        };
        recipe.validate()?;
        Ok(recipe)
    }

    fn fit(&self, modality: Modality, training: &[Epoch]) -> Result<MdmModel> {
        let recipe = self.recipe(modality, training)?;
        MdmModel::fit(training, recipe, &self.mean_config()?)
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<String> {
    let file = read_input(&a.input)?;
    let modality = a.recipe.modality(file.modality)?;
    let training = labelled(file.epochs);
    let model = a.recipe.fit(modality, &training)?;
    write_model(&a.out, &model)?;
    Ok(format!(
        "fit {modality}: classes {:?}, counts {:?}, feature dim {} -> {}\n",
        model.class_ids(),
        model.counts(),
        model.dim(),
        a.out.display()
    ))
}

struct Scores {
    n: usize,
    correct: usize,
    auc: Option<f64>,
}

impl Scores {
    fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

fn is_erp(m: &MdmModel) -> bool {
    matches!(m.recipe().modality, Modality::P300 | Modality::MuP300)
}

fn score(model: &MdmModel, test: &[Epoch]) -> Result<Scores> {
    let target = model.target_class();
    let rows = test
        .par_iter()
        .map(|e| {
            let d = model.distances(e)?;
            let label = e.label().expect("labelled");
            let margin = if is_erp(model) { Some(d.target_margin(target)?) } else { None };
            Ok((label, d.argmin(), margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = rows.iter().filter(|(l, p, _)| l == p).count();
    let auc = if is_erp(model) {
        let pairs: Vec<(f64, bool)> = rows.iter().map(|(l, _, m)| (-m.expect("erp margin"), *l == target)).collect();
        let both = pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1);
        if both {
            Some(auc(&pairs)?)
        } else {
            None
        }
    } else {
        None
    };
    Ok(Scores { n: rows.len(), correct, auc })
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let model = read_model(&a.model)?;
    let file = read_input(&a.input)?;
    let n_trials = file.epochs.len();
    let test = labelled(file.epochs);
    if test.is_empty() {
        return Err(Error::contract("unlabeled test set: no trial carries a label"));
    }
    let s = score(&model, &test)?;
    let erp = is_erp(&model);
    let mut header = vec!["n_trials", "n_labelled", "accuracy"];
    let mut row = vec![n_trials.to_string(), s.n.to_string(), s.accuracy().to_string()];
    if erp {
        header.push("auc");
        row.push(opt(s.auc));
    }
    write_atomic(&a.out, &csv_bytes(&header, &[row])?)?;
    let mut out = format!("accuracy {:.2}% ({}/{})\n", 100.0 * s.accuracy(), s.correct, s.n);
    if let Some(v) = s.auc {
        out.push_str(&format!("AUC {v:.4}\n"));
    }
    Ok(out)
}

/// Stratified fold index per trial: each class is shuffled and dealt round
/// robin, continuing where the previous class stopped.
pub fn assign_folds(labels: &[u32], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::contract(format!("need at least 2 folds, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::contract(format!("{k} folds requested for {} labelled trials", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: BTreeSet<u32> = labels.iter().copied().collect();
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

pub fn cmd_crossval(a: &CrossvalArgs) -> Result<String> {
    let file = read_input(&a.input)?;
    let modality = a.recipe.modality(file.modality)?;
    let epochs = labelled(file.epochs);
    let labels: Vec<u32> = epochs.iter().map(|e| e.label().expect("labelled")).collect();
    let folds = assign_folds(&labels, a.folds, a.seed)?;
    let results = (0..a.folds)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) = epochs.iter().zip(&folds).partition(|(_, &g)| g == f);
            let train: Vec<Epoch> = train.into_iter().map(|(e, _)| e.clone()).collect();
            let test: Vec<Epoch> = test.into_iter().map(|(e, _)| e.clone()).collect();
            let model = a.recipe.fit(modality, &train)?;
            Ok((train.len(), score(&model, &test)?, is_erp(&model)))
        })
        .collect::<Result<Vec<_>>>()?;
    let erp = results.iter().any(|r| r.2);
    let mut header = vec!["fold", "n_train", "n_test", "accuracy"];
    if erp {
        header.push("auc");
    }
    let mut rows = Vec::new();
    for (f, (n_train, s, _)) in results.iter().enumerate() {
        let mut row = vec![(f + 1).to_string(), n_train.to_string(), s.n.to_string(), s.accuracy().to_string()];
        if erp {
            row.push(opt(s.auc));
        }
        rows.push(row);
    }
    let mean_acc = results.iter().map(|r| r.1.accuracy()).sum::<f64>() / results.len() as f64;
    let aucs: Vec<f64> = results.iter().filter_map(|r| r.1.auc).collect();
    let mean_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    let mut mean_row = vec!["mean".to_string(), String::new(), String::new(), mean_acc.to_string()];
    if erp {
        mean_row.push(opt(mean_auc));
    }
    rows.push(mean_row);
    write_atomic(&a.out, &csv_bytes(&header, &rows)?)?;
    let mut out = format!("{}-fold mean accuracy {:.2}%\n", a.folds, 100.0 * mean_acc);
    if let Some(v) = mean_auc {
        out.push_str(&format!("mean AUC {v:.4}\n"));
    }
    Ok(out)
}

fn default_generic(a: &SimulateArgs, cfg: &MeanConfig) -> Result<MdmModel> {
    let shape = SubjectShape { latency_s: a.generic_latency, ..SubjectShape::default() };
    let subject = P300Subject::generate(shape, sub_seed(a.seed, 10, 0))?;
    let spec = P300Spec { subject, snr: a.snr, n_targets: 40, n_non_targets: 200, seed: sub_seed(a.seed, 11, 0) };
    let (train, _) = generate_p300(&spec)?;
    let recipe = FeatureRecipe::p300_from_training(&train, crate::io::synth::TARGET, Shrinkage::Auto, Preprocess::none())?;
    MdmModel::fit(&train, recipe, cfg)
}

fn mean_nrd(sessions: &[PairedSession], pick: fn(&PairedSession) -> &[LevelResult]) -> (f64, f64) {
    let per_level: Vec<f64> = (0..pick(&sessions[0]).len())
        .map(|l| sessions.iter().map(|s| pick(s)[l].nrd as f64).sum::<f64>() / sessions.len() as f64)
        .collect();
    let overall = per_level.iter().sum::<f64>() / per_level.len().max(1) as f64;
    (overall, crate::session::ols_slope(&per_level))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    if a.sessions == 0 || a.levels == 0 {
        return Err(Error::contract("--sessions and --levels must be >= 1"));
    }
    let cfg = MeanConfig { max_iter: a.mean_max_iter, ..MeanConfig::default() };
    let generic = match &a.generic {
        Some(p) => read_model(p)?,
        None => default_generic(a, &cfg)?,
    };
    let sessions = (0..a.sessions as u64)
        .into_par_iter()
        .map(|s| {
            let subject = P300Subject::generate(SubjectShape::default(), sub_seed(a.seed, 20, s))?;
            let spec = P300Spec {
                subject: subject.clone(),
                snr: a.snr,
                n_targets: a.train_targets,
                n_non_targets: 5 * a.train_targets,
                seed: sub_seed(a.seed, 21, s),
            };
            let (training, _) = generate_p300(&spec)?;
            let levels = random_levels(a.levels, a.items, a.max_repetitions, sub_seed(a.seed, 22, s))?;
            let source = SyntheticSource { subject, snr: a.snr, seed: sub_seed(a.seed, 23, s) };
            compare_modes(&levels, &source, &generic, &training, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let indexed: Vec<(usize, &PairedSession)> = sessions.iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
    let mut paired = Vec::new();
    write_paired_csv(&mut paired, &indexed)?;
    write_atomic(&a.out, &paired)?;
    if let Some(path) = &a.detail_out {
        let mut rows: Vec<(usize, &[LevelResult])> = Vec::new();
        for (i, p) in &indexed {
            rows.push((*i, &p.adaptive));
            rows.push((*i, &p.non_adaptive));
        }
        let mut detail = Vec::new();
        write_session_csv(&mut detail, &rows)?;
        write_atomic(path, &detail)?;
    }

    let (ad, ad_slope) = mean_nrd(&sessions, |p| &p.adaptive);
    let (na, na_slope) = mean_nrd(&sessions, |p| &p.non_adaptive);
    let negative = sessions.iter().filter(|p| session_slope(&p.adaptive) < 0.0).count();
    let unsolved = sessions
        .iter()
        .flat_map(|p| p.adaptive.iter().chain(&p.non_adaptive))
        .filter(|r| !r.solved)
        .count();
    Ok(format!(
        "{} session(s) x {} levels\nadaptive: mean NRD {ad:.3}, slope {ad_slope:.4}, negative slope in {negative} session(s)\n\
         non-adaptive: mean NRD {na:.3}, slope {na_slope:.4}\nlevels hitting the cap: {unsolved}\n",
        a.sessions, a.levels
    ))
}
