//! Offline replay of a target-selection game driven by P300 classification.
//!
//! Each level hides one target among `n_items`. Every repetition flashes all
//! items; the classifier's per-item margins are cumulated and the item with
//! the lowest sum is destroyed. The level ends when that item is the target;
//! the number of repetitions needed is the level's NRD.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adaptive::{FusedClassifier, DEFAULT_RAMP};
use crate::dsp::Epoch;
use crate::error::{Error, Result};
use crate::features::FeatureRecipe;
use crate::io::synth::{P300Subject, NON_TARGET, TARGET};
use crate::mdm::{CumulativeScores, MdmModel, Repetition};
use crate::spd::{MeanConfig, SpdMatrix};

pub const DEFAULT_ITEMS: usize = 36;
pub const DEFAULT_MAX_REPETITIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Adaptive,
    NonAdaptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Adaptive => "adaptive",
            Mode::NonAdaptive => "non_adaptive",
        })
    }
}

/// Something that scores item epochs and, optionally, learns from labelled ones.
pub trait SessionClassifier {
    /// Per-epoch data computed once and reused for scoring and learning.
    type Prepared;

    fn prepare(&self, e: &Epoch) -> Result<Self::Prepared>;

    /// Target-likeness margin; lower means more likely the target.
    fn margin(&self, p: &Self::Prepared) -> Result<f64>;

    /// Supervised update with one repetition (`true` marks the target item).
    fn learn(&mut self, _labelled: Vec<(Self::Prepared, bool)>) -> Result<()> {
        Ok(())
    }
}

impl SessionClassifier for MdmModel {
    type Prepared = SpdMatrix;

    fn prepare(&self, e: &Epoch) -> Result<SpdMatrix> {
        self.features(e)
    }

    fn margin(&self, c: &SpdMatrix) -> Result<f64> {
        self.distances_to(c)?.target_margin(self.target_class())
    }
}

impl SessionClassifier for FusedClassifier {
    type Prepared = SpdMatrix;

    fn prepare(&self, e: &Epoch) -> Result<SpdMatrix> {
        self.generic().features(e)
    }

    fn margin(&self, c: &SpdMatrix) -> Result<f64> {
        self.fused_distances_to(c)?.target_margin(self.generic().target_class())
    }

    fn learn(&mut self, labelled: Vec<(SpdMatrix, bool)>) -> Result<()> {
        let target = self.generic().target_class();
        let other = *self
            .generic()
            .class_ids()
            .iter()
            .find(|&&z| z != target)
            .ok_or_else(|| Error::contract("adaptive session needs a two-class model"))?;
        for (c, is_target) in &labelled {
            self.absorb_feature(c, if *is_target { target } else { other })?;
        }
        self.complete_repetition();
        Ok(())
    }
}

/// One level of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpec {
    pub n_items: usize,
    pub target: u32,
    pub max_repetitions: usize,
}

impl LevelSpec {
    pub fn new(n_items: usize, target: u32, max_repetitions: usize) -> Result<Self> {
        if n_items < 2 {
            return Err(Error::contract("a level needs at least 2 items"));
        }
        if target as usize >= n_items {
            return Err(Error::contract(format!("target {target} is not one of {n_items} items")));
        }
        if max_repetitions == 0 {
            return Err(Error::contract("max_repetitions must be >= 1"));
        }
        Ok(Self { n_items, target, max_repetitions })
    }
}

/// `n_levels` levels with uniformly drawn targets.
pub fn random_levels(n_levels: usize, n_items: usize, max_repetitions: usize, seed: u64) -> Result<Vec<LevelSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_levels)
        .map(|_| LevelSpec::new(n_items, rng.random_range(0..n_items as u32), max_repetitions))
        .collect()
}

/// Supplies the epochs of repetition `rep` of level `level`; must be a pure function.
pub trait RepetitionSource {
    fn repetition(&self, level: usize, rep: usize, spec: &LevelSpec) -> Result<Repetition>;
}

/// Synthetic subject: each item's epoch is the average of two flash epochs.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub subject: P300Subject,
    pub snr: f64,
    pub seed: u64,
}

impl RepetitionSource for SyntheticSource {
    fn repetition(&self, level: usize, rep: usize, spec: &LevelSpec) -> Result<Repetition> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((level as u64) << 32) | rep as u64);
        (0..spec.n_items as u32)
            .map(|item| {
                let target = item == spec.target;
                let a = self.subject.trial(&mut rng, target, self.snr);
                let b = self.subject.trial(&mut rng, target, self.snr);
                let label = if target { TARGET } else { NON_TARGET };
                let e = Epoch::new((a + b) * 0.5, self.subject.fs, Some(label), Vec::new())?;
                Ok((item, e))
            })
            .collect()
    }
}

/// Pre-recorded repetitions indexed by level then repetition.
#[derive(Debug, Clone, Default)]
pub struct RecordedSource {
    pub levels: Vec<Vec<Repetition>>,
}

impl RepetitionSource for RecordedSource {
    fn repetition(&self, level: usize, rep: usize, _spec: &LevelSpec) -> Result<Repetition> {
        self.levels
            .get(level)
            .and_then(|reps| reps.get(rep))
            .cloned()
            .ok_or_else(|| Error::contract(format!("no recorded repetition {rep} for level {level}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelResult {
    pub level: usize,
    pub target: u32,
    pub mode: Mode,
    /// Repetitions used; equals the cap when the level was not solved.
    pub nrd: usize,
    pub solved: bool,
    /// Item destroyed after each repetition.
    pub selections: Vec<u32>,
}

/// Plays one level. In adaptive mode every repetition is learned after its
/// selection has been made.
pub fn run_level<C, S>(level: usize, spec: &LevelSpec, source: &S, clf: &mut C, mode: Mode) -> Result<LevelResult>
where
    C: SessionClassifier,
    S: RepetitionSource + ?Sized,
{
    let mut scores = CumulativeScores::new();
    let mut selections = Vec::new();
    for r in 0..spec.max_repetitions {
        let rep = source.repetition(level, r, spec)?;
        if rep.len() != spec.n_items || rep.keys().any(|&k| k as usize >= spec.n_items) {
            return Err(Error::contract(format!(
                "repetition {r} of level {level} does not cover items 0..{}",
                spec.n_items
            )));
        }
        let mut prepared = Vec::with_capacity(rep.len());
        let mut margins = std::collections::BTreeMap::new();
        for (&item, e) in &rep {
            let p = clf.prepare(e)?;
            margins.insert(item, clf.margin(&p)?);
            prepared.push((p, item == spec.target));
        }
        scores.add_margins(&margins)?;
        let selected = scores.select().expect("at least one item");
        selections.push(selected);
        if mode == Mode::Adaptive {
            clf.learn(prepared)?;
        }
        if selected == spec.target {
            return Ok(LevelResult {
                level,
                target: spec.target,
                mode,
                nrd: r + 1,
                solved: true,
                selections,
            });
        }
    }
    Ok(LevelResult {
        level,
        target: spec.target,
        mode,
        nrd: spec.max_repetitions,
        solved: false,
        selections,
    })
}

/// Plays levels in order; classifier state carries over between levels.
pub fn run_session<C, S>(levels: &[LevelSpec], source: &S, clf: &mut C, mode: Mode) -> Result<Vec<LevelResult>>
where
    C: SessionClassifier,
    S: RepetitionSource + ?Sized,
{
    levels
        .iter()
        .enumerate()
        .map(|(i, spec)| run_level(i, spec, source, clf, mode))
        .collect()
}

/// Least-squares slope of `y` against `1, 2, …, n`.
pub fn ols_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let xm = (n as f64 + 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = (i + 1) as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Slope of NRD across the levels of one session.
pub fn session_slope(results: &[LevelResult]) -> f64 {
    ols_slope(&results.iter().map(|r| r.nrd as f64).collect::<Vec<_>>())
}

/// Per-level NRD statistics over several sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub mean: Vec<f64>,
    /// Sample standard deviation (zero for a single session).
    pub sd: Vec<f64>,
    /// OLS slope of the per-level means.
    pub slope: f64,
}

pub fn summarize(sessions: &[Vec<LevelResult>]) -> Result<SessionSummary> {
    let first = sessions
        .first()
        .ok_or_else(|| Error::contract("no sessions to summarise"))?;
    let n_levels = first.len();
    if sessions.iter().any(|s| s.len() != n_levels) {
        return Err(Error::contract("sessions have different level counts"));
    }
    let k = sessions.len() as f64;
    let mut mean = Vec::with_capacity(n_levels);
    let mut sd = Vec::with_capacity(n_levels);
    for l in 0..n_levels {
        let vals: Vec<f64> = sessions.iter().map(|s| s[l].nrd as f64).collect();
        let m = vals.iter().sum::<f64>() / k;
        let var = if sessions.len() > 1 {
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        sd.push(var.sqrt());
    }
    let slope = ols_slope(&mean);
    Ok(SessionSummary { mean, sd, slope })
}

/// Adaptive and non-adaptive runs over the same levels and epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSession {
    pub adaptive: Vec<LevelResult>,
    pub non_adaptive: Vec<LevelResult>,
}

/// The non-adaptive run uses a model calibrated on `training` (own
/// prototype, generic's preprocessing and shrinkage); the adaptive run starts
/// from `generic` with no individual data.
pub fn compare_modes<S>(
    levels: &[LevelSpec],
    source: &S,
    generic: &MdmModel,
    training: &[Epoch],
    mean_cfg: &MeanConfig,
) -> Result<PairedSession>
where
    S: RepetitionSource + ?Sized,
{
    let base = generic.recipe();
    let recipe = FeatureRecipe::p300_from_training(
        training,
        generic.target_class(),
        base.shrinkage,
        base.preprocess.clone(),
    )?;
    let mut trained = MdmModel::fit(training, recipe, mean_cfg)?;
    let mut fused = FusedClassifier::new(generic.clone(), DEFAULT_RAMP)?;
    Ok(PairedSession {
        adaptive: run_session(levels, source, &mut fused, Mode::Adaptive)?,
        non_adaptive: run_session(levels, source, &mut trained, Mode::NonAdaptive)?,
    })
}

/// Per-repetition rows: `session,level,mode,repetition,selected,target,nrd`.
pub fn write_session_csv<W: Write>(out: W, rows: &[(usize, &[LevelResult])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["session", "level", "mode", "repetition", "selected", "target", "nrd"])?;
    for (session, results) in rows {
        for r in results.iter() {
            for (k, sel) in r.selections.iter().enumerate() {
                w.write_record([
                    session.to_string(),
                    (r.level + 1).to_string(),
                    r.mode.to_string(),
                    (k + 1).to_string(),
                    sel.to_string(),
                    r.target.to_string(),
                    r.nrd.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per level: `session,level,target,nrd_adaptive,solved_adaptive,nrd_non_adaptive,solved_non_adaptive`.
pub fn write_paired_csv<W: Write>(out: W, sessions: &[(usize, &PairedSession)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "session",
        "level",
        "target",
        "nrd_adaptive",
        "solved_adaptive",
        "nrd_non_adaptive",
        "solved_non_adaptive",
    ])?;
    for (session, p) in sessions {
        for (a, n) in p.adaptive.iter().zip(&p.non_adaptive) {
            w.write_record([
                session.to_string(),
                (a.level + 1).to_string(),
                a.target.to_string(),
                a.nrd.to_string(),
                a.solved.to_string(),
                n.nrd.to_string(),
                n.solved.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
