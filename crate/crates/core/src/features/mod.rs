//! Modality-specific "covariance" features.
//!
//! Every builder stacks some rows (the trial, temporal prototypes, band-passed
//! copies, other subjects' trials) into a tall matrix `S` with `T` columns and
//! returns `S Sᵀ / (T − 1)` after shrinkage:
//!
//! | modality  | stacked rows                      | dimension     |
//! |-----------|-----------------------------------|---------------|
//! | MI        | `X`                               | `N`           |
//! | ERP       | `X̄(1) … X̄(Z), X`                  | `N(Z+1)`      |
//! | P300      | `X̄(+), X`                         | `2N`          |
//! | SSVEP     | `X(f1) … X(fF)`, cross blocks = 0 | `NF`          |
//! | MU-P300   | `X̄(+), X1 … XM`                   | `N(M+1)`      |
//!
//! Inner products are summed in a canonical (value-sorted) order so the
//! result does not depend on the order of the time samples at all, not even
//! through rounding.

mod shrink;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsp::{bandpass, decimate, ssvep_filter_bank, BandSpec, Epoch};
use crate::error::{Error, Result};
use crate::spd::{SpdMatrix, SymmetricMatrix};

pub use shrink::{shrink, Shrinkage, AUTO_LADDER};

/// Column indices of the stacked `[a; b]` in lexicographic order of the
/// column values. Any permutation of the columns yields the same sequence of
/// column values, so sums taken in this order do not depend on sample order.
fn canonical_order(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<usize> {
    let (na, nb) = (a.nrows(), b.nrows());
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let key = |c: usize, r: usize| if r < na { sa[c * na + r] } else { sb[c * nb + r - na] };
    let mut order: Vec<usize> = (0..a.ncols()).collect();
    order.sort_unstable_by(|&i, &j| {
        for r in 0..na + nb {
            let o = key(i, r).total_cmp(&key(j, r));
            if o.is_ne() {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    order
}

fn permuted_rows(m: &DMatrix<f64>, order: &[usize]) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| order.iter().map(|&c| m[(r, c)]).collect())
        .collect()
}

/// `S Sᵀ / (T − 1)` for `S` the vertical stack of `blocks` (all with `T`
/// columns). Each block pair is summed in the canonical order of its own two
/// blocks, so a diagonal block depends only on that block.
fn scatter(blocks: &[&DMatrix<f64>]) -> Result<SymmetricMatrix> {
    let t = blocks.first().map_or(0, |b| b.ncols());
    if t < 2 {
        return Err(Error::contract(format!("covariance needs T >= 2 samples, got {t}")));
    }
    if let Some(b) = blocks.iter().find(|b| b.ncols() != t) {
        return Err(Error::contract(format!("stacked blocks have {} and {t} samples", b.ncols())));
    }
    let offsets: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b.nrows();
            Some(o)
        })
        .collect();
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let denom = (t - 1) as f64;
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / denom;
    let mut m = DMatrix::zeros(n, n);
    for (bi, a) in blocks.iter().enumerate() {
        for (bj, b) in blocks.iter().enumerate().skip(bi) {
            let order = canonical_order(a, b);
            let ra = permuted_rows(a, &order);
            let rb = if bi == bj { ra.clone() } else { permuted_rows(b, &order) };
            for (i, x) in ra.iter().enumerate() {
                for (j, y) in rb.iter().enumerate() {
                    if bi == bj && j < i {
                        continue;
                    }
                    let v = dot(x, y);
                    let (r, c) = (offsets[bi] + i, offsets[bj] + j);
                    m[(r, c)] = v;
                    m[(c, r)] = v;
                }
            }
        }
    }
    SymmetricMatrix::new(m)
}

/// Unregularised `X Xᵀ / (T − 1)`.
pub fn sample_covariance_raw(e: &Epoch) -> Result<SymmetricMatrix> {
    scatter(&[e.data()])
}

/// Spatial covariance `X Xᵀ / (T − 1)` with shrinkage. The epoch is assumed demeaned.
pub fn sample_covariance(e: &Epoch, shrinkage: Shrinkage) -> Result<SpdMatrix> {
    shrink(&sample_covariance_raw(e)?, shrinkage)
}

/// Grand-average ERP of one class (the temporal prototype `X̄(z)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class: u32,
    pub count: usize,
    pub data: DMatrix<f64>,
}

impl Prototype {
    pub fn new(class: u32, count: usize, data: DMatrix<f64>) -> Self {
        Self { class, count, data }
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Element-wise mean of the epochs of each requested class, in the order given.
pub fn build_prototypes(training: &[Epoch], classes: &[u32]) -> Result<Vec<Prototype>> {
    let first = training
        .first()
        .ok_or_else(|| Error::contract("no training epochs for prototypes"))?;
    let (n, t) = first.data().shape();
    if let Some(bad) = training.iter().find(|e| e.data().shape() != (n, t) || e.fs() != first.fs()) {
        return Err(Error::contract(format!(
            "prototype epochs differ in shape or rate: {:?}@{} vs {:?}@{}",
            (n, t),
            first.fs(),
            bad.data().shape(),
            bad.fs()
        )));
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(classes.len());
    for &class in classes {
        let members: Vec<&Epoch> = training.iter().filter(|e| e.label() == Some(class)).collect();
        if members.is_empty() {
            missing.push(class);
            continue;
        }
        let mut acc = DMatrix::zeros(n, t);
        for e in &members {
            acc += e.data();
        }
        acc /= members.len() as f64;
        out.push(Prototype::new(class, members.len(), acc));
    }
    if !missing.is_empty() {
        return Err(Error::contract(format!("no training epochs for class(es) {missing:?}")));
    }
    Ok(out)
}

fn check_proto(e: &Epoch, p: &Prototype) -> Result<()> {
    if p.data.shape() != e.data().shape() {
        return Err(Error::contract(format!(
            "prototype of class {} is {}x{} but the epoch is {}x{}",
            p.class,
            p.n_channels(),
            p.n_samples(),
            e.n_channels(),
            e.n_samples()
        )));
    }
    Ok(())
}

/// Unregularised covariance of the stacked super-trial `[X̄(1); …; X̄(Z); X]`.
pub fn erp_super_cov_raw(e: &Epoch, protos: &[Prototype]) -> Result<SymmetricMatrix> {
    let mut blocks = Vec::with_capacity(protos.len() + 1);
    for p in protos {
        check_proto(e, p)?;
        blocks.push(&p.data);
    }
    blocks.push(e.data());
    scatter(&blocks)
}

/// Super-trial covariance with one block row per prototype then the trial.
pub fn erp_super_cov(e: &Epoch, protos: &[Prototype], shrinkage: Shrinkage) -> Result<SpdMatrix> {
    shrink(&erp_super_cov_raw(e, protos)?, shrinkage)
}

/// Two-class super-trial `[X̄(+); X]`, `2N × 2N`.
pub fn p300_super_cov(e: &Epoch, target: &Prototype, shrinkage: Shrinkage) -> Result<SpdMatrix> {
    erp_super_cov(e, std::slice::from_ref(target), shrinkage)
}

/// Unregularised multi-user super-trial covariance `[X̄(+); X1; …; XM]`.
pub fn mu_p300_super_cov_raw(epochs: &[Epoch], target: &Prototype) -> Result<SymmetricMatrix> {
    if epochs.is_empty() {
        return Err(Error::contract("multi-user trial needs at least one subject"));
    }
    let mut blocks = vec![&target.data];
    for (m, e) in epochs.iter().enumerate() {
        if e.n_samples() != target.n_samples() {
            return Err(Error::contract(format!(
                "subject {} has {} samples, prototype has {}",
                m + 1,
                e.n_samples(),
                target.n_samples()
            )));
        }
        check_proto(e, target)?;
        blocks.push(e.data());
    }
    scatter(&blocks)
}

pub fn mu_p300_super_cov(epochs: &[Epoch], target: &Prototype, shrinkage: Shrinkage) -> Result<SpdMatrix> {
    shrink(&mu_p300_super_cov_raw(epochs, target)?, shrinkage)
}

/// Block-diagonal covariance of a filter bank: per-band covariances on the
/// diagonal, exact zeros elsewhere. Shrinkage is applied per block, and once
/// more to the whole matrix under [`Shrinkage::Auto`] if the blocks' scales
/// are too far apart to pass the SPD check together.
pub fn ssvep_block_cov(bank: &[Epoch], shrinkage: Shrinkage) -> Result<SpdMatrix> {
    let first = bank
        .first()
        .ok_or_else(|| Error::contract("filter bank is empty"))?;
    let (n, t) = first.data().shape();
    if let Some(bad) = bank.iter().find(|e| e.data().shape() != (n, t)) {
        return Err(Error::contract(format!(
            "filter bank members differ in shape: {:?} vs {:?}",
            (n, t),
            bad.data().shape()
        )));
    }
    let f = bank.len();
    let mut m = DMatrix::zeros(n * f, n * f);
    for (k, band) in bank.iter().enumerate() {
        let block = sample_covariance(band, shrinkage)?;
        m.view_mut((k * n, k * n), (n, n)).copy_from(block.as_matrix());
    }
    let sym = SymmetricMatrix::new(m)?;
    match sym.clone().into_spd() {
        Ok(c) => Ok(c),
        Err(_) if shrinkage == Shrinkage::Auto => shrink(&sym, Shrinkage::Auto),
        Err(e) => Err(e),
    }
}

/// Feature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Spatial covariance only (motor imagery).
    Mi,
    /// One prototype per class.
    ErpMulti,
    /// Target prototype only (two-class P300).
    P300,
    /// Filter bank with block-diagonal covariance.
    Ssvep,
    /// Multi-user P300: epochs hold `M` subjects' channels stacked subject-major.
    MuP300,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Mi => "mi",
            Modality::ErpMulti => "erp_multi",
            Modality::P300 => "p300",
            Modality::Ssvep => "ssvep",
            Modality::MuP300 => "mu_p300",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mi" => Modality::Mi,
            "erp_multi" | "erp" => Modality::ErpMulti,
            "p300" => Modality::P300,
            "ssvep" => Modality::Ssvep,
            "mu_p300" => Modality::MuP300,
            other => return Err(Error::parse("modality", format!("unknown modality `{other}`"))),
        })
    }
}

/// Filter-bank settings for SSVEP features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepBank {
    pub freqs: Vec<f64>,
    pub width_hz: f64,
    pub order: usize,
}

impl SsvepBank {
    pub fn new(freqs: Vec<f64>) -> Self {
        Self {
            freqs,
            width_hz: crate::dsp::SSVEP_WIDTH_HZ,
            order: crate::dsp::SSVEP_ORDER,
        }
    }
}

/// Conditioning applied to every raw epoch before features are built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub band: Option<BandSpec>,
    pub decimate_to: Option<f64>,
}

impl Preprocess {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn band(band: BandSpec) -> Self {
        Self { band: Some(band), decimate_to: None }
    }

    pub fn apply(&self, e: &Epoch) -> Result<Epoch> {
        let mut out = match &self.band {
            Some(b) => bandpass(e, b)?,
            None => e.clone(),
        };
        if let Some(fs) = self.decimate_to {
            out = decimate(&out, fs)?;
        }
        Ok(out)
    }

    pub fn is_identity(&self) -> bool {
        self.band.is_none() && self.decimate_to.is_none()
    }
}

/// Everything needed to turn a raw epoch into its SPD feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecipe {
    pub modality: Modality,
    pub prototypes: Vec<Prototype>,
    pub ssvep: Option<SsvepBank>,
    pub shrinkage: Shrinkage,
    pub n_subjects: Option<usize>,
    /// Target class for P300 and multi-user P300 recipes.
    pub target_class: Option<u32>,
    pub preprocess: Preprocess,
}

impl FeatureRecipe {
    pub fn mi(shrinkage: Shrinkage, preprocess: Preprocess) -> Self {
        Self {
            modality: Modality::Mi,
            prototypes: Vec::new(),
            ssvep: None,
            shrinkage,
            n_subjects: None,
            target_class: None,
            preprocess,
        }
    }

    pub fn ssvep(bank: SsvepBank, shrinkage: Shrinkage, preprocess: Preprocess) -> Self {
        Self {
            modality: Modality::Ssvep,
            ssvep: Some(bank),
            ..Self::mi(shrinkage, preprocess)
        }
    }

    /// Two-class P300 recipe with a given target prototype.
    pub fn p300(target: Prototype, shrinkage: Shrinkage, preprocess: Preprocess) -> Self {
        Self {
            modality: Modality::P300,
            target_class: Some(target.class),
            prototypes: vec![target],
            ..Self::mi(shrinkage, preprocess)
        }
    }

    /// Two-class P300 recipe whose target prototype is averaged from `training`.
    pub fn p300_from_training(
        training: &[Epoch],
        target_class: u32,
        shrinkage: Shrinkage,
        preprocess: Preprocess,
    ) -> Result<Self> {
        let conditioned = condition_all(&preprocess, training)?;
        let proto = build_prototypes(&conditioned, &[target_class])?.remove(0);
        Ok(Self::p300(proto, shrinkage, preprocess))
    }

    /// Multi-class ERP recipe with one prototype per class, ordered by class id.
    pub fn erp_from_training(training: &[Epoch], shrinkage: Shrinkage, preprocess: Preprocess) -> Result<Self> {
        let conditioned = condition_all(&preprocess, training)?;
        let mut classes: Vec<u32> = conditioned.iter().filter_map(Epoch::label).collect();
        classes.sort_unstable();
        classes.dedup();
        let prototypes = build_prototypes(&conditioned, &classes)?;
        Ok(Self {
            modality: Modality::ErpMulti,
            prototypes,
            ..Self::mi(shrinkage, preprocess)
        })
    }

    pub fn mu_p300(target: Prototype, n_subjects: usize, shrinkage: Shrinkage, preprocess: Preprocess) -> Self {
        Self {
            modality: Modality::MuP300,
            n_subjects: Some(n_subjects),
            ..Self::p300(target, shrinkage, preprocess)
        }
    }

    /// Multi-user recipe whose single prototype averages every subject's target epochs.
    pub fn mu_p300_from_training(
        training: &[Epoch],
        n_subjects: usize,
        target_class: u32,
        shrinkage: Shrinkage,
        preprocess: Preprocess,
    ) -> Result<Self> {
        let mut per_subject = Vec::new();
        for e in condition_all(&preprocess, training)? {
            per_subject.extend(split_subjects(&e, n_subjects)?);
        }
        let proto = build_prototypes(&per_subject, &[target_class])?.remove(0);
        Ok(Self::mu_p300(proto, n_subjects, shrinkage, preprocess))
    }

    /// Checks that exactly the fields the modality needs are present.
    pub fn validate(&self) -> Result<()> {
        let need_protos = matches!(self.modality, Modality::ErpMulti | Modality::P300 | Modality::MuP300);
        if need_protos == self.prototypes.is_empty() {
            return Err(Error::contract(format!(
                "{} recipe {} prototypes",
                self.modality.as_str(),
                if need_protos { "requires" } else { "must not carry" }
            )));
        }
        if matches!(self.modality, Modality::P300 | Modality::MuP300) {
            if self.prototypes.len() != 1 {
                return Err(Error::contract("P300 recipes carry exactly one (target) prototype"));
            }
            if self.target_class != Some(self.prototypes[0].class) {
                return Err(Error::contract("target class must match the prototype class"));
            }
        }
        if (self.modality == Modality::Ssvep) != self.ssvep.is_some() {
            return Err(Error::contract("filter-bank settings present iff modality is ssvep"));
        }
        if (self.modality == Modality::MuP300) != self.n_subjects.is_some() {
            return Err(Error::contract("subject count present iff modality is mu_p300"));
        }
        if self.n_subjects == Some(0) {
            return Err(Error::contract("subject count must be >= 1"));
        }
        if let Some(bank) = &self.ssvep {
            if bank.freqs.is_empty() {
                return Err(Error::contract("ssvep recipe needs at least one frequency"));
            }
        }
        if let Some(p) = self.prototypes.first() {
            if self.prototypes.iter().any(|q| q.data.shape() != p.data.shape()) {
                return Err(Error::contract("prototypes differ in shape"));
            }
        }
        Ok(())
    }

    /// Dimension of the feature matrix for epochs with `n_channels` rows.
    pub fn feature_dim(&self, n_channels: usize) -> usize {
        match self.modality {
            Modality::Mi => n_channels,
            Modality::ErpMulti | Modality::P300 => n_channels * (self.prototypes.len() + 1),
            Modality::Ssvep => n_channels * self.ssvep.as_ref().map_or(0, |b| b.freqs.len()),
            Modality::MuP300 => {
                // `n_channels` counts all subjects' rows; the prototype adds one subject's worth.
                let m = self.n_subjects.unwrap_or(1).max(1);
                n_channels + n_channels / m
            }
        }
    }

    /// Applies the recipe's preprocessing only.
    pub fn condition(&self, e: &Epoch) -> Result<Epoch> {
        self.preprocess.apply(e)
    }

    /// Builds the SPD feature of a raw epoch.
    pub fn features(&self, e: &Epoch) -> Result<SpdMatrix> {
        let e = self.condition(e)?;
        self.features_conditioned(&e)
    }

    /// Builds the feature of an epoch that has already been conditioned.
    pub fn features_conditioned(&self, e: &Epoch) -> Result<SpdMatrix> {
        match self.modality {
            Modality::Mi => sample_covariance(e, self.shrinkage),
            Modality::ErpMulti => erp_super_cov(e, &self.prototypes, self.shrinkage),
            Modality::P300 => p300_super_cov(e, self.target_prototype()?, self.shrinkage),
            Modality::Ssvep => {
                let bank = self
                    .ssvep
                    .as_ref()
                    .ok_or_else(|| Error::contract("ssvep recipe without filter bank"))?;
                let filtered = ssvep_filter_bank(e, &bank.freqs, bank.width_hz, bank.order)?;
                ssvep_block_cov(&filtered, self.shrinkage)
            }
            Modality::MuP300 => {
                let m = self
                    .n_subjects
                    .ok_or_else(|| Error::contract("mu_p300 recipe without subject count"))?;
                let subjects = split_subjects(e, m)?;
                mu_p300_super_cov(&subjects, self.target_prototype()?, self.shrinkage)
            }
        }
    }

    fn target_prototype(&self) -> Result<&Prototype> {
        self.prototypes
            .first()
            .ok_or_else(|| Error::contract("recipe has no target prototype"))
    }
}

fn condition_all(p: &Preprocess, epochs: &[Epoch]) -> Result<Vec<Epoch>> {
    epochs.iter().map(|e| p.apply(e)).collect()
}

/// Splits an epoch whose rows are `M` subjects' channels stacked subject-major.
pub fn split_subjects(e: &Epoch, n_subjects: usize) -> Result<Vec<Epoch>> {
    let total = e.n_channels();
    if n_subjects == 0 || total % n_subjects != 0 {
        return Err(Error::contract(format!(
            "{total} channels cannot be split evenly across {n_subjects} subjects"
        )));
    }
    let n = total / n_subjects;
    (0..n_subjects)
        .map(|m| {
            let data = e.data().rows(m * n, n).into_owned();
            Epoch::new(data, e.fs(), e.label(), e.channels()[m * n..(m + 1) * n].to_vec())
        })
        .collect()
}

/// Stacks per-subject epochs (same shape and rate) into one multi-user epoch.
pub fn stack_subjects(subjects: &[Epoch]) -> Result<Epoch> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::contract("no subjects to stack"))?;
    let (n, t) = first.data().shape();
    if subjects.iter().any(|s| s.data().shape() != (n, t) || s.fs() != first.fs()) {
        return Err(Error::contract("subjects must share shape, rate and alignment"));
    }
    let m = subjects.len();
    let data = DMatrix::from_fn(n * m, t, |r, c| subjects[r / n].data()[(r % n, c)]);
    let channels = subjects
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.channels().iter().map(move |c| format!("s{}:{c}", k + 1)))
        .collect();
    Epoch::new(data, first.fs(), first.label(), channels)
}
