//! Seeded synthetic EEG: Gaussian trials with class covariances (motor
//! imagery), template-plus-colored-noise ERPs (P300) and flicker responses
//! (SSVEP). Every generator is a pure function of its spec.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::Epoch;
use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// P300 label of target trials.
pub const TARGET: u32 = 1;
/// P300 label of non-target trials.
pub const NON_TARGET: u32 = 0;

/// SNR giving held-out MDM AUC near 0.9 with the default P300 geometry.
pub const DEFAULT_P300_SNR: f64 = 0.1;

/// Channel names of the SSVEP montage.
pub const SSVEP_CHANNELS: [&str; 6] = ["CPz", "O1", "Oz", "O2", "POz", "Iz"];
const SSVEP_GAINS: [f64; 6] = [0.3, 1.0, 1.0, 1.0, 0.8, 0.7];

fn gaussian(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ch{i}")).collect()
}

/// Motor-imagery style data: trial `= Σ_z^(1/2) · N(0, 1)^(N×T)`.
#[derive(Debug, Clone)]
pub struct MiSpec {
    /// One covariance per class; class `z` gets label `first_label + z`.
    pub covariances: Vec<SpdMatrix>,
    pub first_label: u32,
    pub n_samples: usize,
    pub fs: f64,
    pub trials_per_class: usize,
    pub seed: u64,
}

impl MiSpec {
    /// `Σ_1 = I` and, for class `z ≥ 2`, the identity with channel `z − 2`
    /// (mod N) given variance 4.
    pub fn diagonal(n_channels: usize, n_classes: usize, n_samples: usize, trials_per_class: usize, seed: u64) -> Self {
        let covariances = (0..n_classes)
            .map(|z| {
                let mut d = vec![1.0; n_channels];
                if z > 0 {
                    d[(z - 1) % n_channels] = 4.0;
                }
                SpdMatrix::from_diagonal(&d).expect("positive diagonal")
            })
            .collect();
        Self {
            covariances,
            first_label: 1,
            n_samples,
            fs: 128.0,
            trials_per_class,
            seed,
        }
    }
}

/// Trials ordered round-robin over classes.
pub fn generate_mi(spec: &MiSpec) -> Result<Vec<Epoch>> {
    let first = spec
        .covariances
        .first()
        .ok_or_else(|| Error::contract("motor-imagery spec needs at least one class"))?;
    let n = first.dim();
    if spec.covariances.iter().any(|c| c.dim() != n) {
        return Err(Error::contract("class covariances differ in dimension"));
    }
    let roots: Vec<DMatrix<f64>> = spec.covariances.iter().map(|c| c.sqrt().as_matrix().clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(roots.len() * spec.trials_per_class);
    for _ in 0..spec.trials_per_class {
        for (z, root) in roots.iter().enumerate() {
            let x = root * gaussian(&mut rng, n, spec.n_samples);
            out.push(Epoch::new(x, spec.fs, Some(spec.first_label + z as u32), channel_names(n))?);
        }
    }
    Ok(out)
}

/// One synthetic subject's ERP template and background-noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct P300Subject {
    /// `N × T` template with unit RMS.
    pub template: DMatrix<f64>,
    /// Row-normalised channel mixing of the noise sources.
    pub mixing: DMatrix<f64>,
    /// AR(1) coefficient of each noise source.
    pub ar: f64,
    pub fs: f64,
}

/// Geometry of a synthetic subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectShape {
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs: f64,
    /// P300 peak latency in seconds.
    pub latency_s: f64,
    pub ar: f64,
}

impl Default for SubjectShape {
    fn default() -> Self {
        Self {
            n_channels: 8,
            n_samples: 64,
            fs: 128.0,
            latency_s: 0.3,
            ar: 0.8,
        }
    }
}

impl P300Subject {
    /// Draws spatial gains and noise mixing from `seed`.
    pub fn generate(shape: SubjectShape, seed: u64) -> Result<Self> {
        let SubjectShape { n_channels: n, n_samples: t, fs, latency_s, ar } = shape;
        if n == 0 || t < 2 || !(fs > 0.0) {
            return Err(Error::contract("subject needs channels, >= 2 samples and fs > 0"));
        }
        if !(ar.abs() < 1.0) {
            return Err(Error::contract(format!("AR coefficient {ar} must lie in (-1, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
        let bump = |s: f64, mu: f64, w: f64| (-(s - mu).powi(2) / (2.0 * w * w)).exp();
        let wave: Vec<f64> = (0..t)
            .map(|k| {
                let s = k as f64 / fs;
                bump(s, latency_s, 0.06) - 0.4 * bump(s, latency_s - 0.1, 0.03)
            })
            .collect();
        let mut template = DMatrix::from_fn(n, t, |c, k| gains[c] * wave[k]);
        demean(&mut template);
        let rms = (template.norm_squared() / (n * t) as f64).sqrt();
        if rms > 0.0 {
            template /= rms;
        }
        let mut mixing = gaussian(&mut rng, n, n) + DMatrix::identity(n, n) * 1.5;
        for mut row in mixing.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        Ok(Self { template, mixing, ar, fs })
    }

    pub fn n_channels(&self) -> usize {
        self.template.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.template.ncols()
    }

    /// Unit-variance AR(1) sources mixed over channels, then demeaned.
    pub fn noise(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let (n, t) = self.template.shape();
        let innov = (1.0 - self.ar * self.ar).sqrt();
        let mut src = DMatrix::zeros(n, t);
        for r in 0..n {
            let mut prev: f64 = rng.sample(StandardNormal);
            for k in 0..t {
                let e: f64 = rng.sample(StandardNormal);
                prev = if k == 0 { prev } else { self.ar * prev + innov * e };
                src[(r, k)] = prev;
            }
        }
        let mut x = &self.mixing * src;
        demean(&mut x);
        x
    }

    /// `snr · template + noise` when `target`, noise alone otherwise.
    pub fn trial(&self, rng: &mut ChaCha8Rng, target: bool, snr: f64) -> DMatrix<f64> {
        let mut x = self.noise(rng);
        if target {
            x += &self.template * snr;
        }
        x
    }

    pub fn epoch(&self, rng: &mut ChaCha8Rng, target: bool, snr: f64) -> Result<Epoch> {
        let label = if target { TARGET } else { NON_TARGET };
        Epoch::new(self.trial(rng, target, snr), self.fs, Some(label), channel_names(self.n_channels()))
    }
}

fn demean(m: &mut DMatrix<f64>) {
    let t = m.ncols() as f64;
    for mut row in m.row_iter_mut() {
        let mean = row.sum() / t;
        row.add_scalar_mut(-mean);
    }
}

/// Target/non-target trials of one subject.
#[derive(Debug, Clone)]
pub struct P300Spec {
    pub subject: P300Subject,
    pub snr: f64,
    pub n_targets: usize,
    pub n_non_targets: usize,
    pub seed: u64,
}

impl P300Spec {
    /// Default subject geometry at the calibrated SNR, with the 1:5 target
    /// ratio of a 6x6 row/column speller.
    pub fn standard(n_targets: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            subject: P300Subject::generate(SubjectShape::default(), seed)?,
            snr: DEFAULT_P300_SNR,
            n_targets,
            n_non_targets: 5 * n_targets,
            seed: seed.wrapping_add(1),
        })
    }
}

/// Returns the trials (targets interleaved among non-targets) and the
/// scaled ground-truth template `snr · template`.
pub fn generate_p300(spec: &P300Spec) -> Result<(Vec<Epoch>, DMatrix<f64>)> {
    if !(spec.snr >= 0.0) || !spec.snr.is_finite() {
        return Err(Error::contract(format!("SNR must be finite and >= 0, got {}", spec.snr)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.n_targets + spec.n_non_targets;
    let mut out = Vec::with_capacity(total);
    let (mut t_left, mut n_left) = (spec.n_targets, spec.n_non_targets);
    for _ in 0..total {
        // Keep the running ratio close to the overall ratio.
        let target = t_left > 0 && (n_left == 0 || t_left * total >= (t_left + n_left) * spec.n_targets);
        if target {
            t_left -= 1;
        } else {
            n_left -= 1;
        }
        out.push(spec.subject.epoch(&mut rng, target, spec.snr)?);
    }
    Ok((out, &spec.subject.template * spec.snr))
}

/// Flicker responses at each frequency plus a rest class.
#[derive(Debug, Clone)]
pub struct SsvepSpec {
    pub freqs: Vec<f64>,
    pub fs: f64,
    pub duration_s: f64,
    pub trials_per_class: usize,
    /// Amplitude of the fundamental; the second harmonic has half of it.
    pub amplitude: f64,
    /// Standard deviation of the background noise per channel.
    pub noise_std: f64,
    pub seed: u64,
}

impl SsvepSpec {
    pub fn standard(duration_s: f64, trials_per_class: usize, seed: u64) -> Self {
        Self {
            freqs: vec![12.0, 15.0, 20.0],
            fs: 256.0,
            duration_s,
            trials_per_class,
            amplitude: 1.0,
            noise_std: 5.0,
            seed,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }
}

/// Labels: `0` rest, `k` for `freqs[k − 1]`; trials round-robin over classes.
pub fn generate_ssvep(spec: &SsvepSpec) -> Result<Vec<Epoch>> {
    let nyq = spec.fs / 2.0;
    if let Some(f) = spec.freqs.iter().find(|&&f| !(f > 0.0) || f >= nyq) {
        return Err(Error::contract(format!("frequency {f} Hz outside (0, {nyq}) Hz")));
    }
    if !(spec.noise_std >= 0.0) || !(spec.amplitude >= 0.0) {
        return Err(Error::contract("amplitude and noise must be nonnegative"));
    }
    let t = spec.n_samples();
    let n = SSVEP_CHANNELS.len();
    let names: Vec<String> = SSVEP_CHANNELS.iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity((spec.freqs.len() + 1) * spec.trials_per_class);
    for _ in 0..spec.trials_per_class {
        for z in 0..=spec.freqs.len() {
            let mut x = gaussian(&mut rng, n, t) * spec.noise_std;
            if z > 0 {
                let f = spec.freqs[z - 1];
                let phase = rng.random_range(0.0..2.0 * PI);
                let phase2 = rng.random_range(0.0..2.0 * PI);
                for k in 0..t {
                    let s = k as f64 / spec.fs;
                    let v = (2.0 * PI * f * s + phase).sin() + 0.5 * (4.0 * PI * f * s + phase2).sin();
                    for (c, g) in SSVEP_GAINS.iter().enumerate() {
                        x[(c, k)] += spec.amplitude * g * v;
                    }
                }
            }
            out.push(Epoch::new(x, spec.fs, Some(z as u32), names.clone())?);
        }
    }
    Ok(out)
}
