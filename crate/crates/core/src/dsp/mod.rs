//! Epoch conditioning: band-pass filtering, decimation and the SSVEP filter bank.

mod butterworth;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use butterworth::{design_bandpass, Biquad, SosFilter};

/// One trial: `N` channels by `T` samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    data: DMatrix<f64>,
    fs: f64,
    label: Option<u32>,
    channels: Vec<String>,
}

impl Epoch {
    /// Builds an epoch. Empty `channels` gets default names `ch1..chN`.
    pub fn new(data: DMatrix<f64>, fs: f64, label: Option<u32>, channels: Vec<String>) -> Result<Self> {
        let (n, t) = data.shape();
        if n < 1 || t < 2 {
            return Err(Error::contract(format!(
                "epoch needs at least 1 channel and 2 samples, got {n}x{t}"
            )));
        }
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::contract(format!("invalid sampling rate {fs}")));
        }
        let channels = if channels.is_empty() {
            (1..=n).map(|i| format!("ch{i}")).collect()
        } else {
            channels
        };
        if channels.len() != n {
            return Err(Error::contract(format!(
                "{} channel names for {n} channels",
                channels.len()
            )));
        }
        Ok(Self { data, fs, label, channels })
    }

    pub fn from_rows(rows: &[Vec<f64>], fs: f64, label: Option<u32>) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::contract("ragged epoch rows"));
        }
        Self::new(DMatrix::from_fn(n, t, |i, j| rows[i][j]), fs, label, Vec::new())
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.label = label;
        self
    }

    /// Same metadata, new samples (the channel count must not change).
    pub fn with_data(&self, data: DMatrix<f64>, fs: f64) -> Result<Self> {
        if data.nrows() != self.n_channels() {
            return Err(Error::contract("channel count changed"));
        }
        Self::new(data, fs, self.label, self.channels.clone())
    }

    /// Subtracts each channel's mean.
    pub fn demeaned(mut self) -> Self {
        demean_rows(&mut self.data);
        self
    }

    /// Keeps samples `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples() {
            return Err(Error::contract(format!(
                "window [{start}, {}) exceeds {} samples",
                start + len,
                self.n_samples()
            )));
        }
        self.with_data(self.data.columns(start, len).into_owned(), self.fs)
    }
}

fn demean_rows(m: &mut DMatrix<f64>) {
    let t = m.ncols() as f64;
    for mut row in m.row_iter_mut() {
        let mean = row.iter().sum::<f64>() / t;
        row.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Band-pass settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub zero_phase: bool,
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self { low_hz, high_hz, order, zero_phase: true }
    }

    /// Motor imagery: 8–30 Hz, order 4.
    pub fn motor_imagery() -> Self {
        Self::new(8.0, 30.0, 4)
    }

    /// Event-related potentials: 1–16 Hz, order 4.
    pub fn erp() -> Self {
        Self::new(1.0, 16.0, 4)
    }

    pub fn causal(mut self) -> Self {
        self.zero_phase = false;
        self
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::contract("filter order must be >= 1"));
        }
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < fs / 2.0) {
            return Err(Error::contract(format!(
                "band [{}, {}] Hz invalid for sampling rate {fs} Hz (need 0 < low < high < {})",
                self.low_hz,
                self.high_hz,
                fs / 2.0
            )));
        }
        Ok(())
    }

    pub fn design(&self, fs: f64) -> Result<SosFilter> {
        self.validate(fs)?;
        Ok(design_bandpass(self.order, self.low_hz, self.high_hz, fs))
    }

    /// Reflection padding applied at each end in zero-phase mode.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.order + 1)
    }
}

/// Butterworth band-pass per channel, forward-backward when `zero_phase`;
/// the output is demeaned.
pub fn bandpass(e: &Epoch, spec: &BandSpec) -> Result<Epoch> {
    let filt = spec.design(e.fs())?;
    apply_filter(e, &filt, spec)
}

fn apply_filter(e: &Epoch, filt: &SosFilter, spec: &BandSpec) -> Result<Epoch> {
    let (n, t) = e.data().shape();
    let mut rows: Vec<Vec<f64>> = e.data().row_iter().map(|r| r.iter().copied().collect()).collect();
    if spec.zero_phase {
        filt.filtfilt_rows(&mut rows, spec.pad_len());
    } else {
        let firsts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        filt.filter_rows(&mut rows, &firsts);
    }
    let mut out = DMatrix::from_fn(n, t, |i, j| rows[i][j]);
    demean_rows(&mut out);
    e.with_data(out, e.fs())
}

/// Keeps every `fs / target_fs`-th sample. The input must already be
/// band-limited below `target_fs / 2`.
pub fn decimate(e: &Epoch, target_fs: f64) -> Result<Epoch> {
    if !(target_fs > 0.0) {
        return Err(Error::contract(format!("invalid target rate {target_fs}")));
    }
    let ratio = e.fs() / target_fs;
    let step = ratio.round();
    if step < 1.0 || (ratio - step).abs() > 1e-9 * ratio {
        return Err(Error::contract(format!(
            "sampling rate {} Hz is not an integer multiple of {target_fs} Hz",
            e.fs()
        )));
    }
    let step = step as usize;
    if step == 1 {
        return Ok(e.clone());
    }
    let keep = e.n_samples().div_ceil(step);
    if keep < 2 {
        return Err(Error::contract("decimation leaves fewer than 2 samples"));
    }
    let data = DMatrix::from_fn(e.n_channels(), keep, |i, j| e.data()[(i, j * step)]);
    e.with_data(data, target_fs)
}

/// SSVEP filter-bank defaults: 2 Hz wide bands, order 5.
pub const SSVEP_WIDTH_HZ: f64 = 2.0;
pub const SSVEP_ORDER: usize = 5;

/// One zero-phase band-passed copy of `e` per stimulation frequency, each
/// covering `[f - width/2, f + width/2]`.
pub fn ssvep_filter_bank(e: &Epoch, freqs: &[f64], width_hz: f64, order: usize) -> Result<Vec<Epoch>> {
    freqs
        .iter()
        .map(|&f| bandpass(e, &BandSpec::new(f - width_hz / 2.0, f + width_hz / 2.0, order)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_epoch(freq: f64, fs: f64, t: usize, amp: f64) -> Epoch {
        let data = DMatrix::from_fn(1, t, |_, j| amp * (2.0 * PI * freq * j as f64 / fs).sin());
        Epoch::new(data, fs, None, vec![]).unwrap()
    }

    fn interior_rms(e: &Epoch, margin: usize) -> f64 {
        let row = e.data().row(0);
        let t = row.len();
        let s: f64 = (margin..t - margin).map(|j| row[j] * row[j]).sum();
        (s / (t - 2 * margin) as f64).sqrt()
    }

    #[test]
    fn passband_sine_keeps_amplitude() {
        let fs = 256.0;
        let e = sine_epoch(15.0, fs, 1024, 1.0);
        let y = bandpass(&e, &BandSpec::new(8.0, 30.0, 4)).unwrap();
        let want = butterworth::analytic_magnitude(4, 8.0, 30.0, fs, 15.0).powi(2);
        let ratio = interior_rms(&y, 128) / interior_rms(&e, 128);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
        assert!((ratio - want).abs() < 0.01);
    }

    #[test]
    fn stopband_sine_is_attenuated_20db() {
        let fs = 256.0;
        let e = sine_epoch(2.0, fs, 1024, 1.0);
        let y = bandpass(&e, &BandSpec::new(8.0, 30.0, 4)).unwrap();
        let ratio = interior_rms(&y, 128) / interior_rms(&e, 128);
        assert!(20.0 * ratio.log10() <= -20.0, "ratio {ratio}");
    }

    #[test]
    fn zero_in_zero_out() {
        let e = Epoch::new(DMatrix::zeros(3, 100), 128.0, None, vec![]).unwrap();
        let y = bandpass(&e, &BandSpec::erp()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_demeaned() {
        let data = DMatrix::from_fn(2, 300, |i, j| 5.0 + i as f64 + ((j * 7 % 13) as f64).sin());
        let e = Epoch::new(data, 128.0, None, vec![]).unwrap();
        let y = bandpass(&e, &BandSpec::erp()).unwrap();
        for row in y.data().row_iter() {
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / 300.0).sqrt();
            assert!(row.iter().sum::<f64>().abs() <= 1e-6 * 300.0 * rms.max(1e-12));
        }
    }

    #[test]
    fn rejects_band_outside_nyquist() {
        let e = sine_epoch(10.0, 100.0, 200, 1.0);
        assert!(matches!(bandpass(&e, &BandSpec::new(8.0, 60.0, 4)), Err(Error::Contract(_))));
        assert!(matches!(bandpass(&e, &BandSpec::new(20.0, 10.0, 4)), Err(Error::Contract(_))));
        assert!(matches!(bandpass(&e, &BandSpec::new(0.0, 10.0, 4)), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let fs = 256.0;
        // Band-limited input: a sum of in-band sines.
        let t = 1024;
        let data = DMatrix::from_fn(1, t, |_, j| {
            let x = j as f64 / fs;
            (2.0 * PI * 12.0 * x).sin() + 0.5 * (2.0 * PI * 19.0 * x + 1.0).sin() + 0.3 * (2.0 * PI * 25.0 * x).cos()
        });
        let e = Epoch::new(data, fs, None, vec![]).unwrap();
        let y = bandpass(&e, &BandSpec::motor_imagery()).unwrap();
        let xr = e.data().row(0);
        let yr = y.data().row(0);
        let xcorr = |lag: i64| -> f64 {
            (200..(t - 200) as i64).map(|j| xr[j as usize] * yr[(j + lag) as usize]).sum()
        };
        let best = (-20..=20).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);

        // The causal path does lag.
        let yc = bandpass(&e, &BandSpec::motor_imagery().causal()).unwrap();
        let ycr = yc.data().row(0);
        let xcorr_c = |lag: i64| -> f64 {
            (200..(t - 200) as i64).map(|j| xr[j as usize] * ycr[(j + lag) as usize]).sum()
        };
        let best_c = (-20..=20).max_by(|&a, &b| xcorr_c(a).total_cmp(&xcorr_c(b))).unwrap();
        assert!(best_c > 0);
    }

    #[test]
    fn decimate_examples() {
        let e = Epoch::new(DMatrix::from_fn(2, 512, |i, j| (i * 1000 + j) as f64), 512.0, Some(1), vec![]).unwrap();
        let d = decimate(&e, 128.0).unwrap();
        assert_eq!(d.n_samples(), 128);
        assert_eq!(d.fs(), 128.0);
        assert_eq!(d.label(), Some(1));
        assert_eq!(d.data()[(1, 3)], 1012.0);

        assert_eq!(decimate(&e, 512.0).unwrap(), e);

        let c = Epoch::new(DMatrix::from_element(1, 64, 3.5), 256.0, None, vec![]).unwrap();
        assert!(decimate(&c, 64.0).unwrap().data().iter().all(|&v| v == 3.5));

        assert!(matches!(decimate(&e, 100.0), Err(Error::Contract(_))));
    }

    #[test]
    fn filter_bank_shapes() {
        let e = sine_epoch(15.0, 512.0, 1024, 1.0);
        let bank = ssvep_filter_bank(&e, &[12.0, 15.0, 20.0], SSVEP_WIDTH_HZ, SSVEP_ORDER).unwrap();
        assert_eq!(bank.len(), 3);
        assert!(ssvep_filter_bank(&e, &[], 2.0, 5).unwrap().is_empty());
    }

    #[test]
    fn filter_bank_isolates_stimulus_band() {
        let fs = 512.0;
        let e = sine_epoch(15.0, fs, 2048, 1.0);
        let bank = ssvep_filter_bank(&e, &[12.0, 15.0, 20.0], SSVEP_WIDTH_HZ, SSVEP_ORDER).unwrap();
        let var: Vec<f64> = bank.iter().map(|b| interior_rms(b, 512).powi(2)).collect();
        assert!(10.0 * (var[1] / var[0]).log10() >= 20.0);
        assert!(10.0 * (var[1] / var[2]).log10() >= 20.0);
    }

    #[test]
    fn epoch_validation() {
        assert!(Epoch::new(DMatrix::zeros(2, 1), 100.0, None, vec![]).is_err());
        assert!(Epoch::new(DMatrix::zeros(2, 4), 0.0, None, vec![]).is_err());
        assert!(Epoch::new(DMatrix::zeros(2, 4), 100.0, None, vec!["a".into()]).is_err());
        let e = Epoch::new(DMatrix::zeros(2, 4), 100.0, None, vec![]).unwrap();
        assert_eq!(e.channels(), &["ch1".to_string(), "ch2".to_string()]);
    }
}
