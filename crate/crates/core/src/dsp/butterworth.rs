//! Butterworth band-pass design as cascaded second-order sections.
//!
//! An order-`n` low-pass prototype is shifted to a band-pass (doubling the
//! pole count), mapped to the z-plane with the bilinear transform after
//! frequency pre-warping, and grouped into `n` biquads that each carry the
//! zero pair `{+1, -1}`.

use std::f64::consts::PI;

use num_complex::Complex64;

/// One biquad `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Steady-state state vector for a unit step input (transposed direct form II).
    fn step_state(&self) -> [f64; 2] {
        // With x ≡ 1 and y ≡ G: s1 = b2 - a2·G, s0 = b1 - a1·G + s1.
        let [_, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let g = self.dc_gain();
        let s1 = b2 - a2 * g;
        [b1 - a1 * g + s1, s1]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Cascade of biquads with a designed pass band.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

/// Designs an order-`order` Butterworth band-pass for `[low_hz, high_hz]` at
/// sampling rate `fs`. Callers validate `0 < low < high < fs/2` and `order ≥ 1`.
pub fn design_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> SosFilter {
    let k = 2.0 * fs;
    let w_low = k * (PI * low_hz / fs).tan();
    let w_high = k * (PI * high_hz / fs).tan();
    let bw = w_high - w_low;
    let w0_sq = w_low * w_high;

    // Analog prototype poles in the upper half plane plus the real pole for odd orders.
    let n = order as f64;
    let mut sections = Vec::with_capacity(order);
    let mut push_pair = |s1: Complex64, s2: Complex64| {
        let z1 = (k + s1) / (k - s1);
        let z2 = (k + s2) / (k - s2);
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(z1 + z2).re, (z1 * z2).re],
        });
    };
    for m in 0..order / 2 {
        let angle = PI * (2.0 * m as f64 + 1.0 + n) / (2.0 * n);
        let p = Complex64::from_polar(1.0, angle);
        // s² - p·bw·s + w0² = 0 splits each prototype pole into two band-pass poles.
        let half = p * bw * 0.5;
        let disc = (half * half - w0_sq).sqrt();
        let r1 = half + disc;
        let r2 = half - disc;
        push_pair(r1, r1.conj());
        push_pair(r2, r2.conj());
    }
    if order % 2 == 1 {
        let half = Complex64::new(-bw * 0.5, 0.0);
        let disc = (half * half - w0_sq).sqrt();
        push_pair(half + disc, half - disc);
    }

    let mut filter = SosFilter { sections };
    // Unit gain at the digital image of the analog centre frequency.
    let centre = 2.0 * (w0_sq.sqrt() / k).atan();
    let gain = filter.response(centre).norm();
    let per_section = gain.powf(-1.0 / order as f64);
    for s in &mut filter.sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    filter
}

impl SosFilter {
    /// Complex response at normalised angular frequency `omega` (radians/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -omega);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    /// Magnitude response at `freq_hz` for sampling rate `fs`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(2.0 * PI * freq_hz / fs).norm()
    }

    /// Per-section initial states giving a steady-state response to a constant input of 1.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let st = s.step_state();
                let out = [st[0] * scale, st[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Causal filtering. `init` is the input level assumed before the first sample.
    pub fn filter(&self, x: &[f64], init: Option<f64>) -> Vec<f64> {
        let mut rows = [x.to_vec()];
        self.filter_rows(&mut rows, &[init.unwrap_or(0.0)]);
        let [y] = rows;
        y
    }

    /// Causal filtering of equal-length rows in place, `levels[r]` being the
    /// input level assumed before row `r` starts. Rows advance in lockstep
    /// (sample-major scratch layout) so their recursions overlap; each row's
    /// arithmetic is that of `filter`.
    pub(crate) fn filter_rows(&self, rows: &mut [Vec<f64>], levels: &[f64]) {
        let n = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        debug_assert!(rows.iter().all(|r| r.len() == len));
        let mut buf = vec![0.0; n * len];
        for (r, row) in rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                buf[k * n + r] = *v;
            }
        }
        let mut s0 = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        for (s, unit) in self.sections.iter().zip(self.step_states()) {
            for r in 0..n {
                s0[r] = unit[0] * levels[r];
                s1[r] = unit[1] * levels[r];
            }
            for frame in buf.chunks_exact_mut(n.max(1)) {
                for ((v, st0), st1) in frame.iter_mut().zip(s0.iter_mut()).zip(s1.iter_mut()) {
                    let input = *v;
                    let out = s.b[0] * input + *st0;
                    *st0 = s.b[1] * input - s.a[0] * out + *st1;
                    *st1 = s.b[2] * input - s.a[1] * out;
                    *v = out;
                }
            }
        }
        for (r, row) in rows.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = buf[k * n + r];
            }
        }
    }

    /// Forward-backward filtering with odd reflection padding of `pad` samples
    /// at each end; zero phase, squared magnitude.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let mut rows = [x.to_vec()];
        self.filtfilt_rows(&mut rows, pad);
        let [y] = rows;
        y
    }

    /// `filtfilt` applied to each of several equal-length rows.
    pub(crate) fn filtfilt_rows(&self, rows: &mut [Vec<f64>], pad: usize) {
        let len = rows.first().map_or(0, Vec::len);
        if len == 0 {
            return;
        }
        let pad = pad.min(len - 1);
        let mut ext: Vec<Vec<f64>> = rows
            .iter()
            .map(|x| {
                let mut e = Vec::with_capacity(len + 2 * pad);
                for i in (1..=pad).rev() {
                    e.push(2.0 * x[0] - x[i]);
                }
                e.extend_from_slice(x);
                for i in 1..=pad {
                    e.push(2.0 * x[len - 1] - x[len - 1 - i]);
                }
                e
            })
            .collect();
        let firsts: Vec<f64> = ext.iter().map(|e| e[0]).collect();
        self.filter_rows(&mut ext, &firsts);
        ext.iter_mut().for_each(|e| e.reverse());
        let firsts: Vec<f64> = ext.iter().map(|e| e[0]).collect();
        self.filter_rows(&mut ext, &firsts);
        for (row, e) in rows.iter_mut().zip(ext.iter_mut()) {
            e.reverse();
            row.copy_from_slice(&e[pad..pad + len]);
        }
    }
}

/// Magnitude of the analog Butterworth band-pass prototype evaluated at the
/// pre-warped frequency; the digital design must match it exactly.
#[cfg(test)]
pub(crate) fn analytic_magnitude(order: usize, low_hz: f64, high_hz: f64, fs: f64, f: f64) -> f64 {
    let warp = |x: f64| 2.0 * fs * (PI * x / fs).tan();
    let (wl, wh, w) = (warp(low_hz), warp(high_hz), warp(f));
    let ratio = (w * w - wl * wh) / (w * (wh - wl));
    1.0 / (1.0 + ratio.abs().powi(2 * order as i32)).sqrt()
}
