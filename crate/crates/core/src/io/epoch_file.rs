//! Epoch file: one line of compact JSON header terminated by `\n`, then the
//! samples as little-endian `f32`, trial-major then channel-major.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsp::Epoch;
use crate::error::{Error, Result};
use crate::features::Modality;

pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochHeader {
    pub version: u32,
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs_hz: f64,
    pub channel_names: Vec<String>,
    /// One per trial; `-1` marks an unlabelled trial.
    pub labels: Vec<i64>,
    pub modality: Option<Modality>,
}

impl EpochHeader {
    fn payload_len(&self) -> Result<usize> {
        self.n_trials
            .checked_mul(self.n_channels)
            .and_then(|v| v.checked_mul(self.n_samples))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::parse("n_trials", "payload size overflows"))
    }

    fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::parse("version", format!("unsupported version {}", self.version)));
        }
        if self.labels.len() != self.n_trials {
            return Err(Error::parse(
                "labels",
                format!("{} labels for {} trials", self.labels.len(), self.n_trials),
            ));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l < -1 || l > u32::MAX as i64) {
            return Err(Error::parse("labels", format!("label {bad} is neither -1 nor a class id")));
        }
        if self.n_trials > 0 {
            if self.channel_names.len() != self.n_channels {
                return Err(Error::parse(
                    "channel_names",
                    format!("{} names for {} channels", self.channel_names.len(), self.n_channels),
                ));
            }
            if self.n_channels == 0 {
                return Err(Error::parse("n_channels", "must be >= 1"));
            }
            if self.n_samples < 2 {
                return Err(Error::parse("n_samples", "must be >= 2"));
            }
            if !(self.fs_hz > 0.0) || !self.fs_hz.is_finite() {
                return Err(Error::parse("fs_hz", format!("invalid sampling rate {}", self.fs_hz)));
            }
        }
        Ok(())
    }
}

/// Contents of an epoch file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochFile {
    pub modality: Option<Modality>,
    pub epochs: Vec<Epoch>,
}

impl EpochFile {
    pub fn new(epochs: Vec<Epoch>, modality: Option<Modality>) -> Self {
        Self { modality, epochs }
    }

    fn header(&self) -> Result<EpochHeader> {
        let (n, t, fs, names) = match self.epochs.first() {
            Some(e) => (e.n_channels(), e.n_samples(), e.fs(), e.channels().to_vec()),
            None => (0, 0, 0.0, Vec::new()),
        };
        for (i, e) in self.epochs.iter().enumerate() {
            if e.n_channels() != n || e.n_samples() != t || e.fs() != fs || e.channels() != names {
                return Err(Error::contract(format!(
                    "trial {i} differs from trial 0 in shape, rate or channel names"
                )));
            }
        }
        Ok(EpochHeader {
            version: FORMAT_VERSION,
            n_trials: self.epochs.len(),
            n_channels: n,
            n_samples: t,
            fs_hz: fs,
            channel_names: names,
            labels: self.epochs.iter().map(|e| e.label().map_or(-1, i64::from)).collect(),
            modality: self.modality,
        })
    }

    /// Serialises to bytes. Samples are rounded to `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = self.header()?;
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        out.reserve(header.payload_len()?);
        for e in &self.epochs {
            for r in 0..e.n_channels() {
                for v in e.data().row(r).iter() {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut line = Vec::new();
        (&mut reader).take(MAX_HEADER_BYTES).read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::parse("header", "missing newline-terminated JSON header"));
        }
        line.pop();
        let header: EpochHeader =
            serde_json::from_slice(&line).map_err(|e| Error::parse("header", e.to_string()))?;
        header.validate()?;

        let want = header.payload_len()?;
        let mut payload = Vec::with_capacity(want);
        reader.read_to_end(&mut payload)?;
        if payload.len() < want {
            return Err(Error::parse(
                "payload",
                format!("truncated: {} bytes for n_trials={} (need {want})", payload.len(), header.n_trials),
            ));
        }
        if payload.len() > want {
            return Err(Error::parse(
                "payload",
                format!("{} trailing bytes beyond n_trials={}", payload.len() - want, header.n_trials),
            ));
        }

        let (n, t) = (header.n_channels, header.n_samples);
        let mut values = payload
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        let mut epochs = Vec::with_capacity(header.n_trials);
        for &label in &header.labels {
            let data = DMatrix::from_row_iterator(n, t, values.by_ref().take(n * t));
            let label = (label >= 0).then_some(label as u32);
            epochs.push(Epoch::new(data, header.fs_hz, label, header.channel_names.clone())?);
        }
        Ok(Self { modality: header.modality, epochs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_reader(fs::File::open(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

pub fn read_epochs(path: &Path) -> Result<Vec<Epoch>> {
    Ok(EpochFile::read(path)?.epochs)
}

pub fn write_epochs(path: &Path, epochs: &[Epoch], modality: Option<Modality>) -> Result<()> {
    EpochFile::new(epochs.to_vec(), modality).write(path)
}

/// Writes to a sibling temporary file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::contract(format!("`{}` is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_epoch(rng: &mut ChaCha8Rng, label: Option<u32>) -> Epoch {
        let data = DMatrix::from_fn(3, 17, |_, _| f64::from(rng.random::<f32>() - 0.5));
        Epoch::new(data, 256.0, label, vec!["Fz".into(), "Cz".into(), "Pz".into()]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let file = EpochFile::new(
            vec![f32_epoch(&mut rng, Some(1)), f32_epoch(&mut rng, None), f32_epoch(&mut rng, Some(0))],
            Some(Modality::P300),
        );
        let bytes = file.to_bytes().unwrap();
        let back = EpochFile::from_reader(bytes.as_slice()).unwrap();
        assert_eq!(back, file);
        for (a, b) in back.epochs.iter().zip(&file.epochs) {
            assert!(a.data().iter().zip(b.data().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn layout_is_trial_then_channel_major() {
        let e = Epoch::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], 10.0, Some(2)).unwrap();
        let bytes = EpochFile::new(vec![e], None).to_bytes().unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let payload = &bytes[nl + 1..];
        assert_eq!(payload.len(), 16);
        let vals: Vec<f32> = payload.chunks(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["labels"], serde_json::json!([2]));
        assert_eq!(header["modality"], serde_json::Value::Null);
    }

    #[test]
    fn truncated_payload_names_the_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let two = EpochFile::new(vec![f32_epoch(&mut rng, Some(1)), f32_epoch(&mut rng, Some(1))], None);
        let bytes = two.to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 3 * 17 * 4];
        match EpochFile::from_reader(cut) {
            Err(Error::Parse { field, message }) => {
                assert_eq!(field, "payload");
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_is_valid() {
        let bytes = EpochFile::new(Vec::new(), Some(Modality::Mi)).to_bytes().unwrap();
        let back = EpochFile::from_reader(bytes.as_slice()).unwrap();
        assert!(back.epochs.is_empty());
        assert_eq!(back.modality, Some(Modality::Mi));
    }

    #[test]
    fn malformed_headers_are_rejected() {
        let cases: [(&[u8], &str); 4] = [
            (b"not json\n", "header"),
            (b"{\"version\":1}", "header"),
            (
                b"{\"version\":1,\"n_trials\":1,\"n_channels\":1,\"n_samples\":2,\"fs_hz\":1.0,\"channel_names\":[\"a\"],\"labels\":[],\"modality\":null}\n",
                "labels",
            ),
            (
                b"{\"version\":9,\"n_trials\":0,\"n_channels\":0,\"n_samples\":0,\"fs_hz\":0.0,\"channel_names\":[],\"labels\":[],\"modality\":null}\n",
                "version",
            ),
        ];
        for (bytes, want) in cases {
            match EpochFile::from_reader(bytes) {
                Err(Error::Parse { field, .. }) => assert_eq!(field, want),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn inconsistent_epochs_cannot_be_written() {
        let a = Epoch::from_rows(&[vec![1.0, 2.0]], 10.0, None).unwrap();
        let b = Epoch::from_rows(&[vec![1.0, 2.0, 3.0]], 10.0, None).unwrap();
        assert!(EpochFile::new(vec![a, b], None).to_bytes().is_err());
    }
}
