//! Recording files, training windows and the train/validation split.
//!
//! A recording payload is raw interleaved I,Q little-endian binary32 with no
//! header. Its metadata lives in a JSON sidecar at `<payload>.meta.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcs::McsTable;
use crate::phy::{self, IqBuffer, SignalConfig};
use crate::scalar::Scalar;
use crate::seed;

const BYTES_PER_SAMPLE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub mcs: u8,
    pub sinr_db: f64,
    pub file_index: u32,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
}

impl RecordingMeta {
    fn tuple_key(&self) -> (u8, u64) {
        (self.mcs, seed::f64_tag(self.sinr_db))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub mcs_values: Vec<u8>,
    pub sinr_grid_db: Vec<f64>,
    pub files_per_tuple: u32,
    pub samples_per_file: usize,
    pub window_len: usize,
    pub windows_per_recording: usize,
    pub val_files_per_tuple: u32,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            mcs_values: (8..=16).collect(),
            sinr_grid_db: (0..=20).map(f64::from).collect(),
            files_per_tuple: 10,
            samples_per_file: 523_776,
            window_len: 2048,
            windows_per_recording: 1000,
            val_files_per_tuple: 1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.mcs_values.is_empty() {
            return fail("mcs_values is empty".into());
        }
        if self.mcs_values.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "mcs_values must be strictly increasing: {:?}",
                self.mcs_values
            ));
        }
        if let Some(m) = self.mcs_values.iter().find(|&&m| u32::from(m) > crate::mcs::MAX_MCS_INDEX) {
            return fail(format!("MCS {m} outside 0..=31"));
        }
        if self.sinr_grid_db.is_empty() || self.sinr_grid_db.iter().any(|s| !s.is_finite()) {
            return fail("sinr_grid_db must be a non-empty list of finite values".into());
        }
        let mut tags: Vec<u64> = self.sinr_grid_db.iter().map(|&s| seed::f64_tag(s)).collect();
        tags.sort_unstable();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return fail("sinr_grid_db contains duplicates".into());
        }
        if self.window_len == 0 || self.window_len > self.samples_per_file {
            return fail(format!(
                "window_len {} must lie in 1..=samples_per_file ({})",
                self.window_len, self.samples_per_file
            ));
        }
        if self.windows_per_recording == 0 {
            return fail("windows_per_recording must be at least 1".into());
        }
        if self.val_files_per_tuple >= self.files_per_tuple {
            return fail(format!(
                "val_files_per_tuple {} must be below files_per_tuple {}",
                self.val_files_per_tuple, self.files_per_tuple
            ));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.mcs_values.len()
    }

    /// Class id of `mcs`: its position in `mcs_values` (mcs - 8 for the default set).
    pub fn label_of(&self, mcs: u8) -> Result<usize> {
        self.mcs_values
            .iter()
            .position(|&m| m == mcs)
            .ok_or_else(|| Error::Domain(format!("MCS {mcs} is not one of {:?}", self.mcs_values)))
    }

    pub fn mcs_of(&self, label: usize) -> Result<u8> {
        self.mcs_values.get(label).copied().ok_or_else(|| {
            Error::Domain(format!(
                "class {label} out of range for {} classes",
                self.n_classes()
            ))
        })
    }
}

/// One classifier input: channel 0 holds I, channel 1 holds Q.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleWindow<T> {
    /// Channel-major, `2 * window_len` values.
    pub data: Vec<T>,
    pub label: usize,
}

impl<T: Scalar> ExampleWindow<T> {
    pub fn window_len(&self) -> usize {
        self.data.len() / 2
    }

    /// Builds a window from complex samples, scaled to unit RMS over both channels.
    pub fn from_samples(samples: &[Complex32], label: usize) -> Self {
        let len = samples.len();
        let sum_sq: f64 = samples
            .iter()
            .map(|s| (s.re as f64).powi(2) + (s.im as f64).powi(2))
            .sum();
        let rms = (sum_sq / (2 * len) as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
        let mut data = vec![T::zero(); 2 * len];
        let (i_ch, q_ch) = data.split_at_mut(len);
        for ((s, i), q) in samples.iter().zip(i_ch).zip(q_ch) {
            *i = T::of(s.re as f64 * scale);
            *q = T::of(s.im as f64 * scale);
        }
        Self { data, label }
    }
}

pub fn sidecar_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Serialized payload bytes: interleaved I,Q as little-endian binary32.
pub fn payload_bytes(buffer: &IqBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(buffer.len() * BYTES_PER_SAMPLE);
    for s in buffer.samples() {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn write_recording(buffer: &IqBuffer, meta: &RecordingMeta, path: &Path) -> Result<()> {
    if buffer.len() != meta.n_samples {
        return Err(Error::Validation(format!(
            "buffer holds {} samples but metadata says {}",
            buffer.len(),
            meta.n_samples
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&payload_bytes(buffer))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::json(&side, e))?;
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_recording(path: &Path) -> Result<(IqBuffer, RecordingMeta)> {
    let side = sidecar_path(path);
    let meta_text = match std::fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::format(path, format!("missing sidecar {}", side.display())));
        }
        Err(e) => return Err(Error::io(&side, e)),
    };
    let meta: RecordingMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::format(&side, format!("bad metadata: {e}")))?;

    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() % BYTES_PER_SAMPLE != 0 {
        return Err(Error::format(
            path,
            format!("payload length {} is not a multiple of 8 bytes", bytes.len()),
        ));
    }
    let n = bytes.len() / BYTES_PER_SAMPLE;
    if n != meta.n_samples {
        return Err(Error::format(
            path,
            format!("payload holds {n} samples but the sidecar says {}", meta.n_samples),
        ));
    }
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let samples = (0..n)
        .map(|k| Complex32::new(f32_at(k * 8), f32_at(k * 8 + 4)))
        .collect();
    let buffer = IqBuffer::new(samples)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok((buffer, meta))
}

/// Seed of recording `file_index` of the `(mcs, sinr_db)` tuple.
pub fn recording_seed(master: u64, mcs: u8, sinr_db: f64, file_index: u32) -> u64 {
    seed::derive_seed(master, &[u64::from(mcs), seed::f64_tag(sinr_db), u64::from(file_index)])
}

/// Regenerates the samples described by `meta`: a unit-power baseband burst
/// at MCS `meta.mcs` (looked up in `table`) plus white noise at `meta.sinr_db`.
pub fn synthesize_recording(
    meta: &RecordingMeta,
    table: &McsTable,
    signal: &SignalConfig,
) -> Result<IqBuffer> {
    let entry = table.lookup(u32::from(meta.mcs))?;
    let clean = phy::generate_baseband(
        &entry,
        signal,
        meta.n_samples,
        seed::derive_seed(meta.seed, &[0x7478]),
    )?;
    phy::apply_awgn(&clean, meta.sinr_db, seed::derive_seed(meta.seed, &[0x6e6f_6973_65]))
}

/// Start offsets drawn for one recording, uniform over every full window.
pub fn window_offsets(len: usize, spec: &DatasetSpec, seed: u64) -> Result<Vec<usize>> {
    if len < spec.window_len {
        return Err(Error::Domain(format!(
            "recording of {len} samples is shorter than the window length {}",
            spec.window_len
        )));
    }
    let last = len - spec.window_len;
    let mut rng = seed::rng_for(seed, &[0x77_696e_646f_77]);
    Ok((0..spec.windows_per_recording)
        .map(|_| rng.random_range(0..=last))
        .collect())
}

pub fn extract_windows<T: Scalar>(
    rec: &IqBuffer,
    meta: &RecordingMeta,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<Vec<ExampleWindow<T>>> {
    let label = spec.label_of(meta.mcs)?;
    let offsets = window_offsets(rec.len(), spec, seed)?;
    Ok(offsets
        .into_iter()
        .map(|o| ExampleWindow::from_samples(&rec.samples()[o..o + spec.window_len], label))
        .collect())
}

/// Splits recordings by file index: per (mcs, sinr) tuple, the last
/// `val_files_per_tuple` indices go to validation.
pub fn build_splits(
    metas: &[RecordingMeta],
    spec: &DatasetSpec,
) -> Result<(Vec<RecordingMeta>, Vec<RecordingMeta>)> {
    let mut tuples: BTreeMap<(u8, u64), Vec<&RecordingMeta>> = BTreeMap::new();
    for m in metas {
        tuples.entry(m.tuple_key()).or_default().push(m);
    }
    let mut problems = Vec::new();
    for recs in tuples.values() {
        let mut idx: Vec<u32> = recs.iter().map(|m| m.file_index).collect();
        idx.sort_unstable();
        let expected: Vec<u32> = (0..spec.files_per_tuple).collect();
        if idx != expected {
            problems.push(format!(
                "(mcs {}, sinr {} dB) has file indices {:?}, expected 0..{}",
                recs[0].mcs, recs[0].sinr_db, idx, spec.files_per_tuple
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    let first_val = spec.files_per_tuple - spec.val_files_per_tuple;
    let (val, train): (Vec<RecordingMeta>, Vec<RecordingMeta>) =
        metas.iter().cloned().partition(|m| m.file_index >= first_val);
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(mcs: u8, sinr: f64, file_index: u32, n: usize) -> RecordingMeta {
        RecordingMeta {
            mcs,
            sinr_db: sinr,
            file_index,
            seed: 0,
            sample_rate_hz: 5e6,
            n_samples: n,
        }
    }

    fn ramp(n: usize) -> IqBuffer {
        IqBuffer::new((0..n).map(|k| Complex32::new(k as f32, -(k as f32))).collect()).unwrap()
    }

    #[test]
    fn single_sample_payload_layout() {
        let b = IqBuffer::new(vec![Complex32::new(1.0, 2.0)]).unwrap();
        let mut expect = 1.0f32.to_le_bytes().to_vec();
        expect.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(payload_bytes(&b), expect);
    }

    #[test]
    fn ten_byte_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.iq");
        write_recording(&ramp(1), &meta(8, 0.0, 0, 1), &p).unwrap();
        std::fs::write(&p, [0u8; 10]).unwrap();
        assert!(matches!(read_recording(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_sidecar_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.iq");
        std::fs::write(&p, [0u8; 8]).unwrap();
        assert!(matches!(read_recording(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn nan_payload_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.iq");
        write_recording(&ramp(2), &meta(8, 0.0, 0, 2), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_recording(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn write_rejects_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.iq");
        assert!(write_recording(&ramp(3), &meta(8, 0.0, 0, 4), &p).is_err());
    }

    #[test]
    fn sidecar_keys_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.iq");
        write_recording(&ramp(2), &meta(9, 3.0, 1, 2), &p).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["file_index", "mcs", "n_samples", "sample_rate_hz", "seed", "sinr_db"]
        );
    }

    #[test]
    fn windows_of_exact_length_recording_start_at_zero() {
        let spec = DatasetSpec {
            samples_per_file: 2048,
            windows_per_recording: 5,
            ..DatasetSpec::default()
        };
        let rec = ramp(2048);
        let w = extract_windows::<f32>(&rec, &meta(8, 0.0, 0, 2048), &spec, 3).unwrap();
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|x| x.data == w[0].data));
        assert_eq!(window_offsets(2048, &spec, 3).unwrap(), vec![0; 5]);
    }

    #[test]
    fn short_recording_is_domain_error() {
        let spec = DatasetSpec::default();
        let r = extract_windows::<f32>(&ramp(100), &meta(8, 0.0, 0, 100), &spec, 1);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn window_labels_and_normalization() {
        let spec = DatasetSpec {
            windows_per_recording: 7,
            window_len: 64,
            ..DatasetSpec::default()
        };
        let rec = ramp(1000);
        let w = extract_windows::<f64>(&rec, &meta(13, 0.0, 0, 1000), &spec, 9).unwrap();
        for x in &w {
            assert_eq!(x.label, 5);
            assert_eq!(x.data.len(), 128);
            let ms: f64 = x.data.iter().map(|v| v * v).sum::<f64>() / 128.0;
            assert!((ms - 1.0).abs() < 1e-12);
        }
        let again = extract_windows::<f64>(&rec, &meta(13, 0.0, 0, 1000), &spec, 9).unwrap();
        assert_eq!(w, again);
    }

    #[test]
    fn label_bijection() {
        let spec = DatasetSpec::default();
        for mcs in 8..=16u8 {
            let l = spec.label_of(mcs).unwrap();
            assert_eq!(l, usize::from(mcs - 8));
            assert_eq!(spec.mcs_of(l).unwrap(), mcs);
        }
        assert!(spec.label_of(7).is_err());
        assert!(spec.mcs_of(9).is_err());
    }

    #[test]
    fn default_split_counts() {
        let spec = DatasetSpec::default();
        let mut metas = Vec::new();
        for &m in &spec.mcs_values {
            for &s in &spec.sinr_grid_db {
                for f in 0..spec.files_per_tuple {
                    metas.push(meta(m, s, f, 10));
                }
            }
        }
        let (train, val) = build_splits(&metas, &spec).unwrap();
        assert_eq!((train.len(), val.len()), (1701, 189));
        assert!(val.iter().all(|m| m.file_index == 9));
        assert!(train.iter().all(|m| !val.contains(m)));
        assert_eq!(train.len() + val.len(), metas.len());
    }

    #[test]
    fn missing_file_names_tuple() {
        let spec = DatasetSpec::default();
        let metas: Vec<_> = (0..9).map(|f| meta(11, 7.0, f, 10)).collect();
        match build_splits(&metas, &spec) {
            Err(Error::Validation(m)) => assert!(m.contains("mcs 11") && m.contains("sinr 7")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_file_index_rejected() {
        let spec = DatasetSpec { files_per_tuple: 2, ..DatasetSpec::default() };
        let metas = vec![meta(8, 0.0, 0, 1), meta(8, 0.0, 0, 1)];
        assert!(build_splits(&metas, &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec::default().validate().is_ok());
        let bad = DatasetSpec { val_files_per_tuple: 10, ..DatasetSpec::default() };
        assert!(bad.validate().is_err());
        let bad = DatasetSpec { window_len: 600_000, ..DatasetSpec::default() };
        assert!(bad.validate().is_err());
        let bad = DatasetSpec { mcs_values: vec![9, 8], ..DatasetSpec::default() };
        assert!(bad.validate().is_err());
    }
}
