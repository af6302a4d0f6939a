//! Synthetic uplink baseband generation and the AWGN channel.
//!
//! A recording is built on a 6-resource-block grid: random payload bits are
//! mapped to the constellation of the MCS entry, optionally DFT-spread
//! (transform precoding, as on the LTE uplink), placed on the occupied
//! subcarriers, taken through an inverse FFT with cyclic prefix, and finally
//! resampled from the grid rate (`fft_size * subcarrier_spacing_hz`) to the
//! capture rate. The resampler is an FFT interpolator whose passband is the
//! occupied channel, so it doubles as the channel filter.

use num_complex::{Complex, Complex32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcs::McsEntry;

const SUBCARRIERS_PER_RB: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub sample_rate_hz: f64,
    pub occupied_bandwidth_hz: f64,
    pub n_resource_blocks: usize,
    pub subcarrier_spacing_hz: f64,
    pub fft_size: usize,
    pub cyclic_prefix_len: usize,
    /// DFT-spread the constellation symbols before subcarrier mapping.
    pub transform_precoding: bool,
    pub seed: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 5_000_000.0,
            occupied_bandwidth_hz: 1_400_000.0,
            n_resource_blocks: 6,
            subcarrier_spacing_hz: 15_000.0,
            fft_size: 128,
            cyclic_prefix_len: 9,
            transform_precoding: true,
            seed: 1,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn whole_hz(v: f64, what: &str) -> Result<u64> {
    if v.is_finite() && v > 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as u64)
    } else {
        Err(Error::Validation(format!(
            "{what} must be a positive whole number of hertz, got {v}"
        )))
    }
}

impl SignalConfig {
    pub fn n_subcarriers(&self) -> usize {
        self.n_resource_blocks * SUBCARRIERS_PER_RB
    }

    pub fn grid_rate_hz(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        let fs = whole_hz(self.sample_rate_hz, "sample_rate_hz")?;
        whole_hz(self.subcarrier_spacing_hz, "subcarrier_spacing_hz")?;
        whole_hz(self.grid_rate_hz(), "fft_size * subcarrier_spacing_hz")?;
        if !(self.occupied_bandwidth_hz > 0.0) {
            return Err(Error::Validation("occupied_bandwidth_hz must be positive".into()));
        }
        if self.n_resource_blocks == 0 {
            return Err(Error::Validation("n_resource_blocks must be at least 1".into()));
        }
        if self.grid_rate_hz() < self.occupied_bandwidth_hz {
            return Err(Error::Validation(format!(
                "fft_size * subcarrier_spacing_hz = {} Hz does not cover the occupied bandwidth {} Hz",
                self.grid_rate_hz(),
                self.occupied_bandwidth_hz
            )));
        }
        if self.occupied_bandwidth_hz >= fs as f64 {
            return Err(Error::Validation(format!(
                "occupied bandwidth {} Hz must be below the sample rate {fs} Hz",
                self.occupied_bandwidth_hz
            )));
        }
        if self.n_subcarriers() > self.fft_size {
            return Err(Error::Validation(format!(
                "{} subcarriers do not fit an FFT of size {}",
                self.n_subcarriers(),
                self.fft_size
            )));
        }
        let occupied_hz = self.n_subcarriers() as f64 * self.subcarrier_spacing_hz;
        if occupied_hz > self.occupied_bandwidth_hz {
            return Err(Error::Validation(format!(
                "{} resource blocks span {occupied_hz} Hz, wider than the occupied bandwidth",
                self.n_resource_blocks
            )));
        }
        Ok(())
    }

    /// Upsampling and downsampling factors from the grid rate to the sample rate.
    pub fn resample_ratio(&self) -> Result<(usize, usize)> {
        let fs = whole_hz(self.sample_rate_hz, "sample_rate_hz")?;
        let grid = whole_hz(self.grid_rate_hz(), "fft_size * subcarrier_spacing_hz")?;
        let g = gcd(fs, grid);
        Ok(((fs / g) as usize, (grid / g) as usize))
    }
}

/// Complex baseband samples with finite single-precision components.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex32>,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex32>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Validation(format!(
                "sample {i} is not finite: {}",
                samples[i]
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex32> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Mean of |s|^2 over the buffer, accumulated in double precision.
pub fn measure_power(signal: &IqBuffer) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::Domain("cannot measure the power of an empty buffer".into()));
    }
    let sum: f64 = signal
        .samples()
        .iter()
        .map(|s| {
            let (re, im) = (s.re as f64, s.im as f64);
            re * re + im * im
        })
        .sum();
    Ok(sum / signal.len() as f64)
}

/// Maps one axis worth of bits to a Gray-coded PAM level: the low bit is the
/// sign, the rest select the magnitude.
fn pam_level(bits: u32) -> f64 {
    let sign = if bits & 1 == 0 { 1.0 } else { -1.0 };
    let mut gray = bits >> 1;
    let mut idx = gray;
    while gray > 0 {
        gray >>= 1;
        idx ^= gray;
    }
    sign * (2 * idx + 1) as f64
}

/// Unit-energy square QAM symbol for `modulation_order` bits.
fn qam_symbol(rng: &mut ChaCha8Rng, modulation_order: u8) -> Complex<f64> {
    let per_axis = u32::from(modulation_order / 2);
    let mask = (1u32 << per_axis) - 1;
    let i = pam_level(rng.random::<u32>() & mask);
    let q = pam_level(rng.random::<u32>() & mask);
    let energy = 2.0 * ((1u64 << (2 * per_axis)) - 1) as f64 / 3.0;
    Complex::new(i, q) / energy.sqrt()
}

/// Synthesizes `n_samples` of unit-power baseband for one MCS.
///
/// The code rate does not change the waveform: the payload is uncoded random
/// bits, so only the constellation order is observable.
pub fn generate_baseband(
    entry: &McsEntry,
    cfg: &SignalConfig,
    n_samples: usize,
    seed: u64,
) -> Result<IqBuffer> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be positive".into()));
    }
    if !matches!(entry.modulation_order, 2 | 4 | 6) {
        return Err(Error::Domain(format!(
            "unsupported modulation order {}",
            entry.modulation_order
        )));
    }
    cfg.validate()?;
    let (up, down) = cfg.resample_ratio()?;

    // Grid-rate length: a multiple of `down` so the output length is integral.
    let grid_len = down * n_samples.div_ceil(up);
    let out_len = grid_len / down * up;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planner = FftPlanner::<f64>::new();
    let n_sc = cfg.n_subcarriers();
    let fft = cfg.fft_size;
    let cp = cfg.cyclic_prefix_len;
    let ifft = planner.plan_fft_inverse(fft);
    let spread = planner.plan_fft_forward(n_sc);
    let spread_scale = 1.0 / (n_sc as f64).sqrt();
    let ifft_scale = 1.0 / (fft as f64).sqrt();

    let mut grid_signal: Vec<Complex<f64>> = Vec::with_capacity(grid_len + fft + cp);
    let mut data = vec![Complex::new(0.0, 0.0); n_sc];
    let mut bins = vec![Complex::new(0.0, 0.0); fft];
    let half = (n_sc / 2) as isize;
    while grid_signal.len() < grid_len {
        for d in data.iter_mut() {
            *d = qam_symbol(&mut rng, entry.modulation_order);
        }
        if cfg.transform_precoding {
            spread.process(&mut data);
            data.iter_mut().for_each(|d| *d *= spread_scale);
        }
        bins.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        for (u, d) in data.iter().enumerate() {
            let k = u as isize - half;
            bins[k.rem_euclid(fft as isize) as usize] = *d;
        }
        ifft.process(&mut bins);
        grid_signal.extend(bins[fft - cp..].iter().map(|b| b * ifft_scale));
        grid_signal.extend(bins.iter().map(|b| b * ifft_scale));
    }
    grid_signal.truncate(grid_len);

    // FFT interpolation with a brick-wall passband at half the occupied bandwidth.
    planner.plan_fft_forward(grid_len).process(&mut grid_signal);
    let bin_hz = cfg.grid_rate_hz() / grid_len as f64;
    let cutoff = cfg.occupied_bandwidth_hz / 2.0;
    let mut spectrum = vec![Complex::new(0.0, 0.0); out_len];
    for (k, x) in grid_signal.iter().enumerate() {
        let signed = if k <= grid_len / 2 { k as isize } else { k as isize - grid_len as isize };
        if (signed as f64 * bin_hz).abs() <= cutoff {
            spectrum[signed.rem_euclid(out_len as isize) as usize] = *x;
        }
    }
    planner.plan_fft_inverse(out_len).process(&mut spectrum);
    spectrum.truncate(n_samples);

    let power = spectrum.iter().map(|s| s.norm_sqr()).sum::<f64>() / n_samples as f64;
    let scale = if power > 0.0 { 1.0 / power.sqrt() } else { 0.0 };
    let samples = spectrum
        .iter()
        .map(|s| Complex32::new((s.re * scale) as f32, (s.im * scale) as f32))
        .collect();
    IqBuffer::new(samples)
}

/// Adds circularly-symmetric Gaussian noise at `sinr_db` relative to the
/// measured power of `signal`. `f64::INFINITY` disables the noise.
pub fn apply_awgn(signal: &IqBuffer, sinr_db: f64, seed: u64) -> Result<IqBuffer> {
    let p_sig = measure_power(signal)?;
    if sinr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !sinr_db.is_finite() {
        return Err(Error::Domain(format!("SINR must be finite or +inf, got {sinr_db}")));
    }
    let variance = p_sig * 10f64.powf(-sinr_db / 10.0);
    let normal = Normal::new(0.0, (variance / 2.0).sqrt())
        .map_err(|e| Error::Domain(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = signal
        .samples()
        .iter()
        .map(|s| {
            let re = s.re as f64 + normal.sample(&mut rng);
            let im = s.im as f64 + normal.sample(&mut rng);
            Complex32::new(re as f32, im as f32)
        })
        .collect();
    IqBuffer::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcs::mcs_table_lookup;

    fn buf(v: &[(f32, f32)]) -> IqBuffer {
        IqBuffer::new(v.iter().map(|&(r, i)| Complex32::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn power_of_constant_ones() {
        assert_eq!(measure_power(&buf(&[(1.0, 0.0); 4])).unwrap(), 1.0);
    }

    #[test]
    fn power_of_zeros() {
        assert_eq!(measure_power(&buf(&[(0.0, 0.0); 3])).unwrap(), 0.0);
    }

    #[test]
    fn power_hand_sum() {
        // (1 + 9) / 2
        assert_eq!(measure_power(&buf(&[(1.0, 0.0), (0.0, 3.0)])).unwrap(), 5.0);
    }

    #[test]
    fn power_of_empty_buffer_fails() {
        assert!(matches!(measure_power(&buf(&[])), Err(Error::Domain(_))));
    }

    #[test]
    fn iq_buffer_rejects_nan() {
        assert!(IqBuffer::new(vec![Complex32::new(f32::NAN, 0.0)]).is_err());
        assert!(IqBuffer::new(vec![Complex32::new(0.0, f32::INFINITY)]).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SignalConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.resample_ratio().unwrap(), (125, 48));
        assert_eq!(cfg.n_subcarriers(), 72);
    }

    #[test]
    fn config_violations() {
        let mut cfg = SignalConfig { fft_size: 64, ..SignalConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SignalConfig { occupied_bandwidth_hz: 6e6, ..SignalConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SignalConfig { n_resource_blocks: 11, ..SignalConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pam_levels_cover_constellation() {
        let mut levels: Vec<i64> = (0..4).map(|b| pam_level(b) as i64).collect();
        levels.sort();
        assert_eq!(levels, vec![-3, -1, 1, 3]);
        let mut levels: Vec<i64> = (0..8).map(|b| pam_level(b) as i64).collect();
        levels.sort();
        assert_eq!(levels, vec![-7, -5, -3, -1, 1, 3, 5, 7]);
    }

    #[test]
    fn qam_symbols_have_unit_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in [2u8, 4, 6] {
            let n = 40_000;
            let e: f64 = (0..n).map(|_| qam_symbol(&mut rng, order).norm_sqr()).sum::<f64>() / n as f64;
            assert!((e - 1.0).abs() < 0.03, "order {order}: {e}");
        }
    }

    #[test]
    fn requested_length_and_unit_power() {
        let cfg = SignalConfig::default();
        for (mcs, n) in [(8, 2048), (16, 5000), (12, 1)] {
            let entry = mcs_table_lookup(mcs).unwrap();
            let b = generate_baseband(&entry, &cfg, n, 11).unwrap();
            assert_eq!(b.len(), n);
            if n > 1 {
                assert!((measure_power(&b).unwrap() - 1.0).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let entry = mcs_table_lookup(8).unwrap();
        assert!(generate_baseband(&entry, &SignalConfig::default(), 0, 1).is_err());
    }

    #[test]
    fn awgn_infinite_sinr_is_identity() {
        let entry = mcs_table_lookup(9).unwrap();
        let b = generate_baseband(&entry, &SignalConfig::default(), 1000, 5).unwrap();
        assert_eq!(apply_awgn(&b, f64::INFINITY, 9).unwrap(), b);
    }

    #[test]
    fn awgn_rejects_nan_and_empty() {
        let b = buf(&[(1.0, 0.0)]);
        assert!(apply_awgn(&b, f64::NAN, 1).is_err());
        assert!(apply_awgn(&buf(&[]), 3.0, 1).is_err());
    }

    #[test]
    fn awgn_zero_db_on_unit_power() {
        let b = buf(&vec![(1.0, 0.0); 200_000]);
        let y = apply_awgn(&b, 0.0, 4).unwrap();
        let noise: Vec<Complex32> = y.samples().iter().zip(b.samples()).map(|(a, s)| a - s).collect();
        let var = measure_power(&IqBuffer::new(noise).unwrap()).unwrap();
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }
}
