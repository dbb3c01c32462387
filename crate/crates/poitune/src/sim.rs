//! Synthetic power-trace generator for first-round AES Sbox leakage.
//!
//! Traces follow the standard first-order model: a smooth per-device baseline
//! plus `gain * coeff * HW(value)` at each configured leak sample, additive
//! Gaussian noise everywhere. The masked variant recomputes the Sbox table
//! per trace from fresh input/output masks, so the unmasked intermediate
//! never touches a sample directly. Clone families perturb only the analog
//! parameters (gain, offset, noise), modelling boards built from the same
//! layout.
//!
//! Every trace's randomness derives from `(seed, trace_index)`, so generation
//! order (or parallel scheduling) cannot change the output.

use ndarray::Array2;
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::aes::{hamming_weight, mask_sbox_table, sbox, SBOX};
use crate::trace::{
    MetaField, SampleEncoding, TraceSet, FIELD_CIPHERTEXT, FIELD_KEY, FIELD_MASK_IN,
    FIELD_MASK_OUT, FIELD_PLAINTEXT,
};

/// Sample positions where an intermediate leaks, with one linear coefficient
/// per position.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakPoints {
    pub positions: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl LeakPoints {
    pub fn new(positions: Vec<usize>, coeffs: Vec<f64>) -> Self {
        Self { positions, coeffs }
    }

    /// All listed positions leak with the same coefficient.
    pub fn uniform(positions: Vec<usize>, coeff: f64) -> Self {
        let coeffs = vec![coeff; positions.len()];
        Self { positions, coeffs }
    }

    pub fn none() -> Self {
        Self {
            positions: vec![],
            coeffs: vec![],
        }
    }
}

/// Analog personality of one device: amplification, DC offset, noise level,
/// where the value and mask intermediates leak, and the seed of its smooth
/// baseline waveform. `baseline_seed == 0` means a flat zero baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub gain: f64,
    pub offset: f64,
    pub noise_sigma: f64,
    pub value_leaks: LeakPoints,
    pub mask_leaks: LeakPoints,
    pub baseline_seed: u64,
}

impl DeviceProfile {
    fn validate(&self, n_samples: usize) -> Result<(), SimError> {
        if self.noise_sigma < 0.0 {
            return Err(SimError::NegativeNoiseSigma(self.noise_sigma));
        }
        for leaks in [&self.value_leaks, &self.mask_leaks] {
            if leaks.positions.len() != leaks.coeffs.len() {
                return Err(SimError::CoeffLengthMismatch {
                    positions: leaks.positions.len(),
                    coeffs: leaks.coeffs.len(),
                });
            }
            for &p in &leaks.positions {
                if p >= n_samples {
                    return Err(SimError::LeakPositionOutOfRange {
                        position: p,
                        n_samples,
                    });
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &p in self
            .value_leaks
            .positions
            .iter()
            .chain(&self.mask_leaks.positions)
        {
            if !seen.insert(p) {
                return Err(SimError::OverlappingLeakPositions(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Implementation {
    Unprotected,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    Fixed([u8; 16]),
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub implementation: Implementation,
    pub n_traces: usize,
    pub key_mode: KeyMode,
    /// State byte whose Sbox output drives the leak samples.
    pub byte_index: usize,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("leak position {position} is outside 0..{n_samples}")]
    LeakPositionOutOfRange { position: usize, n_samples: usize },
    #[error("sample {0} appears in more than one leak position list")]
    OverlappingLeakPositions(usize),
    #[error("{positions} leak positions but {coeffs} coefficients")]
    CoeffLengthMismatch { positions: usize, coeffs: usize },
    #[error("noise_sigma must be non-negative, got {0}")]
    NegativeNoiseSigma(f64),
    #[error("n_traces must be at least 1")]
    ZeroTraces,
    #[error("n_samples must be at least 1")]
    ZeroSamples,
    #[error("byte_index {0} is outside 0..16")]
    ByteIndexOutOfRange(usize),
    #[error("device {device} perturbed noise_sigma is negative ({sigma})")]
    CloneNoiseNegative { device: usize, sigma: f64 },
}

/// Smooth deterministic waveform: a handful of low-order sinusoids with
/// seeded amplitudes and phases. Seed 0 yields a flat zero line.
fn baseline_waveform(seed: u64, n_samples: usize) -> Vec<f64> {
    if seed == 0 {
        return vec![0.0; n_samples];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics: Vec<(f64, f64)> = (0..4)
        .map(|_| {
            let amp = rng.gen_range(0.2..1.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (amp, phase)
        })
        .collect();
    (0..n_samples)
        .map(|t| {
            let x = t as f64 / n_samples as f64;
            harmonics
                .iter()
                .enumerate()
                .map(|(h, &(amp, phase))| {
                    amp * (std::f64::consts::TAU * (h + 1) as f64 * x + phase).sin()
                })
                .sum()
        })
        .collect()
}

/// Generates `cfg.n_traces` traces for `profile`. Metadata always carries
/// `plaintext`, `ciphertext`, and `key`; the ciphertext field holds first-round
/// Sbox output bytes, which keeps Hamming-distance models usable without a
/// full cipher schedule. Masked runs additionally record `mask_in` and
/// `mask_out`.
pub fn simulate(profile: &DeviceProfile, cfg: &SimConfig) -> Result<TraceSet, SimError> {
    if cfg.n_traces == 0 {
        return Err(SimError::ZeroTraces);
    }
    if cfg.n_samples == 0 {
        return Err(SimError::ZeroSamples);
    }
    if cfg.byte_index >= 16 {
        return Err(SimError::ByteIndexOutOfRange(cfg.byte_index));
    }
    profile.validate(cfg.n_samples)?;

    let baseline = baseline_waveform(profile.baseline_seed, cfg.n_samples);
    let masked = cfg.implementation == Implementation::Masked;
    let record_width = 48 + if masked { 2 } else { 0 };
    let noise = Normal::new(0.0, profile.noise_sigma).expect("sigma validated non-negative");
    let byte_dist = Uniform::new_inclusive(0u8, 255);

    let rows: Vec<(Vec<u8>, Vec<f32>)> = (0..cfg.n_traces)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);

            let mut plaintext = [0u8; 16];
            rng.fill(&mut plaintext);
            let key = match cfg.key_mode {
                KeyMode::Fixed(k) => k,
                KeyMode::Random => {
                    let mut k = [0u8; 16];
                    rng.fill(&mut k);
                    k
                }
            };
            let mut ciphertext = [0u8; 16];
            for b in 0..16 {
                ciphertext[b] = sbox(plaintext[b] ^ key[b]);
            }

            let mut record = Vec::with_capacity(record_width);
            record.extend_from_slice(&plaintext);
            record.extend_from_slice(&ciphertext);
            record.extend_from_slice(&key);

            let (value_hw, mask_hw) = if masked {
                let m_in = byte_dist.sample(&mut rng);
                let m_out = byte_dist.sample(&mut rng);
                record.push(m_in);
                record.push(m_out);
                let table = mask_sbox_table(&SBOX, m_in, m_out);
                let masked_state = plaintext[cfg.byte_index] ^ key[cfg.byte_index] ^ m_in;
                (
                    hamming_weight(table[masked_state as usize]) as f64,
                    hamming_weight(m_out) as f64,
                )
            } else {
                let v = sbox(plaintext[cfg.byte_index] ^ key[cfg.byte_index]);
                (hamming_weight(v) as f64, 0.0)
            };

            let mut row = vec![0.0f32; cfg.n_samples];
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = (baseline[t] + profile.offset + noise.sample(&mut rng)) as f32;
            }
            for (&p, &c) in profile
                .value_leaks
                .positions
                .iter()
                .zip(&profile.value_leaks.coeffs)
            {
                row[p] += (profile.gain * c * value_hw) as f32;
            }
            if masked {
                for (&p, &c) in profile
                    .mask_leaks
                    .positions
                    .iter()
                    .zip(&profile.mask_leaks.coeffs)
                {
                    row[p] += (profile.gain * c * mask_hw) as f32;
                }
            }
            (record, row)
        })
        .collect();

    let mut samples = Array2::<f32>::zeros((cfg.n_traces, cfg.n_samples));
    let mut meta = Vec::with_capacity(cfg.n_traces * record_width);
    for (i, (record, row)) in rows.into_iter().enumerate() {
        meta.extend_from_slice(&record);
        for (t, &v) in row.iter().enumerate() {
            samples[(i, t)] = v;
        }
    }

    let mut fields = vec![
        MetaField {
            name: FIELD_PLAINTEXT.into(),
            width: 16,
        },
        MetaField {
            name: FIELD_CIPHERTEXT.into(),
            width: 16,
        },
        MetaField {
            name: FIELD_KEY.into(),
            width: 16,
        },
    ];
    if masked {
        fields.push(MetaField {
            name: FIELD_MASK_IN.into(),
            width: 1,
        });
        fields.push(MetaField {
            name: FIELD_MASK_OUT.into(),
            width: 1,
        });
    }
    Ok(TraceSet::new(samples, SampleEncoding::Float32, fields, meta)
        .expect("simulator output satisfies trace-set invariants"))
}

/// Builds `n_devices` profiles sharing the base device's leak layout and
/// baseline. Device 0 is the base itself; the rest perturb gain and
/// noise_sigma multiplicatively and offset additively, each by a uniform
/// draw in plus/minus the given jitter.
pub fn make_clone_family(
    base: &DeviceProfile,
    n_devices: usize,
    variation_seed: u64,
    gain_jitter: f64,
    offset_jitter: f64,
    noise_jitter: f64,
) -> Result<Vec<DeviceProfile>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(variation_seed);
    let mut family = Vec::with_capacity(n_devices);
    family.push(base.clone());
    for device in 1..n_devices {
        let dg: f64 = rng.gen_range(-1.0..=1.0) * gain_jitter;
        let doff: f64 = rng.gen_range(-1.0..=1.0) * offset_jitter;
        let dn: f64 = rng.gen_range(-1.0..=1.0) * noise_jitter;
        let sigma = base.noise_sigma * (1.0 + dn);
        if sigma < 0.0 {
            return Err(SimError::CloneNoiseNegative { device, sigma });
        }
        family.push(DeviceProfile {
            gain: base.gain * (1.0 + dg),
            offset: base.offset + doff,
            noise_sigma: sigma,
            ..base.clone()
        });
    }
    Ok(family)
}
