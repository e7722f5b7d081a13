//! ULA steering vectors and Monte-Carlo scenario synthesis for
//! `Y = (I + diag(γ)) A S + N`.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numerics::{singular_values, CMatrix, CVector};
use crate::{Complex64, Error, Result};

/// Rank threshold used by [`rank_of_clean`], relative to the largest singular value.
pub const CLEAN_RANK_TOL: f64 = 1e-10;

/// Array geometry, source layout and distortion model for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub num_sensors: usize,
    /// Source directions in degrees, strictly increasing inside (−90°, 90°).
    pub doas_deg: Vec<f64>,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
    pub snapshots: usize,
    /// Per-source SNR in dB; `inf` disables the noise entirely.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub num_distorted: usize,
    #[serde(default = "default_gain_range")]
    pub gain_range: [f64; 2],
    #[serde(default = "default_phase_range")]
    pub phase_range_deg: [f64; 2],
    #[serde(default = "default_gamma_max")]
    pub gamma_max: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_gain_range() -> [f64; 2] {
    [0.0, 10.0]
}

fn default_phase_range() -> [f64; 2] {
    [-10.0, 10.0]
}

fn default_gamma_max() -> f64 {
    10.0
}

impl Default for ArrayConfig {
    /// Eight-sensor ULA, two sources at ±10°, three distorted sensors, 10 dB, 100 snapshots.
    fn default() -> Self {
        Self {
            num_sensors: 8,
            doas_deg: vec![-10.0, 10.0],
            spacing_wavelengths: default_spacing(),
            snapshots: 100,
            snr_db: 10.0,
            num_distorted: 3,
            gain_range: default_gain_range(),
            phase_range_deg: default_phase_range(),
            gamma_max: default_gamma_max(),
            seed: 0,
        }
    }
}

impl ArrayConfig {
    pub fn num_sources(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    /// Per-entry complex noise variance for unit-power sources.
    pub fn noise_variance(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    /// Checks the configuration, returning non-fatal warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let m = self.num_sensors;
        let k = self.num_sources();
        let bad = |msg: String| Err(Error::Config(msg));
        if m < 2 {
            return bad(format!("num_sensors must be at least 2, got {m}"));
        }
        if k == 0 {
            return bad("doas_deg must list at least one source".into());
        }
        if k >= m {
            return bad(format!("need fewer sources ({k}) than sensors ({m})"));
        }
        if self.num_distorted >= m {
            return bad(format!("num_distorted ({}) must be smaller than num_sensors ({m})", self.num_distorted));
        }
        if let Some(theta) = self.doas_deg.iter().find(|t| !(t.abs() < 90.0)) {
            return bad(format!("DOA {theta}° outside (−90°, 90°)"));
        }
        if self.doas_deg.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("doas_deg must be strictly increasing".into());
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return bad(format!("spacing_wavelengths must be positive, got {}", self.spacing_wavelengths));
        }
        if self.snapshots == 0 {
            return bad("snapshots must be positive".into());
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad(format!("snr_db must be finite or +inf, got {}", self.snr_db));
        }
        let [g_lo, g_hi] = self.gain_range;
        if !(g_lo.is_finite() && g_hi.is_finite() && 0.0 <= g_lo && g_lo <= g_hi) {
            return bad(format!("gain_range must satisfy 0 <= low <= high, got [{g_lo}, {g_hi}]"));
        }
        let [p_lo, p_hi] = self.phase_range_deg;
        if !(p_lo.is_finite() && p_hi.is_finite() && p_lo <= p_hi) {
            return bad(format!("phase_range_deg must satisfy low <= high, got [{p_lo}, {p_hi}]"));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return bad(format!("gamma_max must be positive, got {}", self.gamma_max));
        }
        let mut warnings = Vec::new();
        if self.snapshots <= m {
            warnings.push(format!(
                "snapshots ({}) do not exceed num_sensors ({m}); the low-rank model may be poorly conditioned",
                self.snapshots
            ));
        }
        Ok(warnings)
    }
}

/// `a(θ)[m] = exp(−j 2π d m sin θ)` for `m = 0..M`.
pub fn steering_vector(theta_deg: f64, num_sensors: usize, spacing_wavelengths: f64) -> Result<CVector> {
    if !(theta_deg.abs() < 90.0) {
        return Err(Error::domain(format!("angle {theta_deg}° outside (−90°, 90°)")));
    }
    Ok(steering_vector_unchecked(theta_deg, num_sensors, spacing_wavelengths))
}

pub(crate) fn steering_vector_unchecked(theta_deg: f64, num_sensors: usize, spacing: f64) -> CVector {
    let phase = -2.0 * PI * spacing * theta_deg.to_radians().sin();
    CVector::from_fn(num_sensors, |m, _| Complex64::from_polar(1.0, phase * m as f64))
}

pub fn steering_matrix(doas_deg: &[f64], num_sensors: usize, spacing_wavelengths: f64) -> Result<CMatrix> {
    let mut a = CMatrix::zeros(num_sensors, doas_deg.len());
    for (k, &theta) in doas_deg.iter().enumerate() {
        a.set_column(k, &steering_vector(theta, num_sensors, spacing_wavelengths)?);
    }
    Ok(a)
}

/// Ground truth and measurements of one simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayScenario {
    pub config: ArrayConfig,
    pub steering: CMatrix,
    pub signals: CMatrix,
    pub gamma_true: CVector,
    /// Zero-based, ascending.
    pub distorted_indices: Vec<usize>,
    pub noise: CMatrix,
    pub measurements: CMatrix,
}

impl ArrayScenario {
    /// `Z = A S`.
    pub fn clean(&self) -> CMatrix {
        &self.steering * &self.signals
    }
}

/// Scales row `m` of `x` by `1 + γ_m`.
pub fn apply_distortion(gamma: &CVector, x: &CMatrix) -> CMatrix {
    let mut out = x.clone();
    for (m, mut row) in out.row_iter_mut().enumerate() {
        row *= Complex64::new(1.0, 0.0) + gamma[m];
    }
    out
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Draws a scenario; fully determined by `config` including its seed.
pub fn generate_scenario(config: &ArrayConfig) -> Result<ArrayScenario> {
    config.validate()?;
    let m = config.num_sensors;
    let k = config.num_sources();
    let t = config.snapshots;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let steering = steering_matrix(&config.doas_deg, m, config.spacing_wavelengths)?;
    let signals = CMatrix::from_fn(k, t, |_, _| complex_gaussian(&mut rng, 1.0));

    let mut distorted_indices = sample(&mut rng, m, config.num_distorted).into_vec();
    distorted_indices.sort_unstable();
    let mut gamma_true = CVector::zeros(m);
    let [g_lo, g_hi] = config.gain_range;
    let [p_lo, p_hi] = config.phase_range_deg;
    let cap = config.gamma_max;
    for &idx in &distorted_indices {
        let gain = uniform(&mut rng, g_lo, g_hi);
        let phase = uniform(&mut rng, p_lo, p_hi).to_radians();
        let g = Complex64::from_polar(gain, phase);
        gamma_true[idx] = Complex64::new(g.re.clamp(-cap, cap), g.im.clamp(-cap, cap));
    }

    let variance = config.noise_variance();
    let noise = if variance > 0.0 {
        CMatrix::from_fn(m, t, |_, _| complex_gaussian(&mut rng, variance))
    } else {
        CMatrix::zeros(m, t)
    };
    let measurements = apply_distortion(&gamma_true, &(&steering * &signals)) + &noise;

    Ok(ArrayScenario { config: config.clone(), steering, signals, gamma_true, distorted_indices, noise, measurements })
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Numerical rank of `A S` at relative tolerance [`CLEAN_RANK_TOL`].
pub fn rank_of_clean(scenario: &ArrayScenario) -> Result<usize> {
    let sv = singular_values(&scenario.clean())?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > CLEAN_RANK_TOL * top).count())
}

/// Seed for trial `index` of a batch, independent of every other trial.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 over the pair
    let mut x = master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Reads `snr_db` as a number or one of the strings `"inf"` / `"+inf"`,
/// since JSON has no infinity literal.
mod snr_serde {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct SnrVisitor;
        impl Visitor<'_> for SnrVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an SNR in dB or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.trim() {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(SnrVisitor)
    }
}
