//! Network parameters and bounded Rayleigh-faded channel sampling.
//!
//! Gains are power gains `g[tx][rx][band]`. Every link has a mean fixed by the
//! SIR (direct links have unit mean) and a support `[0.01, 5] * mean`, which
//! is shared by all bands. Gains are drawn independently per band from the
//! exponential law truncated to that support.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::QuantizerReference;

pub const DEFAULT_GAIN_MIN_FACTOR: f64 = 0.01;
pub const DEFAULT_GAIN_MAX_FACTOR: f64 = 5.0;

/// Converts a linear power ratio to dB.
#[inline]
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Converts dB to a linear power ratio.
#[inline]
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parameters of a `K`-pair, `S`-band interference network.
///
/// `snr_db` is always `10 log10(p_max / sigma2)`; use [`NetworkConfig::set_snr_db`]
/// rather than writing `p_max` directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkConfigFile", into = "NetworkConfigFile")]
pub struct NetworkConfig {
    pub k: usize,
    pub bands: usize,
    pub p_max: f64,
    pub sigma2: f64,
    pub snr_db: f64,
    pub sir_db: f64,
    pub n_bits: u32,
    pub epsilon: f64,
    pub gain_min_factor: f64,
    pub gain_max_factor: f64,
    pub local_csi_noise_std: f64,
    pub quantizer_reference: QuantizerReference,
}

impl NetworkConfig {
    /// Unit noise, `p_max = 10^(snr_db/10)`, 8-bit feedback with 1% label errors.
    pub fn new(k: usize, bands: usize, snr_db: f64, sir_db: f64) -> Self {
        NetworkConfig {
            k,
            bands,
            p_max: from_db(snr_db),
            sigma2: 1.0,
            snr_db,
            sir_db,
            n_bits: 8,
            epsilon: 0.01,
            gain_min_factor: DEFAULT_GAIN_MIN_FACTOR,
            gain_max_factor: DEFAULT_GAIN_MAX_FACTOR,
            local_csi_noise_std: 0.0,
            quantizer_reference: QuantizerReference::default(),
        }
    }

    pub fn with_feedback(mut self, n_bits: u32, epsilon: f64) -> Self {
        self.n_bits = n_bits;
        self.epsilon = epsilon;
        self
    }

    pub fn with_local_csi_noise(mut self, std: f64) -> Self {
        self.local_csi_noise_std = std;
        self
    }

    pub fn with_quantizer_reference(mut self, reference: QuantizerReference) -> Self {
        self.quantizer_reference = reference;
        self
    }

    /// Changes the SNR keeping `sigma2` fixed.
    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.snr_db = snr_db;
        self.p_max = self.sigma2 * from_db(snr_db);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.bands == 0 {
            return bad("bands must be at least 1".into());
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return bad(format!("p_max must be positive, got {}", self.p_max));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !self.sir_db.is_finite() {
            return bad("sir_db must be finite".into());
        }
        if !(1..=30).contains(&self.n_bits) {
            return bad(format!("n_bits must be in 1..=30, got {}", self.n_bits));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if !(self.gain_min_factor > 0.0 && self.gain_max_factor > self.gain_min_factor) {
            return bad("gain factors must satisfy 0 < min < max".into());
        }
        if !(self.local_csi_noise_std >= 0.0 && self.local_csi_noise_std.is_finite()) {
            return bad("local_csi_noise_std must be nonnegative".into());
        }
        let implied = to_db(self.p_max / self.sigma2);
        if (implied - self.snr_db).abs() > 1e-9 {
            return bad(format!(
                "snr_db {} inconsistent with p_max/sigma2 ({implied} dB)",
                self.snr_db
            ));
        }
        Ok(())
    }

    /// Mean and support of every link.
    pub fn link_stats(&self) -> Result<LinkStats> {
        LinkStats::new(self)
    }
}

/// On-disk form: `p_max` and `sigma2` are optional and derived from `snr_db`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkConfigFile {
    k: usize,
    bands: usize,
    snr_db: f64,
    sir_db: f64,
    #[serde(default)]
    p_max: Option<f64>,
    #[serde(default = "default_sigma2")]
    sigma2: f64,
    #[serde(default = "default_n_bits")]
    n_bits: u32,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_min_factor")]
    gain_min_factor: f64,
    #[serde(default = "default_max_factor")]
    gain_max_factor: f64,
    #[serde(default)]
    local_csi_noise_std: f64,
    #[serde(default)]
    quantizer_reference: QuantizerReference,
}

fn default_sigma2() -> f64 {
    1.0
}
fn default_n_bits() -> u32 {
    8
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_min_factor() -> f64 {
    DEFAULT_GAIN_MIN_FACTOR
}
fn default_max_factor() -> f64 {
    DEFAULT_GAIN_MAX_FACTOR
}

impl TryFrom<NetworkConfigFile> for NetworkConfig {
    type Error = Error;

    fn try_from(f: NetworkConfigFile) -> Result<Self> {
        let p_max = f.p_max.unwrap_or(f.sigma2 * from_db(f.snr_db));
        let cfg = NetworkConfig {
            k: f.k,
            bands: f.bands,
            p_max,
            sigma2: f.sigma2,
            snr_db: f.snr_db,
            sir_db: f.sir_db,
            n_bits: f.n_bits,
            epsilon: f.epsilon,
            gain_min_factor: f.gain_min_factor,
            gain_max_factor: f.gain_max_factor,
            local_csi_noise_std: f.local_csi_noise_std,
            quantizer_reference: f.quantizer_reference,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<NetworkConfig> for NetworkConfigFile {
    fn from(c: NetworkConfig) -> Self {
        NetworkConfigFile {
            k: c.k,
            bands: c.bands,
            snr_db: c.snr_db,
            sir_db: c.sir_db,
            p_max: Some(c.p_max),
            sigma2: c.sigma2,
            n_bits: c.n_bits,
            epsilon: c.epsilon,
            gain_min_factor: c.gain_min_factor,
            gain_max_factor: c.gain_max_factor,
            local_csi_noise_std: c.local_csi_noise_std,
            quantizer_reference: c.quantizer_reference,
        }
    }
}

/// Mean gain of the link from transmitter `tx` to receiver `rx`.
///
/// Direct links have unit mean; cross links are attenuated by the SIR.
pub fn mean_gain(tx: usize, rx: usize, sir_db: f64) -> f64 {
    if tx == rx {
        1.0
    } else {
        from_db(-sir_db)
    }
}

/// `(0.01 * mean, 5 * mean)`.
pub fn gain_bounds(mean: f64) -> Result<(f64, f64)> {
    gain_bounds_with(mean, DEFAULT_GAIN_MIN_FACTOR, DEFAULT_GAIN_MAX_FACTOR)
}

pub fn gain_bounds_with(mean: f64, min_factor: f64, max_factor: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::NonPositiveMean(mean));
    }
    Ok((min_factor * mean, max_factor * mean))
}

/// Per-link statistics, shared by all bands.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    k: usize,
    means: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl LinkStats {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        let mut means = Vec::with_capacity(k * k);
        let mut bounds = Vec::with_capacity(k * k);
        for tx in 0..k {
            for rx in 0..k {
                let m = mean_gain(tx, rx, config.sir_db);
                means.push(m);
                bounds.push(gain_bounds_with(
                    m,
                    config.gain_min_factor,
                    config.gain_max_factor,
                )?);
            }
        }
        Ok(LinkStats { k, means, bounds })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mean(&self, tx: usize, rx: usize) -> f64 {
        self.means[tx * self.k + rx]
    }

    pub fn bounds(&self, tx: usize, rx: usize) -> (f64, f64) {
        self.bounds[tx * self.k + rx]
    }

    pub fn g_max(&self, tx: usize, rx: usize) -> f64 {
        self.bounds(tx, rx).1
    }

    pub fn clamp(&self, tx: usize, rx: usize, g: f64) -> f64 {
        let (lo, hi) = self.bounds(tx, rx);
        g.clamp(lo, hi)
    }
}

/// Dense `K x K x S` array of gains indexed `(tx, rx, band)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTensor {
    k: usize,
    bands: usize,
    data: Vec<f64>,
}

impl GainTensor {
    pub fn zeros(k: usize, bands: usize) -> Self {
        GainTensor {
            k,
            bands,
            data: vec![0.0; k * k * bands],
        }
    }

    /// Builds a tensor from `f(tx, rx, band)`.
    pub fn from_fn(k: usize, bands: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(k * k * bands);
        for tx in 0..k {
            for rx in 0..k {
                for s in 0..bands {
                    data.push(f(tx, rx, s));
                }
            }
        }
        GainTensor { k, bands, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    #[inline]
    fn idx(&self, tx: usize, rx: usize, band: usize) -> usize {
        debug_assert!(tx < self.k && rx < self.k && band < self.bands);
        (tx * self.k + rx) * self.bands + band
    }

    #[inline]
    pub fn get(&self, tx: usize, rx: usize, band: usize) -> f64 {
        self.data[self.idx(tx, rx, band)]
    }

    #[inline]
    pub fn set(&mut self, tx: usize, rx: usize, band: usize, g: f64) {
        let i = self.idx(tx, rx, band);
        self.data[i] = g;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Gains from every transmitter into receiver `rx` on `band`.
    pub fn into_receiver(&self, rx: usize, band: usize) -> Vec<f64> {
        (0..self.k).map(|tx| self.get(tx, rx, band)).collect()
    }

    /// Squared Frobenius norm over all bands.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum()
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn distance_sq(&self, other: &GainTensor) -> Result<f64> {
        if self.k != other.k || self.bands != other.bands {
            return Err(Error::DimensionMismatch {
                what: "gain tensor",
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

/// Ground-truth gains of one Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub gains: GainTensor,
    pub stats: LinkStats,
}

impl ChannelMatrix {
    pub fn k(&self) -> usize {
        self.gains.k()
    }

    pub fn bands(&self) -> usize {
        self.gains.bands()
    }

    pub fn bounds(&self, tx: usize, rx: usize) -> (f64, f64) {
        self.stats.bounds(tx, rx)
    }
}

/// Draws an exponential variate with the given mean, redrawing until it lands
/// inside `[lo, hi]`.
pub fn sample_truncated_exp<R: Rng + ?Sized>(mean: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.sample::<f64, _>(Exp1) * mean;
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

pub fn sample_channel<R: Rng + ?Sized>(
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let stats = config.link_stats()?;
    let gains = GainTensor::from_fn(config.k, config.bands, |tx, rx, _| {
        let (lo, hi) = stats.bounds(tx, rx);
        sample_truncated_exp(stats.mean(tx, rx), lo, hi, rng)
    });
    Ok(ChannelMatrix { gains, stats })
}

/// Local CSI of transmitter `owner`: the gains from every transmitter into
/// receiver `owner`, per band.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCsi {
    owner: usize,
    bands: usize,
    gains: Vec<f64>,
}

impl LocalCsi {
    pub fn new(owner: usize, k: usize, bands: usize, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != k * bands {
            return Err(Error::DimensionMismatch {
                what: "local CSI",
                expected: k * bands,
                got: gains.len(),
            });
        }
        Ok(LocalCsi {
            owner,
            bands,
            gains,
        })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn k(&self) -> usize {
        self.gains.len() / self.bands
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Estimate of the gain from `tx` into this owner's receiver.
    #[inline]
    pub fn get(&self, tx: usize, band: usize) -> f64 {
        self.gains[tx * self.bands + band]
    }

    /// The owner's local CSI vector on `band`.
    pub fn column(&self, band: usize) -> Vec<f64> {
        (0..self.k()).map(|tx| self.get(tx, band)).collect()
    }
}

/// Local CSI known at each transmitter.
///
/// With zero noise this is the truth, untouched and without consuming the
/// random stream. Otherwise each gain is scaled by `1 + delta`, `delta`
/// Gaussian with the configured relative std, then clamped to its support.
pub fn perturb_local_csi<R: Rng + ?Sized>(
    truth: &ChannelMatrix,
    config: &NetworkConfig,
    rng: &mut R,
) -> Vec<LocalCsi> {
    let k = truth.k();
    let bands = truth.bands();
    let std = config.local_csi_noise_std;
    (0..k)
        .map(|owner| {
            let mut gains = Vec::with_capacity(k * bands);
            for tx in 0..k {
                for s in 0..bands {
                    let g = truth.gains.get(tx, owner, s);
                    if std == 0.0 {
                        gains.push(g);
                    } else {
                        let delta: f64 = rng.sample::<f64, _>(StandardNormal) * std;
                        gains.push(truth.stats.clamp(tx, owner, g * (1.0 + delta)));
                    }
                }
            }
            LocalCsi {
                owner,
                bands,
                gains,
            }
        })
        .collect()
}
