//! RSSI feedback: received power, dB-uniform quantization, a lossy label
//! channel, and reconstruction of the observed power.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{from_db, to_db, LinkStats, NetworkConfig};
use crate::error::{Error, Result};

/// Width of the quantizer input range in dB.
pub const RANGE_DB: f64 = 30.0;
/// Lower range edge relative to the reference SNR.
pub const RANGE_BELOW_DB: f64 = 20.0;

/// Where the 30 dB quantizer window sits.
///
/// With `Absolute` every receiver quantizes on `[SNR - 20, SNR + 10]` dB.
/// With `PerLink` the window is shifted by the mean gain of the link being
/// observed, i.e. `[SNR + g_dB - 20, SNR + g_dB + 10]` where `g_dB` is
/// `10 log10 E(g_ji)` for the active transmitter `j`. Both coincide for direct
/// links. Under time-sharing the receiver knows which transmitter is active,
/// so it can place the window around that link's typical received power.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerReference {
    #[default]
    PerLink,
    Absolute,
}

/// `N`-bit quantizer, uniform in dB over a 30 dB window.
///
/// Inputs are absolute powers in dB (unit reference); values outside the
/// window clamp to the edge cells. Reconstruction is the cell midpoint in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    n_bits: u32,
    lo_db: f64,
    hi_db: f64,
}

impl Quantizer {
    /// Window `[snr_db - 20, snr_db + 10]`.
    pub fn new(n_bits: u32, snr_db: f64) -> Result<Self> {
        Self::with_lower_edge(n_bits, snr_db - RANGE_BELOW_DB)
    }

    pub fn with_lower_edge(n_bits: u32, lo_db: f64) -> Result<Self> {
        if !(1..=30).contains(&n_bits) {
            return Err(Error::InvalidConfig(format!(
                "quantizer needs 1..=30 bits, got {n_bits}"
            )));
        }
        if !lo_db.is_finite() {
            return Err(Error::InvalidConfig(
                "quantizer range must be finite".into(),
            ));
        }
        Ok(Quantizer {
            n_bits,
            lo_db,
            hi_db: lo_db + RANGE_DB,
        })
    }

    /// Quantizer used by a receiver while a transmitter whose link has mean
    /// gain `link_mean` is active.
    pub fn for_link(config: &NetworkConfig, link_mean: f64) -> Result<Self> {
        let reference = match config.quantizer_reference {
            QuantizerReference::Absolute => config.snr_db,
            QuantizerReference::PerLink => config.snr_db + to_db(link_mean),
        };
        Self::new(config.n_bits, reference)
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn lo_db(&self) -> f64 {
        self.lo_db
    }

    pub fn hi_db(&self) -> f64 {
        self.hi_db
    }

    pub fn level_count(&self) -> u32 {
        1 << self.n_bits
    }

    pub fn cell_width_db(&self) -> f64 {
        (self.hi_db - self.lo_db) / f64::from(self.level_count())
    }

    /// Reconstruction point of `label`, in dB.
    pub fn level_db(&self, label: u32) -> Result<f64> {
        if label >= self.level_count() {
            return Err(Error::LabelOutOfRange {
                label,
                n_bits: self.n_bits,
            });
        }
        Ok(self.lo_db + (f64::from(label) + 0.5) * self.cell_width_db())
    }

    /// All reconstruction points in dB, increasing.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        let w = self.cell_width_db();
        (0..self.level_count()).map(move |l| self.lo_db + (f64::from(l) + 0.5) * w)
    }

    pub fn quantize(&self, power: f64) -> Result<u32> {
        if !(power > 0.0) {
            return Err(Error::NonPositivePower(power));
        }
        let db = to_db(power).clamp(self.lo_db, self.hi_db);
        let cell = ((db - self.lo_db) / self.cell_width_db()).floor();
        Ok((cell as u32).min(self.level_count() - 1))
    }

    /// Linear power at the midpoint of `label`'s cell.
    pub fn dequantize(&self, label: u32) -> Result<f64> {
        self.level_db(label).map(from_db)
    }
}

/// Received power `sum_j g_j p_j + sigma2`.
pub fn rs_power(gains_to_rx: &[f64], powers: &[f64], sigma2: f64) -> Result<f64> {
    if gains_to_rx.len() != powers.len() {
        return Err(Error::DimensionMismatch {
            what: "rs_power gains vs powers",
            expected: gains_to_rx.len(),
            got: powers.len(),
        });
    }
    Ok(gains_to_rx
        .iter()
        .zip(powers)
        .map(|(g, p)| g * p)
        .sum::<f64>()
        + sigma2)
}

/// Passes a label through the feedback channel.
///
/// Correct with probability `1 - epsilon`; otherwise replaced by one of the
/// other `2^N - 1` labels, uniformly.
pub fn corrupt_label<R: Rng + ?Sized>(label: u32, n_bits: u32, epsilon: f64, rng: &mut R) -> u32 {
    // Draw unconditionally so the stream stays aligned across epsilon values.
    let u: f64 = rng.random();
    if u >= epsilon {
        return label;
    }
    let others = (1u32 << n_bits) - 1;
    let r = rng.random_range(0..others);
    if r >= label {
        r + 1
    } else {
        r
    }
}

/// One RSSI report as seen by the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackObservation {
    pub true_power: f64,
    /// `None` on an ideal (unquantized) feedback link.
    pub label_sent: Option<u32>,
    pub label_received: Option<u32>,
    pub observed_power: f64,
    /// `observed_power - true_power`.
    pub noise_total: f64,
}

impl FeedbackObservation {
    /// An exact report, as delivered by an ideal feedback link.
    pub fn exact(power: f64) -> Self {
        FeedbackObservation {
            true_power: power,
            label_sent: None,
            label_received: None,
            observed_power: power,
            noise_total: 0.0,
        }
    }

    pub fn label_error(&self) -> bool {
        self.label_sent != self.label_received
    }
}

/// The part of the observation noise caused by imperfect local CSI at the
/// estimator: `(g - g_tilde) * p`.
pub fn local_csi_mismatch(gain: f64, gain_estimate: f64, power: f64) -> f64 {
    (gain - gain_estimate) * power
}

/// Received power, quantized, sent over the lossy label channel and
/// reconstructed.
pub fn observe<R: Rng + ?Sized>(
    q: &Quantizer,
    gains_to_rx: &[f64],
    powers: &[f64],
    sigma2: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<FeedbackObservation> {
    let true_power = rs_power(gains_to_rx, powers, sigma2)?;
    let sent = q.quantize(true_power)?;
    let received = corrupt_label(sent, q.n_bits(), epsilon, rng);
    let observed = q.dequantize(received)?;
    Ok(FeedbackObservation {
        true_power,
        label_sent: Some(sent),
        label_received: Some(received),
        observed_power: observed,
        noise_total: observed - true_power,
    })
}

/// The feedback links of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackChannel {
    /// Exact RS power delivered; no quantization, no label errors.
    Ideal,
    /// One quantizer per (active transmitter, receiver) pair.
    Quantized {
        k: usize,
        quantizers: Vec<Quantizer>,
        epsilon: f64,
    },
}

impl FeedbackChannel {
    pub fn from_config(config: &NetworkConfig, stats: &LinkStats) -> Result<Self> {
        let k = config.k;
        let mut quantizers = Vec::with_capacity(k * k);
        for tx in 0..k {
            for rx in 0..k {
                quantizers.push(Quantizer::for_link(config, stats.mean(tx, rx))?);
            }
        }
        Ok(FeedbackChannel::Quantized {
            k,
            quantizers,
            epsilon: config.epsilon,
        })
    }

    /// RS power report of receiver `rx` while `active` is the scheduled
    /// transmitter.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        active: usize,
        rx: usize,
        gains_to_rx: &[f64],
        powers: &[f64],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<FeedbackObservation> {
        match self {
            FeedbackChannel::Ideal => {
                rs_power(gains_to_rx, powers, sigma2).map(FeedbackObservation::exact)
            }
            FeedbackChannel::Quantized {
                k,
                quantizers,
                epsilon,
            } => observe(
                &quantizers[active * k + rx],
                gains_to_rx,
                powers,
                sigma2,
                *epsilon,
                rng,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q3() -> Quantizer {
        Quantizer::new(3, 30.0).unwrap()
    }

    #[test]
    fn rs_power_examples() {
        assert_eq!(rs_power(&[1.0, 0.1], &[0.0, 0.0], 1.0).unwrap(), 1.0);
        assert!((rs_power(&[1.0, 0.1], &[10.0, 10.0], 1.0).unwrap() - 12.0).abs() < 1e-12);
        assert!((rs_power(&[2.0], &[5.0], 0.5).unwrap() - 10.5).abs() < 1e-12);
        assert!(rs_power(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn quantizer_range_and_levels() {
        let q = q3();
        assert_eq!(q.lo_db(), 10.0);
        assert_eq!(q.hi_db(), 40.0);
        assert_eq!(q.hi_db() - q.lo_db(), 30.0);
        assert_eq!(q.cell_width_db(), 3.75);
        let levels: Vec<f64> = q.levels().collect();
        assert_eq!(levels.len(), 8);
        assert!(levels
            .windows(2)
            .all(|w| (w[1] - w[0] - 3.75).abs() < 1e-12));
        assert_eq!(levels[0], 11.875);
    }

    #[test]
    fn quantize_examples() {
        let q = q3();
        assert_eq!(q.quantize(10f64.powf(2.5)).unwrap(), 4);
        assert_eq!(q.quantize(1.0).unwrap(), 0);
        assert_eq!(q.quantize(9.99).unwrap(), 0);
        assert_eq!(q.quantize(1e5).unwrap(), 7);
        assert_eq!(q.quantize(1e9).unwrap(), 7);
        assert!(q.quantize(0.0).is_err());
        assert!(q.quantize(-3.0).is_err());
    }

    #[test]
    fn dequantize_examples() {
        let q = q3();
        assert!((q.dequantize(4).unwrap() - 486.97).abs() < 0.01);
        assert!((q.dequantize(0).unwrap() - 15.40).abs() < 0.01);
        assert!(q.dequantize(8).is_err());
    }

    #[test]
    fn per_link_window_follows_mean_gain() {
        let cfg = NetworkConfig::new(2, 1, 30.0, 20.0).with_feedback(8, 0.0);
        let direct = Quantizer::for_link(&cfg, 1.0).unwrap();
        let cross = Quantizer::for_link(&cfg, 0.01).unwrap();
        assert!((direct.lo_db() - 10.0).abs() < 1e-12);
        assert!((cross.lo_db() + 10.0).abs() < 1e-12);
        let abs = cfg.with_quantizer_reference(QuantizerReference::Absolute);
        assert!((Quantizer::for_link(&abs, 0.01).unwrap().lo_db() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_label_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in 0..256 {
            assert_eq!(corrupt_label(l, 8, 0.0, &mut rng), l);
        }
        for _ in 0..100 {
            assert_eq!(corrupt_label(0, 1, 1.0, &mut rng), 1);
            assert_eq!(corrupt_label(1, 1, 1.0, &mut rng), 0);
        }
        for _ in 0..1000 {
            let l = corrupt_label(5, 3, 1.0, &mut rng);
            assert!(l != 5 && l < 8);
        }
    }

    #[test]
    fn corruption_rate_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let errors = (0..n)
            .filter(|i| {
                let l = (*i % 256) as u32;
                corrupt_label(l, 8, 0.05, &mut rng) != l
            })
            .count();
        let rate = errors as f64 / n as f64;
        // 3 sigma binomial band is about 0.0021.
        assert!((rate - 0.05).abs() < 0.005, "{rate}");
    }

    #[test]
    fn wrong_labels_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            counts[corrupt_label(2, 2, 1.0, &mut rng) as usize] += 1;
        }
        assert_eq!(counts[2], 0);
        for c in [counts[0], counts[1], counts[3]] {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn observe_fine_quantizer() {
        let q = Quantizer::new(16, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let half_cell_db = 30.0 / 65536.0 / 2.0;
        for p in [20.0, 100.0, 700.0, 3000.0] {
            let o = observe(&q, &[1.0, 0.3], &[p, 0.0], 1.0, 0.0, &mut rng).unwrap();
            assert_eq!(o.label_sent, o.label_received);
            assert!((to_db(o.observed_power) - to_db(o.true_power)).abs() <= half_cell_db + 1e-12);
            assert!((o.noise_total - (o.observed_power - o.true_power)).abs() < 1e-12);
            assert_eq!(
                o.observed_power,
                q.dequantize(o.label_received.unwrap()).unwrap()
            );
        }
    }

    #[test]
    fn observe_noise_floor_clamps_to_label_zero() {
        let q = q3();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let o = observe(&q, &[1.0, 0.1], &[0.0, 0.0], 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(o.label_sent, Some(0));
        assert_eq!(o.true_power, 1.0);
    }

    #[test]
    fn observe_is_reproducible() {
        let q = Quantizer::new(4, 30.0).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|i| observe(&q, &[1.0], &[i as f64 * 20.0], 1.0, 0.3, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn ideal_channel_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = FeedbackChannel::Ideal
            .observe(0, 1, &[0.5, 1.0], &[3.0, 0.0], 1.0, &mut rng)
            .unwrap();
        assert_eq!(o.observed_power, 2.5);
        assert_eq!(o.noise_total, 0.0);
        assert!(!o.label_error());
    }

    #[test]
    fn mismatch_term() {
        assert!((local_csi_mismatch(1.0, 0.9, 10.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(n in 1u32..=12, snr in -10.0f64..50.0,
                                a in -30.0f64..80.0, b in -30.0f64..80.0) {
            let q = Quantizer::new(n, snr).unwrap();
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize(from_db(x)).unwrap() <= q.quantize(from_db(y)).unwrap());
        }

        #[test]
        fn quantize_dequantize_idempotent(n in 1u32..=16, snr in -10.0f64..50.0, l in any::<u32>()) {
            let q = Quantizer::new(n, snr).unwrap();
            let l = l % q.level_count();
            prop_assert_eq!(q.quantize(q.dequantize(l).unwrap()).unwrap(), l);
        }

        #[test]
        fn in_range_error_within_half_cell(n in 1u32..=16, snr in -10.0f64..50.0, t in 0.0f64..=1.0) {
            let q = Quantizer::new(n, snr).unwrap();
            let db = q.lo_db() + t * RANGE_DB;
            let back = to_db(q.dequantize(q.quantize(from_db(db)).unwrap()).unwrap());
            prop_assert!((back - db).abs() <= 15.0 / f64::from(q.level_count()) + 1e-9);
        }
    }
}
