use serde::Serialize;

use crate::channel::{to_db, ChannelMatrix};
use crate::error::{Error, Result};
use crate::exchange::CsiEstimate;

/// `||G||^2 / ||G - G^||^2` for one realization, as a linear ratio.
///
/// A perfect estimate yields `+inf`.
pub fn esnr(truth: &ChannelMatrix, estimate: &CsiEstimate) -> Result<f64> {
    let (signal, error) = esnr_terms(truth, estimate)?;
    Ok(if error == 0.0 {
        f64::INFINITY
    } else {
        signal / error
    })
}

/// Numerator and denominator of the ESNR for one realization.
pub fn esnr_terms(truth: &ChannelMatrix, estimate: &CsiEstimate) -> Result<(f64, f64)> {
    let signal = truth.gains.frobenius_sq();
    if signal == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok((signal, truth.gains.distance_sq(&estimate.gains)?))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    xs.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Ratio of means `sum(signal) / sum(error)` in dB, with a delta-method
/// standard error (also in dB).
pub fn ratio_of_means_db(signal: &[f64], error: &[f64]) -> (f64, f64) {
    let n = signal.len();
    let num = compensated_sum(signal.iter().copied()) / n as f64;
    let den = compensated_sum(error.iter().copied()) / n as f64;
    if den == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let ratio = num / den;
    if n < 2 {
        return (to_db(ratio), 0.0);
    }
    let resid = compensated_sum(
        signal
            .iter()
            .zip(error)
            .map(|(a, b)| (a - ratio * b) * (a - ratio * b)),
    );
    let se_ratio = (resid / (n - 1) as f64 / n as f64).sqrt() / den;
    (
        to_db(ratio),
        10.0 / std::f64::consts::LN_10 * se_ratio / ratio,
    )
}

/// Aggregated results for one (sweep value, scheme) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub sweep_value: f64,
    pub scheme: String,
    /// Present only for schemes that run the CSI exchange.
    pub mean_esnr_db: Option<f64>,
    pub se_esnr_db: Option<f64>,
    /// Bits per channel use; discounted by exploration overhead when the
    /// scenario asks for it.
    pub mean_sum_rate: f64,
    pub se_sum_rate: f64,
    pub trial_count: usize,
    pub mean_exploration_slots: f64,
}
