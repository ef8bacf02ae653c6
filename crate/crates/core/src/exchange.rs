//! Exploration phase: time-shared continuous power modulation of local CSI
//! and the linear estimator that recovers it from RSSI feedback.
//!
//! Transmitter `j` owns slots `j*K .. (j+1)*K` (0-based) of a `K^2`-slot
//! phase. On slot `t` of its block it transmits at
//! `p_j(t) = P_max * sum_k a_k(t) * g~_kj / g_kj^max`, i.e. row `t` of
//! `P^j g~_j`. Every receiver reports its RS power; transmitter `i` stacks the
//! `K` reports from `j`'s block and solves
//! `g^_j = (P^j)^-1 (w~ - sigma2 * 1) / g~_ji`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, LU};
use rand::Rng;
use serde::Serialize;

use crate::channel::{ChannelMatrix, GainTensor, LinkStats, LocalCsi, NetworkConfig};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackChannel, FeedbackObservation};

/// Largest accepted condition number of a power matrix.
pub const MAX_CONDITION: f64 = 1e8;

/// Anchor gains below this are treated as unusable.
pub const ANCHOR_FLOOR: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-9;

/// Which transmitter is active on each exploration slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationSchedule {
    k: usize,
    active: Vec<usize>,
}

impl ExplorationSchedule {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("schedule needs k >= 1".into()));
        }
        let active = (0..k * k).map(|slot| slot / k).collect();
        Ok(ExplorationSchedule { k, active })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `T = K^2`.
    pub fn slot_count(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self, slot: usize) -> usize {
        self.active[slot]
    }

    pub fn block_start(&self, tx: usize) -> usize {
        tx * self.k
    }

    pub fn block(&self, tx: usize) -> Range<usize> {
        let start = self.block_start(tx);
        start..start + self.k
    }

    /// Extra slots relative to a `K(K-1)`-slot exchange, as a fraction.
    /// `None` for `K = 1`, where the reference is zero.
    pub fn overhead_vs_pairwise(&self) -> Option<f64> {
        let pairwise = self.k * (self.k - 1);
        (pairwise > 0).then(|| (self.slot_count() - pairwise) as f64 / pairwise as f64)
    }
}

/// Modulation coefficients of one transmitter and the resulting power matrix.
///
/// Row `t` of `A` holds the weights used on slot `t` of the owner's block.
/// `P[t][k] = P_max * A[t][k] / g_k^max`, with `g_k^max` the upper bound of the
/// link from transmitter `k` into the owner's receiver.
#[derive(Debug, Clone)]
pub struct ModulationMatrix {
    owner: usize,
    p_max: f64,
    a: DMatrix<f64>,
    p: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl ModulationMatrix {
    pub fn new(owner: usize, a: DMatrix<f64>, g_max: &[f64], p_max: f64) -> Result<Self> {
        let k = g_max.len();
        if a.nrows() != k || a.ncols() != k {
            return Err(Error::DimensionMismatch {
                what: "modulation matrix",
                expected: k * k,
                got: a.len(),
            });
        }
        for (t, row) in a.row_iter().enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::BadModulation(format!(
                    "row {t} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::BadModulation(format!("row {t} sums to {sum}")));
            }
        }
        if g_max.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::BadModulation("g_max must be positive".into()));
        }
        let p = DMatrix::from_fn(k, k, |t, m| p_max * a[(t, m)] / g_max[m]);
        let sv = p.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::BadModulation(format!(
                "power matrix condition number {condition:e} exceeds {MAX_CONDITION:e}"
            )));
        }
        let lu = p.clone().lu();
        Ok(ModulationMatrix {
            owner,
            p_max,
            a,
            p,
            lu,
            condition,
        })
    }

    /// `A = I`: slot `t` carries the single gain `g~_tj`.
    pub fn identity(owner: usize, g_max: &[f64], p_max: f64) -> Result<Self> {
        let k = g_max.len();
        Self::new(owner, DMatrix::identity(k, k), g_max, p_max)
    }

    /// Reads the owner's `g^max` column from the link statistics.
    pub fn for_transmitter(
        owner: usize,
        a: DMatrix<f64>,
        stats: &LinkStats,
        p_max: f64,
    ) -> Result<Self> {
        let g_max: Vec<f64> = (0..stats.k()).map(|tx| stats.g_max(tx, owner)).collect();
        Self::new(owner, a, &g_max, p_max)
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn power_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Power on slot `t` of the block for the local CSI vector `local`.
    fn row_power(&self, t: usize, local: &[f64]) -> f64 {
        self.p.row(t).iter().zip(local).map(|(p, g)| p * g).sum()
    }

    /// Solves `P x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .map(|x| x.iter().copied().collect())
            .ok_or_else(|| Error::BadModulation("singular power matrix".into()))
    }
}

/// `P_max * sum_k weights[k] * local[k] / g_max[k]`: the power carried by one
/// row of modulation weights.
pub fn modulated_power(weights: &[f64], local: &[f64], g_max: &[f64], p_max: f64) -> f64 {
    weights
        .iter()
        .zip(local)
        .zip(g_max)
        .map(|((a, g), gm)| p_max * a * g / gm)
        .sum()
}

/// Transmit power of `mm`'s owner on slot `slot_in_block` of its block, band
/// `band`.
pub fn exploration_power(
    slot_in_block: usize,
    local: &LocalCsi,
    mm: &ModulationMatrix,
    band: usize,
) -> Result<f64> {
    if local.owner() != mm.owner() {
        return Err(Error::InvalidConfig(format!(
            "local CSI of {} used with modulation of {}",
            local.owner(),
            mm.owner()
        )));
    }
    if slot_in_block >= mm.k() || local.k() != mm.k() {
        return Err(Error::DimensionMismatch {
            what: "exploration slot",
            expected: mm.k(),
            got: slot_in_block.max(local.k()),
        });
    }
    let p = mm.row_power(slot_in_block, &local.column(band));
    // One ulp-scale margin for the row-stochastic combination.
    if p > mm.p_max() * (1.0 + 1e-12) || p < 0.0 {
        return Err(Error::PowerAboveBudget {
            power: p,
            p_max: mm.p_max(),
        });
    }
    Ok(p.min(mm.p_max()))
}

/// Estimates the owner of `mm`'s local CSI from the `K` RS power reports
/// gathered during its block.
///
/// `anchor` is the estimator's own estimate of the gain from the active
/// transmitter into the estimator's receiver; `bounds[k]` is the support of
/// the link from transmitter `k` into the active transmitter's receiver.
pub fn estimate_remote_csi(
    observations: &[FeedbackObservation],
    mm: &ModulationMatrix,
    anchor: f64,
    sigma2: f64,
    bounds: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let k = mm.k();
    if observations.len() != k || bounds.len() != k {
        return Err(Error::DimensionMismatch {
            what: "remote CSI estimate",
            expected: k,
            got: observations.len().min(bounds.len()),
        });
    }
    if !(anchor >= ANCHOR_FLOOR) {
        return Err(Error::UnusableAnchor(anchor));
    }
    let rhs: Vec<f64> = observations
        .iter()
        .map(|o| o.observed_power - sigma2)
        .collect();
    let x = mm.solve(&rhs)?;
    Ok(x.into_iter()
        .zip(bounds)
        .map(|(v, &(lo, hi))| (v / anchor).clamp(lo, hi))
        .collect())
}

/// Global CSI as estimated at one transmitter.
///
/// Laid out like [`ChannelMatrix::gains`]: entry `(k, j, s)` estimates the
/// gain from transmitter `k` into receiver `j`. Column `owner` is the owner's
/// local CSI, copied verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub owner: usize,
    pub gains: GainTensor,
}

impl CsiEstimate {
    /// The estimate held by a transmitter with perfect global CSI.
    pub fn perfect(owner: usize, truth: &ChannelMatrix) -> Self {
        CsiEstimate {
            owner,
            gains: truth.gains.clone(),
        }
    }
}

/// One exploration slot, for trace dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTrace {
    pub band: usize,
    pub slot: usize,
    pub active: usize,
    pub power: f64,
    pub true_rs: Vec<f64>,
    pub observed_rs: Vec<f64>,
}

/// Modulation matrices (one per transmitter) and feedback links.
#[derive(Debug, Clone)]
pub struct ExchangeSetup {
    pub modulation: Vec<ModulationMatrix>,
    pub feedback: FeedbackChannel,
}

impl ExchangeSetup {
    /// `A^j = I` for all `j`, quantized lossy feedback from the config.
    pub fn standard(config: &NetworkConfig, stats: &LinkStats) -> Result<Self> {
        let modulation = (0..config.k)
            .map(|j| {
                ModulationMatrix::for_transmitter(
                    j,
                    DMatrix::identity(config.k, config.k),
                    stats,
                    config.p_max,
                )
            })
            .collect::<Result<_>>()?;
        Ok(ExchangeSetup {
            modulation,
            feedback: FeedbackChannel::from_config(config, stats)?,
        })
    }
}

/// Runs the exploration phase with the standard setup.
pub fn run_exchange<R: Rng + ?Sized>(
    truth: &ChannelMatrix,
    local: &[LocalCsi],
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<Vec<CsiEstimate>> {
    let setup = ExchangeSetup::standard(config, &truth.stats)?;
    run_exchange_with(truth, local, config, &setup, rng, None)
}

/// Runs the exploration phase band by band and returns `G^i` for every
/// transmitter `i`. Slots are visited in schedule order; within a slot,
/// receivers report in index order.
pub fn run_exchange_with<R: Rng + ?Sized>(
    truth: &ChannelMatrix,
    local: &[LocalCsi],
    config: &NetworkConfig,
    setup: &ExchangeSetup,
    rng: &mut R,
    mut trace: Option<&mut Vec<SlotTrace>>,
) -> Result<Vec<CsiEstimate>> {
    let k = truth.k();
    let bands = truth.bands();
    if local.len() != k || setup.modulation.len() != k {
        return Err(Error::DimensionMismatch {
            what: "transmitters in exchange",
            expected: k,
            got: local.len().min(setup.modulation.len()),
        });
    }
    if local
        .iter()
        .enumerate()
        .any(|(i, l)| l.owner() != i || l.k() != k || l.bands() != bands)
    {
        return Err(Error::InvalidConfig(
            "local CSI list out of order or misshaped".into(),
        ));
    }
    let schedule = ExplorationSchedule::new(k)?;
    let mut estimates: Vec<CsiEstimate> = (0..k)
        .map(|owner| CsiEstimate {
            owner,
            gains: GainTensor::zeros(k, bands),
        })
        .collect();
    let mut reports = vec![Vec::with_capacity(k); k];
    let mut powers = vec![0.0; k];

    for s in 0..bands {
        let into_rx: Vec<Vec<f64>> = (0..k).map(|rx| truth.gains.into_receiver(rx, s)).collect();
        for j in 0..k {
            let mm = &setup.modulation[j];
            reports.iter_mut().for_each(Vec::clear);
            for slot in schedule.block(j) {
                let t = slot - schedule.block_start(j);
                let p = exploration_power(t, &local[j], mm, s)?;
                powers.fill(0.0);
                powers[j] = p;
                for (rx, gains) in into_rx.iter().enumerate() {
                    let obs = setup
                        .feedback
                        .observe(j, rx, gains, &powers, config.sigma2, rng)?;
                    reports[rx].push(obs);
                }
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(SlotTrace {
                        band: s,
                        slot,
                        active: j,
                        power: p,
                        true_rs: reports.iter().map(|r| r[t].true_power).collect(),
                        observed_rs: reports.iter().map(|r| r[t].observed_power).collect(),
                    });
                }
            }
            let bounds: Vec<(f64, f64)> = (0..k).map(|m| truth.stats.bounds(m, j)).collect();
            for i in (0..k).filter(|&i| i != j) {
                let anchor = local[i].get(j, s);
                let column = estimate_remote_csi(&reports[i], mm, anchor, config.sigma2, &bounds)?;
                for (m, g) in column.into_iter().enumerate() {
                    estimates[i].gains.set(m, j, s, g);
                }
            }
        }
        for (i, est) in estimates.iter_mut().enumerate() {
            for m in 0..k {
                est.gains.set(m, i, s, local[i].get(m, s));
            }
        }
    }
    Ok(estimates)
}
