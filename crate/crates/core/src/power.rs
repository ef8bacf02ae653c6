//! Exploitation-phase power control: SINR and sum-rate, single-user
//! water-filling, team best-response dynamics on a CSI estimate, and the
//! selfish iterative water-filling baseline.
//!
//! Each transmitter has a total budget `sum_s p_i^s <= P_max` across bands.

use serde::{Deserialize, Serialize};

use crate::channel::{GainTensor, NetworkConfig};
use crate::error::{Error, Result};
use crate::exchange::CsiEstimate;

const BUDGET_TOL: f64 = 1e-9;

/// Transmit powers `p_i^s`, indexed `(transmitter, band)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    k: usize,
    bands: usize,
    powers: Vec<f64>,
}

impl PowerProfile {
    pub fn zeros(k: usize, bands: usize) -> Self {
        PowerProfile {
            k,
            bands,
            powers: vec![0.0; k * bands],
        }
    }

    /// Every transmitter splits its budget evenly across bands.
    pub fn uniform(k: usize, bands: usize, p_max: f64) -> Self {
        PowerProfile {
            k,
            bands,
            powers: vec![p_max / bands as f64; k * bands],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let bands = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != bands) {
            return Err(Error::DimensionMismatch {
                what: "power profile row",
                expected: bands,
                got: bad.len(),
            });
        }
        Ok(PowerProfile {
            k,
            bands,
            powers: rows.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    #[inline]
    pub fn get(&self, tx: usize, band: usize) -> f64 {
        self.powers[tx * self.bands + band]
    }

    pub fn row(&self, tx: usize) -> &[f64] {
        &self.powers[tx * self.bands..(tx + 1) * self.bands]
    }

    pub fn set_row(&mut self, tx: usize, row: &[f64]) {
        self.powers[tx * self.bands..(tx + 1) * self.bands].copy_from_slice(row);
    }

    pub fn total(&self, tx: usize) -> f64 {
        self.row(tx).iter().sum()
    }

    /// Nonnegative powers, per-transmitter total within `p_max`.
    pub fn is_feasible(&self, p_max: f64) -> bool {
        self.powers.iter().all(|&p| p >= 0.0)
            && (0..self.k).all(|i| self.total(i) <= p_max + BUDGET_TOL)
    }

    pub fn max_abs_diff(&self, other: &PowerProfile) -> f64 {
        self.powers
            .iter()
            .zip(&other.powers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `g_ii p_i / (sigma2 + sum_{j != i} g_ji p_j)` on band `band`.
pub fn sinr(i: usize, band: usize, profile: &PowerProfile, gains: &GainTensor, sigma2: f64) -> f64 {
    let interference: f64 = (0..profile.k())
        .filter(|&j| j != i)
        .map(|j| gains.get(j, i, band) * profile.get(j, band))
        .sum();
    gains.get(i, i, band) * profile.get(i, band) / (sigma2 + interference)
}

/// Sum over bands and users of `log2(1 + SINR)`, in bits per channel use.
pub fn sum_rate(profile: &PowerProfile, gains: &GainTensor, sigma2: f64) -> f64 {
    (0..profile.bands())
        .map(|s| {
            (0..profile.k())
                .map(|i| (1.0 + sinr(i, s, profile, gains, sigma2)).log2())
                .sum::<f64>()
        })
        .sum()
}

/// Single-user water-filling solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    pub powers: Vec<f64>,
    /// Common value of `p_s + n_s / g_s` on active bands.
    pub level: f64,
    /// No band has a positive gain; the budget could not be spent.
    pub degenerate: bool,
}

/// Maximizes `sum_s log2(1 + g_s p_s / n_s)` subject to `sum_s p_s = budget`.
///
/// `p_s = max(0, mu - n_s / g_s)`; bands with zero gain get nothing.
pub fn water_fill(direct_gains: &[f64], noise: &[f64], budget: f64) -> Result<WaterFilling> {
    if direct_gains.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            what: "water-filling gains vs noise",
            expected: direct_gains.len(),
            got: noise.len(),
        });
    }
    if direct_gains.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
        return Err(Error::InvalidConfig(
            "water-filling gains must be nonnegative".into(),
        ));
    }
    if noise.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::InvalidConfig(
            "water-filling noise must be positive".into(),
        ));
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "budget must be nonnegative, got {budget}"
        )));
    }

    let mut floors: Vec<(f64, usize)> = direct_gains
        .iter()
        .zip(noise)
        .enumerate()
        .filter(|(_, (&g, _))| g > 0.0)
        .map(|(s, (g, n))| (n / g, s))
        .collect();
    let mut powers = vec![0.0; direct_gains.len()];
    if floors.is_empty() {
        return Ok(WaterFilling {
            powers,
            level: f64::INFINITY,
            degenerate: budget > 0.0,
        });
    }
    floors.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut partial = 0.0;
    let mut level = floors[0].0;
    for m in 0..floors.len() {
        partial += floors[m].0;
        level = (budget + partial) / (m + 1) as f64;
        if m + 1 == floors.len() || level <= floors[m + 1].0 {
            break;
        }
    }
    for &(floor, s) in &floors {
        powers[s] = (level - floor).max(0.0);
    }
    Ok(WaterFilling {
        powers,
        level,
        degenerate: false,
    })
}

/// Numerics of the best-response dynamics (also used by IWFA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrdSettings {
    /// Grid points per band, `0..=P_max` evenly spaced.
    pub grid_points: usize,
    pub max_rounds: usize,
    /// Largest power change in a round that counts as converged, as a
    /// fraction of `P_max`.
    pub convergence_tol: f64,
}

impl Default for BrdSettings {
    fn default() -> Self {
        BrdSettings {
            grid_points: 64,
            max_rounds: 100,
            convergence_tol: 1e-6,
        }
    }
}

impl BrdSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 || self.max_rounds < 1 || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad BRD settings: {self:?} (need grid_points >= 2, max_rounds >= 1, tol > 0)"
            )));
        }
        Ok(())
    }
}

/// Result of an iterative power-control run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub profile: PowerProfile,
    pub converged: bool,
    pub rounds: usize,
    /// Objective after the initial profile and after every accepted update
    /// (team BRD only; empty for IWFA).
    pub objective_trace: Vec<f64>,
}

fn check_dims(gains: &GainTensor, config: &NetworkConfig) -> Result<()> {
    if gains.k() != config.k || gains.bands() != config.bands {
        return Err(Error::DimensionMismatch {
            what: "gain tensor vs config",
            expected: config.k * config.k * config.bands,
            got: gains.as_slice().len(),
        });
    }
    Ok(())
}

/// Sum-rate on `band` as a function of player `i`'s power, everyone else
/// fixed; evaluated on the grid `u * step`.
fn band_values(
    i: usize,
    band: usize,
    profile: &PowerProfile,
    gains: &GainTensor,
    sigma2: f64,
    step: f64,
    points: usize,
) -> Vec<f64> {
    let k = profile.k();
    // Interference at each receiver from everyone but i (and itself).
    let base: Vec<f64> = (0..k)
        .map(|rx| {
            sigma2
                + (0..k)
                    .filter(|&j| j != i && j != rx)
                    .map(|j| gains.get(j, rx, band) * profile.get(j, band))
                    .sum::<f64>()
        })
        .collect();
    (0..points)
        .map(|u| {
            let x = u as f64 * step;
            (0..k)
                .map(|rx| {
                    let sinr = if rx == i {
                        gains.get(i, i, band) * x / base[i]
                    } else {
                        gains.get(rx, rx, band) * profile.get(rx, band)
                            / (base[rx] + gains.get(i, rx, band) * x)
                    };
                    (1.0 + sinr).log2()
                })
                .sum()
        })
        .collect()
}

/// Best grid allocation of at most `budget_units` across bands given per-band
/// value tables. Among equal optima the lowest total power wins; remaining
/// ties resolve to the smallest allocation on the latest band.
fn best_allocation(values: &[Vec<f64>], budget_units: usize) -> (f64, Vec<usize>) {
    let bands = values.len();
    // table[s][b]: best value on bands 0..=s using exactly b units.
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(bands);
    let mut choice: Vec<Vec<usize>> = Vec::with_capacity(bands);
    for (s, v) in values.iter().enumerate() {
        let mut row = vec![f64::NEG_INFINITY; budget_units + 1];
        let mut pick = vec![0; budget_units + 1];
        for b in 0..=budget_units {
            for u in 0..=b.min(v.len() - 1) {
                let prev = match s {
                    0 if u == b => 0.0,
                    0 => continue,
                    _ => table[s - 1][b - u],
                };
                let cand = v[u] + prev;
                if cand > row[b] {
                    row[b] = cand;
                    pick[b] = u;
                }
            }
        }
        table.push(row);
        choice.push(pick);
    }
    let last = &table[bands - 1];
    let mut b = 0;
    for (units, &value) in last.iter().enumerate() {
        if value > last[b] {
            b = units;
        }
    }
    let best = last[b];
    let mut alloc = vec![0; bands];
    for s in (0..bands).rev() {
        alloc[s] = choice[s][b];
        b -= alloc[s];
    }
    (best, alloc)
}

/// Team best-response dynamics on the gains `estimate`, run offline.
///
/// Starting from the uniform profile, players update in index order; each
/// replaces its power vector by the budget-feasible grid point maximizing the
/// sum-rate computed on `estimate`, keeping its current vector unless the grid
/// point is strictly better. Stops when a full round moves no power by more
/// than `convergence_tol * P_max`, or after `max_rounds`.
pub fn team_brd(
    estimate: &GainTensor,
    config: &NetworkConfig,
    settings: &BrdSettings,
) -> Result<Dynamics> {
    settings.validate()?;
    check_dims(estimate, config)?;
    let (k, bands) = (config.k, config.bands);
    let points = settings.grid_points;
    let step = config.p_max / (points - 1) as f64;
    let tol = settings.convergence_tol * config.p_max;

    let mut profile = PowerProfile::uniform(k, bands, config.p_max);
    let mut current = sum_rate(&profile, estimate, config.sigma2);
    let mut objective_trace = vec![current];
    let mut converged = false;
    let mut rounds = 0;
    while rounds < settings.max_rounds {
        rounds += 1;
        let mut moved: f64 = 0.0;
        for i in 0..k {
            let values: Vec<Vec<f64>> = (0..bands)
                .map(|s| band_values(i, s, &profile, estimate, config.sigma2, step, points))
                .collect();
            let (best, alloc) = best_allocation(&values, points - 1);
            if best > current + 1e-12 * current.abs().max(1.0) {
                let row: Vec<f64> = alloc.iter().map(|&u| u as f64 * step).collect();
                let delta = row
                    .iter()
                    .zip(profile.row(i))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                moved = moved.max(delta);
                profile.set_row(i, &row);
                current = sum_rate(&profile, estimate, config.sigma2);
                objective_trace.push(current);
            }
        }
        if moved <= tol {
            converged = true;
            break;
        }
    }
    Ok(Dynamics {
        profile,
        converged,
        rounds,
        objective_trace,
    })
}

/// Every transmitter runs [`team_brd`] on its own estimate and plays its own
/// row of the result.
pub fn distributed_team_brd(
    estimates: &[CsiEstimate],
    config: &NetworkConfig,
    settings: &BrdSettings,
) -> Result<Dynamics> {
    if estimates.len() != config.k {
        return Err(Error::DimensionMismatch {
            what: "estimates per transmitter",
            expected: config.k,
            got: estimates.len(),
        });
    }
    let mut profile = PowerProfile::zeros(config.k, config.bands);
    let mut converged = true;
    let mut rounds = 0;
    for (i, est) in estimates.iter().enumerate() {
        let local = team_brd(&est.gains, config, settings)?;
        profile.set_row(i, local.profile.row(i));
        converged &= local.converged;
        rounds = rounds.max(local.rounds);
    }
    Ok(Dynamics {
        profile,
        converged,
        rounds,
        objective_trace: Vec::new(),
    })
}

/// Iterative water-filling on the true gains: transmitters in index order
/// water-fill their budget against the interference-plus-noise they currently
/// measure.
pub fn iwfa(
    truth: &GainTensor,
    config: &NetworkConfig,
    settings: &BrdSettings,
) -> Result<Dynamics> {
    settings.validate()?;
    check_dims(truth, config)?;
    let (k, bands) = (config.k, config.bands);
    let tol = settings.convergence_tol * config.p_max;
    let mut profile = PowerProfile::uniform(k, bands, config.p_max);
    let mut converged = false;
    let mut rounds = 0;
    while rounds < settings.max_rounds {
        rounds += 1;
        let before = profile.clone();
        for i in 0..k {
            let direct: Vec<f64> = (0..bands).map(|s| truth.get(i, i, s)).collect();
            let noise: Vec<f64> = (0..bands)
                .map(|s| {
                    config.sigma2
                        + (0..k)
                            .filter(|&j| j != i)
                            .map(|j| truth.get(j, i, s) * profile.get(j, s))
                            .sum::<f64>()
                })
                .collect();
            let wf = water_fill(&direct, &noise, config.p_max)?;
            profile.set_row(i, &wf.powers);
        }
        if profile.max_abs_diff(&before) <= tol {
            converged = true;
            break;
        }
    }
    Ok(Dynamics {
        profile,
        converged,
        rounds,
        objective_trace: Vec::new(),
    })
}
