//! Monte-Carlo driver: scenarios, per-trial simulation, aggregation and CSV.
//!
//! Trial `t` of every sweep point and scheme uses the random stream seeded
//! with `seed + t`, so all schemes (and all sweep values) see the same
//! channel draws. Trials run in parallel; results are reduced in trial order.

mod csv;
mod metrics;
pub mod presets;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{perturb_local_csi, sample_channel, NetworkConfig};
use crate::error::{Error, Result};
use crate::exchange::{run_exchange_with, ExchangeSetup, SlotTrace};
use crate::power::{distributed_team_brd, iwfa, sum_rate, team_brd, BrdSettings};

pub use self::csv::{emit_csv, to_csv, CSV_HEADER, ESNR_CAP_DB};
pub use self::metrics::{
    esnr, esnr_terms, mean_and_se, ratio_of_means_db, CompensatedSum, MetricsRecord,
};

/// Power-control schemes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// CSI exchange by power modulation, then distributed team BRD.
    CpmBrd,
    /// Team BRD with perfect global CSI at every transmitter.
    PerfectBrd,
    /// Iterative water-filling; no CSI exchange.
    Iwfa,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::CpmBrd => "cpm_brd",
            Scheme::PerfectBrd => "perfect_brd",
            Scheme::Iwfa => "iwfa",
        }
    }

    pub fn exchanges_csi(self) -> bool {
        matches!(self, Scheme::CpmBrd)
    }
}

/// The network parameter a scenario sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SirDb,
    SnrDb,
    NBits,
    Epsilon,
    LocalCsiNoiseStd,
}

impl SweepParameter {
    /// Returns `base` with this parameter set to `value`.
    pub fn apply(self, base: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParameter::SirDb => cfg.sir_db = value,
            SweepParameter::SnrDb => cfg.set_snr_db(value),
            SweepParameter::NBits => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidConfig(format!("n_bits sweep value {value}")));
                }
                cfg.n_bits = value as u32;
            }
            SweepParameter::Epsilon => cfg.epsilon = value,
            SweepParameter::LocalCsiNoiseStd => cfg.local_csi_noise_std = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn default_frame_length() -> usize {
    1000
}

/// A Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub brd: BrdSettings,
    /// Slots per frame, used when discounting exploration overhead.
    #[serde(default = "default_frame_length")]
    pub frame_length: usize,
    #[serde(default)]
    pub discount_exploration: bool,
    /// Appended to scheme names in the output, e.g. `cpm_brd:n8_e0.01`.
    #[serde(default)]
    pub label: Option<String>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required");
        }
        if self.sweep.values.is_empty() || self.sweep.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite and nonempty");
        }
        if self.frame_length == 0 {
            return bad("frame_length must be positive");
        }
        self.brd.validate()?;
        for &v in &self.sweep.values {
            self.sweep.parameter.apply(&self.network, v)?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn scheme_label(&self, scheme: Scheme) -> String {
        match &self.label {
            Some(l) => format!("{}:{l}", scheme.name()),
            None => scheme.name().to_string(),
        }
    }
}

/// One scheme's result on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOutcome {
    pub sum_rate: f64,
    /// Slots spent before the exploitation phase.
    pub exploration_slots: usize,
    /// `||G||^2` and the transmitter-averaged `||G - G^_i||^2`, for schemes
    /// that estimate CSI.
    pub esnr_terms: Option<(f64, f64)>,
    pub converged: bool,
}

impl SchemeOutcome {
    /// Sum-rate scaled by the fraction of the frame left for exploitation.
    pub fn discounted_rate(&self, frame_length: usize) -> f64 {
        let left = frame_length.saturating_sub(self.exploration_slots);
        self.sum_rate * left as f64 / frame_length as f64
    }
}

/// All successful trials of one sweep point; `outcomes[t][m]` is trial `t`
/// under `schemes[m]`.
#[derive(Debug, Clone)]
pub struct PointSamples {
    pub sweep_value: f64,
    pub schemes: Vec<Scheme>,
    pub outcomes: Vec<Vec<SchemeOutcome>>,
    pub aborted: usize,
}

impl PointSamples {
    /// Per-trial outcomes of one scheme.
    pub fn scheme(&self, scheme: Scheme) -> Option<Vec<SchemeOutcome>> {
        let m = self.schemes.iter().position(|&s| s == scheme)?;
        Some(self.outcomes.iter().map(|t| t[m]).collect())
    }
}

/// Runs one trial of every scheme on a single channel realization.
pub fn run_trial(
    config: &NetworkConfig,
    schemes: &[Scheme],
    brd: &BrdSettings,
    seed: u64,
    trace: Option<&mut Vec<SlotTrace>>,
) -> Result<Vec<SchemeOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sample_channel(config, &mut rng)?;
    let local = perturb_local_csi(&truth, config, &mut rng);
    let mut trace = trace;
    schemes
        .iter()
        .map(|&scheme| match scheme {
            Scheme::CpmBrd => {
                let setup = ExchangeSetup::standard(config, &truth.stats)?;
                let estimates =
                    run_exchange_with(&truth, &local, config, &setup, &mut rng, trace.take())?;
                let signal = truth.gains.frobenius_sq();
                let mut error = 0.0;
                for est in &estimates {
                    error += esnr_terms(&truth, est)?.1;
                }
                error /= estimates.len() as f64;
                let dynamics = distributed_team_brd(&estimates, config, brd)?;
                Ok(SchemeOutcome {
                    sum_rate: sum_rate(&dynamics.profile, &truth.gains, config.sigma2),
                    exploration_slots: config.k * config.k,
                    esnr_terms: Some((signal, error)),
                    converged: dynamics.converged,
                })
            }
            Scheme::PerfectBrd => {
                let dynamics = team_brd(&truth.gains, config, brd)?;
                Ok(SchemeOutcome {
                    sum_rate: sum_rate(&dynamics.profile, &truth.gains, config.sigma2),
                    exploration_slots: 0,
                    esnr_terms: None,
                    converged: dynamics.converged,
                })
            }
            Scheme::Iwfa => {
                let dynamics = iwfa(&truth.gains, config, brd)?;
                Ok(SchemeOutcome {
                    sum_rate: sum_rate(&dynamics.profile, &truth.gains, config.sigma2),
                    // One slot per sequential update.
                    exploration_slots: dynamics.rounds * config.k,
                    esnr_terms: None,
                    converged: dynamics.converged,
                })
            }
        })
        .collect()
}

/// Simulates every trial at one sweep value.
pub fn simulate_point(scenario: &Scenario, sweep_value: f64) -> Result<PointSamples> {
    let config = scenario
        .sweep
        .parameter
        .apply(&scenario.network, sweep_value)?;
    let results: Vec<Result<Vec<SchemeOutcome>>> = (0..scenario.trials as u64)
        .into_par_iter()
        .map(|t| {
            run_trial(
                &config,
                &scenario.schemes,
                &scenario.brd,
                scenario.seed.wrapping_add(t),
                None,
            )
        })
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut aborted = 0;
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("sweep {sweep_value}: trial {t} aborted: {e}");
                aborted += 1;
            }
        }
    }
    if aborted * 100 > scenario.trials {
        return Err(Error::TooManyAborts {
            aborted,
            total: scenario.trials,
        });
    }
    Ok(PointSamples {
        sweep_value,
        schemes: scenario.schemes.clone(),
        outcomes,
        aborted,
    })
}

/// Reduces one sweep point into a record per scheme.
pub fn aggregate(scenario: &Scenario, samples: &PointSamples) -> Vec<MetricsRecord> {
    samples
        .schemes
        .iter()
        .enumerate()
        .map(|(m, &scheme)| {
            let per_trial: Vec<&SchemeOutcome> = samples.outcomes.iter().map(|t| &t[m]).collect();
            let rates: Vec<f64> = per_trial
                .iter()
                .map(|o| {
                    if scenario.discount_exploration {
                        o.discounted_rate(scenario.frame_length)
                    } else {
                        o.sum_rate
                    }
                })
                .collect();
            let (mean_rate, se_rate) = mean_and_se(&rates);
            let (mean_esnr_db, se_esnr_db) = if scheme.exchanges_csi() {
                let (sig, err): (Vec<f64>, Vec<f64>) =
                    per_trial.iter().filter_map(|o| o.esnr_terms).unzip();
                let (m, se) = ratio_of_means_db(&sig, &err);
                (Some(m), Some(se))
            } else {
                (None, None)
            };
            let slots: Vec<f64> = per_trial
                .iter()
                .map(|o| o.exploration_slots as f64)
                .collect();
            MetricsRecord {
                sweep_value: samples.sweep_value,
                scheme: scenario.scheme_label(scheme),
                mean_esnr_db,
                se_esnr_db,
                mean_sum_rate: mean_rate,
                se_sum_rate: se_rate,
                trial_count: per_trial.len(),
                mean_exploration_slots: mean_and_se(&slots).0,
            }
        })
        .collect()
}

/// Runs every sweep point and returns one record per (sweep value, scheme).
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<MetricsRecord>> {
    scenario.validate()?;
    let mut records = Vec::new();
    for &v in &scenario.sweep.values {
        let samples = simulate_point(scenario, v)?;
        records.extend(aggregate(scenario, &samples));
    }
    Ok(records)
}

/// Exchange trace of trial 0 at one sweep value.
#[derive(Debug, Clone, Serialize)]
pub struct TraceLine<'a> {
    pub label: Option<&'a str>,
    pub sweep: f64,
    #[serde(flatten)]
    pub slot: &'a SlotTrace,
}

/// Records the exploration slots of trial 0 at every sweep value.
pub fn trace_scenario(scenario: &Scenario) -> Result<Vec<(f64, Vec<SlotTrace>)>> {
    if !scenario.schemes.contains(&Scheme::CpmBrd) {
        return Ok(Vec::new());
    }
    scenario
        .sweep
        .values
        .iter()
        .map(|&v| {
            let config = scenario.sweep.parameter.apply(&scenario.network, v)?;
            let mut slots = Vec::new();
            run_trial(
                &config,
                &[Scheme::CpmBrd],
                &scenario.brd,
                scenario.seed,
                Some(&mut slots),
            )?;
            Ok((v, slots))
        })
        .collect()
}

/// Writes traces as line-delimited JSON.
pub fn write_trace<W: Write>(
    out: &mut W,
    label: Option<&str>,
    traces: &[(f64, Vec<SlotTrace>)],
) -> Result<()> {
    for (sweep, slots) in traces {
        for slot in slots {
            serde_json::to_writer(
                &mut *out,
                &TraceLine {
                    label,
                    sweep: *sweep,
                    slot,
                },
            )?;
            out.write_all(b"\n").map_err(|source| Error::Io {
                path: "<trace>".into(),
                source,
            })?;
        }
    }
    Ok(())
}
