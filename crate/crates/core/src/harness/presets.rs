//! Ready-made scenarios for the two reference experiments.

use super::{Scenario, Scheme, Sweep, SweepParameter};
use crate::channel::NetworkConfig;
use crate::power::BrdSettings;

pub const FIG1_DEFAULT_TRIALS: usize = 1000;
pub const FIG2_DEFAULT_TRIALS: usize = 10_000;

/// Feedback qualities `(N, epsilon)` compared in the ESNR-vs-SIR experiment.
pub const FIG2_FEEDBACK: [(u32, f64); 3] = [(8, 0.01), (4, 0.05), (1, 0.05)];

pub fn fig2_sir_values() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

/// Sum-rate vs SNR: `K = 4`, `S = 2`, 8-bit feedback, 1% label errors,
/// SIR 10 dB; SNR swept over 10..=40 dB in 5 dB steps.
pub fn fig1(trials: usize, seed: u64) -> Scenario {
    Scenario {
        network: NetworkConfig::new(4, 2, 30.0, 10.0).with_feedback(8, 0.01),
        sweep: Sweep {
            parameter: SweepParameter::SnrDb,
            values: (0..7).map(|i| 10.0 + 5.0 * i as f64).collect(),
        },
        schemes: vec![Scheme::PerfectBrd, Scheme::CpmBrd, Scheme::Iwfa],
        trials,
        seed,
        brd: BrdSettings::default(),
        frame_length: 1000,
        discount_exploration: false,
        label: None,
    }
}

/// ESNR vs SIR: `K = 2`, `S = 1`, SNR 30 dB, one scenario per feedback
/// quality in [`FIG2_FEEDBACK`].
pub fn fig2(trials: usize, seed: u64) -> Vec<Scenario> {
    FIG2_FEEDBACK
        .iter()
        .map(|&(n_bits, eps)| Scenario {
            network: NetworkConfig::new(2, 1, 30.0, 0.0).with_feedback(n_bits, eps),
            sweep: Sweep {
                parameter: SweepParameter::SirDb,
                values: fig2_sir_values(),
            },
            schemes: vec![Scheme::CpmBrd],
            trials,
            seed,
            brd: BrdSettings::default(),
            frame_length: 1000,
            discount_exploration: false,
            label: Some(format!("n{n_bits}_e{eps}")),
        })
        .collect()
}
