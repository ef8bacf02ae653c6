//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::Instant;

use cpm_core::exchange::{run_exchange_with, ExchangeSetup, ExplorationSchedule, ModulationMatrix};
use cpm_core::feedback::{FeedbackChannel, Quantizer};
use cpm_core::harness::{
    mean_and_se, presets, ratio_of_means_db, run_scenario, simulate_point, to_csv, PointSamples,
    Scenario, Scheme,
};
use cpm_core::{
    gain_bounds, mean_gain, perturb_local_csi, sample_channel, to_db, water_fill, NetworkConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_row_stochastic(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(k, k, |i, j| {
        let x: f64 = rng.random();
        if i == j {
            x + 1.0
        } else {
            x
        }
    });
    for i in 0..k {
        let s: f64 = a.row(i).sum();
        for j in 0..k {
            a[(i, j)] /= s;
        }
    }
    a
}

fn noise_free_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut trials = 0;
    for t in 0..1000 {
        let k = 2 + t % 3;
        let bands = 1 + (t / 3) % 2;
        let random_a = (t / 6) % 2 == 1;
        let sir = rng.random_range(0.0..20.0);
        let cfg = NetworkConfig::new(k, bands, 30.0, sir);
        let truth = sample_channel(&cfg, &mut rng).unwrap();
        let local = perturb_local_csi(&truth, &cfg, &mut rng);
        let modulation: Vec<ModulationMatrix> = (0..k)
            .map(|j| loop {
                let a = if random_a {
                    random_row_stochastic(k, &mut rng)
                } else {
                    DMatrix::identity(k, k)
                };
                let m = ModulationMatrix::for_transmitter(j, a, &truth.stats, cfg.p_max).unwrap();
                if m.condition_number() < 1e6 {
                    break m;
                }
            })
            .collect();
        let setup = ExchangeSetup {
            modulation,
            feedback: FeedbackChannel::Ideal,
        };
        let est = run_exchange_with(&truth, &local, &cfg, &setup, &mut rng, None).unwrap();
        for e in &est {
            for (x, g) in e.gains.as_slice().iter().zip(truth.gains.as_slice()) {
                worst = worst.max((x / g - 1.0).abs());
            }
        }
        trials += 1;
    }
    outcome(
        worst < 1e-10,
        format!("{trials} trials, max relative error {worst:.3e} (limit 1e-10)"),
    )
}

fn channel_dynamics() -> Outcome {
    let mut worst = 0.0f64;
    let mut links = 0;
    for k in 2..=4 {
        for sir in [0.0, 5.0, 10.0, 15.0, 20.0] {
            for tx in 0..k {
                for rx in 0..k {
                    let (lo, hi) = gain_bounds(mean_gain(tx, rx, sir)).unwrap();
                    let range = to_db(hi / lo);
                    worst = worst.max((range - 27.0).abs());
                    links += 1;
                }
            }
        }
    }
    let range = to_db(5.0 / 0.01);
    outcome(
        (range - 26.9897).abs() < 5e-5 && worst <= 0.011,
        format!("{links} links, dynamic range {range:.4} dB, max deviation from 27 dB {worst:.4}"),
    )
}

fn overhead_accounting() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, expected_pct) in [(2usize, "100.0"), (3, "50.0"), (4, "33.3")] {
        let sched = ExplorationSchedule::new(k).unwrap();
        let ratio = sched.overhead_vs_pairwise().unwrap();
        let pct = format!("{:.1}", 100.0 * ratio);
        pass &= sched.slot_count() == k * k && ratio == 1.0 / (k - 1) as f64 && pct == expected_pct;
        parts.push(format!("K={k}: T={} overhead {pct}%", sched.slot_count()));
    }
    outcome(pass, parts.join(", "))
}

/// ESNR (dB) and its standard error at one sweep point.
fn esnr_point(samples: &PointSamples) -> (f64, f64) {
    let (sig, err): (Vec<f64>, Vec<f64>) = samples
        .scheme(Scheme::CpmBrd)
        .unwrap()
        .iter()
        .filter_map(|o| o.esnr_terms)
        .unzip();
    ratio_of_means_db(&sig, &err)
}

/// `esnr[variant][sir]` for the three feedback qualities at 10^4 trials.
fn fig2_esnr() -> Vec<Vec<(f64, f64)>> {
    presets::fig2(10_000, SEED)
        .iter()
        .map(|s| {
            s.sweep
                .values
                .iter()
                .map(|&v| esnr_point(&simulate_point(s, v).unwrap()))
                .collect()
        })
        .collect()
}

fn sir_flatness(esnr: &[Vec<(f64, f64)>]) -> Outcome {
    let best = &esnr[0];
    let lo = best.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = best.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<String> = best.iter().map(|p| format!("{:.2}", p.0)).collect();
    outcome(
        hi - lo <= 1.0,
        format!(
            "N=8 eps=1% ESNR over SIR 0..20 = [{}] dB, spread {:.3} dB (limit 1)",
            values.join(", "),
            hi - lo
        ),
    )
}

fn feedback_ordering(esnr: &[Vec<(f64, f64)>]) -> Outcome {
    let mut pass = true;
    let mut min_margin = f64::INFINITY;
    for sir in 0..esnr[0].len() {
        for pair in esnr.windows(2) {
            let (a, sa) = pair[0][sir];
            let (b, sb) = pair[1][sir];
            let sigma = (sa * sa + sb * sb).sqrt();
            let margin = (a - b) / sigma;
            min_margin = min_margin.min(margin);
            pass &= margin > 3.0;
        }
    }
    outcome(
        pass,
        format!("smallest gap {min_margin:.1} sigma over all SIR points (need > 3)"),
    )
}

fn sum_rate_ordering() -> Outcome {
    let scenario: Scenario = presets::fig1(500, SEED);
    let mut pass = true;
    let mut lines = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for &snr in &scenario.sweep.values {
        let samples = simulate_point(&scenario, snr).unwrap();
        let rates = |s: Scheme| -> Vec<f64> {
            samples
                .scheme(s)
                .unwrap()
                .iter()
                .map(|o| o.sum_rate)
                .collect()
        };
        let perfect = rates(Scheme::PerfectBrd);
        let cpm = rates(Scheme::CpmBrd);
        let iw = rates(Scheme::Iwfa);
        let paired = |a: &[f64], b: &[f64]| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let (m, se) = mean_and_se(&d);
            m / se
        };
        let (mp, mc, mi) = (
            mean_and_se(&perfect).0,
            mean_and_se(&cpm).0,
            mean_and_se(&iw).0,
        );
        let z_cpm = paired(&cpm, &iw);
        let z_perfect = paired(&perfect, &iw);
        let ratio = mc / mp;
        min_ratio = min_ratio.min(ratio);
        pass &= mp >= mc && mc >= mi && z_cpm > 3.0 && z_perfect > 3.0 && ratio >= 0.95;
        lines.push(format!(
            "SNR {snr:.0}: {mp:.3}/{mc:.3}/{mi:.3} (cpm-iwfa z={z_cpm:.0})"
        ));
    }
    outcome(
        pass,
        format!(
            "perfect/cpm/iwfa: {}; min cpm/perfect {:.4} (need >= 0.95)",
            lines.join("; "),
            min_ratio
        ),
    )
}

/// Water level by scanning `n_points` candidate levels for the bracket where
/// the allocated power crosses the budget, then bisecting inside it.
fn water_level_oracle(g: &[f64], n: &[f64], budget: f64, n_points: usize) -> f64 {
    let floors: Vec<f64> = g.iter().zip(n).map(|(g, n)| n / g).collect();
    let used = |mu: f64| floors.iter().map(|f| (mu - f).max(0.0)).sum::<f64>();
    let lo0 = floors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = lo0 + budget;
    let step = (hi0 - lo0) / (n_points - 1) as f64;
    let mut i = 0;
    while i + 1 < n_points && used(lo0 + (i + 1) as f64 * step) < budget {
        i += 1;
    }
    let (mut lo, mut hi) = (
        lo0 + i as f64 * step,
        (lo0 + (i + 1) as f64 * step).min(hi0),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn water_filling_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut level_err, mut budget_err, mut oracle_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let s = rng.random_range(1..=8);
        let g: Vec<f64> = (0..s)
            .map(|_| 10f64.powf(rng.random_range(-2.0..0.7)))
            .collect();
        let n: Vec<f64> = (0..s)
            .map(|_| 10f64.powf(rng.random_range(-1.0..1.0)))
            .collect();
        let budget = 10f64.powf(rng.random_range(-2.0..2.0));
        let wf = water_fill(&g, &n, budget).unwrap();
        let total: f64 = wf.powers.iter().sum();
        budget_err = budget_err.max((total - budget).abs());
        for i in 0..s {
            let floor = n[i] / g[i];
            if wf.powers[i] > 0.0 {
                level_err = level_err.max((wf.powers[i] + floor - wf.level).abs());
            } else {
                level_err = level_err.max((wf.level - floor).max(0.0));
            }
        }
        let mu = water_level_oracle(&g, &n, budget, 100_000);
        for i in 0..s {
            let p = (mu - n[i] / g[i]).max(0.0);
            oracle_err = oracle_err.max((p - wf.powers[i]).abs());
        }
    }
    outcome(
        level_err <= 1e-9 && budget_err <= 1e-9 && oracle_err <= 1e-6,
        format!(
            "10000 instances: level {level_err:.1e}, budget {budget_err:.1e}, oracle {oracle_err:.1e}"
        ),
    )
}

fn determinism_and_quantizer() -> Outcome {
    let mut scenario = presets::fig1(40, SEED);
    scenario.sweep.values.truncate(3);
    let first = to_csv(&run_scenario(&scenario).unwrap()).unwrap();
    let second = to_csv(&run_scenario(&scenario).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let recs = run_scenario(&presets::fig2(200, SEED)[1]).unwrap();
    cpm_core::emit_csv(&recs, &pa).unwrap();
    cpm_core::emit_csv(&run_scenario(&presets::fig2(200, SEED)[1]).unwrap(), &pb).unwrap();
    let identical = first == second && std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut violations = 0usize;
    for _ in 0..100_000 {
        let q = Quantizer::new(rng.random_range(1..=12), rng.random_range(0.0..40.0)).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            cpm_core::from_db(rng.random_range(q.lo_db() - 10.0..q.hi_db() + 10.0))
        };
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        let (a, b) = (x.min(y), x.max(y));
        let (la, lb) = (q.quantize(a).unwrap(), q.quantize(b).unwrap());
        if la > lb {
            violations += 1;
        }
        if q.quantize(q.dequantize(la).unwrap()).unwrap() != la {
            violations += 1;
        }
        let db = to_db(a);
        if db >= q.lo_db() && db <= q.hi_db() {
            let err = (db - q.level_db(la).unwrap()).abs();
            if err > 0.5 * q.cell_width_db() + 1e-9 {
                violations += 1;
            }
        }
    }
    outcome(
        identical && violations == 0,
        format!(
            "CSV byte-identical: {identical}; quantizer violations over 100000 inputs: {violations}"
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{verdict}] {id}. {name}: {} ({:.1}s)",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "noise-free exactness", &noise_free_exactness);
    report(2, "channel dynamic range", &channel_dynamics);
    report(3, "exchange overhead", &overhead_accounting);
    let esnr = fig2_esnr();
    report(4, "ESNR flat in SIR", &|| sir_flatness(&esnr));
    report(5, "ESNR ordered by feedback quality", &|| {
        feedback_ordering(&esnr)
    });
    report(6, "sum-rate ordering", &sum_rate_ordering);
    report(7, "water-filling KKT", &water_filling_kkt);
    report(
        8,
        "determinism and quantizer invariants",
        &determinism_and_quantizer,
    );
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
