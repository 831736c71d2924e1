//! Quick invariant checks runnable from the command line.

use rand::Rng;
use rand_distr::Exp1;

use crate::bitpower_moop::{allocate_discrete, ber_mqam, snr_gap, BerTargets, LinearCap, MoopWeights};
use crate::channel::ChannelRealization;
use crate::config::ExperimentConfig;
use crate::cr_bitpower::{allocate_cr, CrCaps};
use crate::ee_dinkelbach::{dinkelbach_solve, EeConfig, UncertainChannel};
use crate::error::Result;
use crate::harness::{run_experiment_with_workers, write_csv};
use crate::oracle::exhaustive_search;
use crate::rng::{substream, SimRng};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn rayleigh(n: usize, mean: f64, rng: &mut SimRng) -> ChannelRealization {
    let g = (0..n).map(|_| mean * rng.sample::<f64, _>(Exp1)).collect();
    ChannelRealization::from_cnr(g).expect("positive gains")
}

fn gap_in_db() -> Result<(bool, String)> {
    let db = 10.0 * snr_gap(1e-4).log10();
    Ok(((db - 6.77).abs() <= 0.01, format!("{db:.4} dB")))
}

fn active_ber() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let mut rng = substream(seed, 1);
        let ch = rayleigh(16, 100.0, &mut rng);
        let t = BerTargets::uniform(16, 1e-4)?;
        let w = MoopWeights::new(rng.gen_range(0.1..0.9), 1.0, 96.0)?;
        let a = allocate_discrete(&ch, &w, &t, 6, 1.0)?;
        for i in a.active_set() {
            let ber = ber_mqam(a.power_w[i], a.bits[i], ch.cnr[i])?;
            worst = worst.max((ber / 1e-4 - 1.0).abs());
        }
    }
    Ok((worst <= 1e-9, format!("worst relative error {worst:.2e}")))
}

fn cap_safety() -> Result<(bool, String)> {
    let mut broken = 0;
    for seed in 0..200 {
        let mut rng = substream(seed, 2);
        let ch = rayleigh(16, 100.0, &mut rng);
        let leak: Vec<f64> = (0..16).map(|i| 1.0 / (1.0 + i as f64).powi(2)).collect();
        let caps = CrCaps {
            power_cap_w: rng.gen_range(0.01..1.0),
            aci_caps_w: vec![rng.gen_range(0.001..0.1)],
            leakage: vec![leak],
        };
        let t = BerTargets::uniform(16, 1e-4)?;
        let w = MoopWeights::new(0.5, 1.0, 96.0)?;
        let a = allocate_cr(&ch, &w, &t, 6, &caps)?;
        broken += caps.linear_caps(16).iter().filter(|c| !c.is_satisfied(&a.power_w)).count();
    }
    Ok((broken == 0, format!("{broken} cap violations")))
}

fn oracle_gap() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut rng = substream(seed, 3);
        let ch = rayleigh(4, 100.0, &mut rng);
        let t = BerTargets::uniform(4, 1e-4)?;
        let w = MoopWeights::new(0.5, 0.1, 24.0)?;
        let a = allocate_discrete(&ch, &w, &t, 6, 0.1)?;
        let o = exhaustive_search(&ch, &w, &t, 6, &[LinearCap::total_power(4, 0.1)])?;
        if o.objective != 0.0 {
            worst = worst.max((a.objective - o.objective) / o.objective.abs());
        }
    }
    Ok((worst <= 0.05, format!("worst gap {worst:.4}")))
}

fn dinkelbach() -> Result<(bool, String)> {
    let mut ok = true;
    let mut iters = 0;
    for seed in 0..50 {
        let mut rng = substream(seed, 4);
        let ch = UncertainChannel {
            est_gains: (0..16).map(|_| rng.sample(Exp1)).collect(),
            est_var: 0.01,
            path_loss_lin: 6.9e-12,
            noise_var: 4e-16,
            interference: vec![4e-16; 16],
            spacing: 9765.625,
        };
        let cfg = EeConfig { kappa: 7.8, circuit_power_w: 2.0, rate_floor: 0.0, tol: 1e-8, q_init: None };
        let o = dinkelbach_solve(&ch, &CrCaps::power_only(2.0), &cfg)?;
        let monotone = o.q_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let last = o.phi_trace.last().copied().unwrap_or(f64::NAN);
        ok &= monotone && last.abs() <= cfg.tol;
        iters += o.iterations;
    }
    Ok((ok, format!("mean iterations {:.2}", iters as f64 / 50.0)))
}

fn determinism() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::parse(
        "experiment.kind = cr_sweep\nexperiment.trials = 16\nofdm.n = 16\nsweep.key = pu.fading_margin_db\nsweep.values = 0, 6",
    )?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_csv(&cfg, &run_experiment_with_workers(&cfg, 1)?, &mut a).expect("in-memory write");
    write_csv(&cfg, &run_experiment_with_workers(&cfg, 3)?, &mut b).expect("in-memory write");
    Ok((a == b, format!("{} bytes", a.len())))
}

/// Runs every check; errors count as failures.
pub fn run_all() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<(bool, String)>); 6] = [
        ("snr_gap_6_77_db", gap_in_db),
        ("active_ber_exact", active_ber),
        ("caps_respected", cap_safety),
        ("oracle_gap_n4", oracle_gap),
        ("dinkelbach_monotone", dinkelbach),
        ("worker_count_determinism", determinism),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check { name, passed: false, detail: e.to_string() },
        })
        .collect()
}
