//! Seeded Monte Carlo sweeps over the allocators, with CSV output.
//!
//! Each trial draws from its own substream keyed by (seed, grid index, trial index), and
//! per-trial results are summed in trial order, so output does not depend on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::bitpower_moop::{
    allocate_discrete, power_from_bits, Allocation, BerTargets, LinearCap, MoopWeights,
    MultiplierSet,
};
use crate::channel::{
    db_loss_to_gain, leakage_vector, path_loss_db, sample_rayleigh_channel, sensing_posteriors,
    ChannelRealization, PuBand, SensingModel,
};
use crate::config::{
    CrAllocator, ExperimentConfig, ExperimentKind, Knowledge, MoopAllocator, OracleAllocator,
    Params,
};
use crate::cr_bitpower::{allocate_cr, build_caps_with_leakage, measure_violation, CrCaps, InterferenceProbe};
use crate::ee_dinkelbach::{
    build_statistical_caps_with_leakage, capacity_uncertain, dinkelbach_solve, EeConfig,
    UncertainChannel,
};
use crate::error::{Error, Result};
use crate::ga::{average_ber, evolve, LoadingProblem};
use crate::oracle::exhaustive_search;
use crate::rate_interference::{
    allocate_rate_interference, knowledge_coeff, max_achievable_rate, rate_of, KnowledgeCoeff,
    KnowledgeMode, TriWeights,
};
use crate::rng::{substream2, SimRng};
use crate::special::KahanSum;

/// Quantities a trial can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Throughput,
    Power,
    Rate,
    EnergyPerBit,
    ViolationCci,
    ViolationAci,
    InterferenceCci,
    InterferenceAci,
    Iterations,
    /// Bit-weighted average BER of the returned loading.
    Ber,
    Gap,
}

impl Metric {
    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            Metric::Throughput => "avg_throughput_bits",
            Metric::Power => "avg_power_w",
            Metric::Rate => "avg_rate_bps",
            Metric::EnergyPerBit => "ee_j_per_bit",
            Metric::ViolationCci => "violation_ratio_cci",
            Metric::ViolationAci => "violation_ratio_aci",
            Metric::InterferenceCci => "avg_cci_interference_w",
            Metric::InterferenceAci => "avg_aci_interference_w",
            Metric::Iterations => "avg_iterations",
            Metric::Ber => "avg_ber",
            Metric::Gap => "objective_gap_vs_oracle",
        }
    }
}

/// Aggregates of one grid point. Metrics an experiment does not produce are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub sweep_value: f64,
    pub trials: usize,
    /// Share of trials whose allocator reported infeasibility; they are left out of the
    /// averages.
    pub infeasible_fraction: f64,
    pub values: BTreeMap<Metric, f64>,
}

impl MetricRecord {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values.get(&m).copied()
    }
}

fn columns(kind: ExperimentKind, p: &Params) -> Vec<Metric> {
    use Metric::*;
    let adjacent = p.pu_l.is_some();
    let interference = |v: &mut Vec<Metric>| {
        v.extend([ViolationCci, InterferenceCci]);
        if adjacent {
            v.extend([ViolationAci, InterferenceAci]);
        }
    };
    let mut v = Vec::new();
    match kind {
        ExperimentKind::MoopSweep => v.extend([Throughput, Power]),
        ExperimentKind::CrSweep => {
            v.extend([Throughput, Power]);
            interference(&mut v);
        }
        ExperimentKind::ViolationRatio => {
            match p.violation_allocator {
                CrAllocator::BitLoading => v.extend([Throughput, Power]),
                CrAllocator::RateInterference => v.extend([Rate, Power, Iterations]),
            }
            interference(&mut v);
        }
        ExperimentKind::RateInterferenceSweep => {
            v.extend([Rate, Power, EnergyPerBit, Iterations]);
            interference(&mut v);
        }
        ExperimentKind::EeSweep => {
            v.extend([Rate, Power, EnergyPerBit, Iterations]);
            interference(&mut v);
        }
        ExperimentKind::GaCompare => v.extend([Throughput, Power, Ber, Gap, Iterations]),
        ExperimentKind::OracleCompare => v.extend([Throughput, Power, Gap]),
    }
    v.sort();
    v
}

/// Uniform power over all subcarriers, with the largest integer bits each can carry at its
/// BER target; subcarriers below 2 bits are nulled and get no power. The objective is not
/// scored (NaN) since the baseline has no weights.
pub fn baseline_uniform_power(
    ch: &ChannelRealization,
    total_power: f64,
    t: &BerTargets,
    b_max: u32,
) -> Result<Allocation> {
    if !(total_power >= 0.0) {
        return Err(Error::domain("total power must be nonnegative"));
    }
    let n = ch.len();
    if t.len() != n || n == 0 {
        return Err(Error::domain("targets must match a nonempty channel"));
    }
    let p = total_power / n as f64;
    let mut bits = vec![0u32; n];
    let mut power_w = vec![0.0; n];
    for i in 0..n {
        let b = (1.0 + ch.cnr[i] * p / t.gap(i)).log2().floor().min(b_max as f64);
        if b >= 2.0 {
            bits[i] = b as u32;
            power_w[i] = p;
        }
    }
    Ok(Allocation { bits, power_w, objective: f64::NAN, multipliers: MultiplierSet::default() })
}

/// The same number of bits on every subcarrier, each at exactly its BER target. The
/// objective is not scored (NaN).
pub fn baseline_uniform_bits(ch: &ChannelRealization, bits: u32, t: &BerTargets) -> Result<Allocation> {
    if bits < 2 {
        return Err(Error::domain("uniform bit loading needs at least 2 bits"));
    }
    if t.len() != ch.len() {
        return Err(Error::domain("targets must match the channel"));
    }
    if let Some(i) = ch.cnr.iter().position(|&g| g == 0.0) {
        return Err(Error::infeasible(format!("subcarrier {i} has zero gain")));
    }
    let power_w = (0..ch.len())
        .map(|i| power_from_bits(bits as f64, ch.cnr[i], t.gap(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Allocation {
        bits: vec![bits; ch.len()],
        power_w,
        objective: f64::NAN,
        multipliers: MultiplierSet::default(),
    })
}

/// Per-grid-point quantities shared by all trials.
struct Setup {
    p: Params,
    targets: BerTargets,
    weights: MoopWeights,
    co: PuBand,
    bands: Vec<PuBand>,
    leakage: Vec<Vec<f64>>,
    link_gain: f64,
    pl_m_db: f64,
    pl_l_db: f64,
}

impl Setup {
    fn new(p: Params) -> Result<Self> {
        let n = p.ofdm.n_subcarriers;
        let fm = p.fading_margin_db;
        let co = PuBand {
            bandwidth_hz: 0.0,
            spectral_offsets_hz: Vec::new(),
            distance_m: p.pu_m.distance_m,
            interference_threshold_w: p.pu_m.threshold_w,
            fading_margin_db: fm,
            exp_mean_inv: p.pu_m.nu,
            confidence: p.pu_m.confidence,
        };
        let bands: Vec<PuBand> = p
            .pu_l
            .iter()
            .map(|b| PuBand {
                bandwidth_hz: b.bandwidth_hz,
                spectral_offsets_hz: PuBand::offsets_for(&p.ofdm, b.center_hz),
                distance_m: b.link.distance_m,
                interference_threshold_w: b.link.threshold_w,
                fading_margin_db: fm,
                exp_mean_inv: b.link.nu,
                confidence: b.link.confidence,
            })
            .collect();
        let leakage = bands.iter().map(|b| leakage_vector(&p.ofdm, b)).collect::<Result<Vec<_>>>()?;
        let budget = p.link.power_budget_w;
        let (auto_p, auto_b) = if p.moop.normalize {
            (if budget.is_finite() { budget } else { 1.0 }, (n as u32 * p.moop.b_max) as f64)
        } else {
            (1.0, 1.0)
        };
        let weights = MoopWeights::new(p.moop.alpha, p.moop.u_power_w.unwrap_or(auto_p), p.moop.u_bits.unwrap_or(auto_b))
            .map_err(|e| Error::Config(e.to_string()))?;
        let pl_l_db = match &p.pu_l {
            Some(b) => path_loss_db(b.link.distance_m, &p.path_loss)?,
            None => f64::INFINITY,
        };
        Ok(Setup {
            targets: BerTargets::uniform(n, p.moop.ber_th)?,
            weights,
            link_gain: db_loss_to_gain(path_loss_db(p.link.distance_m, &p.path_loss)?),
            pl_m_db: path_loss_db(p.pu_m.distance_m, &p.path_loss)?,
            pl_l_db,
            co,
            bands,
            leakage,
            p,
        })
    }

    fn sample_link(&self, rng: &mut SimRng) -> Result<ChannelRealization> {
        let p = &self.p;
        match p.link.avg_cnr_db {
            Some(db) => sample_rayleigh_channel(&p.ofdm, 10f64.powf(0.1 * db), 1.0, &[], rng),
            None => sample_rayleigh_channel(&p.ofdm, self.link_gain, p.link.noise_w, &[p.link.interference_w], rng),
        }
    }

    fn normalized_link(&self, rng: &mut SimRng) -> Result<ChannelRealization> {
        if self.p.link.avg_cnr_db.is_none() {
            return Err(Error::Config("this experiment needs `link.avg_cnr_db`".into()));
        }
        self.sample_link(rng)
    }
}

/// Sensing outcome of one trial: the true models and what the allocator assumes.
struct Sensing {
    true_m: SensingModel,
    true_l: Vec<SensingModel>,
    seen_m: SensingModel,
    seen_l: Vec<SensingModel>,
}

fn draw_sensing(s: &Setup, rng: &mut SimRng) -> Sensing {
    let sp = &s.p.sensing;
    let mut draw = || SensingModel { p_md: sp.p_md.draw(rng), p_fa: sp.p_fa.draw(rng), p_active: sp.p_active.draw(rng) };
    let true_m = draw();
    let true_l: Vec<SensingModel> = s.bands.iter().map(|_| draw()).collect();
    let view = |m: &SensingModel| if sp.perfect { SensingModel::perfect(m.p_active) } else { *m };
    Sensing { seen_m: view(&true_m), seen_l: true_l.iter().map(view).collect(), true_m, true_l }
}

/// Small-scale fading toward each primary receiver.
struct Fading {
    h_m: f64,
    h_l: Vec<f64>,
}

fn draw_fading(s: &Setup, rng: &mut SimRng) -> Fading {
    let mut exp = |nu: f64| {
        let e: f64 = rng.sample(Exp1);
        e / nu
    };
    let h_m = exp(s.p.pu_m.nu);
    let h_l = s.bands.iter().map(|b| exp(b.exp_mean_inv)).collect();
    Fading { h_m, h_l }
}

type Values = BTreeMap<Metric, f64>;

/// Violation flags and expected interference (over fading and true occupancy).
fn interference(s: &Setup, power: &[f64], sensing: &Sensing, fading: &Fading, rng: &mut SimRng, out: &mut Values) -> Result<()> {
    let (beta_ov, _) = sensing_posteriors(&sensing.true_m)?;
    let present = |beta: f64, rng: &mut SimRng| !s.p.sensing.sample_presence || rng.gen::<f64>() < beta;
    let weight = |beta: f64| if s.p.sensing.sample_presence { beta } else { 1.0 };
    let g_m = db_loss_to_gain(s.pl_m_db);
    let total: f64 = power.iter().sum();
    let probe = InterferenceProbe { leakage: None, fading_gain: fading.h_m, path_gain: g_m, threshold_w: s.p.pu_m.threshold_w };
    let hit = present(beta_ov, rng) && measure_violation(power, &[probe])[0];
    out.insert(Metric::ViolationCci, f64::from(u8::from(hit)));
    out.insert(Metric::InterferenceCci, weight(beta_ov) * g_m / s.p.pu_m.nu * total);
    if let (Some(band), Some(leak)) = (s.bands.first(), s.leakage.first()) {
        let (_, beta_oo) = sensing_posteriors(&sensing.true_l[0])?;
        let g_l = db_loss_to_gain(s.pl_l_db);
        let probe = InterferenceProbe {
            leakage: Some(leak),
            fading_gain: fading.h_l[0],
            path_gain: g_l,
            threshold_w: band.interference_threshold_w,
        };
        let hit = present(beta_oo, rng) && measure_violation(power, &[probe])[0];
        let load: f64 = leak.iter().zip(power).map(|(w, p)| w * p).sum();
        out.insert(Metric::ViolationAci, f64::from(u8::from(hit)));
        out.insert(Metric::InterferenceAci, weight(beta_oo) * g_l / band.exp_mean_inv * load);
    }
    Ok(())
}

fn check_caps(power: &[f64], caps: &[LinearCap]) -> Result<()> {
    for c in caps {
        if c.load(power) > c.cap * (1.0 + 1e-9) {
            return Err(Error::domain(format!("allocation breaks a cap: {} > {}", c.load(power), c.cap)));
        }
    }
    Ok(())
}

fn moop_trial(s: &Setup, rng: &mut SimRng) -> Result<Values> {
    let p = &s.p;
    let ch = s.sample_link(rng)?;
    let budget = p.link.power_budget_w;
    let a = match p.moop.allocator {
        MoopAllocator::Proposed => {
            let a = allocate_discrete(&ch, &s.weights, &s.targets, p.moop.b_max, budget)?;
            check_caps(&a.power_w, &[LinearCap::total_power(ch.len(), budget)])?;
            a
        }
        MoopAllocator::UniformPower => baseline_uniform_power(&ch, p.moop.baseline_power_w, &s.targets, p.moop.b_max)?,
        MoopAllocator::UniformBits => baseline_uniform_bits(&ch, p.moop.baseline_bits, &s.targets)?,
    };
    Ok(BTreeMap::from([(Metric::Throughput, a.total_bits() as f64), (Metric::Power, a.total_power())]))
}

fn cr_trial(s: &Setup, rng: &mut SimRng) -> Result<Values> {
    let p = &s.p;
    let ch = s.sample_link(rng)?;
    let sensing = draw_sensing(s, rng);
    let fading = draw_fading(s, rng);
    let caps = build_caps_with_leakage(
        p.link.power_budget_w,
        &s.bands,
        &s.co,
        &sensing.seen_m,
        &sensing.seen_l,
        &p.path_loss,
        s.leakage.clone(),
    )?;
    let a = allocate_cr(&ch, &s.weights, &s.targets, p.moop.b_max, &caps)?;
    check_caps(&a.power_w, &caps.linear_caps(ch.len()))?;
    let mut out = BTreeMap::from([(Metric::Throughput, a.total_bits() as f64), (Metric::Power, a.total_power())]);
    interference(s, &a.power_w, &sensing, &fading, rng, &mut out)?;
    Ok(out)
}

fn ri_trial(s: &Setup, rng: &mut SimRng, with_ee: bool) -> Result<Values> {
    let p = &s.p;
    let ch = s.sample_link(rng)?;
    let sensing = draw_sensing(s, rng);
    let fading = draw_fading(s, rng);
    let mode = |h: f64| match p.ri.knowledge {
        Knowledge::PathLoss => KnowledgeMode::PathLoss,
        Knowledge::Statistics => KnowledgeMode::PathLossStatistics,
        Knowledge::FullCsi => KnowledgeMode::FullCsi { fading_gain: h },
    };
    let backoff = 10f64.powf(-0.1 * p.fading_margin_db);
    let x_m = knowledge_coeff(mode(fading.h_m), s.pl_m_db, p.pu_m.nu, p.pu_m.confidence)?;
    let mut x_bands = Vec::new();
    let mut aci_caps_w = Vec::new();
    for (b, h) in s.bands.iter().zip(&fading.h_l) {
        let x = knowledge_coeff(mode(*h), s.pl_l_db, b.exp_mean_inv, b.confidence)?;
        x_bands.push(x);
        aci_caps_w.push(b.interference_threshold_w * x * backoff);
    }
    let caps = CrCaps {
        power_cap_w: p.link.power_budget_w.min(p.pu_m.threshold_w * x_m * backoff),
        aci_caps_w,
        leakage: s.leakage.clone(),
    };
    let spacing = p.ofdm.subcarrier_spacing_hz;
    let max_rate = max_achievable_rate(&ch, &caps, spacing)?;
    let aci_w: Vec<f64> = s.bands.iter().map(|_| p.ri.w_aci).collect();
    let aci_th: Vec<f64> = s.bands.iter().map(|b| b.interference_threshold_w).collect();
    let w = TriWeights::normalized(p.ri.w_cci, aci_w, p.ri.w_rate, p.pu_m.threshold_w, &aci_th, max_rate)
        .map_err(|e| Error::Config(e.to_string()))?;
    let k = KnowledgeCoeff { x_m, x_bands, mode: mode(fading.h_m) };
    let sol = allocate_rate_interference(&ch, &w, &k, &caps, spacing)?;
    check_caps(&sol.power_w, &caps.linear_caps(ch.len()))?;
    let rate = rate_of(&ch, &sol.power_w, spacing);
    let power: f64 = sol.power_w.iter().sum();
    let mut out = BTreeMap::from([
        (Metric::Rate, rate),
        (Metric::Power, power),
        (Metric::Iterations, sol.iterations as f64),
    ]);
    if with_ee && rate > 0.0 {
        out.insert(Metric::EnergyPerBit, power / rate);
    }
    interference(s, &sol.power_w, &sensing, &fading, rng, &mut out)?;
    Ok(out)
}

fn ee_trial(s: &Setup, rng: &mut SimRng) -> Result<Values> {
    let p = &s.p;
    let n = p.ofdm.n_subcarriers;
    let est_gains: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sensing = draw_sensing(s, rng);
    let fading = draw_fading(s, rng);
    let ch = UncertainChannel {
        est_gains,
        est_var: p.ee.est_var,
        path_loss_lin: s.link_gain,
        noise_var: p.link.noise_w,
        interference: vec![p.link.interference_w; n],
        spacing: p.ofdm.subcarrier_spacing_hz,
    };
    let caps = build_statistical_caps_with_leakage(
        p.link.power_budget_w,
        &s.bands,
        &s.co,
        &sensing.seen_m,
        &sensing.seen_l,
        &p.path_loss,
        s.leakage.clone(),
    )?;
    let cfg = EeConfig {
        kappa: p.ee.kappa,
        circuit_power_w: p.ee.circuit_power_w,
        rate_floor: p.ee.rate_floor_bps,
        tol: p.ee.tol,
        q_init: None,
    };
    let o = dinkelbach_solve(&ch, &caps, &cfg)?;
    check_caps(&o.power_w, &caps.linear_caps(n))?;
    let mut out = BTreeMap::from([
        (Metric::Rate, capacity_uncertain(&o.power_w, &ch)?),
        (Metric::Power, o.power_w.iter().sum()),
        (Metric::EnergyPerBit, o.q_star),
        (Metric::Iterations, o.iterations as f64),
    ]);
    interference(s, &o.power_w, &sensing, &fading, rng, &mut out)?;
    Ok(out)
}

fn ga_trial(s: &Setup, rng: &mut SimRng) -> Result<Values> {
    let p = &s.p;
    let ch = s.normalized_link(rng)?;
    let seed: u64 = rng.gen();
    let budget = p.link.power_budget_w;
    let cf = allocate_discrete(&ch, &s.weights, &s.targets, p.moop.b_max, budget)?;
    let problem = LoadingProblem {
        channel: ch.clone(),
        weights: s.weights,
        ber_th: p.moop.ber_th,
        power_budget_w: budget,
        b_max: p.moop.b_max,
    };
    let out = evolve(&problem, &p.ga, seed)?;
    let best = &out.best;
    if !best.feasible {
        return Err(Error::infeasible("no feasible individual found"));
    }
    let mut values = BTreeMap::from([
        (Metric::Throughput, best.bits.iter().sum::<i64>() as f64),
        (Metric::Power, best.power.iter().sum()),
        (Metric::Iterations, out.log.len() as f64),
    ]);
    if best.bits.iter().any(|&b| b > 0) {
        values.insert(Metric::Ber, average_ber(&best.bits, &best.power, &ch)?);
    }
    if cf.objective != 0.0 {
        values.insert(Metric::Gap, (best.objective - cf.objective) / cf.objective.abs());
    }
    Ok(values)
}

fn oracle_trial(s: &Setup, rng: &mut SimRng) -> Result<Values> {
    let p = &s.p;
    let ch = s.sample_link(rng)?;
    let n = ch.len();
    let (a, lin) = match p.oracle_allocator {
        OracleAllocator::Moop => {
            let budget = p.link.power_budget_w;
            let lin = if budget.is_finite() { vec![LinearCap::total_power(n, budget)] } else { Vec::new() };
            (allocate_discrete(&ch, &s.weights, &s.targets, p.moop.b_max, budget)?, lin)
        }
        OracleAllocator::Cr => {
            let sensing = draw_sensing(s, rng);
            let caps = build_caps_with_leakage(
                p.link.power_budget_w,
                &s.bands,
                &s.co,
                &sensing.seen_m,
                &sensing.seen_l,
                &p.path_loss,
                s.leakage.clone(),
            )?;
            (allocate_cr(&ch, &s.weights, &s.targets, p.moop.b_max, &caps)?, caps.linear_caps(n))
        }
    };
    check_caps(&a.power_w, &lin)?;
    let o = exhaustive_search(&ch, &s.weights, &s.targets, p.moop.b_max, &lin)?;
    let mut out = BTreeMap::from([(Metric::Throughput, a.total_bits() as f64), (Metric::Power, a.total_power())]);
    if o.objective != 0.0 {
        out.insert(Metric::Gap, (a.objective - o.objective) / o.objective.abs());
    } else if a.objective == 0.0 {
        out.insert(Metric::Gap, 0.0);
    }
    Ok(out)
}

fn run_trial(kind: ExperimentKind, s: &Setup, rng: &mut SimRng) -> Result<Values> {
    match kind {
        ExperimentKind::MoopSweep => moop_trial(s, rng),
        ExperimentKind::CrSweep => cr_trial(s, rng),
        ExperimentKind::ViolationRatio => match s.p.violation_allocator {
            CrAllocator::BitLoading => cr_trial(s, rng),
            CrAllocator::RateInterference => ri_trial(s, rng, false),
        },
        ExperimentKind::RateInterferenceSweep => ri_trial(s, rng, true),
        ExperimentKind::EeSweep => ee_trial(s, rng),
        ExperimentKind::GaCompare => ga_trial(s, rng),
        ExperimentKind::OracleCompare => oracle_trial(s, rng),
    }
}

fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    let mut records = Vec::with_capacity(cfg.grid.len());
    for (g, &value) in cfg.grid.iter().enumerate() {
        let setup = Setup::new(cfg.params_at(value)?)?;
        let cols = columns(cfg.kind, &setup.p);
        let outcomes: Vec<Result<Values>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream2(cfg.seed, g as u64, t as u64);
                run_trial(cfg.kind, &setup, &mut rng)
            })
            .collect();
        let mut sums: BTreeMap<Metric, (KahanSum, usize)> = BTreeMap::new();
        let mut infeasible = 0usize;
        for o in outcomes {
            match o {
                Ok(v) => {
                    for (m, x) in v {
                        let e = sums.entry(m).or_insert((KahanSum::default(), 0));
                        e.0.add(x);
                        e.1 += 1;
                    }
                }
                Err(Error::Infeasible(_)) => infeasible += 1,
                Err(e) => return Err(e),
            }
        }
        let values = cols
            .iter()
            .map(|m| {
                let avg = sums.get(m).map_or(f64::NAN, |(s, c)| s.value() / *c as f64);
                (*m, avg)
            })
            .collect();
        records.push(MetricRecord {
            sweep_value: value,
            trials: cfg.trials,
            infeasible_fraction: infeasible as f64 / cfg.trials as f64,
            values,
        });
    }
    Ok(records)
}

/// Runs every grid point of the experiment on the global thread pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    run_grid(cfg)
}

/// Runs the experiment on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<MetricRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_grid(cfg))
}

fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

/// Writes the records as CSV: the effective configuration as `#` comment lines, one
/// header row, then one row per grid point with 12 significant digits.
pub fn write_csv<W: Write>(cfg: &ExperimentConfig, records: &[MetricRecord], out: &mut W) -> std::io::Result<()> {
    for line in cfg.effective_lines() {
        writeln!(out, "# {line}")?;
    }
    let metrics: Vec<Metric> = records.first().map(|r| r.values.keys().copied().collect()).unwrap_or_default();
    let mut header = vec!["sweep_value", "trials", "infeasible_fraction"];
    header.extend(metrics.iter().map(|m| m.column()));
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![fmt_value(r.sweep_value), r.trials.to_string(), fmt_value(r.infeasible_fraction)];
        row.extend(metrics.iter().map(|m| fmt_value(r.get(*m).unwrap_or(f64::NAN))));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
