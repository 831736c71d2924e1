//! Bit and power loading for a secondary (cognitive) link that must protect primary-user
//! bands: a co-channel/total-power cap and per-band adjacent-channel caps.

use crate::bitpower_moop::{
    allocate_power_capped, allocate_relaxed, discrete_polish, greedy_fill, Allocation, BerTargets,
    LinearCap, MoopWeights, MultiplierSet, PricedLoader, RelaxedAllocation,
};
use crate::channel::{
    leakage_vector, path_loss_db, sensing_posteriors, ChannelRealization, OfdmConfig,
    PathLossModel, PuBand, SensingModel,
};
use crate::error::{Error, Result};

/// Constraint set of the secondary link.
#[derive(Debug, Clone, PartialEq)]
pub struct CrCaps {
    pub power_cap_w: f64,
    pub aci_caps_w: Vec<f64>,
    /// Per band, per subcarrier leakage factors.
    pub leakage: Vec<Vec<f64>>,
}

impl CrCaps {
    /// Only a total-power cap.
    pub fn power_only(power_cap_w: f64) -> Self {
        CrCaps { power_cap_w, aci_caps_w: Vec::new(), leakage: Vec::new() }
    }

    /// The caps as linear constraints over `n` subcarriers; infinite caps are dropped.
    pub fn linear_caps(&self, n: usize) -> Vec<LinearCap> {
        let mut out = Vec::new();
        if self.power_cap_w.is_finite() {
            out.push(LinearCap::total_power(n, self.power_cap_w));
        }
        for (cap, w) in self.aci_caps_w.iter().zip(&self.leakage) {
            if cap.is_finite() {
                out.push(LinearCap { weights: w.clone(), cap: *cap });
            }
        }
        out
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.power_cap_w >= 0.0) || self.aci_caps_w.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::domain("caps must be nonnegative"));
        }
        if self.aci_caps_w.len() != self.leakage.len() || self.leakage.iter().any(|l| l.len() != n) {
            return Err(Error::domain("leakage table does not match the bands or subcarriers"));
        }
        Ok(())
    }
}

/// Interference-derived cap `(1/β)·10^{0.1·PL}·10^{-0.1·FM}·threshold`; infinite when β = 0.
/// The fading margin is a back-off, so a larger margin gives a smaller cap.
fn interference_cap(beta: f64, pl_db: f64, fm_db: f64, threshold: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        10f64.powf(0.1 * (pl_db - fm_db)) * threshold / beta
    }
}

/// Caps from sensing posteriors, path loss and fading margins.
pub fn build_caps(
    p_th: f64,
    bands: &[PuBand],
    co_channel: &PuBand,
    s_m: &SensingModel,
    s_l: &[SensingModel],
    pl: &PathLossModel,
    cfg: &OfdmConfig,
) -> Result<CrCaps> {
    let leakage = bands.iter().map(|b| leakage_vector(cfg, b)).collect::<Result<Vec<_>>>()?;
    build_caps_with_leakage(p_th, bands, co_channel, s_m, s_l, pl, leakage)
}

/// [`build_caps`] with leakage factors computed by the caller (they depend only on the
/// grid and the bands, so Monte Carlo loops compute them once).
pub fn build_caps_with_leakage(
    p_th: f64,
    bands: &[PuBand],
    co_channel: &PuBand,
    s_m: &SensingModel,
    s_l: &[SensingModel],
    pl: &PathLossModel,
    leakage: Vec<Vec<f64>>,
) -> Result<CrCaps> {
    if !(p_th > 0.0) {
        return Err(Error::domain("power threshold must be positive"));
    }
    if bands.len() != s_l.len() || bands.len() != leakage.len() {
        return Err(Error::domain("one sensing model and leakage vector per adjacent band is required"));
    }
    co_channel.validate()?;
    let (beta_ov, _) = sensing_posteriors(s_m)?;
    let pl_m = path_loss_db(co_channel.distance_m, pl)?;
    let cci = interference_cap(
        beta_ov,
        pl_m,
        co_channel.fading_margin_db,
        co_channel.interference_threshold_w,
    );
    let mut aci_caps_w = Vec::with_capacity(bands.len());
    for (band, s) in bands.iter().zip(s_l) {
        band.validate()?;
        let (_, beta_oo) = sensing_posteriors(s)?;
        let pl_l = path_loss_db(band.distance_m, pl)?;
        aci_caps_w.push(interference_cap(
            beta_oo,
            pl_l,
            band.fading_margin_db,
            band.interference_threshold_w,
        ));
    }
    Ok(CrCaps { power_cap_w: p_th.min(cci), aci_caps_w, leakage })
}

/// Constraint slacks as a function of their multipliers.
///
/// `slack(mu, k)` must be nondecreasing in `mu[k]` and positive for large `mu[k]` unless
/// the constraint cannot be met.
pub trait SlackMap {
    fn dim(&self) -> usize;
    /// Magnitude used to scale the tolerance of constraint `k`.
    fn scale(&self, k: usize) -> f64;
    fn slack(&self, mu: &[f64], k: usize) -> f64;
    /// Partial derivative of `slack(mu, k)` with respect to `mu[k]`.
    fn slack_slope(&self, mu: &[f64], k: usize) -> f64;
}

/// Multipliers found by [`solve_multipliers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSolution {
    pub mu: Vec<f64>,
    /// Total one-dimensional root-finding steps.
    pub iterations: usize,
}

const MAX_SWEEPS: usize = 20_000;

fn solve_coordinate(
    map: &dyn SlackMap,
    mu: &mut [f64],
    k: usize,
    tol: f64,
    iterations: &mut usize,
) -> Result<()> {
    let old = mu[k];
    mu[k] = 0.0;
    if map.slack(mu, k) >= 0.0 {
        return Ok(());
    }
    let eps = tol * map.scale(k);
    let mut lo = 0.0;
    let mut hi = if old > 0.0 { old } else { 1.0 };
    loop {
        mu[k] = hi;
        let s = map.slack(mu, k);
        if s >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        *iterations += 1;
        if hi > 1e300 {
            mu[k] = old;
            return Err(Error::infeasible("constraint cannot be met for any multiplier"));
        }
    }
    let mut x = if old > lo && old <= hi { old } else { hi };
    for _ in 0..400 {
        *iterations += 1;
        mu[k] = x;
        let s = map.slack(mu, k);
        if s.abs() <= eps && s >= -eps {
            return Ok(());
        }
        if s < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = map.slack_slope(mu, k);
        let mut next = if slope > 0.0 && s.is_finite() { x - s / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if lo > 0.0 && hi / lo > 1e3 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        if hi - lo <= 1e-15 * hi {
            mu[k] = hi;
            return Ok(());
        }
        x = next;
    }
    mu[k] = hi;
    Ok(())
}

/// Complementary multipliers for a set of coupled constraints: each multiplier is zero
/// with nonnegative slack, or positive with slack within `tol·scale`. Cyclic coordinate
/// passes, each a safeguarded Newton iteration with a doubling bracket and bisection
/// fallback.
pub fn solve_multipliers(map: &dyn SlackMap, init: &[f64], tol: f64) -> Result<MultiplierSolution> {
    let m = map.dim();
    if init.len() != m {
        return Err(Error::domain("initial multipliers have the wrong length"));
    }
    let mut mu: Vec<f64> = init.iter().map(|v| v.max(0.0)).collect();
    let mut iterations = 0;
    // A positive multiplier also counts as settled when its slack is positive but the
    // next float below it already breaks the cap: cancellation in the load can put the
    // slack resolution above `tol`.
    let done = |mu: &[f64]| {
        (0..m).all(|k| {
            let s = map.slack(mu, k);
            let eps = tol * map.scale(k);
            s >= -eps && (mu[k] == 0.0 || s <= eps || {
                let mut below = mu.to_vec();
                below[k] = mu[k] * (1.0 - 1e-14);
                map.slack(&below, k) < 0.0
            })
        })
    };
    for _ in 0..MAX_SWEEPS {
        if done(&mu) {
            return Ok(MultiplierSolution { mu, iterations });
        }
        for k in 0..m {
            solve_coordinate(map, &mut mu, k, tol, &mut iterations)?;
        }
    }
    if done(&mu) {
        return Ok(MultiplierSolution { mu, iterations });
    }
    Err(Error::NoConvergence("multiplier passes did not settle".into()))
}

/// Scales a continuous power vector down onto every cap it overshoots. The multiplier
/// solve stops within a relative `tol` on either side of a binding cap; this removes the
/// overshoot side.
pub fn fit_within_caps(power: &mut [f64], caps: &[LinearCap]) {
    // the rescaled load can still land an ulp or two over, so shave a little more each round
    for round in 0..8 {
        let factor = caps
            .iter()
            .filter(|c| !c.is_satisfied(power))
            .map(|c| c.cap / c.load(power))
            .fold(1.0f64, f64::min);
        if factor >= 1.0 {
            return;
        }
        let shave = 1.0 - f64::EPSILON * (1u64 << (2 * round)) as f64;
        power.iter_mut().for_each(|p| *p *= factor * shave);
    }
}

/// Dual map of the bit-loading problem on a fixed member set.
struct LoadingDual<'a> {
    loader: PricedLoader<'a>,
    members: &'a [usize],
    constraints: Vec<&'a LinearCap>,
    base_price: f64,
}

impl LoadingDual<'_> {
    fn price(&self, mu: &[f64], i: usize) -> f64 {
        self.base_price
            + self
                .constraints
                .iter()
                .zip(mu)
                .map(|(c, m)| m * c.weights[i])
                .sum::<f64>()
    }
}

impl SlackMap for LoadingDual<'_> {
    fn dim(&self) -> usize {
        self.constraints.len()
    }

    fn scale(&self, k: usize) -> f64 {
        self.constraints[k].cap.max(f64::MIN_POSITIVE)
    }

    fn slack(&self, mu: &[f64], k: usize) -> f64 {
        let c = self.constraints[k];
        let load: f64 = self
            .members
            .iter()
            .filter(|&&i| c.weights[i] != 0.0)
            .map(|&i| c.weights[i] * self.loader.power(i, self.price(mu, i)))
            .sum();
        c.cap - load
    }

    fn slack_slope(&self, mu: &[f64], k: usize) -> f64 {
        let c = self.constraints[k];
        self.members
            .iter()
            .map(|&i| -c.weights[i] * c.weights[i] * self.loader.power_slope(i, self.price(mu, i)))
            .sum()
    }
}

/// Continuous solution of the secondary-link problem with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CrRelaxed {
    pub allocation: RelaxedAllocation,
    /// Multipliers of `caps.linear_caps(n)`, in that order.
    pub constraint_multipliers: Vec<f64>,
    pub iterations: usize,
}

fn pack_multipliers(caps: &CrCaps, mu_all: &[f64]) -> MultiplierSet {
    let mut k = 0;
    let lambda_power = if caps.power_cap_w.is_finite() {
        k = 1;
        mu_all[0]
    } else {
        0.0
    };
    let lambda_aci = caps
        .aci_caps_w
        .iter()
        .map(|c| {
            if c.is_finite() {
                k += 1;
                mu_all[k - 1]
            } else {
                0.0
            }
        })
        .collect();
    MultiplierSet { lambda_power, lambda_aci, lambda_rate: 0.0 }
}

/// Continuous closed-form/numeric solution before rounding.
pub fn allocate_cr_relaxed(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: f64,
    caps: &CrCaps,
) -> Result<CrRelaxed> {
    let n = ch.len();
    caps.validate(n)?;
    let relaxed = allocate_relaxed(ch, w, t, b_max)?;
    let lin = caps.linear_caps(n);
    let violated: Vec<bool> = lin.iter().map(|c| !c.is_satisfied(&relaxed.power_w)).collect();
    if !violated.iter().any(|&v| v) {
        let mut allocation = relaxed;
        allocation.multipliers = pack_multipliers(caps, &vec![0.0; lin.len()]);
        return Ok(CrRelaxed { allocation, constraint_multipliers: vec![0.0; lin.len()], iterations: 0 });
    }
    let has_power = caps.power_cap_w.is_finite();
    let mut active = violated.clone();
    let mut iterations = 0;
    let mut members: Vec<usize> = (0..n).filter(|&i| relaxed.bits[i] > 0.0).collect();
    let mut mu_all = vec![0.0; lin.len()];

    // Only the power cap is violated: closed form, then check the band caps.
    if has_power && violated[0] && violated.iter().skip(1).all(|&v| !v) {
        let r = allocate_power_capped(ch, w, t, b_max, caps.power_cap_w)?;
        let others_ok = lin.iter().skip(1).all(|c| c.is_satisfied(&r.power_w));
        if others_ok {
            mu_all[0] = r.multipliers.lambda_power;
            let mut allocation = r;
            allocation.multipliers = pack_multipliers(caps, &mu_all);
            return Ok(CrRelaxed { allocation, constraint_multipliers: mu_all, iterations: 0 });
        }
        members = (0..n).filter(|&i| r.bits[i] > 0.0).collect();
        mu_all[0] = r.multipliers.lambda_power;
        for (k, c) in lin.iter().enumerate().skip(1) {
            active[k] |= !c.is_satisfied(&r.power_w);
        }
    }

    let loader = PricedLoader { cnr: &ch.cnr, gaps: t.gaps(), bits_weight: w.bits_weight(), b_max };
    let base_price = w.power_weight();
    loop {
        let idx: Vec<usize> = (0..lin.len()).filter(|&k| active[k]).collect();
        let init: Vec<f64> = idx.iter().map(|&k| mu_all[k]).collect();
        let sol;
        loop {
            let dual = LoadingDual {
                loader: loader.clone(),
                members: &members,
                constraints: idx.iter().map(|&k| &lin[k]).collect(),
                base_price,
            };
            let s = solve_multipliers(&dual, &init, 1e-12)?;
            iterations += s.iterations;
            let kept: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| loader.qualifies(i, dual.price(&s.mu, i)))
                .collect();
            let unchanged = kept.len() == members.len();
            members = kept;
            if unchanged {
                sol = s;
                break;
            }
        }
        for k in 0..lin.len() {
            mu_all[k] = 0.0;
        }
        for (j, &k) in idx.iter().enumerate() {
            mu_all[k] = sol.mu[j];
        }
        let price = |i: usize| {
            base_price + lin.iter().zip(&mu_all).map(|(c, m)| m * c.weights[i]).sum::<f64>()
        };
        let mut power = vec![0.0; n];
        for &i in &members {
            power[i] = loader.power(i, price(i));
        }
        let mut grew = false;
        for (k, c) in lin.iter().enumerate() {
            if !active[k] && c.load(&power) > c.cap * (1.0 + 1e-12) {
                active[k] = true;
                grew = true;
            }
        }
        if !grew {
            let mut bits = vec![0.0; n];
            for &i in &members {
                bits[i] = loader.bits(i, price(i));
            }
            let mut allocation = RelaxedAllocation {
                bits,
                power_w: power,
                objective: 0.0,
                multipliers: pack_multipliers(caps, &mu_all),
            };
            allocation.objective = w.objective(allocation.total_power(), allocation.total_bits());
            return Ok(CrRelaxed { allocation, constraint_multipliers: mu_all, iterations });
        }
    }
}

/// Integer allocation for the secondary link: continuous solution, rounding, repair
/// against every cap, greedy fill and exchange search (see [`discrete_polish`]).
pub fn allocate_cr(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    caps: &CrCaps,
) -> Result<Allocation> {
    let relaxed = allocate_cr_relaxed(ch, w, t, b_max as f64, caps)?;
    let rounded = relaxed.allocation.round(ch, w, t, b_max)?;
    let lin = caps.linear_caps(ch.len());
    if lin.is_empty() {
        return greedy_fill(&rounded, ch, w, t, b_max, &[]);
    }
    discrete_polish(&rounded, ch, w, t, b_max, &lin, &relaxed.constraint_multipliers)
}

/// How one primary receiver experiences the secondary transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceProbe<'a> {
    /// Leakage weights into the band; `None` for the co-channel receiver.
    pub leakage: Option<&'a [f64]>,
    /// Sampled small-scale fading power gain `|H_sp|²`.
    pub fading_gain: f64,
    /// Linear path gain `10^{-0.1·PL}`.
    pub path_gain: f64,
    pub threshold_w: f64,
}

/// True interference against each nominal threshold; `true` marks a violation
/// (strictly above the threshold).
pub fn measure_violation(power: &[f64], probes: &[InterferenceProbe<'_>]) -> Vec<bool> {
    probes
        .iter()
        .map(|p| {
            let load: f64 = match p.leakage {
                Some(w) => w.iter().zip(power).map(|(w, p)| w * p).sum(),
                None => power.iter().sum(),
            };
            p.fading_gain * p.path_gain * load > p.threshold_w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpower_moop::closed_form_power_multiplier;

    struct Quadratic {
        caps: Vec<f64>,
    }

    // slack_k = cap_k - 1/(1 + mu_k) - 0.1 * mu_other
    impl SlackMap for Quadratic {
        fn dim(&self) -> usize {
            self.caps.len()
        }
        fn scale(&self, k: usize) -> f64 {
            self.caps[k]
        }
        fn slack(&self, mu: &[f64], k: usize) -> f64 {
            let other: f64 = mu.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, m)| m).sum();
            self.caps[k] - 1.0 / (1.0 + mu[k]) + 0.01 * other
        }
        fn slack_slope(&self, mu: &[f64], k: usize) -> f64 {
            1.0 / (1.0 + mu[k]).powi(2)
        }
    }

    #[test]
    fn inactive_constraint_gets_zero() {
        let s = solve_multipliers(&Quadratic { caps: vec![2.0] }, &[0.7], 1e-12).unwrap();
        assert_eq!(s.mu, vec![0.0]);
    }

    #[test]
    fn coupled_constraints_settle() {
        let q = Quadratic { caps: vec![0.25, 0.5] };
        let s = solve_multipliers(&q, &[0.0, 0.0], 1e-12).unwrap();
        for k in 0..2 {
            assert!(q.slack(&s.mu, k).abs() <= 1e-12 * q.caps[k]);
            assert!(s.mu[k] > 0.0);
        }
    }

    #[test]
    fn unreachable_constraint_is_infeasible() {
        let q = Quadratic { caps: vec![-1.0] };
        assert!(matches!(solve_multipliers(&q, &[0.0], 1e-12), Err(Error::Infeasible(_))));
    }

    fn instance() -> (ChannelRealization, BerTargets, MoopWeights) {
        let cnr = vec![120.0, 900.0, 45.0, 3000.0, 260.0, 75.0, 1500.0, 20.0];
        let ch = ChannelRealization::from_cnr(cnr).unwrap();
        (ch, BerTargets::uniform(8, 1e-4).unwrap(), MoopWeights::unnormalized(0.5).unwrap())
    }

    #[test]
    fn numeric_single_power_constraint_matches_closed_form() {
        let (ch, t, w) = instance();
        let free = allocate_relaxed(&ch, &w, &t, 6.0).unwrap().total_power();
        let cap = 0.4 * free;
        let closed = allocate_power_capped(&ch, &w, &t, 6.0, cap).unwrap();
        // the same constraint expressed as a leakage-weighted band cap with unit weights
        let caps = CrCaps { power_cap_w: f64::INFINITY, aci_caps_w: vec![cap], leakage: vec![vec![1.0; 8]] };
        let numeric = allocate_cr_relaxed(&ch, &w, &t, 6.0, &caps).unwrap();
        let lam_closed = closed_form_power_multiplier(&closed, &ch, &w, &t, 6.0, cap);
        let lam_numeric = numeric.constraint_multipliers[0];
        assert!((lam_closed - lam_numeric).abs() <= 1e-10 * lam_closed.abs().max(1.0));
        for (a, b) in closed.bits.iter().zip(&numeric.allocation.bits) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn aci_cap_met_with_equality() {
        let (ch, t, w) = instance();
        let leak: Vec<f64> = (0..8).map(|i| 0.3 / (1.0 + i as f64).powi(2)).collect();
        let free = allocate_relaxed(&ch, &w, &t, 6.0).unwrap();
        let load: f64 = leak.iter().zip(&free.power_w).map(|(a, b)| a * b).sum();
        let caps = CrCaps { power_cap_w: f64::INFINITY, aci_caps_w: vec![0.3 * load], leakage: vec![leak.clone()] };
        let r = allocate_cr_relaxed(&ch, &w, &t, 6.0, &caps).unwrap();
        let got: f64 = leak.iter().zip(&r.allocation.power_w).map(|(a, b)| a * b).sum();
        assert!((got - 0.3 * load).abs() <= 1e-8 * 0.3 * load);
        assert!(r.constraint_multipliers[0] > 0.0);
    }

    #[test]
    fn infinite_caps_reduce_to_relaxed() {
        let (ch, t, w) = instance();
        let caps = CrCaps { power_cap_w: f64::INFINITY, aci_caps_w: vec![f64::INFINITY], leakage: vec![vec![0.1; 8]] };
        let r = allocate_cr_relaxed(&ch, &w, &t, 6.0, &caps).unwrap();
        let plain = allocate_relaxed(&ch, &w, &t, 6.0).unwrap();
        assert_eq!(r.allocation.bits, plain.bits);
        assert_eq!(r.allocation.power_w, plain.power_w);
    }

    #[test]
    fn violation_boundary_is_not_counted() {
        let p = vec![0.5, 0.5];
        let leak = [0.2, 0.4];
        let probes = [
            InterferenceProbe { leakage: None, fading_gain: 1.0, path_gain: 1.0, threshold_w: 1.0 },
            InterferenceProbe { leakage: Some(&leak), fading_gain: 1.0, path_gain: 1.0, threshold_w: 0.29 },
            InterferenceProbe { leakage: None, fading_gain: 0.0, path_gain: 1.0, threshold_w: 1e-30 },
        ];
        assert_eq!(measure_violation(&p, &probes), vec![false, true, false]);
    }

    #[test]
    fn perfect_sensing_caps_and_margin() {
        let cfg = OfdmConfig::new(8, 9765.625).unwrap();
        let pl = PathLossModel { reference_distance_m: 100.0, exponent: 4.0, wavelength_m: 0.33 };
        let mk = |d: f64, fm: f64| PuBand {
            bandwidth_hz: 100e3,
            spectral_offsets_hz: PuBand::offsets_for(&cfg, 150e3),
            distance_m: d,
            interference_threshold_w: 1e-16,
            fading_margin_db: fm,
            exp_mean_inv: 1.0,
            confidence: 0.9,
        };
        let perfect = build_caps(5e-6, &[mk(1500.0, 0.0)], &mk(1000.0, 0.0), &SensingModel::perfect(0.5), &[SensingModel::perfect(0.5)], &pl, &cfg).unwrap();
        assert_eq!(perfect.power_cap_w, 5e-6);
        let s = SensingModel { p_md: 0.05, p_fa: 0.1, p_active: 0.5 };
        let a = build_caps(1.0, &[mk(1500.0, 0.0)], &mk(1000.0, 0.0), &s, &[s], &pl, &cfg).unwrap();
        let b = build_caps(1.0, &[mk(1500.0, 10.0)], &mk(1000.0, 10.0), &s, &[s], &pl, &cfg).unwrap();
        assert!((b.power_cap_w / a.power_cap_w - 0.1).abs() < 1e-12);
        assert!((b.aci_caps_w[0] / a.aci_caps_w[0] - 0.1).abs() < 1e-12);
        // hand evaluation: beta_ov = 0.025/0.475, PL(1 km) = 111.6139 dB
        let pl_m = 20.0 * (4.0 * std::f64::consts::PI * 100.0 / 0.33f64).log10() + 40.0;
        let expect = 10f64.powf(0.1 * pl_m) * 1e-16 / (0.025 / 0.475);
        assert!((a.power_cap_w - expect).abs() < 1e-12 * expect);
        assert!(a.leakage[0].iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
