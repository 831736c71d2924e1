//! Energy-efficient power loading with imperfect channel estimates, solved as a sequence
//! of subtractive problems (Dinkelbach).

use std::f64::consts::LN_2;

use crate::bitpower_moop::{LinearCap, MultiplierSet};
use crate::channel::{
    db_loss_to_gain, leakage_vector, path_loss_db, sensing_posteriors, OfdmConfig, PathLossModel,
    PuBand, SensingModel,
};
use crate::cr_bitpower::{fit_within_caps, solve_multipliers, CrCaps, SlackMap};
use crate::error::{Error, Result};

/// Energy-efficiency problem parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EeConfig {
    /// Amplifier inefficiency factor.
    pub kappa: f64,
    pub circuit_power_w: f64,
    /// Minimum rate in bit/s.
    pub rate_floor: f64,
    /// Stopping tolerance on the subtractive objective.
    pub tol: f64,
    pub q_init: Option<f64>,
}

impl EeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.circuit_power_w >= 0.0) || !(self.tol > 0.0) {
            return Err(Error::domain("need kappa > 0, circuit power >= 0 and tol > 0"));
        }
        if !(self.rate_floor >= 0.0) {
            return Err(Error::domain("rate floor must be nonnegative"));
        }
        Ok(())
    }
}

/// Channel estimates and error statistics of the secondary link.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainChannel {
    /// Estimated small-scale gains `|Ĥ|²`.
    pub est_gains: Vec<f64>,
    /// Estimation-error variance.
    pub est_var: f64,
    /// Linear path gain of the secondary link.
    pub path_loss_lin: f64,
    pub noise_var: f64,
    /// Interference power from primary users, per subcarrier.
    pub interference: Vec<f64>,
    pub spacing: f64,
}

impl UncertainChannel {
    pub fn len(&self) -> usize {
        self.est_gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.est_gains.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.interference.len() != self.est_gains.len() {
            return Err(Error::domain("interference vector length mismatch"));
        }
        let fields = [self.est_var, self.path_loss_lin, self.noise_var, self.spacing];
        if fields.iter().chain(&self.est_gains).chain(&self.interference).any(|v| !(*v >= 0.0)) {
            return Err(Error::domain("channel entries must be nonnegative"));
        }
        Ok(())
    }

    fn noise(&self, i: usize) -> f64 {
        self.noise_var + self.interference[i]
    }

    /// Rate of subcarrier `i` at power `p`, in bit/s.
    pub fn subcarrier_rate(&self, i: usize, p: f64) -> f64 {
        let (a, s, g, n) = (self.est_gains[i], self.est_var, self.path_loss_lin, self.noise(i));
        if p <= 0.0 || a == 0.0 {
            return 0.0;
        }
        let u = g * p;
        // ln(((s + a) u + n) / (s u + n)) written to stay accurate for small u
        self.spacing * (a * u / (s * u + n)).ln_1p() / LN_2
    }
}

/// Rate of the uncertain channel: `Δf Σ log2(1 + |Ĥ|²Gp/(σ_ΔH²Gp + σ_n² + J))`.
pub fn capacity_uncertain(p: &[f64], ch: &UncertainChannel) -> Result<f64> {
    if p.len() != ch.len() || p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::domain("power vector must be nonnegative and match the channel"));
    }
    Ok(p.iter().enumerate().map(|(i, &pi)| ch.subcarrier_rate(i, pi)).sum())
}

/// Energy per delivered bit `(κΣp + p_c)/c(p)`.
pub fn ee_metric(p: &[f64], ch: &UncertainChannel, cfg: &EeConfig) -> Result<f64> {
    let c = capacity_uncertain(p, ch)?;
    if !(c > 0.0) {
        return Err(Error::domain("energy per bit is undefined at zero rate"));
    }
    Ok((cfg.kappa * p.iter().sum::<f64>() + cfg.circuit_power_w) / c)
}

/// Statistical interference cap: transmit power whose interference exceeds `threshold_w`
/// with probability at most `1 - confidence` under exponential fading with inverse mean
/// `nu`, scaled by the sensing posterior `beta`.
pub fn statistical_cap(beta: f64, nu: f64, path_gain: f64, confidence: f64, threshold_w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&confidence) || !(nu > 0.0) || !(path_gain > 0.0) {
        return Err(Error::domain("statistical cap needs confidence in [0,1), nu > 0, gain > 0"));
    }
    if beta == 0.0 || confidence == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(nu / (path_gain * -(1.0 - confidence).ln()) * threshold_w / beta)
}

/// Caps with statistical interference constraints toward the co-channel band and each
/// adjacent band; the power cap is the smaller of `p_th` and the co-channel cap.
pub fn build_statistical_caps(
    p_th: f64,
    bands: &[PuBand],
    co_channel: &PuBand,
    s_m: &SensingModel,
    s_l: &[SensingModel],
    pl: &PathLossModel,
    cfg: &OfdmConfig,
) -> Result<CrCaps> {
    let leakage = bands.iter().map(|b| leakage_vector(cfg, b)).collect::<Result<Vec<_>>>()?;
    build_statistical_caps_with_leakage(p_th, bands, co_channel, s_m, s_l, pl, leakage)
}

/// [`build_statistical_caps`] with precomputed leakage factors.
pub fn build_statistical_caps_with_leakage(
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
    let g_m = db_loss_to_gain(path_loss_db(co_channel.distance_m, pl)?);
    let cci = statistical_cap(
        beta_ov,
        co_channel.exp_mean_inv,
        g_m,
        co_channel.confidence,
        co_channel.interference_threshold_w,
    )?;
    let mut aci_caps_w = Vec::with_capacity(bands.len());
    for (band, s) in bands.iter().zip(s_l) {
        band.validate()?;
        let (_, beta_oo) = sensing_posteriors(s)?;
        let g_l = db_loss_to_gain(path_loss_db(band.distance_m, pl)?);
        aci_caps_w.push(statistical_cap(
            beta_oo,
            band.exp_mean_inv,
            g_l,
            band.confidence,
            band.interference_threshold_w,
        )?);
    }
    Ok(CrCaps { power_cap_w: p_th.min(cci), aci_caps_w, leakage })
}

/// Inner problem solution at a fixed parameter `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub power_w: Vec<f64>,
    pub multipliers: MultiplierSet,
    pub iterations: usize,
}

struct EeDual<'a> {
    ch: &'a UncertainChannel,
    caps: Vec<LinearCap>,
    /// Price per watt without multipliers; zero for the rate-maximization limit.
    kappa: f64,
    q: f64,
    rate_floor: f64,
}

impl EeDual<'_> {
    fn rate_index(&self) -> Option<usize> {
        (self.rate_floor > 0.0).then_some(self.caps.len())
    }

    fn terms(&self, mu: &[f64], i: usize) -> (f64, f64) {
        let lambda_rate = self.rate_index().map_or(0.0, |k| mu[k]);
        let c = self.ch.spacing / LN_2 * (self.q + lambda_rate);
        let d = self.kappa + self.caps.iter().zip(mu).map(|(cap, m)| m * cap.weights[i]).sum::<f64>();
        (c, d)
    }

    /// Stationary power of subcarrier `i` for rate price `c` and power price `d`.
    fn power_at(&self, i: usize, c: f64, d: f64) -> f64 {
        let ch = self.ch;
        let (a, s, g, n) = (ch.est_gains[i], ch.est_var, ch.path_loss_lin, ch.noise(i));
        if a == 0.0 || c == 0.0 || g == 0.0 {
            return 0.0;
        }
        if d <= 0.0 {
            return f64::INFINITY;
        }
        let excess = c * a / d - n / g;
        if excess <= 0.0 {
            return 0.0;
        }
        // root of s(s+a)u² + n(2s+a)u + n² − c·G·a·n/d = 0 in u = G p, rationalized
        let x = 4.0 * s * (s + a) * (n - c * a * g / d) / (n * (2.0 * s + a).powi(2));
        2.0 * excess / ((2.0 * s + a) * (1.0 + (1.0 - x).sqrt()))
    }

    fn power(&self, mu: &[f64], i: usize) -> f64 {
        let (c, d) = self.terms(mu, i);
        self.power_at(i, c, d)
    }

    fn powers(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.ch.len()).map(|i| self.power(mu, i)).collect()
    }

    /// Implicit-function derivatives (dp/dd, dp/dc) at a positive power.
    fn sensitivities(&self, i: usize, p: f64, c: f64, d: f64) -> (f64, f64) {
        let ch = self.ch;
        let (a, s, g, n) = (ch.est_gains[i], ch.est_var, ch.path_loss_lin, ch.noise(i));
        let u = g * p;
        // ((s+a)u + n)(su + n) = c·G·a·n/d
        let h1 = (s + a) * u + n;
        let h2 = s * u + n;
        let dh = (s + a) * h2 + s * h1;
        let k = c * g * a * n;
        let du_dd = -k / (d * d * dh);
        let du_dc = g * a * n / (d * dh);
        (du_dd / g, du_dc / g)
    }
}

impl SlackMap for EeDual<'_> {
    fn dim(&self) -> usize {
        self.caps.len() + usize::from(self.rate_floor > 0.0)
    }

    fn scale(&self, k: usize) -> f64 {
        if k < self.caps.len() {
            self.caps[k].cap.max(f64::MIN_POSITIVE)
        } else {
            self.rate_floor
        }
    }

    fn slack(&self, mu: &[f64], k: usize) -> f64 {
        if k < self.caps.len() {
            let cap = &self.caps[k];
            let load: f64 = (0..self.ch.len())
                .filter(|&i| cap.weights[i] != 0.0)
                .map(|i| cap.weights[i] * self.power(mu, i))
                .sum();
            cap.cap - load
        } else {
            let rate: f64 = (0..self.ch.len()).map(|i| self.ch.subcarrier_rate(i, self.power(mu, i))).sum();
            rate - self.rate_floor
        }
    }

    fn slack_slope(&self, mu: &[f64], k: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..self.ch.len() {
            let (c, d) = self.terms(mu, i);
            let p = self.power_at(i, c, d);
            if !(p > 0.0) || !p.is_finite() {
                continue;
            }
            let (dp_dd, dp_dc) = self.sensitivities(i, p, c, d);
            if k < self.caps.len() {
                let w = self.caps[k].weights[i];
                total -= w * w * dp_dd;
            } else {
                let ch = self.ch;
                let (a, s, g, n) = (ch.est_gains[i], ch.est_var, ch.path_loss_lin, ch.noise(i));
                let u = g * p;
                let dr_du = ch.spacing / LN_2 * a * n / (((s + a) * u + n) * (s * u + n));
                total += dr_du * g * dp_dc * ch.spacing / LN_2;
            }
        }
        total
    }
}

fn pack(caps: &CrCaps, mu: &[f64], lambda_rate: f64) -> MultiplierSet {
    let mut k = 0;
    let mut next = |finite: bool| {
        if finite {
            k += 1;
            mu[k - 1]
        } else {
            0.0
        }
    };
    let lambda_power = next(caps.power_cap_w.is_finite());
    let lambda_aci = caps.aci_caps_w.iter().map(|c| next(c.is_finite())).collect();
    MultiplierSet { lambda_power, lambda_aci, lambda_rate }
}

fn check_shapes(ch: &UncertainChannel, caps: &CrCaps) -> Result<()> {
    ch.validate()?;
    if caps.leakage.len() != caps.aci_caps_w.len() || caps.leakage.iter().any(|l| l.len() != ch.len()) {
        return Err(Error::domain("leakage table does not match the bands or subcarriers"));
    }
    Ok(())
}

/// Largest rate reachable under the caps (infinite if some usable subcarrier is uncapped
/// and the estimation error is zero).
pub fn max_rate_under_caps(ch: &UncertainChannel, caps: &CrCaps) -> Result<f64> {
    check_shapes(ch, caps)?;
    let lin = caps.linear_caps(ch.len());
    let uncapped = (0..ch.len()).any(|i| ch.est_gains[i] > 0.0 && lin.iter().all(|c| c.weights[i] == 0.0));
    if uncapped
        && ch.est_var == 0.0 {
            return Ok(f64::INFINITY);
        }
        // uncapped subcarriers saturate; capped ones are solved below with their share
    let dual = EeDual { ch, caps: lin, kappa: 0.0, q: 1.0, rate_floor: 0.0 };
    let sol = solve_multipliers(&dual, &vec![0.0; dual.dim()], 1e-12)?;
    let mut rate = 0.0;
    for i in 0..ch.len() {
        let p = dual.power(&sol.mu, i);
        rate += if p.is_finite() {
            ch.subcarrier_rate(i, p)
        } else {
            ch.spacing * (ch.est_gains[i] / ch.est_var).ln_1p() / LN_2
        };
    }
    Ok(rate)
}

/// Minimizes `κΣp − q·c(p)` under the caps and the rate floor.
pub fn inner_allocate(q: f64, ch: &UncertainChannel, caps: &CrCaps, cfg: &EeConfig) -> Result<InnerSolution> {
    cfg.validate()?;
    check_shapes(ch, caps)?;
    if !(q >= 0.0) {
        return Err(Error::domain("parameter q must be nonnegative"));
    }
    if cfg.rate_floor > 0.0 {
        let best = max_rate_under_caps(ch, caps)?;
        if cfg.rate_floor > best * (1.0 - 1e-9) {
            return Err(Error::infeasible(format!(
                "rate floor {} exceeds the largest reachable rate {best}",
                cfg.rate_floor
            )));
        }
    }
    let dual = EeDual {
        ch,
        caps: caps.linear_caps(ch.len()),
        kappa: cfg.kappa,
        q,
        rate_floor: cfg.rate_floor,
    };
    let sol = solve_multipliers(&dual, &vec![0.0; dual.dim()], 1e-12)?;
    let lambda_rate = dual.rate_index().map_or(0.0, |k| sol.mu[k]);
    let mut power_w = dual.powers(&sol.mu);
    fit_within_caps(&mut power_w, &dual.caps);
    Ok(InnerSolution {
        power_w,
        multipliers: pack(caps, &sol.mu, lambda_rate),
        iterations: sol.iterations,
    })
}

/// Outcome of the Dinkelbach iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachOutcome {
    /// Energy per bit of the returned powers.
    pub q_star: f64,
    pub power_w: Vec<f64>,
    pub multipliers: MultiplierSet,
    /// Number of inner solves.
    pub iterations: usize,
    /// Parameter used at each inner solve.
    pub q_trace: Vec<f64>,
    /// Subtractive objective at each inner solve.
    pub phi_trace: Vec<f64>,
}

const MAX_OUTER: usize = 200;

/// Feasible starting parameter: equal power at the tightest cap, or the minimum-power
/// point of the rate floor when equal power misses it.
fn initial_q(ch: &UncertainChannel, caps: &CrCaps, cfg: &EeConfig) -> Result<f64> {
    if let Some(q) = cfg.q_init {
        return Ok(q);
    }
    let n = ch.len() as f64;
    let mut level = caps.power_cap_w / n;
    for (cap, leak) in caps.aci_caps_w.iter().zip(&caps.leakage) {
        let s: f64 = leak.iter().sum();
        if s > 0.0 {
            level = level.min(cap / s);
        }
    }
    if !level.is_finite() {
        level = if cfg.circuit_power_w > 0.0 { cfg.circuit_power_w / (cfg.kappa * n) } else { 1.0 };
    }
    let equal = vec![level; ch.len()];
    let rate = capacity_uncertain(&equal, ch)?;
    if rate > 0.0 && rate >= cfg.rate_floor {
        return ee_metric(&equal, ch, cfg);
    }
    let floor = inner_allocate(0.0, ch, caps, cfg)?;
    ee_metric(&floor.power_w, ch, cfg)
}

/// Minimizes energy per bit by Dinkelbach's parametric iteration.
pub fn dinkelbach_solve(ch: &UncertainChannel, caps: &CrCaps, cfg: &EeConfig) -> Result<DinkelbachOutcome> {
    cfg.validate()?;
    let mut q = initial_q(ch, caps, cfg)?;
    let mut q_trace = Vec::new();
    let mut phi_trace = Vec::new();
    for _ in 0..MAX_OUTER {
        let inner = inner_allocate(q, ch, caps, cfg)?;
        let total: f64 = inner.power_w.iter().sum();
        let rate = capacity_uncertain(&inner.power_w, ch)?;
        let phi = cfg.kappa * total + cfg.circuit_power_w - q * rate;
        q_trace.push(q);
        phi_trace.push(phi);
        if phi >= -cfg.tol {
            let q_star = ee_metric(&inner.power_w, ch, cfg)?;
            return Ok(DinkelbachOutcome {
                q_star,
                power_w: inner.power_w,
                multipliers: inner.multipliers,
                iterations: q_trace.len(),
                q_trace,
                phi_trace,
            });
        }
        q = (cfg.kappa * total + cfg.circuit_power_w) / rate;
    }
    Err(Error::NoConvergence("parametric iteration did not reach the tolerance".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(n: usize, est_var: f64) -> UncertainChannel {
        UncertainChannel {
            est_gains: (0..n).map(|i| 0.2 + 0.37 * i as f64).collect(),
            est_var,
            path_loss_lin: 1e-12,
            noise_var: 4e-16,
            interference: vec![4e-16; n],
            spacing: 9765.625,
        }
    }

    fn cfg() -> EeConfig {
        EeConfig { kappa: 7.8, circuit_power_w: 2.0, rate_floor: 0.0, tol: 1e-8, q_init: None }
    }

    #[test]
    fn capacity_limits() {
        let ch = channel(4, 0.01);
        assert_eq!(capacity_uncertain(&[0.0; 4], &ch).unwrap(), 0.0);
        let big = capacity_uncertain(&[1e12; 4], &ch).unwrap();
        let sat: f64 = ch.est_gains.iter().map(|a| ch.spacing * (1.0 + a / 0.01).log2()).sum();
        assert!((big - sat).abs() < 1e-6 * sat);
        let perfect = channel(4, 0.0);
        let p = [1e-3, 2e-3, 0.0, 5e-4];
        let direct: f64 = (0..4)
            .map(|i| perfect.spacing * (1.0 + perfect.est_gains[i] * 1e-12 * p[i] / 8e-16).log2())
            .sum();
        assert!((capacity_uncertain(&p, &perfect).unwrap() - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn metric_identity_and_errors() {
        let ch = channel(2, 0.0);
        let p = [1e-3, 1e-3];
        let c = capacity_uncertain(&p, &ch).unwrap();
        let unit = EeConfig { kappa: c / 2e-3, circuit_power_w: 0.0, ..cfg() };
        assert!((ee_metric(&p, &ch, &unit).unwrap() - 1.0).abs() < 1e-12);
        assert!(ee_metric(&[0.0, 0.0], &ch, &cfg()).is_err());
    }

    #[test]
    fn zero_parameter_without_floor_gives_zero_power() {
        let ch = channel(4, 1e-3);
        let s = inner_allocate(0.0, &ch, &CrCaps::power_only(f64::INFINITY), &cfg()).unwrap();
        assert!(s.power_w.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn infeasible_rate_floor() {
        let ch = channel(4, 1e-3);
        let c = EeConfig { rate_floor: 1e12, ..cfg() };
        let r = inner_allocate(1.0, &ch, &CrCaps::power_only(1.0), &c);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn statistical_cap_cases() {
        assert_eq!(statistical_cap(0.0, 1.0, 1e-12, 0.9, 1e-13).unwrap(), f64::INFINITY);
        let v = statistical_cap(0.5, 1.0, 1e-12, 0.9, 1e-13).unwrap();
        assert!((v - 2.0 * 0.1 / 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn near_perfect_estimate_matches_water_filling() {
        let mut ch = channel(8, 1e-12);
        ch.path_loss_lin = 6.9e-12;
        let caps = CrCaps::power_only(1e-3);
        let q = 1e-5;
        let s = inner_allocate(q, &ch, &caps, &cfg()).unwrap();
        let level = ch.spacing / LN_2 * q / (7.8 + s.multipliers.lambda_power);
        for i in 0..8 {
            let wf = (level - 8e-16 / (6.9e-12 * ch.est_gains[i])).max(0.0);
            assert!((s.power_w[i] - wf).abs() <= 1e-4 * wf.max(1e-300), "{i}: {} vs {wf}", s.power_w[i]);
        }
    }

    #[test]
    fn binding_rate_floor_is_met_with_equality() {
        let mut ch = channel(6, 0.02);
        ch.path_loss_lin = 6.9e-12;
        let free = inner_allocate(1e-6, &ch, &CrCaps::power_only(1.0), &cfg()).unwrap();
        let rate = capacity_uncertain(&free.power_w, &ch).unwrap();
        let c = EeConfig { rate_floor: 1.5 * rate, ..cfg() };
        let s = inner_allocate(1e-6, &ch, &CrCaps::power_only(1.0), &c).unwrap();
        assert!(s.multipliers.lambda_rate > 0.0);
        let got = capacity_uncertain(&s.power_w, &ch).unwrap();
        assert!((got - 1.5 * rate).abs() <= 1e-9 * rate);
    }

    #[test]
    fn outcome_is_self_consistent() {
        let mut ch = channel(16, 0.01);
        ch.path_loss_lin = 6.9e-12;
        let o = dinkelbach_solve(&ch, &CrCaps::power_only(2.0), &cfg()).unwrap();
        assert!((o.q_star - ee_metric(&o.power_w, &ch, &cfg()).unwrap()).abs() <= 1e-12 * o.q_star);
        assert!(o.phi_trace.last().unwrap().abs() <= 1e-8);
        assert!(o.q_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
