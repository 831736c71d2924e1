//! Power loading that trades the secondary rate against co-channel and adjacent-channel
//! interference, with caps scaled by what the transmitter knows about the interference
//! links.

use std::f64::consts::LN_2;

use crate::bitpower_moop::{LinearCap, MultiplierSet};
use crate::channel::ChannelRealization;
use crate::cr_bitpower::{fit_within_caps, solve_multipliers, CrCaps, SlackMap};
use crate::error::{Error, Result};

/// Weights and normalizations of the three objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct TriWeights {
    pub w_cci: f64,
    pub w_aci: Vec<f64>,
    pub w_rate: f64,
    pub u_cci: f64,
    pub u_aci: Vec<f64>,
    pub u_rate: f64,
}

impl TriWeights {
    /// Normalizations from the thresholds (`1/P_th`) and the maximum achievable rate.
    pub fn normalized(
        w_cci: f64,
        w_aci: Vec<f64>,
        w_rate: f64,
        cci_threshold_w: f64,
        aci_thresholds_w: &[f64],
        max_rate: f64,
    ) -> Result<Self> {
        let w = TriWeights {
            w_cci,
            u_aci: aci_thresholds_w.iter().map(|t| 1.0 / t).collect(),
            w_aci,
            w_rate,
            u_cci: 1.0 / cci_threshold_w,
            u_rate: if max_rate > 0.0 { 1.0 / max_rate } else { 0.0 },
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.w_cci).chain(self.w_aci.iter().copied()).chain([self.w_rate]);
        let mut sum = 0.0;
        for v in all {
            if !(v >= 0.0) {
                return Err(Error::domain("objective weights must be nonnegative"));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("objective weights sum to {sum}, not 1")));
        }
        if self.w_aci.len() != self.u_aci.len() {
            return Err(Error::domain("one normalization per band is required"));
        }
        Ok(())
    }
}

/// What the transmitter knows about a link toward a primary receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnowledgeMode {
    /// Path loss only.
    PathLoss,
    /// Path loss plus the exponential law of the fading gain.
    PathLossStatistics,
    /// The realized fading gain itself.
    FullCsi { fading_gain: f64 },
}

/// Knowledge coefficients toward the co-channel and adjacent receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeCoeff {
    pub x_m: f64,
    pub x_bands: Vec<f64>,
    pub mode: KnowledgeMode,
}

/// Coefficient that turns an interference threshold into a transmit-side cap.
///
/// `nu` is the inverse mean of the exponential fading gain and `psi_th` the confidence
/// with which the statistical cap must hold.
pub fn knowledge_coeff(mode: KnowledgeMode, pl_db: f64, nu: f64, psi_th: f64) -> Result<f64> {
    let loss = 10f64.powf(0.1 * pl_db);
    match mode {
        KnowledgeMode::PathLoss => Ok(loss),
        KnowledgeMode::PathLossStatistics => {
            if !(0.0..1.0).contains(&psi_th) {
                return Err(Error::domain("confidence must lie in [0,1)"));
            }
            if !(nu > 0.0) {
                return Err(Error::domain("exponential rate must be positive"));
            }
            if psi_th == 0.0 {
                return Ok(f64::INFINITY);
            }
            Ok(nu / -(1.0 - psi_th).ln() * loss)
        }
        KnowledgeMode::FullCsi { fading_gain } => {
            if !(fading_gain >= 0.0) {
                return Err(Error::domain("fading gain must be nonnegative"));
            }
            Ok(loss / fading_gain)
        }
    }
}

/// Power vector with the multipliers that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePowerSolution {
    pub power_w: Vec<f64>,
    pub multipliers: MultiplierSet,
    pub iterations: usize,
}

struct WaterDual<'a> {
    cnr: &'a [f64],
    /// Numerator of the water level.
    level: f64,
    /// Objective price per watt on each subcarrier.
    base: Vec<f64>,
    constraints: Vec<LinearCap>,
}

impl WaterDual<'_> {
    fn price(&self, mu: &[f64], i: usize) -> f64 {
        self.base[i] + self.constraints.iter().zip(mu).map(|(c, m)| m * c.weights[i]).sum::<f64>()
    }

    fn power(&self, mu: &[f64], i: usize) -> f64 {
        if !(self.cnr[i] > 0.0) || self.level == 0.0 {
            return 0.0;
        }
        let price = self.price(mu, i);
        let p = if price > 0.0 { self.level / price } else { f64::INFINITY };
        (p - 1.0 / self.cnr[i]).max(0.0)
    }

    fn powers(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.cnr.len()).map(|i| self.power(mu, i)).collect()
    }
}

impl SlackMap for WaterDual<'_> {
    fn dim(&self) -> usize {
        self.constraints.len()
    }

    fn scale(&self, k: usize) -> f64 {
        self.constraints[k].cap.max(f64::MIN_POSITIVE)
    }

    fn slack(&self, mu: &[f64], k: usize) -> f64 {
        let c = &self.constraints[k];
        let load: f64 = (0..self.cnr.len())
            .filter(|&i| c.weights[i] != 0.0)
            .map(|i| c.weights[i] * self.power(mu, i))
            .sum();
        c.cap - load
    }

    fn slack_slope(&self, mu: &[f64], k: usize) -> f64 {
        let c = &self.constraints[k];
        (0..self.cnr.len())
            .filter(|&i| c.weights[i] != 0.0 && self.power(mu, i) > 0.0)
            .map(|i| {
                let price = self.price(mu, i);
                c.weights[i] * c.weights[i] * self.level / (price * price)
            })
            .sum()
    }
}

fn solve_water(
    ch: &ChannelRealization,
    level: f64,
    base: Vec<f64>,
    caps: &CrCaps,
) -> Result<RatePowerSolution> {
    let n = ch.len();
    if caps.leakage.iter().any(|l| l.len() != n) || caps.leakage.len() != caps.aci_caps_w.len() {
        return Err(Error::domain("leakage table does not match the bands or subcarriers"));
    }
    let constraints = caps.linear_caps(n);
    for i in 0..n {
        let covered = base[i] > 0.0 || constraints.iter().any(|c| c.weights[i] > 0.0);
        if ch.cnr[i] > 0.0 && level > 0.0 && !covered {
            return Err(Error::Unbounded(format!("subcarrier {i} has neither a price nor a cap")));
        }
    }
    let dual = WaterDual { cnr: &ch.cnr, level, base, constraints };
    let init = vec![0.0; dual.dim()];
    let sol = solve_multipliers(&dual, &init, 1e-12)?;
    let mut power_w = dual.powers(&sol.mu);
    fit_within_caps(&mut power_w, &dual.constraints);
    let mut k = 0;
    let mut next = |finite: bool| {
        if finite {
            k += 1;
            sol.mu[k - 1]
        } else {
            0.0
        }
    };
    let lambda_power = next(caps.power_cap_w.is_finite());
    let lambda_aci = caps.aci_caps_w.iter().map(|c| next(c.is_finite())).collect();
    Ok(RatePowerSolution {
        power_w,
        multipliers: MultiplierSet { lambda_power, lambda_aci, lambda_rate: 0.0 },
        iterations: sol.iterations,
    })
}

/// Per-watt price of the interference objectives on each subcarrier.
pub fn interference_price(w: &TriWeights, k: &KnowledgeCoeff, caps: &CrCaps, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut v = w.w_cci * w.u_cci / k.x_m;
            for (l, leak) in caps.leakage.iter().enumerate() {
                v += w.w_aci[l] * w.u_aci[l] * leak[i] / k.x_bands[l];
            }
            v
        })
        .collect()
}

/// Optimal power loading of the weighted rate/interference objective under the caps
/// (`caps.power_cap_w` is the co-channel cap `P_th·X`, the band caps likewise).
pub fn allocate_rate_interference(
    ch: &ChannelRealization,
    w: &TriWeights,
    k: &KnowledgeCoeff,
    caps: &CrCaps,
    spacing_hz: f64,
) -> Result<RatePowerSolution> {
    w.validate()?;
    let n = ch.len();
    if w.w_aci.len() != caps.leakage.len() || k.x_bands.len() != caps.leakage.len() {
        return Err(Error::domain("weights, coefficients and bands disagree in count"));
    }
    if w.w_rate == 0.0 || w.u_rate == 0.0 {
        return Ok(RatePowerSolution {
            power_w: vec![0.0; n],
            multipliers: MultiplierSet {
                lambda_aci: vec![0.0; caps.aci_caps_w.len()],
                ..Default::default()
            },
            iterations: 0,
        });
    }
    let level = w.w_rate * w.u_rate * spacing_hz / LN_2;
    solve_water(ch, level, interference_price(w, k, caps, n), caps)
}

/// Shannon rate of a power vector.
pub fn rate_of(ch: &ChannelRealization, power: &[f64], spacing_hz: f64) -> f64 {
    spacing_hz * ch.cnr.iter().zip(power).map(|(g, p)| (g * p).ln_1p()).sum::<f64>() / LN_2
}

/// Weighted objective (lower is better).
pub fn objective(
    ch: &ChannelRealization,
    power: &[f64],
    w: &TriWeights,
    k: &KnowledgeCoeff,
    caps: &CrCaps,
    spacing_hz: f64,
) -> f64 {
    let price = interference_price(w, k, caps, ch.len());
    let cost: f64 = price.iter().zip(power).map(|(a, p)| a * p).sum();
    cost - w.w_rate * w.u_rate * rate_of(ch, power, spacing_hz)
}

/// Largest rate reachable under the caps; infinite if the caps leave some usable
/// subcarrier unbounded.
pub fn max_achievable_rate(ch: &ChannelRealization, caps: &CrCaps, spacing_hz: f64) -> Result<f64> {
    let base = vec![0.0; ch.len()];
    match solve_water(ch, spacing_hz / LN_2, base, caps) {
        Ok(sol) => Ok(rate_of(ch, &sol.power_w, spacing_hz)),
        Err(Error::Unbounded(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_cases() {
        assert_eq!(knowledge_coeff(KnowledgeMode::PathLoss, 0.0, 1.0, 0.5).unwrap(), 1.0);
        let nu: f64 = 2.0;
        let psi = 1.0 - (-nu).exp();
        let a = knowledge_coeff(KnowledgeMode::PathLossStatistics, 30.0, nu, psi).unwrap();
        assert!((a - 1e3).abs() < 1e-9);
        assert!(knowledge_coeff(KnowledgeMode::PathLossStatistics, 30.0, nu, 1.0).is_err());
        let f = knowledge_coeff(KnowledgeMode::FullCsi { fading_gain: 0.5 }, 10.0, nu, 0.9).unwrap();
        assert!((f - 20.0).abs() < 1e-12);
    }

    #[test]
    fn coefficient_hand_value_five_km() {
        // 20 log10(4 pi 100 / 0.33) + 40 log10(50)
        let pl = 20.0 * (4.0 * std::f64::consts::PI * 100.0 / 0.33f64).log10() + 40.0 * 50f64.log10();
        let x = knowledge_coeff(KnowledgeMode::PathLossStatistics, pl, 1.0, 0.9).unwrap();
        let expect = 10f64.powf(0.1 * pl) / 10f64.ln();
        assert!((x - expect).abs() < 1e-9 * expect);
    }

    fn no_caps() -> CrCaps {
        CrCaps::power_only(f64::INFINITY)
    }

    #[test]
    fn single_subcarrier_water_level() {
        let ch = ChannelRealization::from_cnr(vec![4.0]).unwrap();
        let w = TriWeights { w_cci: 0.5, w_aci: vec![], w_rate: 0.5, u_cci: 2.0, u_aci: vec![], u_rate: 0.1 };
        let k = KnowledgeCoeff { x_m: 1.0, x_bands: vec![], mode: KnowledgeMode::PathLoss };
        let s = allocate_rate_interference(&ch, &w, &k, &no_caps(), 10.0).unwrap();
        let a = 0.5 * 0.1 * 10.0 / LN_2 / (0.5 * 2.0);
        assert!((s.power_w[0] - (a - 0.25)).abs() < 1e-12);
        let dead = ChannelRealization::from_cnr(vec![1e-9]).unwrap();
        let s = allocate_rate_interference(&dead, &w, &k, &no_caps(), 10.0).unwrap();
        assert_eq!(s.power_w[0], 0.0);
    }

    #[test]
    fn max_rate_simple_cases() {
        let ch = ChannelRealization::from_cnr(vec![3.0]).unwrap();
        let r = max_achievable_rate(&ch, &CrCaps::power_only(2.0), 5.0).unwrap();
        assert!((r - 5.0 * 7f64.log2()).abs() < 1e-9);
        assert_eq!(max_achievable_rate(&ch, &CrCaps::power_only(0.0), 5.0).unwrap(), 0.0);
        assert_eq!(max_achievable_rate(&ch, &no_caps(), 5.0).unwrap(), f64::INFINITY);
    }
}
