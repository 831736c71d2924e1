//! Joint bit and power loading that trades throughput against transmit power under a
//! per-subcarrier BER target.

use std::f64::consts::LN_2;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::special::exp_integral_e1;

/// Scalarization weights: `alpha` on normalized power, `1 - alpha` on normalized bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoopWeights {
    pub alpha: f64,
    pub u_power: f64,
    pub u_bits: f64,
}

impl MoopWeights {
    pub fn new(alpha: f64, u_power: f64, u_bits: f64) -> Result<Self> {
        let w = MoopWeights { alpha, u_power, u_bits };
        w.validate()?;
        Ok(w)
    }

    /// Weights without normalization.
    pub fn unnormalized(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if !(self.u_power > 0.0) || !(self.u_bits > 0.0) {
            return Err(Error::domain("normalizations must be positive"));
        }
        Ok(())
    }

    /// Cost per watt.
    pub fn power_weight(&self) -> f64 {
        self.alpha / self.u_power
    }

    /// Reward per bit.
    pub fn bits_weight(&self) -> f64 {
        (1.0 - self.alpha) / self.u_bits
    }

    /// Scalarized objective (lower is better).
    pub fn objective(&self, total_power: f64, total_bits: f64) -> f64 {
        self.power_weight() * total_power - self.bits_weight() * total_bits
    }
}

/// SNR gap of M-QAM at a BER target.
pub fn snr_gap(ber_th: f64) -> f64 {
    -(5.0 * ber_th).ln() / 1.6
}

/// Per-subcarrier BER targets and their SNR gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct BerTargets {
    per_subcarrier: Vec<f64>,
    gaps: Vec<f64>,
}

impl BerTargets {
    pub fn new(per_subcarrier: Vec<f64>) -> Result<Self> {
        if per_subcarrier.iter().any(|b| !(*b > 0.0 && *b < 0.2)) {
            return Err(Error::domain("BER targets must lie in (0, 0.2)"));
        }
        let gaps = per_subcarrier.iter().map(|b| snr_gap(*b)).collect();
        Ok(BerTargets { per_subcarrier, gaps })
    }

    pub fn uniform(n: usize, ber_th: f64) -> Result<Self> {
        Self::new(vec![ber_th; n])
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn ber(&self, i: usize) -> f64 {
        self.per_subcarrier[i]
    }

    pub fn gap(&self, i: usize) -> f64 {
        self.gaps[i]
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::domain(format!(
                "{} BER targets for {n} subcarriers",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Lagrange multipliers reported with a solution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiplierSet {
    pub lambda_power: f64,
    pub lambda_aci: Vec<f64>,
    pub lambda_rate: f64,
}

/// Integer bit allocation with matching powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub bits: Vec<u32>,
    pub power_w: Vec<f64>,
    pub objective: f64,
    pub multipliers: MultiplierSet,
}

impl Allocation {
    /// Loaded subcarriers.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i] > 0).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.power_w.iter().sum()
    }

    pub fn total_bits(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    /// All-null allocation.
    pub fn empty(n: usize) -> Self {
        Allocation {
            bits: vec![0; n],
            power_w: vec![0.0; n],
            objective: 0.0,
            multipliers: MultiplierSet::default(),
        }
    }

    /// Builds an allocation from integer bits, computing powers and the objective.
    pub fn from_bits(
        bits: Vec<u32>,
        ch: &ChannelRealization,
        w: &MoopWeights,
        t: &BerTargets,
    ) -> Result<Self> {
        let power_w = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| power_from_bits(b as f64, ch.cnr[i], t.gap(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut a = Allocation { bits, power_w, objective: 0.0, multipliers: MultiplierSet::default() };
        a.objective = w.objective(a.total_power(), a.total_bits() as f64);
        Ok(a)
    }
}

/// Allocation with continuous bits, before rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedAllocation {
    pub bits: Vec<f64>,
    pub power_w: Vec<f64>,
    pub objective: f64,
    pub multipliers: MultiplierSet,
}

impl RelaxedAllocation {
    pub fn total_power(&self) -> f64 {
        self.power_w.iter().sum()
    }

    pub fn total_bits(&self) -> f64 {
        self.bits.iter().sum()
    }

    /// Rounds to the nearest integer, nulls anything below two bits, caps at `b_max` and
    /// recomputes powers.
    pub fn round(
        &self,
        ch: &ChannelRealization,
        w: &MoopWeights,
        t: &BerTargets,
        b_max: u32,
    ) -> Result<Allocation> {
        let bits = self
            .bits
            .iter()
            .map(|&b| {
                let r = b.round();
                if r < 2.0 {
                    0
                } else {
                    (r.min(b_max as f64)) as u32
                }
            })
            .collect();
        let mut a = Allocation::from_bits(bits, ch, w, t)?;
        a.multipliers = self.multipliers.clone();
        Ok(a)
    }
}

/// A linear constraint `Σ weights_i · p_i ≤ cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCap {
    pub weights: Vec<f64>,
    pub cap: f64,
}

impl LinearCap {
    /// Total-power constraint over `n` subcarriers.
    pub fn total_power(n: usize, cap: f64) -> Self {
        LinearCap { weights: vec![1.0; n], cap }
    }

    pub fn load(&self, power: &[f64]) -> f64 {
        self.weights.iter().zip(power).map(|(w, p)| w * p).sum()
    }

    pub fn is_satisfied(&self, power: &[f64]) -> bool {
        self.load(power) <= self.cap
    }
}

/// Approximate M-QAM bit error rate.
pub fn ber_mqam(p: f64, b: u32, gamma: f64) -> Result<f64> {
    if b == 0 {
        return Err(Error::domain("BER is undefined on a nulled subcarrier"));
    }
    if !(p >= 0.0) || !(gamma >= 0.0) {
        return Err(Error::domain("power and CNR must be nonnegative"));
    }
    let m1 = 2f64.powi(b as i32) - 1.0;
    Ok(0.2 * (-1.6 * p * gamma / m1).exp())
}

/// Power that meets the BER target (through its SNR gap) with `b` bits.
pub fn power_from_bits(b: f64, gamma: f64, gap: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::domain("bits must be nonnegative"));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    if !(gamma > 0.0) {
        return Err(Error::infeasible("cannot load bits on a subcarrier with zero CNR"));
    }
    Ok(gap / gamma * (b.exp2() - 1.0))
}

/// Per-subcarrier loading rule shared by the allocators: for a price per watt, the
/// water level is `bits_weight / (ln2 · price)` and the bits follow `log2(level·γ/Γ)`.
#[derive(Debug, Clone)]
pub(crate) struct PricedLoader<'a> {
    pub cnr: &'a [f64],
    pub gaps: &'a [f64],
    pub bits_weight: f64,
    pub b_max: f64,
}

impl PricedLoader<'_> {
    pub fn level(&self, price: f64) -> f64 {
        if self.bits_weight == 0.0 {
            0.0
        } else {
            self.bits_weight / (LN_2 * price)
        }
    }

    fn ratio(&self, i: usize, price: f64) -> f64 {
        self.level(price) * self.cnr[i] / self.gaps[i]
    }

    /// Whether the level reaches the two-bit threshold.
    pub fn qualifies(&self, i: usize, price: f64) -> bool {
        self.cnr[i] > 0.0 && self.ratio(i, price) >= 4.0
    }

    /// Whether the bit cap is reached.
    pub fn capped(&self, i: usize, price: f64) -> bool {
        self.ratio(i, price) >= self.b_max.exp2()
    }

    /// Continuous bits without the lower cut; capped at `b_max`.
    pub fn bits(&self, i: usize, price: f64) -> f64 {
        if self.capped(i, price) {
            self.b_max
        } else {
            self.ratio(i, price).log2()
        }
    }

    /// Power matching [`Self::bits`]; negative when the level is below `Γ/γ`.
    pub fn power(&self, i: usize, price: f64) -> f64 {
        let g = self.gaps[i] / self.cnr[i];
        if self.capped(i, price) {
            g * (self.b_max.exp2() - 1.0)
        } else {
            self.level(price) - g
        }
    }

    /// Derivative of [`Self::power`] with respect to the price.
    pub fn power_slope(&self, i: usize, price: f64) -> f64 {
        if self.capped(i, price) {
            0.0
        } else {
            -self.level(price) / price
        }
    }
}

fn check_inputs(ch: &ChannelRealization, w: &MoopWeights, t: &BerTargets) -> Result<()> {
    w.validate()?;
    t.check_len(ch.len())
}

fn relaxed_from_prices(
    loader: &PricedLoader<'_>,
    members: &[bool],
    prices: &dyn Fn(usize) -> f64,
    w: &MoopWeights,
    multipliers: MultiplierSet,
) -> RelaxedAllocation {
    let n = members.len();
    let mut bits = vec![0.0; n];
    let mut power_w = vec![0.0; n];
    for i in 0..n {
        if members[i] {
            bits[i] = loader.bits(i, prices(i));
            power_w[i] = loader.power(i, prices(i));
        }
    }
    let mut r = RelaxedAllocation { bits, power_w, objective: 0.0, multipliers };
    r.objective = w.objective(r.total_power(), r.total_bits());
    r
}

/// Unconstrained closed-form loading with continuous bits (bit cap `b_max`, may be
/// infinite).
pub fn allocate_relaxed(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: f64,
) -> Result<RelaxedAllocation> {
    check_inputs(ch, w, t)?;
    if !(b_max >= 2.0) {
        return Err(Error::domain("bit cap must be at least 2"));
    }
    let price = w.power_weight();
    if price == 0.0 && b_max.is_infinite() && ch.cnr.iter().any(|&g| g > 0.0) {
        return Err(Error::Unbounded("alpha = 0 without a bit cap".into()));
    }
    let loader = PricedLoader { cnr: &ch.cnr, gaps: t.gaps(), bits_weight: w.bits_weight(), b_max };
    let members: Vec<bool> = (0..ch.len()).map(|i| loader.qualifies(i, price)).collect();
    Ok(relaxed_from_prices(&loader, &members, &|_| price, w, MultiplierSet::default()))
}

/// Water level `K` with `Σ_{i∈members} Γ_i/γ_i·(min(Kγ_i/Γ_i, 2^b_max) − 1) = cap`, solved
/// exactly over the piecewise-linear segments. `None` when every member is capped
/// below the budget.
fn capped_water_level(loader: &PricedLoader<'_>, members: &[usize], cap: f64) -> Option<f64> {
    let top = loader.b_max.exp2();
    let mut breaks: Vec<(f64, f64)> = members
        .iter()
        .map(|&i| {
            let g = loader.gaps[i] / loader.cnr[i];
            (top * g, g)
        })
        .collect();
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // at level K: Σ_uncapped (K - g) + Σ_capped g (top - 1)
    let mut capped_power = 0.0;
    let mut uncapped_g: f64 = breaks.iter().map(|b| b.1).sum();
    let mut uncapped = breaks.len();
    for &(k_break, g) in &breaks {
        if uncapped == 0 {
            break;
        }
        let k = (cap - capped_power + uncapped_g) / uncapped as f64;
        if k <= k_break {
            return Some(k);
        }
        capped_power += g * (top - 1.0);
        uncapped_g -= g;
        uncapped -= 1;
    }
    if uncapped > 0 {
        Some((cap - capped_power + uncapped_g) / uncapped as f64)
    } else {
        None
    }
}

/// Closed-form loading under a total-power cap, with continuous bits.
pub fn allocate_power_capped(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: f64,
    p_cap: f64,
) -> Result<RelaxedAllocation> {
    if !(p_cap > 0.0) {
        return Err(Error::domain("power cap must be positive"));
    }
    let relaxed = allocate_relaxed(ch, w, t, b_max)?;
    if relaxed.total_power() <= p_cap {
        return Ok(relaxed);
    }
    let loader = PricedLoader { cnr: &ch.cnr, gaps: t.gaps(), bits_weight: w.bits_weight(), b_max };
    let mut members: Vec<usize> = (0..ch.len()).filter(|&i| relaxed.bits[i] > 0.0).collect();
    let base = w.power_weight();
    let mut price = base;
    while !members.is_empty() {
        let Some(level) = capped_water_level(&loader, &members, p_cap) else {
            price = base;
            break;
        };
        price = if level > 0.0 { loader.bits_weight / (LN_2 * level) } else { f64::INFINITY };
        if price < base {
            price = base;
            break;
        }
        let before = members.len();
        members.retain(|&i| loader.qualifies(i, price));
        if members.len() == before {
            break;
        }
    }
    // the cap fell below every two-bit load, so nothing is loaded and the cap is slack
    if members.is_empty() {
        price = base;
    }
    let mut mask = vec![false; ch.len()];
    for &i in &members {
        mask[i] = true;
    }
    let multipliers = MultiplierSet { lambda_power: price - base, ..Default::default() };
    Ok(relaxed_from_prices(&loader, &mask, &|_| price, w, multipliers))
}

/// Multiplier of the power constraint in the form of the closed expression over the
/// uncapped active set, given a relaxed solution. Used as a cross-check.
pub fn closed_form_power_multiplier(
    r: &RelaxedAllocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: f64,
    p_cap: f64,
) -> f64 {
    let mut budget = p_cap;
    let mut inv = 0.0;
    let mut count = 0usize;
    for i in 0..r.bits.len() {
        if r.bits[i] <= 0.0 {
            continue;
        }
        if r.bits[i] >= b_max {
            budget -= r.power_w[i];
        } else {
            count += 1;
            inv += t.gap(i) / ch.cnr[i];
        }
    }
    count as f64 * w.bits_weight() / LN_2 / (budget + inv) - w.power_weight()
}

/// Decrements bits until every constraint holds, always taking the subcarrier whose
/// decrement saves the most power (lowest index on ties). A decrement from two bits
/// nulls the subcarrier.
pub fn rounding_repair(
    a: &Allocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    constraints: &[LinearCap],
) -> Result<Allocation> {
    let n = a.bits.len();
    if ch.len() != n || constraints.iter().any(|c| c.weights.len() != n) {
        return Err(Error::domain("constraint or channel length mismatch"));
    }
    if constraints.iter().any(|c| !(c.cap >= 0.0)) {
        return Err(Error::infeasible("negative cap cannot be met even with all-null loading"));
    }
    let mut bits = a.bits.clone();
    let mut power = a.power_w.clone();
    let violated = |power: &[f64]| constraints.iter().any(|c| !c.is_satisfied(power));
    while violated(&power) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if bits[i] == 0 {
                continue;
            }
            let lower = if bits[i] <= 2 { 0 } else { bits[i] - 1 };
            let saving = power[i] - power_from_bits(lower as f64, ch.cnr[i], t.gap(i))?;
            if best.is_none_or(|(_, s)| saving > s) {
                best = Some((i, saving));
            }
        }
        let Some((i, _)) = best else {
            return Err(Error::infeasible("constraints unsatisfiable at all-null loading"));
        };
        bits[i] = if bits[i] <= 2 { 0 } else { bits[i] - 1 };
        power[i] = power_from_bits(bits[i] as f64, ch.cnr[i], t.gap(i))?;
    }
    let mut out = Allocation::from_bits(bits, ch, w, t)?;
    out.multipliers = a.multipliers.clone();
    Ok(out)
}

/// Greedy single-step improvement after repair: repeatedly applies the feasible bit
/// increment (0 → 2, or b → b + 1 up to `b_max`) that lowers the objective the most.
pub fn greedy_fill(
    a: &Allocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    constraints: &[LinearCap],
) -> Result<Allocation> {
    fill(a, ch, w, t, b_max, constraints, false, &[])
}

fn next_bits(b: u32) -> u32 {
    if b == 0 {
        2
    } else {
        b + 1
    }
}

fn lower_bits(b: u32) -> u32 {
    if b <= 2 {
        0
    } else {
        b - 1
    }
}

/// Greedy fill; with `per_headroom` the increments are ranked by objective gain per
/// share of the tightest remaining cap headroom instead of by gain alone. Subcarriers in
/// `frozen` are left alone.
#[allow(clippy::too_many_arguments)]
fn fill(
    a: &Allocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    constraints: &[LinearCap],
    per_headroom: bool,
    frozen: &[usize],
) -> Result<Allocation> {
    let n = a.bits.len();
    let mut bits = a.bits.clone();
    let mut power = a.power_w.clone();
    let mut loads: Vec<f64> = constraints.iter().map(|c| c.load(&power)).collect();
    loop {
        let mut best: Option<(usize, u32, f64, f64)> = None;
        for i in 0..n {
            if bits[i] >= b_max || !(ch.cnr[i] > 0.0) || frozen.contains(&i) {
                continue;
            }
            let next = next_bits(bits[i]);
            let p = power_from_bits(next as f64, ch.cnr[i], t.gap(i))?;
            let dp = p - power[i];
            let gain = w.objective(dp, (next - bits[i]) as f64);
            if gain >= 0.0 {
                continue;
            }
            let fits = constraints
                .iter()
                .zip(&loads)
                .all(|(c, l)| l + c.weights[i] * dp <= c.cap);
            if !fits {
                continue;
            }
            let score = if per_headroom {
                let usage = constraints
                    .iter()
                    .zip(&loads)
                    .map(|(c, l)| c.weights[i] * dp / (c.cap - l))
                    .fold(0.0, f64::max);
                if usage > 0.0 { gain / usage } else { f64::NEG_INFINITY }
            } else {
                gain
            };
            if best.is_none_or(|b| score < b.3) {
                best = Some((i, next, p, score));
            }
        }
        let Some((i, next, p, _)) = best else { break };
        for (c, l) in constraints.iter().zip(loads.iter_mut()) {
            *l += c.weights[i] * (p - power[i]);
        }
        bits[i] = next;
        power[i] = p;
    }
    let mut out = Allocation::from_bits(bits, ch, w, t)?;
    out.multipliers = a.multipliers.clone();
    Ok(out)
}

/// Exchange search after the fill. Each round tries, from the current allocation:
/// taking one step off a loaded subcarrier (or nulling it) and refilling greedily in both
/// fill orders while barring that subcarrier from the refill, and moving one step from one
/// subcarrier to another; when none of these helps, two steps off one subcarrier or two
/// decrements on different subcarriers, each followed by a refill. The best improving move is kept
/// until none is left. This recovers 2-bit loads that the continuous
/// solution rules out but tight caps make worthwhile.
pub fn exchange_search(
    a: &Allocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    constraints: &[LinearCap],
) -> Result<Allocation> {
    let n = a.bits.len();
    let mut cur = a.clone();
    loop {
        let mut best: Option<Allocation> = None;
        let consider = |cand: Allocation, best: &mut Option<Allocation>| {
            let bar = best.as_ref().map_or(cur.objective, |b| b.objective);
            if cand.objective < bar - 1e-12 * bar.abs() {
                *best = Some(cand);
            }
        };
        let loads: Vec<f64> = constraints.iter().map(|c| c.load(&cur.power_w)).collect();
        for i in cur.active_set() {
            let step = lower_bits(cur.bits[i]);
            let downs: &[u32] = if step == 0 { &[0] } else { &[step, 0] };
            for &lower in downs {
                let mut bits = cur.bits.clone();
                bits[i] = lower;
                let down = Allocation::from_bits(bits, ch, w, t)?;
                for per_headroom in [false, true] {
                    consider(fill(&down, ch, w, t, b_max, constraints, per_headroom, &[i])?, &mut best);
                }
                let dp_i = down.power_w[i] - cur.power_w[i];
                for j in 0..n {
                    if j == i || cur.bits[j] >= b_max || !(ch.cnr[j] > 0.0) {
                        continue;
                    }
                    let up = next_bits(cur.bits[j]);
                    let dp_j = power_from_bits(up as f64, ch.cnr[j], t.gap(j))? - cur.power_w[j];
                    let fits = constraints
                        .iter()
                        .zip(&loads)
                        .all(|(c, l)| l + c.weights[i] * dp_i + c.weights[j] * dp_j <= c.cap);
                    let db = (up - cur.bits[j]) as f64 - (cur.bits[i] - lower) as f64;
                    let obj = w.objective(cur.total_power() + dp_i + dp_j, cur.total_bits() as f64 + db);
                    let bar = best.as_ref().map_or(cur.objective, |b| b.objective);
                    if fits && obj < bar - 1e-12 * bar.abs() {
                        let mut bits = down.bits.clone();
                        bits[j] = up;
                        let moved = Allocation::from_bits(bits, ch, w, t)?;
                        consider(greedy_fill(&moved, ch, w, t, b_max, constraints)?, &mut best);
                    }
                }
            }
        }
        let active = cur.active_set();
        if best.is_none() {
            // escape: two steps off one subcarrier, then refill the others
            for &i in &active {
                let lower = lower_bits(lower_bits(cur.bits[i]));
                if lower == 0 {
                    continue;
                }
                let mut bits = cur.bits.clone();
                bits[i] = lower;
                let down = Allocation::from_bits(bits, ch, w, t)?;
                for per_headroom in [false, true] {
                    consider(fill(&down, ch, w, t, b_max, constraints, per_headroom, &[i])?, &mut best);
                }
            }
        }
        if best.is_none() && active.len() <= PAIR_ESCAPE_MAX_ACTIVE {
            // escape: two decrements at once, then refill the other subcarriers
            for (x, &i) in active.iter().enumerate() {
                for &k in &active[x + 1..] {
                    let mut bits = cur.bits.clone();
                    bits[i] = lower_bits(bits[i]);
                    bits[k] = lower_bits(bits[k]);
                    let down = Allocation::from_bits(bits, ch, w, t)?;
                    for per_headroom in [false, true] {
                        consider(fill(&down, ch, w, t, b_max, constraints, per_headroom, &[i, k])?, &mut best);
                    }
                }
            }
        }
        match best {
            Some(b) => cur = b,
            None => break,
        }
    }
    cur.multipliers = a.multipliers.clone();
    Ok(cur)
}

/// Bits per subcarrier minimizing `price_i·p_i(b) − bits_weight·b` over `{0, 2, …, b_max}`,
/// where `price_i` is the effective price of power on subcarrier `i`.
pub fn discrete_at_prices(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    prices: &[f64],
) -> Result<Allocation> {
    let mut bits = vec![0u32; ch.len()];
    for i in 0..ch.len() {
        if !(ch.cnr[i] > 0.0) {
            continue;
        }
        let mut best = 0.0;
        for b in 2..=b_max {
            let v = prices[i] * power_from_bits(b as f64, ch.cnr[i], t.gap(i))? - w.bits_weight() * b as f64;
            if v < best {
                best = v;
                bits[i] = b;
            }
        }
    }
    Allocation::from_bits(bits, ch, w, t)
}

/// Largest active set on which [`exchange_search`] tries pairs of decrements; the scan
/// is quadratic in it and matters only when a few subcarriers carry the load.
pub const PAIR_ESCAPE_MAX_ACTIVE: usize = 24;

const PRICE_SCALES: [f64; 11] = [0.25, 0.35, 0.5, 0.7, 0.85, 1.0, 1.2, 1.4, 2.0, 2.8, 4.0];
const SLACK_SCALES: [f64; 9] = [0.01, 0.03, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

/// Integer polish shared by the capped allocators. Candidates are the rounded continuous
/// solution and exact per-subcarrier choices at scaled copies of the continuous
/// multipliers `mu` (all scaled together, then one at a time; a multiplier that is zero
/// is scanned around a price comparable to the power price). Each is repaired and
/// filled, and the best goes through [`exchange_search`].
pub fn discrete_polish(
    rounded: &Allocation,
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    constraints: &[LinearCap],
    mu: &[f64],
) -> Result<Allocation> {
    let mut starts = vec![rounded.clone()];
    let k_all = constraints.len();
    if k_all > 0 {
        // scale for constraints the continuous solution left slack: a multiplier that
        // costs as much as the power price on an average subcarrier
        let power_price = w.power_weight() + mu.iter().zip(constraints).map(|(m, c)| m * mean(&c.weights)).sum::<f64>();
        let base: Vec<f64> = (0..k_all)
            .map(|k| if mu[k] > 0.0 { mu[k] } else { power_price / mean(&constraints[k].weights).max(f64::MIN_POSITIVE) })
            .collect();
        let at = |mult: &dyn Fn(usize) -> f64| -> Result<Allocation> {
            let prices: Vec<f64> = (0..ch.len())
                .map(|i| w.power_weight() + (0..k_all).map(|k| mult(k) * constraints[k].weights[i]).sum::<f64>())
                .collect();
            discrete_at_prices(ch, w, t, b_max, &prices)
        };
        if mu.iter().any(|&m| m > 0.0) {
            for s in PRICE_SCALES {
                starts.push(at(&|k| s * mu[k])?);
            }
        }
        for k in 0..k_all {
            let scales: &[f64] = if mu[k] > 0.0 { &PRICE_SCALES } else { &SLACK_SCALES };
            for &s in scales {
                starts.push(at(&|j| if j == k { s * base[k] } else { mu[j] })?);
            }
        }
    }
    let mut best: Option<Allocation> = None;
    for a in &starts {
        let repaired = rounding_repair(a, ch, w, t, constraints)?;
        let filled = greedy_fill(&repaired, ch, w, t, b_max, constraints)?;
        if best.as_ref().is_none_or(|b| filled.objective < b.objective) {
            best = Some(filled);
        }
    }
    let best = best.expect("at least the rounded start");
    let mut out = exchange_search(&best, ch, w, t, b_max, constraints)?;
    out.multipliers = rounded.multipliers.clone();
    Ok(out)
}

/// Integer loading under a total-power cap: closed form and rounding, then
/// [`discrete_polish`] when the cap is finite and a greedy fill otherwise.
pub fn allocate_discrete(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    p_cap: f64,
) -> Result<Allocation> {
    let relaxed = if p_cap.is_infinite() {
        allocate_relaxed(ch, w, t, b_max as f64)?
    } else {
        allocate_power_capped(ch, w, t, b_max as f64, p_cap)?
    };
    let rounded = relaxed.round(ch, w, t, b_max)?;
    if p_cap.is_infinite() {
        // separable without a cap: the fill lands on the per-subcarrier optimum
        return greedy_fill(&rounded, ch, w, t, b_max, &[]);
    }
    let caps = [LinearCap::total_power(ch.len(), p_cap)];
    let mu = [rounded.multipliers.lambda_power];
    discrete_polish(&rounded, ch, w, t, b_max, &caps, &mu)
}

/// Result of the bisection search on the power weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub allocation: Allocation,
    /// `(alpha, total power)` of every evaluated point.
    pub trace: Vec<(f64, f64)>,
}

/// Smallest power weight (within bisection resolution) whose unnormalized loading fits
/// under `p_cap`.
pub fn bisect_alpha(
    ch: &ChannelRealization,
    t: &BerTargets,
    b_max: u32,
    p_cap: f64,
    alpha_init: f64,
    tol: f64,
) -> Result<AlphaSearch> {
    if !(alpha_init > 0.0 && alpha_init < 1.0) {
        return Err(Error::domain("initial alpha must lie in (0,1)"));
    }
    if !(tol > 0.0) || !(p_cap >= 0.0) {
        return Err(Error::domain("tolerance must be positive and cap nonnegative"));
    }
    let eval = |alpha: f64| -> Result<Allocation> {
        let w = MoopWeights::unnormalized(alpha)?;
        allocate_relaxed(ch, &w, t, b_max as f64)?.round(ch, &w, t, b_max)
    };
    let mut trace = Vec::new();
    let first = eval(alpha_init)?;
    trace.push((alpha_init, first.total_power()));
    if first.total_power() <= p_cap {
        return Ok(AlphaSearch { alpha: alpha_init, allocation: first, trace });
    }
    let mut lo = alpha_init;
    let mut hi = 1.0;
    let mut best = eval(hi)?;
    trace.push((hi, best.total_power()));
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let a = eval(mid)?;
        let p = a.total_power();
        trace.push((mid, p));
        if p > p_cap {
            lo = mid;
        } else {
            hi = mid;
            let done = p_cap - p <= tol;
            best = a;
            if done {
                break;
            }
        }
    }
    let mut sorted = trace.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|s| s[1].1 > s[0].1 * (1.0 + 1e-12) + 1e-300) {
        return Err(Error::NoConvergence("total power is not monotone in alpha".into()));
    }
    Ok(AlphaSearch { alpha: hi, allocation: best, trace })
}

/// Expected bits and power per link for i.i.d. exponential CNRs with rate `nu`, without
/// power or bit caps.
pub fn analytic_averages(nu: f64, w: &MoopWeights, t: &BerTargets, n: usize) -> Result<(f64, f64)> {
    w.validate()?;
    if !(nu > 0.0) {
        return Err(Error::domain("exponential rate must be positive"));
    }
    if t.len() != n && t.len() != 1 {
        return Err(Error::domain("BER targets must have length 1 or n"));
    }
    let (pw, bw) = (w.power_weight(), w.bits_weight());
    if bw == 0.0 || nu.is_infinite() {
        return Ok((0.0, 0.0));
    }
    if pw == 0.0 {
        return Err(Error::Unbounded("alpha = 0 without a bit cap".into()));
    }
    let level = bw / (pw * LN_2);
    let mut bits = 0.0;
    let mut power = 0.0;
    for i in 0..n {
        let gap = t.gap(if t.len() == 1 { 0 } else { i });
        let x = nu * 4.0 * gap / level;
        let e1 = exp_integral_e1(x);
        let ex = (-x).exp();
        bits += 2.0 * ex + e1 / LN_2;
        power += level * (ex - 0.25 * x * e1);
    }
    Ok((bits, power))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(cnr: &[f64]) -> ChannelRealization {
        ChannelRealization::from_cnr(cnr.to_vec()).unwrap()
    }

    #[test]
    fn ber_reference_values() {
        assert_eq!(ber_mqam(0.0, 3, 10.0).unwrap(), 0.2);
        let gap = snr_gap(1e-4);
        let p = gap * 15.0 / 7.0;
        assert!((ber_mqam(p, 4, 7.0).unwrap() - 1e-4).abs() < 1e-16);
        let v = ber_mqam(0.1425, 2, 100.0).unwrap();
        let direct = 0.2 * (-1.6f64 * 14.25 / 3.0).exp();
        assert!((v - direct).abs() < 1e-18);
        assert!(ber_mqam(1.0, 0, 1.0).is_err());
    }

    #[test]
    fn gap_matches_quoted_decibels() {
        let gap = snr_gap(1e-4);
        assert!((gap - 4.7506).abs() < 1e-4);
        assert!((10.0 * gap.log10() - 6.77).abs() < 0.01);
        let p = power_from_bits(4.0, 500.0, 4.7506).unwrap();
        assert!((p - 4.7506 * 15.0 / 500.0).abs() < 1e-15);
        assert_eq!(power_from_bits(0.0, 0.0, 4.75).unwrap(), 0.0);
        assert!(power_from_bits(2.0, 0.0, 4.75).is_err());
    }

    #[test]
    fn relaxed_reference_points() {
        let t = BerTargets::uniform(2, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let r = allocate_relaxed(&ch(&[1000.0, 10.0]), &w, &t, f64::INFINITY).unwrap();
        let expect = (1000.0 / (LN_2 * snr_gap(1e-4))).log2();
        assert!((r.bits[0] - expect).abs() < 1e-12);
        assert!((expect - 8.25).abs() < 0.01);
        assert_eq!((r.bits[1], r.power_w[1]), (0.0, 0.0));
        let capped = allocate_relaxed(&ch(&[1000.0, 10.0]), &w, &t, 6.0).unwrap();
        assert_eq!(capped.bits[0], 6.0);
        // threshold near 13.17 at alpha = 0.5
        let th = LN_2 * snr_gap(1e-4) * 4.0;
        assert!((th - 13.17).abs() < 0.01);
    }

    #[test]
    fn relaxed_degenerate_weights() {
        let t = BerTargets::uniform(3, 1e-4).unwrap();
        let c = ch(&[0.5, 20.0, 3000.0]);
        let all_null = allocate_relaxed(&c, &MoopWeights::unnormalized(1.0).unwrap(), &t, 6.0).unwrap();
        assert!(all_null.bits.iter().all(|&b| b == 0.0));
        let full = allocate_relaxed(&c, &MoopWeights::unnormalized(0.0).unwrap(), &t, 6.0).unwrap();
        assert!(full.bits.iter().all(|&b| b == 6.0));
        assert!(allocate_relaxed(&c, &MoopWeights::unnormalized(0.0).unwrap(), &t, f64::INFINITY).is_err());
    }

    #[test]
    fn capped_equal_channels_share_budget() {
        let n = 8;
        let t = BerTargets::uniform(n, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let c = ch(&vec![400.0; n]);
        let r = allocate_power_capped(&c, &w, &t, 12.0, 0.5).unwrap();
        assert!((r.total_power() - 0.5).abs() < 1e-12);
        assert!(r.bits.windows(2).all(|b| (b[0] - b[1]).abs() < 1e-12));
        let lam = closed_form_power_multiplier(&r, &c, &w, &t, 12.0, 0.5);
        assert!((lam - r.multipliers.lambda_power).abs() < 1e-10 * lam.abs().max(1.0));
        let inf = allocate_power_capped(&c, &w, &t, 12.0, 1e9).unwrap();
        assert_eq!(inf, allocate_relaxed(&c, &w, &t, 12.0).unwrap());
    }

    #[test]
    fn repair_cases() {
        let t = BerTargets::uniform(3, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let c = ch(&[100.0, 200.0, 50.0]);
        let a = Allocation::from_bits(vec![4, 2, 3], &c, &w, &t).unwrap();
        let loose = LinearCap::total_power(3, 10.0);
        assert_eq!(rounding_repair(&a, &c, &w, &t, &[loose]).unwrap(), a);
        // only subcarrier 0 carries weight in the constraint
        let single = LinearCap { weights: vec![1.0, 0.0, 0.0], cap: a.power_w[0] * 0.9 };
        let r = rounding_repair(&a, &c, &w, &t, &[single]).unwrap();
        assert_eq!(r.bits, vec![3, 2, 3]);
        let zero = LinearCap::total_power(3, 0.0);
        let r = rounding_repair(&a, &c, &w, &t, &[zero]).unwrap();
        assert_eq!(r.bits, vec![0, 0, 0]);
    }

    #[test]
    fn bisection_inactive_and_zero_budget() {
        let n = 16;
        let t = BerTargets::uniform(n, 1e-4).unwrap();
        let c = ch(&(0..n).map(|i| 50.0 + 40.0 * i as f64).collect::<Vec<_>>());
        let free = bisect_alpha(&c, &t, 6, 1e9, 0.5, 1e-9).unwrap();
        assert_eq!(free.alpha, 0.5);
        let tight = bisect_alpha(&c, &t, 6, 1e-300, 0.5, 1e-305).unwrap();
        assert!(tight.allocation.bits.iter().all(|&b| b == 0));
        // just below the returned weight something is still loaded
        let w = MoopWeights::unnormalized(tight.alpha - 1e-9).unwrap();
        let below = allocate_relaxed(&c, &w, &t, 6.0).unwrap().round(&c, &w, &t, 6).unwrap();
        assert!(below.total_power() > 0.0);
    }

    #[test]
    fn analytic_vanishing_channel() {
        let t = BerTargets::uniform(1, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let (b, p) = analytic_averages(1e6, &w, &t, 4).unwrap();
        assert!(b < 1e-100 && p < 1e-100);
        let (b1, _) = analytic_averages(1.0, &w, &t, 1).unwrap();
        let (b8, _) = analytic_averages(1.0, &w, &t, 8).unwrap();
        assert!((b8 - 8.0 * b1).abs() < 1e-12 * b8);
    }

    #[test]
    fn analytic_bits_match_decimal_log_form() {
        let t = BerTargets::uniform(1, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let nu: f64 = 0.02;
        let (b, p) = analytic_averages(nu, &w, &t, 1).unwrap();
        let x = nu * LN_2 * snr_gap(1e-4) * 4.0;
        let ei = crate::special::exp_integral_ei(-x).unwrap();
        let decimal = (1.0 / 2f64.log10()) * (4f64.log10() * (-x).exp() - ei / 10f64.ln());
        assert!((b - decimal).abs() < 1e-12 * decimal);
        let power = (1.0 / LN_2) * ((-x).exp() + x / 4.0 * ei);
        assert!((p - power).abs() < 1e-12 * power);
    }
}
