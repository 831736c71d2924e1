//! Exhaustive search over integer bit allocations for small links.

use rayon::prelude::*;

use crate::bitpower_moop::{power_from_bits, Allocation, BerTargets, LinearCap, MoopWeights};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

/// Largest enumeration the oracle accepts.
pub const MAX_TUPLES: f64 = 1e8;

struct Search<'a> {
    domain: Vec<u32>,
    power: Vec<Vec<f64>>,
    score: Vec<Vec<f64>>,
    /// Best achievable score of subcarriers `i..n` ignoring constraints.
    bound: Vec<f64>,
    constraints: &'a [LinearCap],
}

#[derive(Clone)]
struct Best {
    objective: f64,
    bits: Vec<u32>,
}

impl Best {
    fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.objective < a.objective || (b.objective == a.objective && b.bits < a.bits) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }
}

impl Search<'_> {
    fn descend(
        &self,
        i: usize,
        bits: &mut Vec<u32>,
        loads: &mut Vec<f64>,
        partial: f64,
        best: &mut Option<Best>,
    ) {
        let n = self.power.len();
        if i == n {
            if best.as_ref().is_none_or(|b| partial < b.objective) {
                *best = Some(Best { objective: partial, bits: bits.clone() });
            }
            return;
        }
        for (k, &b) in self.domain.iter().enumerate() {
            let p = self.power[i][k];
            if !p.is_finite() {
                continue;
            }
            let score = partial + self.score[i][k];
            if let Some(cur) = best.as_ref() {
                if score + self.bound[i + 1] > cur.objective {
                    continue;
                }
            }
            let mut ok = true;
            for (c, load) in self.constraints.iter().zip(loads.iter_mut()) {
                *load += c.weights[i] * p;
                ok &= *load <= c.cap;
            }
            if ok {
                bits.push(b);
                self.descend(i + 1, bits, loads, score, best);
                bits.pop();
            }
            for (c, load) in self.constraints.iter().zip(loads.iter_mut()) {
                *load -= c.weights[i] * p;
            }
        }
    }
}

/// Optimal integer allocation over `{0, 2, …, b_max}` per subcarrier under linear caps.
///
/// Ties in the objective go to the lexicographically smallest bit tuple.
pub fn exhaustive_search(
    ch: &ChannelRealization,
    w: &MoopWeights,
    t: &BerTargets,
    b_max: u32,
    constraints: &[LinearCap],
) -> Result<Allocation> {
    w.validate()?;
    let n = ch.len();
    if t.len() != n || constraints.iter().any(|c| c.weights.len() != n) {
        return Err(Error::domain("length mismatch between channel, targets and constraints"));
    }
    if b_max < 2 {
        return Err(Error::domain("bit cap must be at least 2"));
    }
    let tuples = (b_max as f64).powi(n as i32);
    if tuples > MAX_TUPLES {
        return Err(Error::SearchSize(tuples));
    }
    if constraints.iter().any(|c| !(c.cap >= 0.0)) {
        return Err(Error::infeasible("negative cap"));
    }
    let domain: Vec<u32> = std::iter::once(0).chain(2..=b_max).collect();
    let mut power = Vec::with_capacity(n);
    let mut score = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = domain
            .iter()
            .map(|&b| power_from_bits(b as f64, ch.cnr[i], t.gap(i)).unwrap_or(f64::INFINITY))
            .collect();
        score.push(
            domain
                .iter()
                .zip(&row)
                .map(|(&b, &p)| w.objective(p, b as f64))
                .collect::<Vec<_>>(),
        );
        power.push(row);
    }
    let mut bound = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let m = score[i]
            .iter()
            .filter(|s| s.is_finite())
            .fold(f64::INFINITY, |a, &b| a.min(b));
        bound[i] = bound[i + 1] + m;
    }
    if n == 0 {
        return Ok(Allocation::empty(0));
    }
    let search = Search { domain, power, score, bound, constraints };
    let best = (0..search.domain.len())
        .into_par_iter()
        .map(|k| {
            let p = search.power[0][k];
            if !p.is_finite() {
                return None;
            }
            let mut loads: Vec<f64> = constraints.iter().map(|c| c.weights[0] * p).collect();
            if constraints.iter().zip(&loads).any(|(c, l)| *l > c.cap) {
                return None;
            }
            let mut bits = vec![search.domain[k]];
            let mut best = None;
            search.descend(1, &mut bits, &mut loads, search.score[0][k], &mut best);
            best
        })
        .reduce(|| None, Best::better)
        .ok_or_else(|| Error::infeasible("no feasible tuple"))?;
    Allocation::from_bits(best.bits, ch, w, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_subcarrier_scan() {
        let ch = ChannelRealization::from_cnr(vec![300.0]).unwrap();
        let t = BerTargets::uniform(1, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let a = exhaustive_search(&ch, &w, &t, 8, &[]).unwrap();
        let scan = std::iter::once(0)
            .chain(2..=8u32)
            .map(|b| (w.objective(power_from_bits(b as f64, 300.0, t.gap(0)).unwrap(), b as f64), b))
            .fold((f64::INFINITY, 0), |a, x| if x.0 < a.0 { x } else { a });
        assert_eq!(a.bits, vec![scan.1]);
    }

    #[test]
    fn zero_caps_give_all_null() {
        let ch = ChannelRealization::from_cnr(vec![300.0, 20.0, 1e4]).unwrap();
        let t = BerTargets::uniform(3, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.3).unwrap();
        let a = exhaustive_search(&ch, &w, &t, 6, &[LinearCap::total_power(3, 0.0)]).unwrap();
        assert_eq!(a.bits, vec![0, 0, 0]);
    }

    #[test]
    fn rejects_huge_search() {
        let ch = ChannelRealization::from_cnr(vec![1.0; 12]).unwrap();
        let t = BerTargets::uniform(12, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.3).unwrap();
        assert!(matches!(exhaustive_search(&ch, &w, &t, 6, &[]), Err(Error::SearchSize(_))));
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        // two identical subcarriers where one extra loaded subcarrier is worth exactly zero
        let ch = ChannelRealization::from_cnr(vec![100.0, 100.0]).unwrap();
        let t = BerTargets::uniform(2, 1e-4).unwrap();
        let w = MoopWeights::unnormalized(0.5).unwrap();
        let p2 = power_from_bits(2.0, 100.0, t.gap(0)).unwrap();
        let cap = LinearCap::total_power(2, p2);
        let a = exhaustive_search(&ch, &w, &t, 4, &[cap]).unwrap();
        assert_eq!(a.bits, vec![0, 2]);
    }
}
