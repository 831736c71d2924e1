//! Real-coded genetic algorithm for joint bit and power loading under an average-BER
//! constraint.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bitpower_moop::{allocate_discrete, ber_mqam, BerTargets, MoopWeights};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Hyperparameters of [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub max_generations: usize,
    /// Stop when the best objective improves by less than this over `stall_window` generations.
    pub objective_tol: f64,
    pub stall_window: usize,
    pub elite_count: usize,
    pub crossover_fraction: f64,
    pub tournament_size: usize,
    pub laplace_location: f64,
    /// Fixed Laplace scale; `None` adapts it per gene to the spread of the parents.
    pub laplace_scale: Option<f64>,
    pub mutation_index_real: f64,
    pub mutation_index_int: f64,
    /// Per-gene mutation probability; `None` means one over the number of genes.
    pub mutation_rate: Option<f64>,
    /// Put the discrete closed-form allocation into the initial population.
    pub seed_closed_form: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 100,
            max_generations: 1500,
            objective_tol: 1e-12,
            stall_window: 50,
            elite_count: 5,
            crossover_fraction: 0.8,
            tournament_size: 2,
            laplace_location: 0.0,
            laplace_scale: None,
            mutation_index_real: 0.25,
            mutation_index_int: 4.0,
            mutation_rate: None,
            seed_closed_form: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population <= self.elite_count || self.population < 2 {
            return Err(Error::domain("population must exceed the elite count"));
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) {
            return Err(Error::domain("crossover fraction must lie in [0,1]"));
        }
        if self.tournament_size < 2 {
            return Err(Error::domain("tournament size must be at least 2"));
        }
        if self.laplace_scale.is_some_and(|x| !(x > 0.0)) {
            return Err(Error::domain("Laplace scale must be positive"));
        }
        if !(self.mutation_index_real > 0.0) || !(self.mutation_index_int > 0.0) {
            return Err(Error::domain("mutation indices must be positive"));
        }
        if self.mutation_rate.is_some_and(|x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::domain("mutation rate must lie in [0,1]"));
        }
        if self.stall_window == 0 {
            return Err(Error::domain("stall window must be positive"));
        }
        Ok(())
    }

    /// Number of crossover and mutation children per generation.
    pub fn offspring_split(&self) -> (usize, usize) {
        let rest = self.population - self.elite_count;
        let cross = (self.crossover_fraction * rest as f64).round() as usize;
        (cross, rest - cross)
    }
}

/// Joint loading problem: minimize the weighted power/bits objective subject to an
/// average BER target and a total power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingProblem {
    pub channel: ChannelRealization,
    pub weights: MoopWeights,
    pub ber_th: f64,
    pub power_budget_w: f64,
    pub b_max: u32,
}

impl LoadingProblem {
    fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.ber_th > 0.0 && self.ber_th < 0.2) {
            return Err(Error::domain("BER target must lie in (0, 0.2)"));
        }
        if !(self.power_budget_w >= 0.0) || self.b_max == 0 || self.channel.is_empty() {
            return Err(Error::domain("need a nonnegative budget, b_max >= 1 and subcarriers"));
        }
        Ok(())
    }
}

/// Candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub bits: Vec<i64>,
    pub power: Vec<f64>,
    pub objective: f64,
    /// Sum of constraint violations, each relative to its threshold.
    pub violation: f64,
    pub fitness: f64,
    pub feasible: bool,
}

impl Individual {
    fn new(bits: Vec<i64>, power: Vec<f64>) -> Self {
        Individual { bits, power, objective: 0.0, violation: 0.0, fitness: 0.0, feasible: false }
    }
}

/// Bit-weighted mean BER over loaded subcarriers.
pub fn average_ber(bits: &[i64], power: &[f64], ch: &ChannelRealization) -> Result<f64> {
    if bits.len() != ch.len() || power.len() != ch.len() {
        return Err(Error::domain("individual does not match the channel"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..bits.len() {
        if bits[i] > 0 {
            let b = bits[i] as f64;
            num += b * ber_mqam(power[i], bits[i] as u32, ch.cnr[i])?;
            den += b;
        }
    }
    if den == 0.0 {
        return Err(Error::domain("average BER is undefined with no loaded subcarrier"));
    }
    Ok(num / den)
}

/// Relative slack on both constraints, so that allocations meeting them with equality in
/// exact arithmetic count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Fills in objective, violation and feasibility.
pub fn evaluate(ind: &mut Individual, problem: &LoadingProblem) -> Result<()> {
    let total_power: f64 = ind.power.iter().sum();
    let total_bits: f64 = ind.bits.iter().map(|&b| b as f64).sum();
    ind.objective = problem.weights.objective(total_power, total_bits);
    let ber = match average_ber(&ind.bits, &ind.power, &problem.channel) {
        Ok(v) => v,
        Err(_) if total_bits == 0.0 => 0.0,
        Err(e) => return Err(e),
    };
    let ber_excess = ((ber - problem.ber_th) / problem.ber_th - FEASIBILITY_TOL).max(0.0);
    let power_excess = if problem.power_budget_w > 0.0 {
        ((total_power - problem.power_budget_w) / problem.power_budget_w - FEASIBILITY_TOL).max(0.0)
    } else {
        total_power
    };
    ind.violation = ber_excess + power_excess;
    ind.feasible = ind.violation == 0.0;
    Ok(())
}

/// Penalty fitness: the objective when feasible, otherwise the worst feasible objective
/// of the population plus the violation.
pub fn fitness(ind: &Individual, f_worst: f64) -> f64 {
    if ind.feasible {
        ind.objective
    } else {
        f_worst + ind.violation
    }
}

/// Feasibility-dominance order: feasible before infeasible, then lower objective among
/// feasible and lower violation among infeasible.
fn dominance(a: &Individual, b: &Individual) -> Ordering {
    match (a.feasible, b.feasible) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.objective.total_cmp(&b.objective),
        (false, false) => a.violation.total_cmp(&b.violation),
    }
}

/// Index of the tournament winner among `k` uniformly drawn members; ties go to the
/// lowest index.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..pop.len());
    for _ in 1..k {
        let c = rng.gen_range(0..pop.len());
        match dominance(&pop[c], &pop[best]) {
            Ordering::Less => best = c,
            Ordering::Equal if c < best => best = c,
            _ => {}
        }
    }
    best
}

/// One Laplace-distributed spread factor.
pub fn laplace_draw<R: Rng + ?Sized>(a: f64, scale: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    let r: f64 = rng.gen();
    if r <= 0.5 {
        a - scale * u.ln()
    } else {
        a + scale * u.ln()
    }
}

/// Laplace crossover of two real vectors, clamped to `bounds`. `scale = None` picks
/// the scale per gene from the parents' spread relative to the gene range.
pub fn laplace_crossover<R: Rng + ?Sized>(
    z1: &[f64],
    z2: &[f64],
    bounds: &[(f64, f64)],
    a: f64,
    scale: Option<f64>,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = Vec::with_capacity(z1.len());
    let mut c2 = Vec::with_capacity(z1.len());
    for k in 0..z1.len() {
        let (lo, hi) = bounds[k];
        let spread = (z1[k] - z2[k]).abs();
        let xi = scale.unwrap_or_else(|| {
            let range = hi - lo;
            let rel = if range > 0.0 { 0.5 * spread / range } else { 0.0 };
            rel.clamp(0.01, 0.5)
        });
        let beta = laplace_draw(a, xi, rng);
        c1.push((z1[k] + beta * spread).clamp(lo, hi));
        c2.push((z2[k] + beta * spread).clamp(lo, hi));
    }
    (c1, c2)
}

/// Power mutation of one gene within `[lo, hi]`.
pub fn power_mutation<R: Rng + ?Sized>(z: f64, lo: f64, hi: f64, index: f64, rng: &mut R) -> f64 {
    let s = rng.gen::<f64>().powf(1.0 / index);
    let r: f64 = rng.gen();
    let down = if z >= hi { true } else { (z - lo) / (hi - z) < r };
    let m = if down { z - s * (z - lo) } else { z + s * (hi - z) };
    m.clamp(lo, hi)
}

/// Stochastic rounding of a real gene to ⌊x⌋ or ⌊x⌋ + 1 with equal probability.
pub fn integer_truncate<R: Rng + ?Sized>(x: f64, rng: &mut R) -> i64 {
    let f = x.floor();
    if f == x || rng.gen_bool(0.5) {
        f as i64
    } else {
        f as i64 + 1
    }
}

/// Per-generation record.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best feasible objective seen so far, if any.
    pub best_objective: Option<f64>,
    pub mean_fitness: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Individual,
    pub log: Vec<GenerationStats>,
}

fn genes(ind: &Individual) -> Vec<f64> {
    ind.bits.iter().map(|&b| b as f64).chain(ind.power.iter().copied()).collect()
}

struct Coder {
    n: usize,
    bounds: Vec<(f64, f64)>,
}

impl Coder {
    fn decode<R: Rng + ?Sized>(&self, g: &[f64], rng: &mut R) -> Individual {
        let bits = g[..self.n]
            .iter()
            .map(|&x| integer_truncate(x, rng).clamp(0, self.bounds[0].1 as i64))
            .collect();
        let power = g[self.n..].iter().map(|x| x.max(0.0)).collect();
        Individual::new(bits, power)
    }
}

fn random_individual<R: Rng + ?Sized>(problem: &LoadingProblem, rng: &mut R) -> Individual {
    let n = problem.channel.len();
    let bits = (0..n).map(|_| rng.gen_range(0..=problem.b_max as i64)).collect();
    let mut power: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * problem.power_budget_w).collect();
    // start inside the budget: uniform draws on each gene alone overshoot it about n/2 times
    let total: f64 = power.iter().sum();
    if total > problem.power_budget_w {
        let scale = rng.gen::<f64>() * problem.power_budget_w / total;
        power.iter_mut().for_each(|p| *p *= scale);
    }
    Individual::new(bits, power)
}

/// Runs the genetic algorithm; `seed` fixes every random draw.
pub fn evolve(problem: &LoadingProblem, cfg: &GaConfig, seed: u64) -> Result<GaOutcome> {
    problem.validate()?;
    cfg.validate()?;
    let n = problem.channel.len();
    let mut bounds = vec![(0.0, problem.b_max as f64); n];
    bounds.extend(std::iter::repeat_n((0.0, problem.power_budget_w), n));
    let coder = Coder { n, bounds };
    let rate = cfg.mutation_rate.unwrap_or(1.0 / (2 * n) as f64);
    let (n_cross, n_mut) = cfg.offspring_split();

    let mut rng: ChaCha8Rng = substream(seed, 0);
    let mut pop: Vec<Individual> = (0..cfg.population).map(|_| random_individual(problem, &mut rng)).collect();
    if cfg.seed_closed_form {
        let t = BerTargets::uniform(n, problem.ber_th)?;
        let a = allocate_discrete(&problem.channel, &problem.weights, &t, problem.b_max, problem.power_budget_w)?;
        pop[0] = Individual::new(a.bits.iter().map(|&b| b as i64).collect(), a.power_w);
    }
    for ind in &mut pop {
        evaluate(ind, problem)?;
    }

    let mut best: Option<Individual> = None;
    let mut log = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    for generation in 0..cfg.max_generations {
        pop.sort_by(dominance);
        let f_worst = pop.iter().filter(|p| p.feasible).map(|p| p.objective).fold(f64::NAN, f64::max);
        let f_worst = if f_worst.is_nan() { 0.0 } else { f_worst };
        for ind in &mut pop {
            ind.fitness = fitness(ind, f_worst);
        }
        if best.as_ref().is_none_or(|b| dominance(&pop[0], b) == Ordering::Less) {
            best = Some(pop[0].clone());
        }
        let feasible_fraction = pop.iter().filter(|p| p.feasible).count() as f64 / pop.len() as f64;
        let mean_fitness = pop.iter().map(|p| p.fitness).sum::<f64>() / pop.len() as f64;
        let best_objective = best.as_ref().filter(|b| b.feasible).map(|b| b.objective);
        log.push(GenerationStats { generation, best_objective, mean_fitness, feasible_fraction });
        if let Some(f) = best_objective {
            history.push(f);
            let h = history.len();
            if h > cfg.stall_window && history[h - 1 - cfg.stall_window] - f < cfg.objective_tol {
                break;
            }
        }

        let mut rng: ChaCha8Rng = substream(seed, generation as u64 + 1);
        let mut next: Vec<Individual> = pop[..cfg.elite_count].to_vec();
        while next.len() < cfg.elite_count + n_cross {
            let p1 = tournament_select(&pop, cfg.tournament_size, &mut rng);
            let p2 = tournament_select(&pop, cfg.tournament_size, &mut rng);
            let (c1, c2) = laplace_crossover(
                &genes(&pop[p1]),
                &genes(&pop[p2]),
                &coder.bounds,
                cfg.laplace_location,
                cfg.laplace_scale,
                &mut rng,
            );
            next.push(coder.decode(&c1, &mut rng));
            if next.len() < cfg.elite_count + n_cross {
                next.push(coder.decode(&c2, &mut rng));
            }
        }
        for _ in 0..n_mut {
            let p = tournament_select(&pop, cfg.tournament_size, &mut rng);
            let mut g = genes(&pop[p]);
            let forced = rng.gen_range(0..g.len());
            for (k, x) in g.iter_mut().enumerate() {
                if k == forced || rng.gen_bool(rate) {
                    let (lo, hi) = coder.bounds[k];
                    let index = if k < n { cfg.mutation_index_int } else { cfg.mutation_index_real };
                    *x = power_mutation(*x, lo, hi, index, &mut rng);
                }
            }
            next.push(coder.decode(&g, &mut rng));
        }
        for ind in &mut next[cfg.elite_count..] {
            evaluate(ind, problem)?;
        }
        pop = next;
    }
    let best = best.ok_or_else(|| Error::NoConvergence("no generation was evaluated".into()))?;
    Ok(GaOutcome { best, log })
}
