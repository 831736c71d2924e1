//! Reference solvers and instance generators shared by the integration tests. Nothing
//! here calls into the allocators under test.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::LN_2;

/// Linear constraint `a·x <= c` with `a >= 0`.
#[derive(Debug, Clone)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub c: f64,
}

impl Halfspace {
    pub fn load(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum()
    }
}

/// Separable convex objective: value, gradient and diagonal curvature.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn curvature(&self, x: &[f64]) -> Vec<f64>;
}

/// Solves the small dense system `h·v = r` by Gaussian elimination with pivoting.
fn solve_dense(mut h: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let m = r.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&a, &b| h[a][col].abs().total_cmp(&h[b][col].abs())).expect("nonempty");
        h.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..m {
            let f = h[row][col] / h[col][col];
            for k in col..m {
                h[row][k] -= f * h[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut v = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| h[row][k] * v[k]).sum();
        v[row] = (r[row] - tail) / h[row][row];
    }
    v
}

/// Projection of `y` onto `{x >= 0} ∩ halfspaces` in the norm weighted by `d`, by
/// projected Newton ascent on the dual: `x(θ) = max(y − D⁻¹Aᵀθ, 0)` with `θ >= 0`.
pub fn project(y: &[f64], d: &[f64], cons: &[Halfspace]) -> Vec<f64> {
    let n = y.len();
    let m = cons.len();
    let primal = |theta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let push: f64 = cons.iter().zip(theta).map(|(h, t)| h.a[i] * t).sum();
                (y[i] - push / d[i]).max(0.0)
            })
            .collect()
    };
    let dual = |theta: &[f64], x: &[f64]| -> f64 {
        let dist: f64 = (0..n).map(|i| 0.5 * d[i] * (x[i] - y[i]).powi(2)).sum();
        dist + cons.iter().zip(theta).map(|(h, t)| t * (h.load(x) - h.c)).sum::<f64>()
    };
    let mut theta = vec![0.0; m];
    let mut x = primal(&theta);
    for _ in 0..500 {
        let r: Vec<f64> = cons.iter().map(|h| h.load(&x) - h.c).collect();
        let done = (0..m).all(|k| {
            let tol = 1e-15 * cons[k].c.abs().max(1e-300);
            r[k] <= tol && (theta[k] == 0.0 || r[k].abs() <= tol)
        });
        if done {
            break;
        }
        let free: Vec<usize> = (0..m).filter(|&k| theta[k] > 0.0 || r[k] > 0.0).collect();
        let mut h = vec![vec![0.0; free.len()]; free.len()];
        for (u, &k) in free.iter().enumerate() {
            for (v, &l) in free.iter().enumerate() {
                h[u][v] = (0..n).filter(|&i| x[i] > 0.0).map(|i| cons[k].a[i] * cons[l].a[i] / d[i]).sum();
            }
        }
        let ridge = 1e-12 * (0..free.len()).map(|u| h[u][u]).fold(0.0f64, f64::max).max(1e-300);
        for (u, row) in h.iter_mut().enumerate() {
            row[u] += ridge;
        }
        let step = solve_dense(h, free.iter().map(|&k| r[k]).collect());
        let base = dual(&theta, &x);
        let mut t = 1.0;
        loop {
            let mut cand = theta.clone();
            for (u, &k) in free.iter().enumerate() {
                cand[k] = (theta[k] + t * step[u]).max(0.0);
            }
            let xc = primal(&cand);
            // the dual is maximized; accept any ascent, or the smallest step as a last resort
            if dual(&cand, &xc) >= base || t < 1e-20 {
                theta = cand;
                x = xc;
                break;
            }
            t *= 0.5;
        }
    }
    // pull any rounding residual back inside every halfspace
    let shrink = cons
        .iter()
        .map(|h| {
            let l = h.load(&x);
            if l > h.c { h.c / l } else { 1.0 }
        })
        .fold(1.0f64, f64::min);
    x.iter().map(|v| v * shrink).collect()
}

/// Minimizes a separable convex objective over `{x >= 0, a_k·x <= c_k}` by scaled
/// projected gradient with an Armijo search along the projected direction. Starts at 0.
pub fn projected_gradient(f: &dyn Objective, cons: &[Halfspace], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut fx = f.value(&x);
    let mut quiet = 0;
    for _ in 0..5000 {
        let g = f.grad(&x);
        let mut d = f.curvature(&x);
        let top = d.iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-300);
        for v in &mut d {
            *v = v.max(top * 1e-14);
        }
        let y: Vec<f64> = x.iter().zip(&g).zip(&d).map(|((x, g), d)| x - g / d).collect();
        let target = project(&y, &d, cons);
        let dir: Vec<f64> = target.iter().zip(&x).map(|(t, x)| t - x).collect();
        let slope: f64 = g.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut t = 1.0;
        let (next, fn_) = loop {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| (x + t * d).max(0.0)).collect();
            let fc = f.value(&cand);
            if fc <= fx + 1e-4 * t * slope || t < 1e-30 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let gain = fx - fn_;
        if fn_ <= fx {
            x = next;
            fx = fn_;
        }
        if gain <= 1e-15 * fx.abs().max(1e-300) {
            quiet += 1;
            if quiet >= 5 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    x
}

/// `Σ price_i x_i − level·Σ ln(1 + γ_i x_i)`.
pub struct PricedLog {
    pub price: Vec<f64>,
    pub cnr: Vec<f64>,
    pub level: f64,
}

impl Objective for PricedLog {
    fn value(&self, x: &[f64]) -> f64 {
        (0..x.len()).map(|i| self.price[i] * x[i] - self.level * (self.cnr[i] * x[i]).ln_1p()).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| self.price[i] - self.level * self.cnr[i] / (1.0 + self.cnr[i] * x[i])).collect()
    }

    fn curvature(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let r = self.cnr[i] / (1.0 + self.cnr[i] * x[i]);
                self.level * r * r
            })
            .collect()
    }
}

/// Rate model with estimation error: subcarrier rate
/// `Δf/ln2 · [ln((a+s)Gx + n) − ln(sGx + n)]`.
#[derive(Debug, Clone)]
pub struct NoisyRate {
    pub est: Vec<f64>,
    pub err_var: f64,
    pub gain: f64,
    pub noise: Vec<f64>,
    pub spacing: f64,
}

impl NoisyRate {
    pub fn len(&self) -> usize {
        self.est.len()
    }

    pub fn rate_i(&self, i: usize, x: f64) -> f64 {
        let (a, s, g, n) = (self.est[i], self.err_var, self.gain, self.noise[i]);
        if x <= 0.0 {
            return 0.0;
        }
        self.spacing / LN_2 * (((a + s) * g * x + n) / (s * g * x + n)).ln()
    }

    pub fn rate(&self, x: &[f64]) -> f64 {
        (0..x.len()).map(|i| self.rate_i(i, x[i])).sum()
    }

    /// d rate_i / dx.
    pub fn slope_i(&self, i: usize, x: f64) -> f64 {
        let (a, s, g, n) = (self.est[i], self.err_var, self.gain, self.noise[i]);
        self.spacing / LN_2 * g * ((a + s) / ((a + s) * g * x + n) - s / (s * g * x + n))
    }

    /// −d² rate_i / dx².
    pub fn bend_i(&self, i: usize, x: f64) -> f64 {
        let (a, s, g, n) = (self.est[i], self.err_var, self.gain, self.noise[i]);
        let hi = (a + s) / ((a + s) * g * x + n);
        let lo = s / (s * g * x + n);
        self.spacing / LN_2 * g * g * (hi * hi - lo * lo)
    }
}

/// `κΣx − q·rate(x)`.
pub struct Subtractive<'a> {
    pub rate: &'a NoisyRate,
    pub kappa: f64,
    pub q: f64,
}

impl Objective for Subtractive<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.kappa * x.iter().sum::<f64>() - self.q * self.rate.rate(x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| self.kappa - self.q * self.rate.slope_i(i, x[i])).collect()
    }

    fn curvature(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| self.q * self.rate.bend_i(i, x[i])).collect()
    }
}

/// Energy-per-bit minimization by the parametric iteration with the reference inner
/// solver; returns the minimizing powers and their ratio.
pub fn reference_energy_per_bit(rate: &NoisyRate, kappa: f64, circuit: f64, cons: &[Halfspace], q0: f64) -> (Vec<f64>, f64) {
    let mut q = q0;
    let mut best = vec![0.0; rate.len()];
    for _ in 0..100 {
        let x = projected_gradient(&Subtractive { rate, kappa, q }, cons, rate.len());
        let r = rate.rate(&x);
        let cost = kappa * x.iter().sum::<f64>() + circuit;
        best = x;
        let next = cost / r;
        if (q - next).abs() <= 1e-13 * q {
            return (best, next);
        }
        q = next;
    }
    let r = rate.rate(&best);
    let q = (kappa * best.iter().sum::<f64>() + circuit) / r;
    (best, q)
}

/// Stationarity residual of one coordinate of `min Σ π_i x_i − benefit(x)` where
/// `benefit_slope` is the marginal benefit at `x_i` and `price` the full per-unit price
/// including multipliers. Relative to the larger of the two.
pub fn stationarity_residual(x: f64, benefit_slope: f64, price: f64) -> f64 {
    let scale = benefit_slope.abs().max(price.abs()).max(1e-300);
    if x > 0.0 {
        (benefit_slope - price).abs() / scale
    } else {
        (benefit_slope - price).max(0.0) / scale
    }
}

/// Complementary-slackness residual: product of the multiplier's share of the objective
/// scale and the relative slack.
pub fn slackness_residual(mu: f64, cap: f64, load: f64, objective_scale: f64) -> f64 {
    if mu == 0.0 || !cap.is_finite() {
        return 0.0;
    }
    let weight = mu * cap / (mu * cap + objective_scale.abs());
    weight * ((cap - load) / cap).abs()
}

/// Uniform draw in `[lo, hi)` on a log scale.
pub fn log_uniform<R: rand::Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Leakage-like weights decaying away from one edge of the grid.
pub fn edge_leakage(n: usize, edge_offset: f64) -> Vec<f64> {
    (0..n).map(|i| 1.0 / (edge_offset + (n - 1 - i) as f64).powi(2)).collect()
}
