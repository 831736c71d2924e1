//! Propagation, fading, sensing, estimation and spectral-leakage models.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::special::adaptive_simpson;

/// Multicarrier grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub symbol_duration_s: f64,
}

impl OfdmConfig {
    /// Grid with the symbol duration set to the inverse spacing.
    pub fn new(n_subcarriers: usize, subcarrier_spacing_hz: f64) -> Result<Self> {
        let cfg = OfdmConfig {
            n_subcarriers,
            subcarrier_spacing_hz,
            symbol_duration_s: 1.0 / subcarrier_spacing_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::domain("at least one subcarrier is required"));
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !self.subcarrier_spacing_hz.is_finite() {
            return Err(Error::domain("subcarrier spacing must be positive"));
        }
        if !(self.symbol_duration_s > 0.0) || !self.symbol_duration_s.is_finite() {
            return Err(Error::domain("symbol duration must be positive"));
        }
        Ok(())
    }

    /// Baseband centre frequency of subcarrier `i`, with the grid centred on zero.
    pub fn subcarrier_frequency(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n_subcarriers as f64 - 1.0)) * self.subcarrier_spacing_hz
    }
}

/// Log-distance path loss with a free-space intercept at the reference distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossModel {
    pub reference_distance_m: f64,
    pub exponent: f64,
    pub wavelength_m: f64,
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reference distance", self.reference_distance_m),
            ("path-loss exponent", self.exponent),
            ("wavelength", self.wavelength_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Path loss in dB at distance `d`.
pub fn path_loss_db(d: f64, model: &PathLossModel) -> Result<f64> {
    model.validate()?;
    if !(d >= model.reference_distance_m) || !d.is_finite() {
        return Err(Error::domain(format!(
            "distance {d} m is below the reference distance {} m",
            model.reference_distance_m
        )));
    }
    let d0 = model.reference_distance_m;
    Ok(20.0 * (4.0 * PI * d0 / model.wavelength_m).log10()
        + 10.0 * model.exponent * (d / d0).log10())
}

/// Linear power gain corresponding to a loss in dB.
pub fn db_loss_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-0.1 * loss_db)
}

/// One fading realization seen by the secondary link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub cnr: Vec<f64>,
    pub gains: Vec<f64>,
    pub noise_var_w: f64,
    pub interference_w: Vec<f64>,
}

impl ChannelRealization {
    /// Builds a realization from raw gains, deriving the per-subcarrier CNR.
    pub fn from_gains(gains: Vec<f64>, noise_var_w: f64, interference_w: Vec<f64>) -> Result<Self> {
        if gains.len() != interference_w.len() {
            return Err(Error::domain("gains and interference lengths differ"));
        }
        if !(noise_var_w >= 0.0) {
            return Err(Error::domain("noise variance must be nonnegative"));
        }
        if gains.iter().chain(&interference_w).any(|v| !(*v >= 0.0)) {
            return Err(Error::domain("gains and interference must be nonnegative"));
        }
        let cnr = gains
            .iter()
            .zip(&interference_w)
            .map(|(g, j)| {
                let den = noise_var_w + j;
                if den > 0.0 {
                    g / den
                } else if *g > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        Ok(ChannelRealization { cnr, gains, noise_var_w, interference_w })
    }

    /// Realization given directly by CNR values (unit noise, no interference).
    pub fn from_cnr(cnr: Vec<f64>) -> Result<Self> {
        let n = cnr.len();
        Self::from_gains(cnr, 1.0, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.cnr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cnr.is_empty()
    }
}

/// Rayleigh block fading: i.i.d. exponential power gains with mean `avg_gain`.
pub fn sample_rayleigh_channel<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    avg_gain: f64,
    noise_var: f64,
    interference: &[f64],
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(avg_gain > 0.0) {
        return Err(Error::domain("average gain must be positive"));
    }
    let n = cfg.n_subcarriers;
    let interference = match interference.len() {
        0 => vec![0.0; n],
        1 => vec![interference[0]; n],
        len if len == n => interference.to_vec(),
        _ => return Err(Error::domain("interference vector length mismatch")),
    };
    let gains = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            avg_gain * e
        })
        .collect();
    ChannelRealization::from_gains(gains, noise_var, interference)
}

/// Spectrum-sensing error model for one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingModel {
    pub p_md: f64,
    pub p_fa: f64,
    pub p_active: f64,
}

impl SensingModel {
    /// Error-free sensing with the given activity probability.
    pub fn perfect(p_active: f64) -> Self {
        SensingModel { p_md: 0.0, p_fa: 0.0, p_active }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_md", self.p_md), ("p_fa", self.p_fa), ("p_active", self.p_active)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Posterior probabilities that a band is truly occupied given that sensing declared it
/// vacant (first) or occupied (second).
pub fn sensing_posteriors(s: &SensingModel) -> Result<(f64, f64)> {
    s.validate()?;
    let rho = s.p_active;
    let num_ov = s.p_md * rho;
    let den_ov = num_ov + (1.0 - s.p_fa) * (1.0 - rho);
    let num_oo = (1.0 - s.p_md) * rho;
    let den_oo = num_oo + s.p_fa * (1.0 - rho);
    if !(den_ov > 0.0) || !(den_oo > 0.0) {
        return Err(Error::domain("sensing posterior undefined for these probabilities"));
    }
    Ok(((num_ov / den_ov).clamp(0.0, 1.0), (num_oo / den_oo).clamp(0.0, 1.0)))
}

/// A primary-user band as seen from the secondary transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PuBand {
    pub bandwidth_hz: f64,
    pub spectral_offsets_hz: Vec<f64>,
    pub distance_m: f64,
    pub interference_threshold_w: f64,
    pub fading_margin_db: f64,
    pub exp_mean_inv: f64,
    pub confidence: f64,
}

impl PuBand {
    /// Spectral distances from every subcarrier of `cfg` to a band centred at `center_hz`
    /// (same baseband frame as [`OfdmConfig::subcarrier_frequency`]).
    pub fn offsets_for(cfg: &OfdmConfig, center_hz: f64) -> Vec<f64> {
        (0..cfg.n_subcarriers)
            .map(|i| (center_hz - cfg.subcarrier_frequency(i)).abs())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz >= 0.0) {
            return Err(Error::domain("band bandwidth must be nonnegative"));
        }
        if !(self.interference_threshold_w > 0.0) {
            return Err(Error::domain("interference threshold must be positive"));
        }
        if !(0.0..1.0).contains(&self.confidence) {
            return Err(Error::domain("confidence must lie in [0,1)"));
        }
        Ok(())
    }
}

fn sinc2(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - (PI * x).powi(2) / 3.0
    } else {
        let s = (PI * x).sin() / (PI * x);
        s * s
    }
}

const SINC_TAIL_START: f64 = 1000.0;

/// Integral of sinc² from `c` to infinity, asymptotic form for large `c`.
fn sinc2_tail(c: f64) -> f64 {
    if c == f64::INFINITY {
        return 0.0;
    }
    1.0 / (2.0 * PI * PI * c) + (2.0 * PI * c).sin() / (4.0 * PI.powi(3) * c * c)
}

fn sinc2_core(a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo.floor() + 1.0).min(b);
        total += adaptive_simpson(&sinc2, lo, hi, rel_tol);
        lo = hi;
    }
    total
}

/// ∫ sinc²(x) dx over [a, b]; infinite bounds are allowed.
pub(crate) fn sinc2_integral(a: f64, b: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let c = SINC_TAIL_START;
    let mut total = sinc2_core(a.max(-c), b.min(c), rel_tol);
    if b > c {
        total += sinc2_tail(a.max(c)) - sinc2_tail(b);
    }
    if a < -c {
        total += sinc2_tail((-b).max(c)) - sinc2_tail(-a);
    }
    total
}

/// Fraction of subcarrier `i`'s spectrum that falls inside `band`.
pub fn leakage_factor(cfg: &OfdmConfig, band: &PuBand, i: usize) -> Result<f64> {
    let offset = *band
        .spectral_offsets_hz
        .get(i)
        .ok_or_else(|| Error::domain(format!("no spectral offset for subcarrier {i}")))?;
    let ts = cfg.symbol_duration_s;
    let lo = ts * (offset - 0.5 * band.bandwidth_hz);
    let hi = ts * (offset + 0.5 * band.bandwidth_hz);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain("leakage integral bounds must be finite"));
    }
    if band.bandwidth_hz == 0.0 {
        return Ok(0.0);
    }
    Ok(sinc2_integral(lo, hi, 1e-8).clamp(0.0, 1.0))
}

/// Leakage factors of all subcarriers into `band`.
pub fn leakage_vector(cfg: &OfdmConfig, band: &PuBand) -> Result<Vec<f64>> {
    (0..cfg.n_subcarriers).map(|i| leakage_factor(cfg, band, i)).collect()
}

/// Pilot-based channel estimation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub channel_order: usize,
    pub tap_var: f64,
    pub pilot_power_w: f64,
    pub path_loss_lin: f64,
}

/// Variance of the MMSE channel-estimation error.
pub fn mmse_estimation_variance(cfg: &EstimationConfig, noise_var: f64) -> Result<f64> {
    if !(cfg.tap_var >= 0.0) || !(cfg.pilot_power_w > 0.0) || !(cfg.path_loss_lin > 0.0) {
        return Err(Error::domain("estimation parameters must be positive"));
    }
    if !(noise_var > 0.0) {
        return Err(Error::domain("noise variance must be positive"));
    }
    let taps = cfg.channel_order as f64 + 1.0;
    if cfg.pilot_power_w.is_infinite() {
        return Ok(0.0);
    }
    Ok(taps * cfg.tap_var * noise_var
        / (noise_var + cfg.tap_var * cfg.path_loss_lin * cfg.pilot_power_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn reference_path_loss() -> PathLossModel {
        PathLossModel { reference_distance_m: 100.0, exponent: 4.0, wavelength_m: 0.33 }
    }

    #[test]
    fn path_loss_reference_and_decade() {
        let m = reference_path_loss();
        let free = 20.0 * (4.0 * PI * 100.0 / 0.33f64).log10();
        assert!((path_loss_db(100.0, &m).unwrap() - free).abs() < 1e-12);
        assert!((path_loss_db(1000.0, &m).unwrap() - free - 40.0).abs() < 1e-12);
        assert!(path_loss_db(99.0, &m).is_err());
    }

    #[test]
    fn path_loss_hand_value() {
        // 20*log10(4*pi*100/0.33) = 71.6139..., plus 40 dB
        let v = path_loss_db(1000.0, &reference_path_loss()).unwrap();
        assert!((v - 111.613_918_48).abs() < 1e-6, "{v}");
        let g = db_loss_to_gain(v);
        assert!(g > 0.0 && g <= 1.0);
    }

    #[test]
    fn rayleigh_mean_and_determinism() {
        let cfg = OfdmConfig::new(1_000_000, 1.0).unwrap();
        let mut rng = substream(11, 0);
        let ch = sample_rayleigh_channel(&cfg, 1.0, 1.0, &[], &mut rng).unwrap();
        let mean = ch.gains.iter().sum::<f64>() / ch.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");

        let small = OfdmConfig::new(16, 1.0).unwrap();
        let a = sample_rayleigh_channel(&small, 2.0, 0.5, &[0.0], &mut substream(3, 9)).unwrap();
        let b = sample_rayleigh_channel(&small, 2.0, 0.5, &[0.0], &mut substream(3, 9)).unwrap();
        assert_eq!(a, b);
        for (c, g) in a.cnr.iter().zip(&a.gains) {
            assert_eq!(*c, g / 0.5);
        }
    }

    #[test]
    fn rayleigh_ks_statistic() {
        let n = 100_000;
        let cfg = OfdmConfig::new(n, 1.0).unwrap();
        let ch = sample_rayleigh_channel(&cfg, 3.0, 1.0, &[], &mut substream(5, 1)).unwrap();
        let mut g = ch.gains.clone();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (k, x) in g.iter().enumerate() {
            let cdf = 1.0 - (-x / 3.0).exp();
            d = d.max((cdf - k as f64 / n as f64).abs()).max(((k + 1) as f64 / n as f64 - cdf).abs());
        }
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn posteriors_reference_values() {
        let (ov, oo) = sensing_posteriors(&SensingModel::perfect(0.5)).unwrap();
        assert_eq!((ov, oo), (0.0, 1.0));
        let (ov, _) = sensing_posteriors(&SensingModel { p_md: 0.05, p_fa: 0.1, p_active: 0.5 }).unwrap();
        assert!((ov - 0.025 / 0.475).abs() < 1e-15);
        for &(md, fa) in &[(0.01, 0.2), (0.3, 0.9), (0.99, 0.0)] {
            let (ov, _) = sensing_posteriors(&SensingModel { p_md: md, p_fa: fa, p_active: 1.0 }).unwrap();
            assert_eq!(ov, 1.0);
        }
        assert!(sensing_posteriors(&SensingModel { p_md: 0.0, p_fa: 1.0, p_active: 0.0 }).is_err());
        assert!(sensing_posteriors(&SensingModel { p_md: 1.5, p_fa: 0.0, p_active: 0.5 }).is_err());
    }

    fn band(bw: f64, offset: f64) -> PuBand {
        PuBand {
            bandwidth_hz: bw,
            spectral_offsets_hz: vec![offset],
            distance_m: 1000.0,
            interference_threshold_w: 1e-10,
            fading_margin_db: 0.0,
            exp_mean_inv: 1.0,
            confidence: 0.9,
        }
    }

    #[test]
    fn leakage_against_trapezoid() {
        let cfg = OfdmConfig::new(1, 1000.0).unwrap();
        let ts = cfg.symbol_duration_s;
        let v = leakage_factor(&cfg, &band(2.0 / ts, 0.0), 0).unwrap();
        let n = 1_000_000;
        let h = 2.0 / n as f64;
        let mut trap = 0.5 * (sinc2(-1.0) + sinc2(1.0));
        for k in 1..n {
            trap += sinc2(-1.0 + k as f64 * h);
        }
        trap *= h;
        assert!(((v - trap) / trap).abs() < 1e-9, "{v} vs {trap}");
        assert!((v - 0.902_823_4).abs() < 1e-6);
    }

    #[test]
    fn leakage_limits() {
        let cfg = OfdmConfig::new(1, 1.0).unwrap();
        assert_eq!(leakage_factor(&cfg, &band(0.0, 3.0), 0).unwrap(), 0.0);
        let wide = leakage_factor(&cfg, &band(1e6, 0.0), 0).unwrap();
        assert!((wide - 1.0).abs() < 1e-6, "{wide}");
        assert!(leakage_factor(&cfg, &band(f64::INFINITY, 0.0), 0).is_err());
    }

    #[test]
    fn leakage_partition_sums_to_one() {
        let edges = [-1e4, -250.5, -3.2, -0.7, 0.0, 0.4, 2.9, 17.0, 1200.0, 5e3];
        let mut total = sinc2_integral(f64::NEG_INFINITY, edges[0], 1e-10);
        for w in edges.windows(2) {
            total += sinc2_integral(w[0], w[1], 1e-10);
        }
        total += sinc2_integral(*edges.last().unwrap(), f64::INFINITY, 1e-10);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn mmse_variance_cases() {
        let mut e = EstimationConfig { channel_order: 5, tap_var: 1.0, pilot_power_w: 1.0, path_loss_lin: 4e-16 };
        // denominator = 2 sigma_n^2, so variance = 6 sigma_n^2 / (2 sigma_n^2)
        let v = mmse_estimation_variance(&e, 4e-16).unwrap();
        assert!((v - 3.0).abs() < 1e-14);
        e.pilot_power_w = f64::INFINITY;
        assert_eq!(mmse_estimation_variance(&e, 4e-16).unwrap(), 0.0);
        e.pilot_power_w = 1.0;
        e.tap_var = 0.0;
        assert_eq!(mmse_estimation_variance(&e, 4e-16).unwrap(), 0.0);
    }
}
