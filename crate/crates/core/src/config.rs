//! Flat `section.key = value` experiment configuration.
//!
//! Every key has a default in [`KEYS`]; unknown keys are rejected. Keys marked linear also
//! accept a `_db` variant (`link.power_budget_w_db = -10`), converted with `10^{x/10}`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::channel::{OfdmConfig, PathLossModel};
use crate::error::{Error, Result};
use crate::ga::GaConfig;

/// One configuration key: name, default (empty when required), whether a `_db` form is
/// accepted, and a short description.
pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub linear: bool,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, linear: bool, doc: &'static str) -> KeySpec {
    KeySpec { name, default, linear, doc }
}

pub const KEYS: &[KeySpec] = &[
    key("experiment.kind", "", false, "moop_sweep | cr_sweep | rate_interference_sweep | ee_sweep | ga_compare | oracle_compare | violation_ratio"),
    key("experiment.trials", "1000", false, "Monte Carlo trials per grid point"),
    key("experiment.seed", "1", false, "master seed"),
    key("sweep.key", "", false, "configuration key varied over the grid"),
    key("sweep.values", "", false, "comma-separated grid"),
    key("ofdm.n", "128", false, "number of subcarriers"),
    key("ofdm.spacing_hz", "9765.625", true, "subcarrier spacing"),
    key("pathloss.reference_distance_m", "100", false, "free-space reference distance"),
    key("pathloss.exponent", "4", false, "path-loss exponent"),
    key("pathloss.wavelength_m", "0.33", false, "carrier wavelength"),
    key("link.distance_m", "1000", false, "secondary link length"),
    key("link.avg_cnr_db", "none", false, "average CNR per unit power; `none` uses the physical link model"),
    key("link.noise_w", "1e-16", true, "noise power per subcarrier"),
    key("link.interference_w", "0", true, "primary-user interference per subcarrier"),
    key("link.power_budget_w", "inf", true, "total transmit power limit"),
    key("moop.alpha", "0.5", false, "power weight of the scalarized objective"),
    key("moop.b_max", "6", false, "bits per subcarrier cap"),
    key("moop.ber_th", "1e-4", false, "BER target"),
    key("moop.normalize", "true", false, "scale power by the budget and bits by N*b_max"),
    key("moop.u_power_w", "auto", true, "power normalization; `auto` follows moop.normalize"),
    key("moop.u_bits", "auto", false, "throughput normalization; `auto` follows moop.normalize"),
    key("moop.allocator", "proposed", false, "proposed | uniform_power | uniform_bits"),
    key("moop.baseline_power_w", "1e-3", true, "total power of the uniform-power baseline"),
    key("moop.baseline_bits", "2", false, "bits per subcarrier of the uniform-bits baseline"),
    key("pu.fading_margin_db", "0", false, "back-off applied to interference caps"),
    key("pu_m.distance_m", "1000", false, "distance to the co-channel receiver"),
    key("pu_m.threshold_w", "1e-16", true, "co-channel interference threshold"),
    key("pu_m.nu", "1", false, "inverse mean of the co-channel fading gain"),
    key("pu_m.confidence", "0.9", false, "probability with which statistical caps hold"),
    key("pu_l.enabled", "true", false, "include one adjacent-channel band"),
    key("pu_l.distance_m", "1500", false, "distance to the adjacent-channel receiver"),
    key("pu_l.threshold_w", "1e-16", true, "adjacent-channel interference threshold"),
    key("pu_l.nu", "1", false, "inverse mean of the adjacent-channel fading gain"),
    key("pu_l.confidence", "0.9", false, "probability with which statistical caps hold"),
    key("pu_l.bandwidth_hz", "312500", true, "adjacent band width"),
    key("pu_l.center_hz", "auto", false, "band centre relative to the grid centre; `auto` abuts the grid"),
    key("sensing.mode", "imperfect", false, "imperfect | perfect (what the allocator assumes)"),
    key("sensing.p_md", "0.01..0.05", false, "miss-detection probability, value or lo..hi"),
    key("sensing.p_fa", "0.01..0.1", false, "false-alarm probability, value or lo..hi"),
    key("sensing.p_active", "0..1", false, "primary activity probability, value or lo..hi"),
    key("sensing.sample_presence", "false", false, "draw true occupancy from the posteriors for violation counts"),
    key("ri.w_cci", "0.25", false, "co-channel interference weight"),
    key("ri.w_aci", "0.25", false, "adjacent-channel interference weight"),
    key("ri.w_rate", "0.5", false, "rate weight"),
    key("ri.knowledge", "path_loss", false, "path_loss | statistics | full_csi"),
    key("ee.kappa", "7.8", false, "amplifier inefficiency"),
    key("ee.circuit_power_w", "2", true, "circuit power"),
    key("ee.rate_floor_bps", "0", false, "minimum rate"),
    key("ee.tol", "1e-8", false, "Dinkelbach stopping tolerance"),
    key("ee.est_var", "0", false, "channel-estimation error variance"),
    key("ga.population", "100", false, "population size"),
    key("ga.max_generations", "1500", false, "generation limit"),
    key("ga.objective_tol", "1e-12", false, "stall threshold on the best objective"),
    key("ga.stall_window", "50", false, "generations over which the stall is measured"),
    key("ga.elite_count", "5", false, "elite members copied unchanged"),
    key("ga.crossover_fraction", "0.8", false, "share of non-elite children made by crossover"),
    key("ga.tournament_size", "2", false, "tournament size"),
    key("ga.laplace_location", "0", false, "Laplace crossover location"),
    key("ga.laplace_scale", "adaptive", false, "Laplace crossover scale or `adaptive`"),
    key("ga.mutation_index_real", "0.25", false, "power-mutation index of power genes"),
    key("ga.mutation_index_int", "4", false, "power-mutation index of bit genes"),
    key("ga.mutation_rate", "auto", false, "per-gene mutation probability or `auto`"),
    key("ga.seed_closed_form", "false", false, "seed the population with the closed-form allocation"),
    key("violation.allocator", "cr", false, "cr | rate_interference"),
    key("oracle.allocator", "moop", false, "moop | cr"),
];

fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

/// Uniform range `lo..hi`, or a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * rng.gen::<f64>()
        }
    }
}

impl FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b)?),
            None => {
                let v = num(s)?;
                (v, v)
            }
        };
        if !(lo <= hi) {
            return Err(format!("empty range `{s}`"));
        }
        Ok(Span { lo, hi })
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}..{}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MoopSweep,
    CrSweep,
    RateInterferenceSweep,
    EeSweep,
    GaCompare,
    OracleCompare,
    ViolationRatio,
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "moop_sweep" => ExperimentKind::MoopSweep,
            "cr_sweep" => ExperimentKind::CrSweep,
            "rate_interference_sweep" => ExperimentKind::RateInterferenceSweep,
            "ee_sweep" => ExperimentKind::EeSweep,
            "ga_compare" => ExperimentKind::GaCompare,
            "oracle_compare" => ExperimentKind::OracleCompare,
            "violation_ratio" => ExperimentKind::ViolationRatio,
            _ => return Err(format!("unknown experiment kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoopAllocator {
    Proposed,
    UniformPower,
    UniformBits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knowledge {
    PathLoss,
    Statistics,
    FullCsi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrAllocator {
    BitLoading,
    RateInterference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAllocator {
    Moop,
    Cr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub distance_m: f64,
    /// Normalized-CNR mode when set (unit noise, no path loss).
    pub avg_cnr_db: Option<f64>,
    pub noise_w: f64,
    pub interference_w: f64,
    pub power_budget_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoopParams {
    pub alpha: f64,
    pub b_max: u32,
    pub ber_th: f64,
    pub normalize: bool,
    /// Explicit normalizations; `None` leaves them to `normalize`.
    pub u_power_w: Option<f64>,
    pub u_bits: Option<f64>,
    pub allocator: MoopAllocator,
    pub baseline_power_w: f64,
    pub baseline_bits: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuLink {
    pub distance_m: f64,
    pub threshold_w: f64,
    pub nu: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentBand {
    pub link: PuLink,
    pub bandwidth_hz: f64,
    pub center_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingParams {
    pub perfect: bool,
    pub p_md: Span,
    pub p_fa: Span,
    pub p_active: Span,
    pub sample_presence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiParams {
    pub w_cci: f64,
    pub w_aci: f64,
    pub w_rate: f64,
    pub knowledge: Knowledge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EeParams {
    pub kappa: f64,
    pub circuit_power_w: f64,
    pub rate_floor_bps: f64,
    pub tol: f64,
    pub est_var: f64,
}

/// Model parameters of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub ofdm: OfdmConfig,
    pub path_loss: PathLossModel,
    pub link: LinkParams,
    pub moop: MoopParams,
    pub fading_margin_db: f64,
    pub pu_m: PuLink,
    pub pu_l: Option<AdjacentBand>,
    pub sensing: SensingParams,
    pub ri: RiParams,
    pub ee: EeParams,
    pub ga: GaConfig,
    pub violation_allocator: CrAllocator,
    pub oracle_allocator: OracleAllocator,
}

/// Resolved experiment: every key has a value, the grid is parsed and checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub sweep_key: String,
    pub grid: Vec<f64>,
    values: BTreeMap<String, String>,
}

struct Reader<'a> {
    values: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, name: &str) -> Result<&str> {
        let v = self.values.get(name).map(String::as_str).unwrap_or("");
        if v.is_empty() {
            return Err(Error::Config(format!("missing required parameter `{name}`")));
        }
        Ok(v)
    }

    fn get<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(name)?;
        v.parse::<T>().map_err(|e| Error::Config(format!("`{name}` = `{v}`: {e}")))
    }

    fn f64(&self, name: &str) -> Result<f64> {
        let v: f64 = self.get(name)?;
        if v.is_nan() {
            return Err(Error::Config(format!("`{name}` is NaN")));
        }
        Ok(v)
    }

    fn positive(&self, name: &str) -> Result<f64> {
        let v = self.f64(name)?;
        if !(v > 0.0) {
            return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonneg(&self, name: &str) -> Result<f64> {
        let v = self.f64(name)?;
        if !(v >= 0.0) {
            return Err(Error::Config(format!("`{name}` must be nonnegative, got {v}")));
        }
        Ok(v)
    }

    fn prob(&self, name: &str) -> Result<Span> {
        let s: Span = self.get(name)?;
        if s.lo < 0.0 || s.hi > 1.0 {
            return Err(Error::Config(format!("`{name}` must lie in [0,1]")));
        }
        Ok(s)
    }

    fn choice<T: Copy>(&self, name: &str, options: &[(&str, T)]) -> Result<T> {
        let v = self.raw(name)?;
        options.iter().find(|(k, _)| *k == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(k, _)| *k).collect();
            Error::Config(format!("`{name}` = `{v}`: expected one of {}", names.join(", ")))
        })
    }

    fn optional_f64(&self, name: &str, none: &str) -> Result<Option<f64>> {
        if self.raw(name)? == none {
            Ok(None)
        } else {
            self.f64(name).map(Some)
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("line {}: `{k}` given twice", no + 1)));
        }
    }
    Ok(out)
}

/// Maps a user key to its canonical name, converting `_db` values.
fn canonical(k: &str, v: &str) -> Result<(String, String)> {
    if spec(k).is_some() {
        return Ok((k.to_string(), v.to_string()));
    }
    if let Some(base) = k.strip_suffix("_db") {
        if spec(base).is_some_and(|s| s.linear) {
            let db: f64 = v.parse().map_err(|_| Error::Config(format!("`{k}` = `{v}` is not a number")))?;
            return Ok((base.to_string(), format!("{}", 10f64.powf(0.1 * db))));
        }
    }
    Err(Error::Config(format!("unknown key `{k}`")))
}

impl ExperimentConfig {
    /// Resolves a parsed key/value map against the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            KEYS.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        let mut seen = BTreeMap::new();
        for (k, v) in pairs {
            let (name, value) = canonical(k, v)?;
            if let Some(prev) = seen.insert(name.clone(), k.clone()) {
                return Err(Error::Config(format!("`{prev}` and `{k}` set the same parameter")));
            }
            values.insert(name, value);
        }
        let r = Reader { values: &values };
        let kind = r.get::<ExperimentKind>("experiment.kind")?;
        let trials: usize = r.get("experiment.trials")?;
        if trials == 0 {
            return Err(Error::Config("`experiment.trials` must be at least 1".into()));
        }
        let seed: u64 = r.get("experiment.seed")?;
        let raw_key = r.raw("sweep.key")?.to_string();
        let (sweep_key, from_db) = match spec(&raw_key) {
            Some(_) => (raw_key.clone(), false),
            None => match raw_key.strip_suffix("_db").filter(|b| spec(b).is_some_and(|s| s.linear)) {
                Some(base) => (base.to_string(), true),
                None => return Err(Error::Config(format!("unknown sweep key `{raw_key}`"))),
            },
        };
        if sweep_key.starts_with("experiment.") || sweep_key.starts_with("sweep.") {
            return Err(Error::Config(format!("`{sweep_key}` cannot be swept")));
        }
        let grid = r
            .raw("sweep.values")?
            .split(',')
            .map(|t| {
                let v: f64 = t.trim().parse().map_err(|_| Error::Config(format!("bad grid value `{t}`")))?;
                Ok(if from_db { 10f64.powf(0.1 * v) } else { v })
            })
            .collect::<Result<Vec<f64>>>()?;
        if grid.is_empty() {
            return Err(Error::Config("`sweep.values` is empty".into()));
        }
        let cfg = ExperimentConfig { kind, trials, seed, sweep_key, grid, values };
        for &v in &cfg.grid {
            cfg.params_at(v)?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Copy with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.values.insert("experiment.seed".into(), seed.to_string());
        c
    }

    /// Effective configuration, one `key = value` line per parameter.
    pub fn effective_lines(&self) -> Vec<String> {
        self.values.iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }

    /// Parameters at one grid value of the swept key.
    pub fn params_at(&self, sweep_value: f64) -> Result<Params> {
        let mut values = self.values.clone();
        let text = if self.sweep_key == "moop.b_max" || self.sweep_key.ends_with(".n") {
            format!("{}", sweep_value.round() as i64)
        } else {
            format!("{sweep_value}")
        };
        values.insert(self.sweep_key.clone(), text);
        let r = Reader { values: &values };
        resolve(&r).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("at {} = {sweep_value}: {m}", self.sweep_key)),
            other => other,
        })
    }
}

fn resolve(r: &Reader<'_>) -> Result<Params> {
    let n: usize = r.get("ofdm.n")?;
    let ofdm = OfdmConfig::new(n, r.positive("ofdm.spacing_hz")?).map_err(|e| Error::Config(e.to_string()))?;
    let path_loss = PathLossModel {
        reference_distance_m: r.positive("pathloss.reference_distance_m")?,
        exponent: r.positive("pathloss.exponent")?,
        wavelength_m: r.positive("pathloss.wavelength_m")?,
    };
    let link = LinkParams {
        distance_m: r.positive("link.distance_m")?,
        avg_cnr_db: r.optional_f64("link.avg_cnr_db", "none")?,
        noise_w: r.nonneg("link.noise_w")?,
        interference_w: r.nonneg("link.interference_w")?,
        power_budget_w: r.positive("link.power_budget_w")?,
    };
    let b_max: u32 = r.get("moop.b_max")?;
    if !(2..=30).contains(&b_max) {
        return Err(Error::Config("`moop.b_max` must lie in 2..=30".into()));
    }
    let alpha = r.f64("moop.alpha")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config("`moop.alpha` must lie in [0,1]".into()));
    }
    let ber_th = r.positive("moop.ber_th")?;
    if ber_th >= 0.2 {
        return Err(Error::Config("`moop.ber_th` must be below 0.2".into()));
    }
    let moop = MoopParams {
        alpha,
        b_max,
        ber_th,
        normalize: r.get("moop.normalize")?,
        u_power_w: r.optional_f64("moop.u_power_w", "auto")?,
        u_bits: r.optional_f64("moop.u_bits", "auto")?,
        allocator: r.choice(
            "moop.allocator",
            &[
                ("proposed", MoopAllocator::Proposed),
                ("uniform_power", MoopAllocator::UniformPower),
                ("uniform_bits", MoopAllocator::UniformBits),
            ],
        )?,
        baseline_power_w: r.nonneg("moop.baseline_power_w")?,
        baseline_bits: r.get("moop.baseline_bits")?,
    };
    let pu_link = |p: &str| -> Result<PuLink> {
        let confidence = r.f64(&format!("{p}.confidence"))?;
        if !(0.0..1.0).contains(&confidence) {
            return Err(Error::Config(format!("`{p}.confidence` must lie in [0,1)")));
        }
        Ok(PuLink {
            distance_m: r.positive(&format!("{p}.distance_m"))?,
            threshold_w: r.positive(&format!("{p}.threshold_w"))?,
            nu: r.positive(&format!("{p}.nu"))?,
            confidence,
        })
    };
    let pu_m = pu_link("pu_m")?;
    let pu_l = if r.get::<bool>("pu_l.enabled")? {
        let bandwidth_hz = r.positive("pu_l.bandwidth_hz")?;
        let edge = 0.5 * n as f64 * ofdm.subcarrier_spacing_hz;
        let center_hz = r.optional_f64("pu_l.center_hz", "auto")?.unwrap_or(edge + 0.5 * bandwidth_hz);
        Some(AdjacentBand { link: pu_link("pu_l")?, bandwidth_hz, center_hz })
    } else {
        None
    };
    let sensing = SensingParams {
        perfect: r.choice("sensing.mode", &[("imperfect", false), ("perfect", true)])?,
        p_md: r.prob("sensing.p_md")?,
        p_fa: r.prob("sensing.p_fa")?,
        p_active: r.prob("sensing.p_active")?,
        sample_presence: r.get("sensing.sample_presence")?,
    };
    let ri = RiParams {
        w_cci: r.nonneg("ri.w_cci")?,
        w_aci: r.nonneg("ri.w_aci")?,
        w_rate: r.nonneg("ri.w_rate")?,
        knowledge: r.choice(
            "ri.knowledge",
            &[("path_loss", Knowledge::PathLoss), ("statistics", Knowledge::Statistics), ("full_csi", Knowledge::FullCsi)],
        )?,
    };
    let ee = EeParams {
        kappa: r.positive("ee.kappa")?,
        circuit_power_w: r.nonneg("ee.circuit_power_w")?,
        rate_floor_bps: r.nonneg("ee.rate_floor_bps")?,
        tol: r.positive("ee.tol")?,
        est_var: r.nonneg("ee.est_var")?,
    };
    let laplace_scale = r.optional_f64("ga.laplace_scale", "adaptive")?;
    let mutation_rate = r.optional_f64("ga.mutation_rate", "auto")?;
    let ga = GaConfig {
        population: r.get("ga.population")?,
        max_generations: r.get("ga.max_generations")?,
        objective_tol: r.nonneg("ga.objective_tol")?,
        stall_window: r.get("ga.stall_window")?,
        elite_count: r.get("ga.elite_count")?,
        crossover_fraction: r.f64("ga.crossover_fraction")?,
        tournament_size: r.get("ga.tournament_size")?,
        laplace_location: r.f64("ga.laplace_location")?,
        laplace_scale,
        mutation_index_real: r.positive("ga.mutation_index_real")?,
        mutation_index_int: r.positive("ga.mutation_index_int")?,
        mutation_rate,
        seed_closed_form: r.get("ga.seed_closed_form")?,
    };
    ga.validate().map_err(|e| Error::Config(e.to_string()))?;
    let allocators = [("cr", CrAllocator::BitLoading), ("rate_interference", CrAllocator::RateInterference)];
    Ok(Params {
        ofdm,
        path_loss,
        link,
        moop,
        fading_margin_db: r.f64("pu.fading_margin_db")?,
        pu_m,
        pu_l,
        sensing,
        ri,
        ee,
        ga,
        violation_allocator: r.choice("violation.allocator", &allocators)?,
        oracle_allocator: r.choice("oracle.allocator", &[("moop", OracleAllocator::Moop), ("cr", OracleAllocator::Cr)])?,
    })
}
