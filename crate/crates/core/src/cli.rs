//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on configuration or other errors, 2 when the problem is
//! infeasible.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bitpower_moop::{allocate_discrete, Allocation, BerTargets, LinearCap, MoopWeights};
use crate::channel::{sample_rayleigh_channel, ChannelRealization, OfdmConfig};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::ga::{evolve, GaConfig, LoadingProblem};
use crate::harness::{run_experiment, run_experiment_with_workers, write_csv};
use crate::oracle::exhaustive_search;
use crate::rng::substream;
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mcload", version, about = "Bit and power loading simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo experiment described by a config file and write CSV.
    Run {
        config: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; all cores when unset.
        #[arg(long, env = "MCLOAD_WORKERS")]
        workers: Option<usize>,
    },
    /// Closed-form discrete allocation for one channel, printed as CSV.
    Allocate(Instance),
    /// Exhaustive search for one channel, with the closed-form gap.
    Oracle(Instance),
    /// Genetic algorithm for one channel, with its generation log.
    Ga {
        #[command(flatten)]
        instance: Instance,
        #[arg(long, default_value_t = 300)]
        generations: usize,
        #[arg(long, default_value_t = 100)]
        population: usize,
        /// Seed the initial population with the closed-form allocation.
        #[arg(long)]
        seed_closed_form: bool,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

/// One loading instance: either explicit CNRs or a Rayleigh draw.
#[derive(Args, Debug)]
struct Instance {
    /// Comma-separated linear CNR per subcarrier.
    #[arg(long, value_delimiter = ',', conflicts_with = "n")]
    cnr: Option<Vec<f64>>,
    /// Number of subcarriers to draw.
    #[arg(long)]
    n: Option<usize>,
    /// Mean CNR of the drawn subcarriers in dB.
    #[arg(long, default_value_t = 20.0)]
    avg_cnr_db: f64,
    /// Seed of the channel draw (and of the GA).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    ber_th: f64,
    #[arg(long, default_value_t = 6)]
    b_max: u32,
    /// Total power budget in W.
    #[arg(long, default_value_t = f64::INFINITY)]
    budget: f64,
}

impl Instance {
    fn channel(&self) -> Result<ChannelRealization> {
        match (&self.cnr, self.n) {
            (Some(c), _) => ChannelRealization::from_cnr(c.clone()),
            (None, Some(n)) => {
                let ofdm = OfdmConfig::new(n, 1.0)?;
                let mut rng = substream(self.seed, 0);
                sample_rayleigh_channel(&ofdm, 10f64.powf(0.1 * self.avg_cnr_db), 1.0, &[], &mut rng)
            }
            (None, None) => Err(Error::Config("give either --cnr or --n".into())),
        }
    }

    fn weights(&self, n: usize) -> Result<MoopWeights> {
        let u_p = if self.budget.is_finite() { self.budget } else { 1.0 };
        MoopWeights::new(self.alpha, u_p, (n as u32 * self.b_max) as f64).map_err(|e| Error::Config(e.to_string()))
    }

    fn caps(&self, n: usize) -> Vec<LinearCap> {
        if self.budget.is_finite() {
            vec![LinearCap::total_power(n, self.budget)]
        } else {
            Vec::new()
        }
    }
}

fn write_allocation(out: &mut dyn Write, ch: &ChannelRealization, a: &Allocation) -> std::io::Result<()> {
    writeln!(out, "# objective = {:.11e}", a.objective)?;
    writeln!(out, "# total_bits = {}", a.total_bits())?;
    writeln!(out, "# total_power_w = {:.11e}", a.total_power())?;
    writeln!(out, "subcarrier,cnr,bits,power_w")?;
    for i in 0..ch.len() {
        writeln!(out, "{i},{:.11e},{},{:.11e}", ch.cnr[i], a.bits[i], a.power_w[i])?;
    }
    Ok(())
}

fn io(e: std::io::Error) -> Error {
    Error::Config(format!("i/o failure: {e}"))
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Run { config, seed, out: path, workers } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let records = match workers {
                Some(k) => run_experiment_with_workers(&cfg, k)?,
                None => run_experiment(&cfg)?,
            };
            let mut buf = Vec::new();
            write_csv(&cfg, &records, &mut buf).map_err(io)?;
            match path {
                Some(p) => std::fs::write(&p, buf).map_err(io)?,
                None => out.write_all(&buf).map_err(io)?,
            }
        }
        Command::Allocate(inst) => {
            let ch = inst.channel()?;
            let t = BerTargets::uniform(ch.len(), inst.ber_th)?;
            let a = allocate_discrete(&ch, &inst.weights(ch.len())?, &t, inst.b_max, inst.budget)?;
            write_allocation(out, &ch, &a).map_err(io)?;
        }
        Command::Oracle(inst) => {
            let ch = inst.channel()?;
            let n = ch.len();
            let t = BerTargets::uniform(n, inst.ber_th)?;
            let w = inst.weights(n)?;
            let o = exhaustive_search(&ch, &w, &t, inst.b_max, &inst.caps(n))?;
            let a = allocate_discrete(&ch, &w, &t, inst.b_max, inst.budget)?;
            let gap = if o.objective != 0.0 { (a.objective - o.objective) / o.objective.abs() } else { 0.0 };
            writeln!(out, "# closed_form_objective = {:.11e}", a.objective).map_err(io)?;
            writeln!(out, "# gap_vs_oracle = {gap:.11e}").map_err(io)?;
            write_allocation(out, &ch, &o).map_err(io)?;
        }
        Command::Ga { instance: inst, generations, population, seed_closed_form } => {
            let ch = inst.channel()?;
            let n = ch.len();
            let problem = LoadingProblem {
                weights: inst.weights(n)?,
                channel: ch.clone(),
                ber_th: inst.ber_th,
                power_budget_w: inst.budget,
                b_max: inst.b_max,
            };
            let cfg = GaConfig { max_generations: generations, population, seed_closed_form, ..GaConfig::default() };
            let res = evolve(&problem, &cfg, inst.seed)?;
            writeln!(out, "generation,best_objective,mean_fitness,feasible_fraction").map_err(io)?;
            for g in &res.log {
                let best = g.best_objective.map_or("nan".to_string(), |v| format!("{v:.11e}"));
                writeln!(out, "{},{best},{:.11e},{:.11e}", g.generation, g.mean_fitness, g.feasible_fraction)
                    .map_err(io)?;
            }
            let b = &res.best;
            writeln!(out, "# best_feasible = {}", b.feasible).map_err(io)?;
            writeln!(out, "# best_objective = {:.11e}", b.objective).map_err(io)?;
            for i in 0..n {
                writeln!(out, "# subcarrier {i}: bits = {}, power_w = {:.11e}", b.bits[i], b.power[i]).map_err(io)?;
            }
            if !b.feasible {
                return Err(Error::Infeasible("no feasible individual found".into()));
            }
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
            }
            if let Some(c) = checks.iter().find(|c| !c.passed) {
                return Err(Error::Domain(format!("selftest `{}` failed", c.name)));
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "mcload: {e}");
            match e {
                Error::Infeasible(_) => EXIT_INFEASIBLE,
                _ => EXIT_ERROR,
            }
        }
    }
}
