//! Agent-based simulation of the pairwise exchange processes.
//!
//! Each step draws a uniform perfect matching of the agents and lets every
//! pair trade once. In the directed market a fair coin picks the receiving
//! agent, which gains a uniform fraction `eps` of the giver's wealth; in the
//! exponential model the pair pools its wealth and splits it at `eps`.
//! All randomness comes from the counter-based streams of [`crate::rng`], so
//! sequential and parallel execution give bit-identical populations.

use serde::{Deserialize, Serialize};

use crate::distributions::{DyEquilibrium, Equilibrium, Model};
use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::histogram::{GridSpec, HistogramMeasure};
use crate::rng::{matching, Stream, INIT_INDEX, INIT_STEP};

/// Pairs handled per parallel task.
const PAIRS_PER_TASK: usize = 4096;

/// Relative drift of total wealth that counts as a broken invariant.
const CONSERVATION_SLACK: f64 = 1e-9;

/// Smallest population for which the empirical statistics are reported.
pub const MIN_AGENTS_FOR_STATS: usize = 1000;

/// One trade. Returns the new wealths `(m_i, m_j)`.
///
/// Directed market: the winner receives `eps` times the loser's wealth.
/// Exponential model: the pooled wealth is split at `eps`; `j_wins` is ignored.
pub fn pair_exchange(
    m_i: f64,
    m_j: f64,
    eps: f64,
    j_wins: bool,
    model: Model,
) -> Result<(f64, f64)> {
    if !(m_i >= 0.0 && m_j >= 0.0 && m_i.is_finite() && m_j.is_finite()) {
        return Err(domain(format!(
            "wealths must be finite and >= 0, got ({m_i}, {m_j})"
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(domain(format!("eps must lie in [0, 1], got {eps}")));
    }
    Ok(exchange(m_i, m_j, eps, j_wins, model))
}

#[inline]
fn exchange(m_i: f64, m_j: f64, eps: f64, j_wins: bool, model: Model) -> (f64, f64) {
    match model {
        Model::Drm if j_wins => {
            let moved = eps * m_i;
            (m_i - moved, m_j + moved)
        }
        Model::Drm => {
            let moved = eps * m_j;
            (m_i + moved, m_j - moved)
        }
        Model::Dy => {
            let pool = m_i + m_j;
            let a = eps * pool;
            (a, pool - a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Every agent holds `w`.
    Equal,
    /// Uniform on `[0, 2w]`.
    Uniform,
    /// Exponential with mean `w`.
    Exponential,
}

impl std::str::FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" => Ok(Self::Equal),
            "uniform" => Ok(Self::Uniform),
            "exponential" => Ok(Self::Exponential),
            other => Err(domain(format!(
                "unknown initial condition {other:?} (expected equal, uniform or exponential)"
            ))),
        }
    }
}

impl std::fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Equal => "equal",
            Self::Uniform => "uniform",
            Self::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    wealth: Vec<f64>,
    total: f64,
    model: Model,
    seed: u64,
    step_count: u64,
    exec: Exec,
}

impl Population {
    pub fn new(wealth: Vec<f64>, model: Model, seed: u64) -> Result<Self> {
        if wealth.len() % 2 == 1 {
            return Err(Error::OddPopulation(wealth.len()));
        }
        if wealth.is_empty() {
            return Err(domain("population is empty"));
        }
        if let Some(bad) = wealth.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(domain(format!("wealth must be finite and >= 0, got {bad}")));
        }
        let total = wealth.iter().sum();
        Ok(Self {
            wealth,
            total,
            model,
            seed,
            step_count: 0,
            exec: Exec::default(),
        })
    }

    /// `n` agents with mean wealth near `w`, drawn from `key(seed, INIT_STEP, INIT_INDEX)`.
    pub fn initial(
        init: InitialCondition,
        n: usize,
        w: f64,
        model: Model,
        seed: u64,
    ) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(domain(format!("mean wealth must be positive, got {w}")));
        }
        let mut s = Stream::new(seed, INIT_STEP, INIT_INDEX);
        let wealth = match init {
            InitialCondition::Equal => vec![w; n],
            InitialCondition::Uniform => (0..n).map(|_| 2.0 * w * s.uniform()).collect(),
            InitialCondition::Exponential => {
                let law = DyEquilibrium::new(w)?;
                (0..n).map(|_| law.sample(&mut s)).collect()
            }
        };
        Self::new(wealth, model, seed)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn wealth(&self) -> &[f64] {
        &self.wealth
    }

    pub fn len(&self) -> usize {
        self.wealth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealth.is_empty()
    }

    /// Total wealth at construction; conserved by every step.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn mean(&self) -> f64 {
        self.wealth.iter().sum::<f64>() / self.len() as f64
    }

    /// One round: every agent trades once with its partner in a fresh matching.
    ///
    /// Agents are gathered in matching order, so pair `k` is
    /// `(perm[2k], perm[2k+1])` with `i = perm[2k]` and `j = perm[2k+1]`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.step_count;
        let perm = matching(self.seed, t, self.len());
        let mut paired: Vec<f64> = perm.iter().map(|&a| self.wealth[a]).collect();
        let (seed, model) = (self.seed, self.model);
        self.exec
            .for_each_chunk_mut(&mut paired, 2 * PAIRS_PER_TASK, |task, chunk| {
                let first = (task * PAIRS_PER_TASK) as u64;
                for (k, pair) in chunk.chunks_exact_mut(2).enumerate() {
                    let mut s = Stream::new(seed, t, first + k as u64);
                    let eps = s.uniform();
                    let j_wins = s.coin();
                    let (a, b) = exchange(pair[0], pair[1], eps, j_wins, model);
                    pair[0] = a;
                    pair[1] = b;
                }
            });
        for (&a, &m) in perm.iter().zip(&paired) {
            self.wealth[a] = m;
        }
        self.step_count += 1;

        let now: f64 = self.wealth.iter().sum();
        if (now - self.total).abs() > CONSERVATION_SLACK * self.total.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant(format!(
                "total wealth drifted from {} to {now} at step {}",
                self.total, self.step_count
            )));
        }
        Ok(())
    }
}

/// Summary of an empirical wealth distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub mean: f64,
    pub cv: f64,
    pub gini: f64,
    /// Exact KS distance of the empirical cdf to the model's equilibrium with the empirical mean.
    pub ks: f64,
}

/// Statistics of `wealth` against the equilibrium of `model`.
pub fn empirical_stats(wealth: &[f64], model: Model) -> Result<EmpiricalStats> {
    if wealth.is_empty() {
        return Err(domain("no agents"));
    }
    let mut sorted = wealth.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let sum: f64 = sorted.iter().sum();
    let mean = sum / n;
    if !(mean > 0.0) {
        return Err(domain("mean wealth is zero"));
    }
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    let gini = weighted / (n * sum);

    let law = Equilibrium::new(model, mean)?;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = law.cdf(x)?;
        ks = ks.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(EmpiricalStats {
        mean,
        cv: var.sqrt() / mean,
        gini,
        ks,
    })
}

/// `(ks, cv, gini)` of the population against its model's equilibrium.
pub fn empirical_vs_equilibrium(pop: &Population) -> Result<(f64, f64, f64)> {
    if pop.len() < MIN_AGENTS_FOR_STATS {
        return Err(domain(format!(
            "empirical statistics need at least {MIN_AGENTS_FOR_STATS} agents, got {}",
            pop.len()
        )));
    }
    let s = empirical_stats(pop.wealth(), pop.model())?;
    Ok((s.ks, s.cv, s.gini))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    pub mean: f64,
    pub cv: f64,
    pub gini: f64,
    pub ks: f64,
    pub histogram: HistogramMeasure,
}

impl Snapshot {
    pub fn of(pop: &Population, grid: GridSpec) -> Result<Self> {
        let s = empirical_stats(pop.wealth(), pop.model())?;
        Ok(Self {
            t: pop.step_count(),
            mean: s.mean,
            cv: s.cv,
            gini: s.gini,
            ks: s.ks,
            histogram: HistogramMeasure::from_samples(pop.wealth(), grid)?,
        })
    }
}

/// Runs `steps` rounds, snapshotting at `t = 0`, every `snapshot_every` steps and at the end.
pub fn run(
    pop: &mut Population,
    steps: u64,
    snapshot_every: u64,
    grid: GridSpec,
) -> Result<Vec<Snapshot>> {
    if snapshot_every == 0 {
        return Err(domain("snapshot_every must be at least 1"));
    }
    let start = pop.step_count();
    let mut out = vec![Snapshot::of(pop, grid)?];
    for k in 1..=steps {
        pop.step()?;
        if k % snapshot_every == 0 || k == steps {
            out.push(Snapshot::of(pop, grid)?);
        }
    }
    debug_assert_eq!(pop.step_count(), start + steps);
    Ok(out)
}

pub const SNAPSHOT_CSV_HEADER: &str = "t,mean,cv,gini,ks";

pub fn write_snapshot_csv<W: std::io::Write>(
    mut out: W,
    snapshots: &[Snapshot],
) -> std::io::Result<()> {
    writeln!(out, "{SNAPSHOT_CSV_HEADER}")?;
    for s in snapshots {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.mean, s.cv, s.gini, s.ks
        )?;
    }
    Ok(())
}
