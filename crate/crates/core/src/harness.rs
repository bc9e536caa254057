//! Experiment configuration, pipelines, and CSV emission.
//!
//! Two experiment kinds are supported:
//!
//! * `volatile` — one run of the equalizing algorithm under a randomly
//!   churning schedule, logging the monitoring series per step;
//! * `sweep` — for a grid over network size, density, or problem dimension,
//!   run each requested algorithm on freshly drawn geometric graphs and
//!   observations until its worst node error drops below the threshold, and
//!   average the exact transmission totals over scenarios.
//!
//! Everything is deterministic: per-scenario seeds are `seed + scenario
//! index`, sub-generators are split off in a fixed order, and identical
//! configurations produce byte-identical CSV output.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    mdw_weights, mw_weights, Algorithm, BaselineError, ConsensusState, TxEvent, TxLedger,
};
use crate::net::{random_volatile_sequence, ActionStep, AgentId, AgentSet, ChurnModel, NetError};
use crate::se::{ground_truth, LyapunovTrace, NetworkState, Observation, Observations, SeError};
use crate::spd::{SpdMatrix, DEFAULT_SPD_TOLERANCE};
use crate::topo::{random_geometric, GossipMode, TopoError, UniformScheduler};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Se(#[from] SeError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Default convergence threshold on the worst node error.
pub fn default_threshold() -> f64 {
    0.005
}

fn default_scenarios() -> usize {
    10
}

/// Iteration/round cap before a scenario is declared non-convergent.
fn default_step_cap() -> u64 {
    1_000_000
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

/// A scalar parameter or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }

    fn is_many(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatileConfig {
    pub num_agents: usize,
    pub founders: Vec<AgentId>,
    pub dimension: usize,
    pub horizon: usize,
    #[serde(default)]
    pub churn: ChurnModel,
    pub seed: u64,
    /// Agents whose per-step action class is recorded alongside the trace.
    #[serde(default)]
    pub watch: Vec<AgentId>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub nodes: OneOrMany,
    pub avg_degree: OneOrMany,
    pub dimension: OneOrMany,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_step_cap")]
    pub max_iterations: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Top-level experiment configuration, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioConfig {
    Volatile(VolatileConfig),
    Sweep(SweepConfig),
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            ScenarioConfig::Volatile(v) => v.validate(),
            ScenarioConfig::Sweep(s) => s.validate(),
        }
    }

    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            ScenarioConfig::Volatile(v) => v.out.as_ref(),
            ScenarioConfig::Sweep(s) => s.out.as_ref(),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ScenarioConfig::Volatile(v) => v.seed = seed,
            ScenarioConfig::Sweep(s) => s.seed = seed,
        }
    }
}

impl VolatileConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.num_agents < 2 {
            return Err(HarnessError::Config("num_agents must be at least 2".into()));
        }
        if self.founders.is_empty() {
            return Err(HarnessError::Config("founders must be nonempty".into()));
        }
        if self
            .founders
            .iter()
            .any(|&id| id == 0 || id > self.num_agents)
        {
            return Err(HarnessError::Config("founder id out of range".into()));
        }
        if self.dimension == 0 {
            return Err(HarnessError::Config("dimension must be positive".into()));
        }
        if !(self.churn.join_prob >= 0.0 && self.churn.join_prob <= 1.0)
            || !(self.churn.leave_prob >= 0.0 && self.churn.leave_prob <= 1.0)
        {
            return Err(HarnessError::Config(
                "churn probabilities must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let many = [
            self.nodes.is_many(),
            self.avg_degree.is_many(),
            self.dimension.is_many(),
        ];
        if many.iter().filter(|&&b| b).count() > 1 {
            return Err(HarnessError::Config(
                "at most one of nodes/avg_degree/dimension may be a list".into(),
            ));
        }
        if self.scenarios == 0 {
            return Err(HarnessError::Config("scenarios must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(HarnessError::Config("threshold must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config(
                "algorithm set must be nonempty".into(),
            ));
        }
        for cell in self.cells() {
            if cell.nodes < 2 {
                return Err(HarnessError::Config("nodes must be at least 2".into()));
            }
            if cell.dimension == 0 {
                return Err(HarnessError::Config("dimension must be positive".into()));
            }
            if cell.nodes * cell.avg_degree % 2 != 0 {
                return Err(HarnessError::Config(format!(
                    "nodes * avg_degree must be even to give an integer link count \
                     (got {} * {})",
                    cell.nodes, cell.avg_degree
                )));
            }
        }
        Ok(())
    }

    /// The grid cells, in configuration order. `param_value` is the value of
    /// the swept parameter (network size when nothing is swept).
    pub fn cells(&self) -> Vec<SweepCell> {
        let axis = if self.avg_degree.is_many() {
            1
        } else if self.dimension.is_many() {
            2
        } else {
            0
        };
        let mut cells = Vec::new();
        for &nodes in &self.nodes.values() {
            for &avg_degree in &self.avg_degree.values() {
                for &dimension in &self.dimension.values() {
                    let param_value = match axis {
                        1 => avg_degree,
                        2 => dimension,
                        _ => nodes,
                    };
                    cells.push(SweepCell {
                        nodes,
                        avg_degree,
                        dimension,
                        param_value,
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCell {
    pub nodes: usize,
    pub avg_degree: usize,
    pub dimension: usize,
    pub param_value: usize,
}

impl SweepCell {
    pub fn links(&self) -> usize {
        self.nodes * self.avg_degree / 2
    }
}

/// What one agent did at one step, as seen from the outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionClass {
    Joined,
    Interacted,
    Left,
    MemberIdle,
    NonMemberIdle,
}

/// Classifies what `id` did in `step`, given the membership before the step.
pub fn classify_action(step: &ActionStep, members_before: &AgentSet, id: AgentId) -> ActionClass {
    if step.join.contains(&id) {
        ActionClass::Joined
    } else if step.interact.contains(&id) {
        ActionClass::Interacted
    } else if step.leave.contains(&id) {
        ActionClass::Left
    } else if members_before.contains(&id) {
        ActionClass::MemberIdle
    } else {
        ActionClass::NonMemberIdle
    }
}

/// Action classes of one watched agent, indexed by step (`classes[k-1]` is
/// the class at time `k`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchedActions {
    pub agent: AgentId,
    pub classes: Vec<ActionClass>,
}

/// Output of one volatile run: the monitoring trace plus the action log of
/// any watched agents.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub trace: LyapunovTrace,
    pub actions: Vec<WatchedActions>,
}

/// Standard normal via Box–Muller; enough for observation generation.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random observations `P_i = X_iᵀ X_i`, `q_i` standard normal, with `X_i`
/// standard normal; a draw failing the positive definiteness check is
/// redrawn (probability ~0).
pub fn random_observations(
    ids: impl IntoIterator<Item = AgentId>,
    dimension: usize,
    rng: &mut ChaCha8Rng,
) -> Observations {
    let mut observations = Observations::new();
    for id in ids {
        let p = loop {
            let x: Vec<Vec<f64>> = (0..dimension)
                .map(|_| (0..dimension).map(|_| standard_normal(rng)).collect())
                .collect();
            let candidate = SpdMatrix::from_factor(&x).expect("finite standard normal entries");
            if candidate.assert_spd(DEFAULT_SPD_TOLERANCE).is_ok() {
                break candidate;
            }
        };
        let q = (0..dimension).map(|_| standard_normal(rng)).collect();
        observations.insert(id, Observation { p, q });
    }
    observations
}

/// Runs one volatile scenario: random schedule, random founder observations,
/// equalizing steps over the whole horizon, one monitoring row per step
/// (including the init row at `k = 0`).
pub fn run_volatile(config: &VolatileConfig) -> Result<RunTrace, HarnessError> {
    config.validate()?;
    let founders: AgentSet = config.founders.iter().copied().collect();
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let seq_seed = master.gen::<u64>();
    let obs_seed = master.gen::<u64>();

    let seq = random_volatile_sequence(
        config.num_agents,
        &founders,
        config.horizon,
        &config.churn,
        seq_seed,
    )?;
    let mut obs_rng = ChaCha8Rng::seed_from_u64(obs_seed);
    let observations =
        random_observations(founders.iter().copied(), config.dimension, &mut obs_rng);

    let mut state = NetworkState::init(&observations, &founders)?;
    let mut trace = LyapunovTrace::new();
    trace.record(&state);

    let mut actions: Vec<WatchedActions> = config
        .watch
        .iter()
        .map(|&agent| WatchedActions {
            agent,
            classes: Vec::with_capacity(config.horizon),
        })
        .collect();

    let mut members = founders.clone();
    for k in 1..=config.horizon {
        let step = seq.step_at(k)?;
        for watched in &mut actions {
            watched
                .classes
                .push(classify_action(step, &members, watched.agent));
        }
        members.extend(step.join.iter().copied());
        for id in &step.leave {
            members.remove(id);
        }
        state.apply_step(step)?;
        trace.record(&state);
    }
    Ok(RunTrace { trace, actions })
}

/// The per-step trace as CSV: exactly the monitoring column set, one row per
/// step, newline-terminated UTF-8.
pub fn volatile_csv(trace: &LyapunovTrace) -> String {
    let mut out = String::from("k,members,lyapunov,max_error,min_member_eigenvalue\n");
    for row in trace.rows() {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.k, row.members, row.lyapunov, row.max_error, row.min_member_eigenvalue
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Outcome of one algorithm on one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub iterations: u64,
    pub transmissions: u64,
    pub converged: bool,
}

/// One aggregated sweep cell for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param_value: usize,
    pub algorithm: Algorithm,
    pub mean_transmissions: f64,
    pub mean_iterations: f64,
    pub scenarios_converged: usize,
}

/// Runs the sweep grid. Means are over converged scenarios; a cell where a
/// scenario hit the iteration cap simply counts fewer converged scenarios.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let mut rows = Vec::new();
    for cell in config.cells() {
        let mut per_alg: Vec<(Algorithm, Vec<AlgorithmRun>)> = Algorithm::ALL
            .iter()
            .filter(|a| config.algorithms.contains(a))
            .map(|&a| (a, Vec::new()))
            .collect();
        for scenario in 0..config.scenarios {
            let seed = config.seed + scenario as u64;
            let runs = run_sweep_scenario(&cell, config, seed)?;
            for run in runs {
                if let Some((_, list)) = per_alg.iter_mut().find(|(a, _)| *a == run.algorithm) {
                    list.push(run);
                }
            }
        }
        for (algorithm, runs) in per_alg {
            let converged: Vec<&AlgorithmRun> = runs.iter().filter(|r| r.converged).collect();
            let count = converged.len();
            let (mean_transmissions, mean_iterations) = if count > 0 {
                (
                    converged
                        .iter()
                        .map(|r| r.transmissions as f64)
                        .sum::<f64>()
                        / count as f64,
                    converged.iter().map(|r| r.iterations as f64).sum::<f64>() / count as f64,
                )
            } else {
                (0.0, 0.0)
            };
            rows.push(SweepRow {
                param_value: cell.param_value,
                algorithm,
                mean_transmissions,
                mean_iterations,
                scenarios_converged: count,
            });
        }
    }
    Ok(rows)
}

/// One scenario of one cell: a fresh graph and observations, then every
/// requested algorithm on the same instance.
fn run_sweep_scenario(
    cell: &SweepCell,
    config: &SweepConfig,
    seed: u64,
) -> Result<Vec<AlgorithmRun>, HarnessError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    // sub-seeds drawn in a fixed order so the algorithm set does not shift
    // the streams
    let graph_seed = master.gen::<u64>();
    let obs_seed = master.gen::<u64>();
    let pe_seed = master.gen::<u64>();
    let ge_seed = master.gen::<u64>();

    let mut graph_rng = ChaCha8Rng::seed_from_u64(graph_seed);
    let graph = random_geometric(cell.nodes, cell.links(), &mut graph_rng)?;
    let mut obs_rng = ChaCha8Rng::seed_from_u64(obs_seed);
    let observations = random_observations(1..=cell.nodes, cell.dimension, &mut obs_rng);
    let truth = ground_truth(&observations)?;

    let mut runs = Vec::new();
    for algorithm in Algorithm::ALL {
        if !config.algorithms.contains(&algorithm) {
            continue;
        }
        let run = match algorithm {
            Algorithm::Pe => run_gossip(
                GossipMode::Pairwise,
                &graph,
                &observations,
                &truth,
                config.threshold,
                config.max_iterations,
                pe_seed,
            )?,
            Algorithm::Ge => run_gossip(
                GossipMode::Groupwise,
                &graph,
                &observations,
                &truth,
                config.threshold,
                config.max_iterations,
                ge_seed,
            )?,
            Algorithm::Mdw | Algorithm::Mw => run_consensus(
                algorithm,
                &graph,
                &observations,
                &truth,
                config.threshold,
                config.max_iterations,
            )?,
            Algorithm::Flooding => {
                let mut ledger = TxLedger::new();
                ledger.charge(
                    Algorithm::Flooding,
                    &TxEvent::FloodingTotal {
                        dim: cell.dimension,
                        nodes: cell.nodes,
                    },
                );
                AlgorithmRun {
                    algorithm,
                    iterations: 0,
                    transmissions: ledger.total(Algorithm::Flooding),
                    converged: true,
                }
            }
        };
        runs.push(run);
    }
    Ok(runs)
}

/// Pairwise or groupwise equalizing until the worst node error clears the
/// threshold; transmissions follow the fixed cost model, convergence is
/// checked every iteration.
pub fn run_gossip(
    mode: GossipMode,
    graph: &crate::topo::UGraph,
    observations: &Observations,
    truth: &[f64],
    threshold: f64,
    max_iterations: u64,
    seed: u64,
) -> Result<AlgorithmRun, HarnessError> {
    let nodes = graph.num_nodes();
    let dim = truth.len();
    let founders: AgentSet = (1..=nodes).collect();
    let mut state = NetworkState::init(observations, &founders)?;
    let (algorithm, init_event) = match mode {
        GossipMode::Pairwise => (Algorithm::Pe, TxEvent::PairwiseInit { dim, nodes }),
        GossipMode::Groupwise => (Algorithm::Ge, TxEvent::GroupwiseInit { dim, nodes }),
    };
    let mut ledger = TxLedger::new();
    ledger.charge_init(algorithm, &init_event);

    let mut scheduler = UniformScheduler::new(graph.clone(), mode, seed);
    let mut iterations = 0;
    let mut converged = state.max_member_error() < threshold;
    while !converged && iterations < max_iterations {
        let scheduled = scheduler.next_scheduled();
        state.apply_step(&scheduled.step)?;
        iterations += 1;
        let event = match mode {
            GossipMode::Pairwise => TxEvent::PairwiseIteration { dim },
            GossipMode::Groupwise => TxEvent::GroupwiseIteration {
                dim,
                neighbors: graph.degree(scheduled.initiator),
            },
        };
        ledger.charge(algorithm, &event);
        converged = state.max_member_error() < threshold;
    }
    Ok(AlgorithmRun {
        algorithm,
        iterations,
        transmissions: ledger.total(algorithm),
        converged,
    })
}

/// Synchronous weighted averaging until the worst node error clears the
/// threshold; convergence is checked after every full round.
pub fn run_consensus(
    algorithm: Algorithm,
    graph: &crate::topo::UGraph,
    observations: &Observations,
    truth: &[f64],
    threshold: f64,
    max_rounds: u64,
) -> Result<AlgorithmRun, HarnessError> {
    let nodes = graph.num_nodes();
    let dim = truth.len();
    let weights = match algorithm {
        Algorithm::Mdw => mdw_weights(graph),
        Algorithm::Mw => mw_weights(graph),
        other => panic!("run_consensus called with {other}"),
    };
    let mut state = ConsensusState::init(graph.clone(), weights, observations)?;
    let mut ledger = TxLedger::new();
    let mut rounds = 0;
    let mut converged = state.max_error(truth)? < threshold;
    while !converged && rounds < max_rounds {
        state.step()?;
        rounds += 1;
        ledger.charge(algorithm, &TxEvent::ConsensusIteration { dim, nodes });
        converged = state.max_error(truth)? < threshold;
    }
    Ok(AlgorithmRun {
        algorithm,
        iterations: rounds,
        transmissions: ledger.total(algorithm),
        converged,
    })
}

/// Sweep results as CSV, newline-terminated UTF-8.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "param_value,algorithm,mean_transmissions,mean_iterations,scenarios_converged\n",
    );
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.param_value,
            row.algorithm,
            row.mean_transmissions,
            row.mean_iterations,
            row.scenarios_converged
        )
        .expect("writing to a String cannot fail");
    }
    out
}
