//! Experiment orchestration: training, evaluation, baselines, oracle checks
//! and weight sweeps, with CSV metrics and a JSON summary per run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::tabular::{greedy_policy, learn_dual, learn_single, TabularConfig};
use crate::agent::{AgentCheckpoint, AgentConfig, DotsAgent, EpisodeReport, IterationRecord};
use crate::baselines::{spc_calibrate, RpcPolicy, SpcPolicy, SpcTable};
use crate::env::{EnvState, Environment, Scenario};
use crate::error::{Error, Result};
use crate::oracle::{self, build_tabular, cmdp_sweep, delta_grid, sup_distance, value_iteration};
use crate::policy::{rollout, FlightStats, Policy, RolloutStats};

/// Iterations per metrics row.
pub const METRICS_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Rpc,
    Spc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    Evaluate { checkpoint: PathBuf },
    Baseline(BaselineKind),
    OracleCheck,
    Sweep,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub agent: AgentConfig,
    pub mode: Mode,
    pub seed: u64,
    pub episodes: Option<usize>,
    pub iterations: Option<usize>,
    /// Energy budget override, J per epoch.
    pub epsilon: Option<f64>,
    pub out_dir: PathBuf,
    pub replicas: usize,
    /// Flights simulated when evaluating a policy (0 skips evaluation after training).
    pub eval_flights: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            agent: AgentConfig::default(),
            mode,
            seed: 0,
            episodes: None,
            iterations: None,
            epsilon: None,
            out_dir: out_dir.into(),
            replicas: 1,
            eval_flights: 1000,
        }
    }

    fn resolved_scenario(&self) -> Result<Scenario> {
        let mut s = self.scenario.clone();
        if let Some(e) = self.epsilon {
            s.energy.budget = e;
        }
        s.validate()?;
        Ok(s)
    }

    fn resolved_agent(&self) -> Result<AgentConfig> {
        let mut a = self.agent.clone();
        if let Some(k) = self.episodes {
            a.episodes = k;
        }
        if let Some(t) = self.iterations {
            a.iterations = t;
        }
        a.validate()?;
        Ok(a)
    }
}

/// SplitMix64 step; replica `i` of master seed `s` uses `derive_seed(s, i)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Empirical distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl Cdf {
    /// Smallest value with cumulative fraction at least `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let i = self.fractions.iter().position(|&f| f >= q - 1e-12).unwrap_or(self.values.len() - 1);
        self.values[i]
    }
}

pub fn compute_cdf(samples: &[f64]) -> Result<Cdf> {
    if samples.is_empty() {
        return Err(Error::Config("cannot build a CDF from no samples".into()));
    }
    let mut values = samples.to_vec();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let fractions = (1..=values.len()).map(|i| i as f64 / n).collect();
    Ok(Cdf { values, fractions })
}

/// Flight-level summary of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub flights: usize,
    pub budget: f64,
    pub mean_delay: f64,
    pub mean_energy: f64,
    pub mean_dropped: f64,
    pub delay_p50: f64,
    pub delay_p90: f64,
    pub energy_p50: f64,
    pub energy_p90: f64,
    /// Fraction of flights whose per-epoch energy exceeds the budget.
    pub violation_rate: f64,
    /// Share of tasks processed locally, then per destination (satellite first).
    pub task_shares: Vec<f64>,
    pub delay_cdf: Cdf,
    pub energy_cdf: Cdf,
}

/// `task_counts` holds locally processed tasks followed by offloads per
/// destination.
pub fn summarize(flights: &[FlightStats], task_counts: &[u64], budget: f64) -> Result<Summary> {
    let delays: Vec<f64> = flights.iter().map(|f| f.delay).collect();
    let energies: Vec<f64> = flights.iter().map(|f| f.energy).collect();
    let delay_cdf = compute_cdf(&delays)?;
    let energy_cdf = compute_cdf(&energies)?;
    let n = flights.len() as f64;
    let total: u64 = task_counts.iter().sum();
    let task_shares = task_counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    Ok(Summary {
        flights: flights.len(),
        budget,
        mean_delay: delays.iter().sum::<f64>() / n,
        mean_energy: energies.iter().sum::<f64>() / n,
        mean_dropped: flights.iter().map(|f| f.dropped as f64).sum::<f64>() / n,
        delay_p50: delay_cdf.quantile(0.5),
        delay_p90: delay_cdf.quantile(0.9),
        energy_p50: energy_cdf.quantile(0.5),
        energy_p90: energy_cdf.quantile(0.9),
        violation_rate: energies.iter().filter(|&&e| e > budget).count() as f64 / n,
        task_shares,
        delay_cdf,
        energy_cdf,
    })
}

/// One metrics line: a window of up to [`METRICS_WINDOW`] iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    /// Global iteration at the end of the window.
    pub iteration: u64,
    pub window: usize,
    pub avg_delay: f64,
    pub avg_energy: f64,
    pub cumulative_dropped: u64,
    pub delta: f64,
    pub greedy_prob: f64,
    /// Tasks offloaded in the window per destination, satellite first.
    pub offloaded: Vec<u64>,
}

impl MetricsRow {
    pub fn header(num_bs: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "episode",
            "iteration",
            "window",
            "avg_delay",
            "avg_energy",
            "cumulative_dropped",
            "delta",
            "greedy_prob",
            "offloaded_sat",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((1..=num_bs).map(|n| format!("offloaded_bs{n}")));
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.episode.to_string(),
            self.iteration.to_string(),
            self.window.to_string(),
            self.avg_delay.to_string(),
            self.avg_energy.to_string(),
            self.cumulative_dropped.to_string(),
            self.delta.to_string(),
            self.greedy_prob.to_string(),
        ];
        r.extend(self.offloaded.iter().map(u64::to_string));
        r
    }
}

/// Accumulates iteration records into windowed rows.
struct WindowAccumulator {
    num_dest: usize,
    count: usize,
    delay: f64,
    energy: f64,
    dropped: u64,
    offloaded: Vec<u64>,
    last: Option<IterationRecord>,
}

impl WindowAccumulator {
    fn new(num_dest: usize) -> Self {
        Self { num_dest, count: 0, delay: 0.0, energy: 0.0, dropped: 0, offloaded: vec![0; num_dest], last: None }
    }

    fn push(&mut self, r: &IterationRecord) -> Option<MetricsRow> {
        self.count += 1;
        self.delay += r.delay;
        self.energy += r.energy_spent;
        self.dropped += r.dropped as u64;
        if let Some(d) = r.dest {
            self.offloaded[d] += r.offloaded as u64;
        }
        self.last = Some(r.clone());
        if self.count == METRICS_WINDOW {
            self.flush()
        } else {
            None
        }
    }

    fn flush(&mut self) -> Option<MetricsRow> {
        let last = self.last.as_ref()?;
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        let row = MetricsRow {
            episode: last.episode,
            iteration: last.iteration,
            window: self.count,
            avg_delay: self.delay / n,
            avg_energy: self.energy / n,
            cumulative_dropped: self.dropped,
            delta: last.delta,
            greedy_prob: last.greedy_prob,
            offloaded: std::mem::replace(&mut self.offloaded, vec![0; self.num_dest]),
        };
        self.count = 0;
        self.delay = 0.0;
        self.energy = 0.0;
        Some(row)
    }
}

/// Flights and totals of an episodic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub episodes: usize,
    pub episode_len: usize,
    pub flights: Vec<FlightStats>,
    /// Per-episode mean delay and per-epoch energy.
    pub episode_delay: Vec<f64>,
    pub episode_energy: Vec<f64>,
    pub mean_delay: f64,
    pub mean_energy: f64,
    /// Mean per-epoch delay plus drop penalties.
    pub mean_cost: f64,
    /// Locally processed tasks, then offloads per destination.
    pub task_counts: Vec<u64>,
}

/// Runs `policy` in episodes of `episode_len` epochs, each from the initial
/// state, until at least `min_flights` complete flights are recorded.
pub fn evaluate_episodic(
    env: &Environment,
    policy: &mut dyn Policy,
    episode_len: usize,
    min_flights: usize,
    seed: u64,
) -> Result<Evaluation> {
    let per_episode = episode_len / env.num_waypoints();
    if per_episode == 0 {
        return Err(Error::Config(format!(
            "episode length {episode_len} is shorter than one flight ({} epochs)",
            env.num_waypoints()
        )));
    }
    let episodes = min_flights.max(1).div_ceil(per_episode);
    let mut arrivals = ChaCha8Rng::seed_from_u64(seed);
    let mut choices = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut eval = Evaluation {
        episodes,
        episode_len,
        flights: Vec::new(),
        episode_delay: Vec::with_capacity(episodes),
        episode_energy: Vec::with_capacity(episodes),
        mean_delay: 0.0,
        mean_energy: 0.0,
        mean_cost: 0.0,
        task_counts: vec![0; env.num_bs() + 2],
    };
    for _ in 0..episodes {
        let stats: RolloutStats = rollout(env, policy, EnvState::initial(), episode_len, &mut arrivals, &mut choices)?;
        eval.episode_delay.push(stats.mean_delay);
        eval.episode_energy.push(stats.mean_energy);
        eval.mean_cost += stats.mean_cost / episodes as f64;
        eval.flights.extend(stats.flights);
        eval.task_counts[0] += stats.processed_locally;
        for (d, c) in stats.offloaded.iter().enumerate() {
            eval.task_counts[d + 1] += c;
        }
    }
    eval.mean_delay = eval.episode_delay.iter().sum::<f64>() / episodes as f64;
    eval.mean_energy = eval.episode_energy.iter().sum::<f64>() / episodes as f64;
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub episodes: usize,
    pub iterations: usize,
    pub budget: f64,
    pub final_delta: f64,
    /// Means over the last (up to) ten training episodes.
    pub tail_delay: f64,
    pub tail_energy: f64,
    pub tail_cost: f64,
    /// Fraction of episodes whose average energy exceeded the budget.
    pub episode_violation_rate: f64,
    pub evaluation: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub budget: f64,
    pub episodes: usize,
    pub episode_len: usize,
    pub mean_delay: f64,
    pub mean_energy: f64,
    pub flights: Summary,
    pub spc_intensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckSummary {
    pub states: usize,
    pub pairs: usize,
    pub max_row_error: f64,
    pub discount: f64,
    pub checks: Vec<OracleCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub delta: f64,
    pub residual: f64,
    pub learned_error: f64,
    pub policies_match: bool,
    pub single_matches_dual: bool,
    pub oracle_cost: f64,
    pub rpc_cost: f64,
    pub spc_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub budget: f64,
    pub best_delta: f64,
    pub best_cost: f64,
    pub best_energy: f64,
    pub frontier: Vec<oracle::SweepPoint>,
}

/// What a run produced, per replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunReport {
    Train(TrainSummary),
    Policy(PolicySummary),
    OracleCheck(OracleCheckSummary),
    Sweep(SweepSummary),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn write_flights(path: &Path, flights: &[FlightStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["flight", "delay", "energy", "dropped"])?;
    for (i, f) in flights.iter().enumerate() {
        w.write_record([i.to_string(), f.delay.to_string(), f.energy.to_string(), f.dropped.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_episodes(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "episode",
        "avg_delay",
        "avg_energy",
        "avg_cost",
        "dropped",
        "delta",
        "next_delta",
        "greedy_prob",
        "mean_cost_loss",
        "mean_risk_loss",
    ])?;
    for r in reports {
        w.write_record([
            r.episode.to_string(),
            r.avg_delay.to_string(),
            r.avg_energy.to_string(),
            r.avg_cost.to_string(),
            r.dropped.to_string(),
            r.delta.to_string(),
            r.next_delta.to_string(),
            r.greedy_prob.to_string(),
            r.mean_cost_loss.to_string(),
            r.mean_risk_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains one agent and writes `metrics.csv`, `episodes.csv`,
/// `checkpoint.json`, optionally `flights.csv`, and `summary.json`.
pub fn train(env: &Environment, config: &AgentConfig, seed: u64, eval_flights: usize, out: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(out)?;
    let mut agent = DotsAgent::new(env, config.clone(), seed)?;
    let mut metrics = csv::Writer::from_path(out.join("metrics.csv"))?;
    metrics.write_record(MetricsRow::header(env.num_bs()))?;
    let mut window = WindowAccumulator::new(env.num_bs() + 1);
    let mut write_err: Option<csv::Error> = None;
    let mut emit = |row: Option<MetricsRow>, w: &mut csv::Writer<File>| {
        if let Some(row) = row {
            if let Err(e) = w.write_record(row.record()) {
                write_err.get_or_insert(e);
            }
        }
    };
    let mut reports = Vec::with_capacity(config.episodes);
    for _ in 0..config.episodes {
        let report = agent.run_episode(env, &mut |r| {
            let row = window.push(r);
            emit(row, &mut metrics);
        })?;
        let row = window.flush();
        emit(row, &mut metrics);
        reports.push(report);
    }
    if let Some(e) = write_err {
        return Err(e.into());
    }
    metrics.flush()?;
    write_episodes(&out.join("episodes.csv"), &reports)?;
    write_json(&out.join("checkpoint.json"), &agent.checkpoint())?;

    let evaluation = if eval_flights > 0 {
        let eval = evaluate_episodic(env, &mut agent.greedy_policy(), config.iterations, eval_flights, derive_seed(seed, 1 << 32))?;
        write_flights(&out.join("flights.csv"), &eval.flights)?;
        Some(summarize(&eval.flights, &eval.task_counts, env.budget())?)
    } else {
        None
    };

    let tail = &reports[reports.len().saturating_sub(10)..];
    let tn = tail.len() as f64;
    let summary = TrainSummary {
        seed,
        scenario_fingerprint: env.scenario().fingerprint(),
        episodes: config.episodes,
        iterations: config.iterations,
        budget: env.budget(),
        final_delta: agent.delta(),
        tail_delay: tail.iter().map(|r| r.avg_delay).sum::<f64>() / tn,
        tail_energy: tail.iter().map(|r| r.avg_energy).sum::<f64>() / tn,
        tail_cost: tail.iter().map(|r| r.avg_cost).sum::<f64>() / tn,
        episode_violation_rate: reports.iter().filter(|r| r.avg_energy > env.budget()).count() as f64
            / reports.len() as f64,
        evaluation,
    };
    write_json(&out.join("summary.json"), &RunReport::Train(summary.clone()))?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn policy_run(
    env: &Environment,
    name: &str,
    policy: &mut dyn Policy,
    episode_len: usize,
    flights: usize,
    seed: u64,
    spc_intensity: Option<f64>,
    out: &Path,
) -> Result<PolicySummary> {
    let eval = evaluate_episodic(env, policy, episode_len, flights, seed)?;
    write_flights(&out.join("flights.csv"), &eval.flights)?;
    let summary = PolicySummary {
        policy: name.to_string(),
        seed,
        scenario_fingerprint: env.scenario().fingerprint(),
        budget: env.budget(),
        episodes: eval.episodes,
        episode_len,
        mean_delay: eval.mean_delay,
        mean_energy: eval.mean_energy,
        flights: summarize(&eval.flights, &eval.task_counts, env.budget())?,
        spc_intensity,
    };
    write_json(&out.join("summary.json"), &RunReport::Policy(summary.clone()))?;
    Ok(summary)
}

/// Evaluates a saved agent greedily.
pub fn evaluate_checkpoint(env: &Environment, checkpoint: &Path, flights: usize, seed: u64, out: &Path) -> Result<PolicySummary> {
    fs::create_dir_all(out)?;
    let ck: AgentCheckpoint = serde_json::from_reader(std::io::BufReader::new(File::open(checkpoint)?))?;
    if ck.scenario_fingerprint != env.scenario().fingerprint() {
        return Err(Error::Config("checkpoint was trained on a different scenario".into()));
    }
    let episode_len = ck.config.iterations;
    let agent = DotsAgent::from_checkpoint(env, ck)?;
    policy_run(env, "dots", &mut agent.greedy_policy(), episode_len, flights, seed, None, out)
}

/// Calibrates (for SPC) and evaluates a baseline.
pub fn run_baseline(env: &Environment, kind: BaselineKind, episode_len: usize, flights: usize, seed: u64, out: &Path) -> Result<PolicySummary> {
    fs::create_dir_all(out)?;
    match kind {
        BaselineKind::Rpc => policy_run(env, "rpc", &mut RpcPolicy, episode_len, flights, seed, None, out),
        BaselineKind::Spc => {
            let table: SpcTable = spc_calibrate(env, env.budget(), flights, derive_seed(seed, 7))?;
            write_json(&out.join("spc_table.json"), &table)?;
            let p = table.intensity;
            policy_run(env, "spc", &mut SpcPolicy { table: &table }, episode_len, flights, seed, Some(p), out)
        }
    }
}

/// Discount and tolerance of the oracle checks.
pub const ORACLE_DISCOUNT: f64 = 0.9;
pub const ORACLE_TOL: f64 = 1e-9;
/// Sup-norm tolerance for learned tables.
pub const LEARNED_TOL: f64 = 1e-3;
/// Sweeps of the tabular learner in the oracle check.
pub const ORACLE_CHECK_SWEEPS: usize = 1_000_000;
const ORACLE_HORIZON: usize = 20_000;

/// Solves the scenario exactly for `delta` in {0, 1}, checks the tabular
/// learners against the solution, and compares long-run cost with RPC and
/// SPC. Fails with [`Error::Check`] if any check does not hold.
pub fn oracle_check(env: &Environment, seed: u64, sweeps: usize, out: &Path) -> Result<OracleCheckSummary> {
    fs::create_dir_all(out)?;
    let mdp = build_tabular(env)?;
    let mut checks = Vec::new();
    let rpc = evaluate_episodic(env, &mut RpcPolicy, ORACLE_HORIZON, 1, derive_seed(seed, 11))?;
    let spc_table = spc_calibrate(env, env.budget(), 1000, derive_seed(seed, 12))?;
    let spc = evaluate_episodic(env, &mut SpcPolicy { table: &spc_table }, ORACLE_HORIZON, 1, derive_seed(seed, 13))?;
    let (rpc_cost, spc_cost) = (rpc.mean_cost, spc.mean_cost);
    for delta in [0.0, 1.0] {
        let sol = value_iteration(&mdp, delta, ORACLE_DISCOUNT, ORACLE_TOL)?;
        let file = File::create(out.join(format!("oracle_q_delta{delta}.csv")))?;
        sol.write_csv(&mdp, BufWriter::new(file))?;
        let cfg = TabularConfig { discount: ORACLE_DISCOUNT, delta, sweeps, ..Default::default() };
        let dual = learn_dual(env, &mdp, &cfg, seed)?;
        let combined = dual.combined(delta);
        let single = learn_single(env, &mdp, &cfg, seed)?;
        let ev = oracle::evaluate_policy(&mdp, &sol.policy, ORACLE_HORIZON)?;
        checks.push(OracleCheck {
            delta,
            residual: sol.residual,
            learned_error: sup_distance(&combined, &sol.q),
            policies_match: greedy_policy(&mdp, &combined) == sol.policy,
            single_matches_dual: greedy_policy(&mdp, &single) == greedy_policy(&mdp, &combined),
            oracle_cost: ev.avg_cost,
            rpc_cost,
            spc_cost,
        });
    }
    let passed = mdp.max_row_error() < 1e-12
        && checks.iter().all(|c| {
            c.residual < ORACLE_TOL
                && c.learned_error < LEARNED_TOL
                && c.policies_match
                && c.single_matches_dual
                && c.oracle_cost <= c.rpc_cost
                && c.oracle_cost <= c.spc_cost
        });
    let summary = OracleCheckSummary {
        states: mdp.num_states(),
        pairs: mdp.num_pairs(),
        max_row_error: mdp.max_row_error(),
        discount: ORACLE_DISCOUNT,
        checks,
        passed,
    };
    write_json(&out.join("summary.json"), &RunReport::OracleCheck(summary.clone()))?;
    if !passed {
        return Err(Error::Check(format!("oracle check failed; see {}", out.join("summary.json").display())));
    }
    Ok(summary)
}

/// Exact weight sweep over `0, 0.5, ..., 10`.
pub fn sweep(env: &Environment, out: &Path) -> Result<SweepSummary> {
    fs::create_dir_all(out)?;
    let mdp = build_tabular(env)?;
    let result = cmdp_sweep(&mdp, env.budget(), ORACLE_DISCOUNT, &delta_grid(0.5, 10.0), ORACLE_TOL, ORACLE_HORIZON)?;
    let mut w = csv::Writer::from_path(out.join("frontier.csv"))?;
    w.write_record(["delta", "avg_cost", "avg_energy", "feasible"])?;
    for p in &result.frontier {
        w.write_record([p.delta.to_string(), p.avg_cost.to_string(), p.avg_energy.to_string(), p.feasible.to_string()])?;
    }
    w.flush()?;
    let ev = result.best.evaluation.expect("sweep evaluates every point");
    let summary = SweepSummary {
        budget: env.budget(),
        best_delta: result.best.delta,
        best_cost: ev.avg_cost,
        best_energy: ev.avg_energy,
        frontier: result.frontier,
    };
    write_json(&out.join("summary.json"), &RunReport::Sweep(summary.clone()))?;
    Ok(summary)
}

fn run_replica(spec: &ExperimentSpec, env: &Environment, seed: u64, out: &Path) -> Result<RunReport> {
    match &spec.mode {
        Mode::Train => {
            let cfg = spec.resolved_agent()?;
            train(env, &cfg, seed, spec.eval_flights, out).map(RunReport::Train)
        }
        Mode::Evaluate { checkpoint } => {
            evaluate_checkpoint(env, checkpoint, spec.eval_flights.max(1), seed, out).map(RunReport::Policy)
        }
        Mode::Baseline(kind) => {
            let cfg = spec.resolved_agent()?;
            run_baseline(env, *kind, cfg.iterations, spec.eval_flights.max(1), seed, out).map(RunReport::Policy)
        }
        Mode::OracleCheck => oracle_check(env, seed, ORACLE_CHECK_SWEEPS, out).map(RunReport::OracleCheck),
        Mode::Sweep => sweep(env, out).map(RunReport::Sweep),
    }
}

/// Runs every replica (in parallel when there are several). A single
/// replica writes straight into the output directory; otherwise replica
/// `i` writes into `replica-i/` and a `replicas.json` lists all reports.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunReport>> {
    if spec.replicas == 0 {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    let scenario = spec.resolved_scenario()?;
    let env = Environment::new(scenario)?;
    fs::create_dir_all(&spec.out_dir)?;
    if spec.replicas == 1 {
        let seed = derive_seed(spec.seed, 0);
        return Ok(vec![run_replica(spec, &env, seed, &spec.out_dir)?]);
    }
    let reports = (0..spec.replicas)
        .into_par_iter()
        .map(|i| {
            let dir = spec.out_dir.join(format!("replica-{i}"));
            run_replica(spec, &env, derive_seed(spec.seed, i as u64), &dir)
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&spec.out_dir.join("replicas.json"), &reports)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        let c = compute_cdf(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.fractions, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let one = compute_cdf(&[4.2]).unwrap();
        assert_eq!((one.values[0], one.fractions[0]), (4.2, 1.0));
        assert!(compute_cdf(&[]).is_err());
    }

    #[test]
    fn zero_energy_never_violates() {
        let flights = vec![FlightStats { delay: 1.0, energy: 0.0, dropped: 0 }; 5];
        let s = summarize(&flights, &[3, 1, 0], 0.0).unwrap();
        assert_eq!(s.violation_rate, 0.0);
        assert!((s.task_shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replica_seeds_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }

    #[test]
    fn window_rows_cover_every_iteration() {
        let mut acc = WindowAccumulator::new(2);
        let mut rows = Vec::new();
        for i in 0..250u64 {
            let r = IterationRecord {
                episode: 0,
                step: i as usize,
                iteration: i + 1,
                action: 0,
                dest: Some(1),
                offloaded: 1,
                delay: i as f64,
                energy_spent: 1.0,
                dropped: 0,
                cost: 0.0,
                risk: 0.0,
                delta: 0.0,
                greedy_prob: 0.0,
                cost_loss: None,
                risk_loss: None,
            };
            rows.extend(acc.push(&r));
        }
        rows.extend(acc.flush());
        assert_eq!(rows.iter().map(|r| r.window).collect::<Vec<_>>(), vec![100, 100, 50]);
        assert_eq!(rows[0].avg_delay, 49.5);
        assert_eq!(rows[2].offloaded, vec![0, 50]);
        assert!(acc.flush().is_none());
    }
}
