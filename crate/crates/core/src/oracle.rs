//! Exact solutions for small scenarios: exhaustive state enumeration, value
//! iteration on the weighted cost `C + delta * R`, and a sweep over `delta`
//! that picks the cheapest policy meeting the energy budget.
//!
//! Cumulative energy is left out of the tabular state. The per-step risk is
//! the overshoot of one epoch's energy over the budget, and budget
//! compliance of a policy is judged from its long-run average energy.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, Environment};
use crate::error::{Error, Result};
use crate::mdp::{self, ActionSpace};
use crate::neural::argmin;

/// Default cap on enumerated states.
pub const STATE_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct StateKey {
    loc: usize,
    fwd_bits: u64,
    fwd_dest: Option<usize>,
    fwd_rate: u64,
    backlog: u32,
}

impl StateKey {
    fn of(s: &EnvState) -> Self {
        Self {
            loc: s.loc,
            fwd_bits: s.fwd_bits.to_bits(),
            fwd_dest: s.fwd_dest,
            fwd_rate: s.fwd_rate.to_bits(),
            backlog: s.backlog,
        }
    }
}

/// Energy and epoch counters zeroed.
fn canonical(s: &EnvState) -> EnvState {
    EnvState { energy: 0.0, epoch: 0, ..s.clone() }
}

/// Result of one arrival count for a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub arrivals: u32,
    pub prob: f64,
    pub next: usize,
    pub cost: f64,
    pub energy: f64,
    pub risk: f64,
}

/// Allowed action at a state with its expected signals and branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    /// Index into the action space.
    pub action: usize,
    pub cost: f64,
    pub energy: f64,
    pub risk: f64,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub states: Vec<EnvState>,
    index: HashMap<StateKey, usize>,
    pub space: ActionSpace,
    /// Per state, allowed actions in ascending index order.
    pub rows: Vec<Vec<ActionRow>>,
    pub budget: f64,
}

impl TabularMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Index of `state`, ignoring its energy and epoch counters.
    pub fn state_index(&self, state: &EnvState) -> Option<usize> {
        self.index.get(&StateKey::of(state)).copied()
    }

    /// Largest deviation of any kernel row from summing to one.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|r| (r.branches.iter().map(|b| b.prob).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted one-step signal for `(s, k)`.
    pub fn reward(&self, s: usize, k: usize, delta: f64) -> f64 {
        let r = &self.rows[s][k];
        r.cost + delta * r.risk
    }
}

/// Per-step risk used by the tabular model.
pub fn step_risk(energy_spent: f64, budget: f64) -> f64 {
    (energy_spent - budget).max(0.0)
}

pub fn build_tabular(env: &Environment) -> Result<TabularMdp> {
    build_tabular_with_limit(env, STATE_LIMIT)
}

/// Breadth-first enumeration of every state reachable from the initial one.
pub fn build_tabular_with_limit(env: &Environment, limit: usize) -> Result<TabularMdp> {
    let space = ActionSpace::for_env(env);
    let pmf = env.scenario().arrivals.pmf();
    let lambda = env.scenario().drop_penalty;
    let budget = env.budget();

    let mut states = vec![EnvState::initial()];
    let mut index = HashMap::from([(StateKey::of(&states[0]), 0usize)]);
    let mut rows: Vec<Vec<ActionRow>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let s = states[cursor].clone();
        let mask = space.mask(env, &s);
        let mut state_rows = Vec::new();
        for a in mask.allowed_indices() {
            let mut row = ActionRow { action: a, cost: 0.0, energy: 0.0, risk: 0.0, branches: Vec::new() };
            for (m, &p) in pmf.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let out = env.step_with_arrivals(&s, space.get(a), m as u32)?;
                let next = canonical(&out.next);
                let key = StateKey::of(&next);
                let j = match index.get(&key) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= limit {
                            return Err(Error::StateExplosion { count: states.len() + 1, limit });
                        }
                        states.push(next);
                        index.insert(key, states.len() - 1);
                        states.len() - 1
                    }
                };
                let cost = mdp::cost(&out, lambda);
                let risk = step_risk(out.energy_spent, budget);
                row.cost += p * cost;
                row.energy += p * out.energy_spent;
                row.risk += p * risk;
                row.branches.push(Branch { arrivals: m as u32, prob: p, next: j, cost, energy: out.energy_spent, risk });
            }
            state_rows.push(row);
        }
        rows.push(state_rows);
        cursor += 1;
    }
    Ok(TabularMdp { states, index, space, rows, budget })
}

/// Long-run behaviour of a fixed policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub horizon: usize,
    pub avg_cost: f64,
    pub avg_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub delta: f64,
    pub discount: f64,
    /// `q[s][k]` for the `k`-th allowed action of state `s`.
    pub q: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Greedy action-space index per state.
    pub policy: Vec<usize>,
    pub sweeps: usize,
    pub residual: f64,
    pub evaluation: Option<PolicyEvaluation>,
}

impl OracleSolution {
    /// Position of the greedy action within the state's allowed list.
    pub fn greedy_slot(&self, s: usize) -> usize {
        argmin(&self.q[s])
    }

    /// Writes one row per state-action pair.
    pub fn write_csv<W: Write>(&self, mdp: &TabularMdp, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "loc", "fwd_bits", "fwd_dest", "fwd_rate", "backlog", "action", "q", "greedy"])?;
        for (s, st) in mdp.states.iter().enumerate() {
            for (k, row) in mdp.rows[s].iter().enumerate() {
                w.write_record([
                    s.to_string(),
                    st.loc.to_string(),
                    st.fwd_bits.to_string(),
                    st.fwd_dest.map_or_else(|| "-".to_string(), |d| d.to_string()),
                    st.fwd_rate.to_string(),
                    st.backlog.to_string(),
                    row.action.to_string(),
                    format!("{:.17e}", self.q[s][k]),
                    u8::from(self.policy[s] == row.action).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One application of the Bellman operator for `C + delta * R`.
pub fn bellman_backup(mdp: &TabularMdp, q: &[Vec<f64>], delta: f64, discount: f64) -> Vec<Vec<f64>> {
    let values: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    mdp.rows
        .iter()
        .enumerate()
        .map(|(s, rows)| {
            rows.iter()
                .enumerate()
                .map(|(k, row)| {
                    let future: f64 = row.branches.iter().map(|b| b.prob * values[b.next]).sum();
                    mdp.reward(s, k, delta) + discount * future
                })
                .collect()
        })
        .collect()
}

pub fn sup_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest violation of the fixed-point equation.
pub fn bellman_residual(mdp: &TabularMdp, q: &[Vec<f64>], delta: f64, discount: f64) -> f64 {
    sup_distance(q, &bellman_backup(mdp, q, delta, discount))
}

/// Q-value iteration from zero until successive iterates differ by less
/// than `tol` in sup-norm.
pub fn value_iteration(mdp: &TabularMdp, delta: f64, discount: f64, tol: f64) -> Result<OracleSolution> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::Config("discount must lie in [0, 1)".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let mut q: Vec<Vec<f64>> = mdp.rows.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut sweeps = 0;
    loop {
        let next = bellman_backup(mdp, &q, delta, discount);
        sweeps += 1;
        let change = sup_distance(&next, &q);
        q = next;
        if change < tol {
            break;
        }
    }
    let residual = bellman_residual(mdp, &q, delta, discount);
    let values = q.iter().map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    let policy = q.iter().enumerate().map(|(s, row)| mdp.rows[s][argmin(row)].action).collect();
    Ok(OracleSolution { delta, discount, q, values, policy, sweeps, residual, evaluation: None })
}

/// Expected per-epoch cost and energy of `policy` averaged over `horizon`
/// epochs from the initial state, by propagating the state distribution.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &[usize], horizon: usize) -> Result<PolicyEvaluation> {
    let slots: Vec<usize> = policy
        .iter()
        .enumerate()
        .map(|(s, &a)| {
            mdp.rows[s]
                .iter()
                .position(|r| r.action == a)
                .ok_or_else(|| Error::InvalidAction(format!("action {a} not allowed in state {s}")))
        })
        .collect::<Result<_>>()?;
    let n = mdp.num_states();
    let mut dist = vec![0.0; n];
    dist[0] = 1.0;
    let (mut cost, mut energy) = (0.0, 0.0);
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for (s, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &mdp.rows[s][slots[s]];
            cost += p * row.cost;
            energy += p * row.energy;
            for b in &row.branches {
                next[b.next] += p * b.prob;
            }
        }
        dist = next;
    }
    let h = horizon.max(1) as f64;
    Ok(PolicyEvaluation { horizon, avg_cost: cost / h, avg_energy: energy / h })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub avg_cost: f64,
    pub avg_energy: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: OracleSolution,
    pub frontier: Vec<SweepPoint>,
}

/// Solves each `delta` on the grid and returns the lowest-cost policy whose
/// long-run energy meets the budget; ties go to the smaller `delta`.
pub fn cmdp_sweep(
    mdp: &TabularMdp,
    budget: f64,
    discount: f64,
    delta_grid: &[f64],
    tol: f64,
    horizon: usize,
) -> Result<SweepResult> {
    if delta_grid.is_empty() || delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("delta grid must be nonempty and strictly ascending".into()));
    }
    let mut frontier = Vec::with_capacity(delta_grid.len());
    let mut best: Option<OracleSolution> = None;
    for &delta in delta_grid {
        let mut sol = value_iteration(mdp, delta, discount, tol)?;
        let ev = evaluate_policy(mdp, &sol.policy, horizon)?;
        sol.evaluation = Some(ev);
        let feasible = ev.avg_energy <= budget;
        frontier.push(SweepPoint { delta, avg_cost: ev.avg_cost, avg_energy: ev.avg_energy, feasible });
        if feasible {
            let better = match &best {
                Some(b) => ev.avg_cost < b.evaluation.map_or(f64::INFINITY, |e| e.avg_cost),
                None => true,
            };
            if better {
                best = Some(sol);
            }
        }
    }
    match best {
        Some(best) => Ok(SweepResult { best, frontier }),
        None => {
            let summary: Vec<String> = frontier.iter().map(|p| format!("delta {}: energy {:.4}", p.delta, p.avg_energy)).collect();
            Err(Error::Infeasible(format!("no policy meets budget {budget}; frontier [{}]", summary.join(", "))))
        }
    }
}

/// `0, step, 2*step, ..., max` inclusive.
pub fn delta_grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;

    fn tiny() -> (Environment, TabularMdp) {
        let env = Environment::new(Scenario::tiny()).unwrap();
        let mdp = build_tabular(&env).unwrap();
        (env, mdp)
    }

    #[test]
    fn tiny_is_small_and_rows_sum_to_one() {
        let (_, mdp) = tiny();
        assert!(mdp.num_states() > 3 && mdp.num_states() < 500, "{}", mdp.num_states());
        assert!(mdp.max_row_error() < 1e-12);
        for rows in &mdp.rows {
            assert_eq!(rows[0].action, 0, "idle always allowed");
        }
    }

    #[test]
    fn zero_rate_is_deterministic() {
        let mut s = Scenario::tiny();
        s.arrivals.rate = 0.0;
        let env = Environment::new(s).unwrap();
        let mdp = build_tabular(&env).unwrap();
        for row in mdp.rows.iter().flatten() {
            assert_eq!(row.branches.len(), 1);
        }
    }

    #[test]
    fn state_limit_enforced() {
        let env = Environment::new(Scenario::tiny()).unwrap();
        match build_tabular_with_limit(&env, 3) {
            Err(Error::StateExplosion { limit: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_below_tolerance() {
        let (_, mdp) = tiny();
        for delta in [0.0, 1.0] {
            let sol = value_iteration(&mdp, delta, 0.9, 1e-9).unwrap();
            assert!(sol.residual < 1e-9);
        }
    }

    #[test]
    fn zero_signals_give_zero_q() {
        let (_, mut mdp) = tiny();
        for row in mdp.rows.iter_mut().flatten() {
            row.cost = 0.0;
            row.risk = 0.0;
        }
        let sol = value_iteration(&mdp, 1.0, 0.9, 1e-9).unwrap();
        assert!(sol.q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn shifted_costs_keep_policy() {
        let (_, mut mdp) = tiny();
        let base = value_iteration(&mdp, 0.0, 0.9, 1e-10).unwrap();
        for row in mdp.rows.iter_mut().flatten() {
            row.cost += 7.5;
        }
        let shifted = value_iteration(&mdp, 0.0, 0.9, 1e-10).unwrap();
        assert_eq!(base.policy, shifted.policy);
    }

    #[test]
    fn sweep_extremes() {
        let (_, mdp) = tiny();
        let grid = delta_grid(0.5, 10.0);
        assert_eq!(grid.len(), 21);
        let loose = cmdp_sweep(&mdp, 1e9, 0.9, &grid, 1e-9, 2000).unwrap();
        let zero = value_iteration(&mdp, 0.0, 0.9, 1e-9).unwrap();
        let zero_eval = evaluate_policy(&mdp, &zero.policy, 2000).unwrap();
        assert!(loose.best.evaluation.unwrap().avg_cost <= zero_eval.avg_cost + 1e-12);
        assert!(loose.frontier.iter().all(|p| p.feasible));
        match cmdp_sweep(&mdp, -1.0, 0.9, &grid, 1e-9, 2000) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_pair() {
        let (_, mdp) = tiny();
        let sol = value_iteration(&mdp, 0.0, 0.9, 1e-9).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mdp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), mdp.num_pairs() + 1);
        let greedy = text.lines().skip(1).filter(|l| l.ends_with(",1")).count();
        assert_eq!(greedy, mdp.num_states());
    }
}
