//! Acceptance suite. Each test covers one criterion and prints a single
//! `PASS`/`FAIL` line; run with `--nocapture` to see them.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use dots_core::agent::tabular::{greedy_policy, learn_dual, learn_single, TabularConfig};
use dots_core::agent::{choose_action, greedy_index, AgentConfig, DotsAgent, ExploreSchedule};
use dots_core::baselines::{spc_calibrate, RpcPolicy, SpcPolicy};
use dots_core::env::model;
use dots_core::env::params::noise_power;
use dots_core::env::{ArrivalProcess, EnvState, Environment, PathlossCoeffs, RadioParams, Scenario, StepOutcome, TaskClass, SATELLITE};
use dots_core::harness::{evaluate_episodic, train};
use dots_core::mdp::{self, Action, ActionMask, ActionSpace};
use dots_core::neural::{DenseNet, FILTER_OFFSET};
use dots_core::oracle::{build_tabular, sup_distance, value_iteration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} {name} failed: {detail}");
}

fn close(got: f64, want: f64) -> bool {
    got == want || (got - want).abs() <= 1e-12 * want.abs().max(got.abs())
}

#[test]
fn criterion_01_formulas() {
    let start = Instant::now();
    let task = TaskClass::default();
    let radio = RadioParams::default();
    let pl = PathlossCoeffs::default();
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut check = |label: &str, got: f64, want: f64| {
        checked += 1;
        if !close(got, want) {
            failures.push(format!("{label}: got {got}, want {want}"));
        }
    };

    // Pathloss.
    check("pathloss at the reference elevation", model::bs_pathloss(&pl, 1.0, pl.theta0).unwrap(), 20.7);
    let want = 10.0 * 3.04 * 2.0 + (-23.29) * (5.74 + 3.61) * ((-3.61 - 5.74) / 4.14f64).exp() + 20.7;
    let got = model::bs_pathloss(&pl, 100.0, 5.74).unwrap();
    check("pathloss at 100 m", got, want);
    check("pathloss near 58.7 dB", (got - 58.7).abs().min(0.05), (got - 58.7).abs());

    // Rates.
    let sigma = 10f64.powf((-174.0 + 10.0 * 3e6f64.log10() - 30.0) / 10.0);
    check("noise power", noise_power(-174.0, 3e6), sigma);
    let want = 3e6 * (1.0 + 1.6 * 10f64.powf(-5.87) / sigma).log2();
    check("bs rate at 58.7 dB", model::bs_rate_for_pathloss(&radio, 58.7), want);
    check("bs rate with unbounded loss", model::bs_rate_for_pathloss(&radio, 1e4), 0.0);
    check("shannon rate at zero snr", model::shannon_rate(2e6, 0.0), 0.0);
    let sat = model::sat_rate(&radio);
    check("satellite rate at 15 dB", sat, 2e6 * (1.0 + 10f64.powf(1.5)).log2());
    check("satellite rate near 10.06 Mb/s", ((sat - 10.06e6).abs() / 10.06e6).min(1e-3), (sat - 10.06e6).abs() / 10.06e6);

    // Offload compute delay.
    check("7 tasks at a base station", model::offload_compute_delay(&task, 1e10, 7), 0.7);
    check("no tasks", model::offload_compute_delay(&task, 1e10, 0), 0.0);
    check("2 tasks at the satellite", model::offload_compute_delay(&task, 5e9, 2), 0.4);

    // Queue.
    let q = model::queue_update(5, 2, 3, 1, 20).unwrap();
    check("queue waiting", q.queued as f64, 2.0);
    check("queue next", q.next_backlog as f64, 5.0);
    check("queue dropped", q.dropped as f64, 0.0);
    let q = model::queue_update(0, 0, 0, 1, 20).unwrap();
    check("empty queue", (q.queued + q.next_backlog + q.dropped) as f64, 0.0);
    let q = model::queue_update(20, 0, 5, 1, 20).unwrap();
    check("overflow waiting", q.queued as f64, 19.0);
    check("overflow next", q.next_backlog as f64, 20.0);
    check("overflow dropped", q.dropped as f64, 4.0);

    // Local delay.
    check("local delay 5/2", model::local_delay(&task, 1e9, 1.0, 1, 5, 2), 3.0);
    check("local delay empty", model::local_delay(&task, 1e9, 1.0, 1, 0, 0), 0.0);
    check("local delay one task", model::local_delay(&task, 1e9, 1.0, 1, 1, 0), 1.0);

    // Transmission delay.
    check("satellite tx delay", model::tx_delay(&task, 1, sat, 6.44e-3), 4e7 / sat + 6.44e-3);
    check("satellite tx delay near 3.98 s", (model::tx_delay(&task, 1, sat, 6.44e-3) - 3.983).abs().min(0.01), (model::tx_delay(&task, 1, sat, 6.44e-3) - 3.983).abs());
    check("no transmission", model::tx_delay(&task, 0, 52e6, 0.0), 0.0);

    // Feasible counts.
    check("feasible count at 52 Mb/s", model::feasible_beta_max_const(&task, 52e6, 3, 1.0, 7) as f64, 3.0);
    check("nothing fits", model::feasible_beta_max_const(&task, 1e7, 3, 1.0, 7) as f64, 0.0);

    // Energy.
    check("satellite transmit energy", model::comm_energy(&task, 5.0, 1, sat), 5.0 * 4e7 / sat);
    check("no transmit energy", model::comm_energy(&task, 1.6, 0, 52e6), 0.0);
    check("bs transmit energy", model::comm_energy(&task, 1.6, 3, 52e6), 1.6 * 3.0 * 4e7 / 52e6);
    check("compute energy", model::comp_energy(&task, 1e9, 1.0, 1e-28, 4), 0.1);
    check("no compute energy", model::comp_energy(&task, 1e9, 1.0, 1e-28, 0), 0.0);

    // One epoch.
    let env = Environment::new(Scenario::default()).unwrap();
    let idle = env.step_with_arrivals(&EnvState::initial(), Action::Idle, 0).unwrap();
    check("idle delay", idle.epoch_delay, 0.0);
    check("idle energy", idle.energy_spent, 0.0);
    check("idle advances", (idle.next.loc + idle.next.epoch as usize) as f64, 2.0);
    let d = model::offload_compute_delay(&task, 1e10, 2) + model::local_delay(&task, 1e9, 1.0, 1, 5, 2) + model::tx_delay(&task, 2, 52e6, 0.0);
    check("epoch delay at 52 Mb/s", d, 0.2 + 3.0 + 2.0 * 4e7 / 52e6);
    let backlog = EnvState { backlog: 1, ..EnvState::initial() };
    let out = env.step_with_arrivals(&backlog, Action::Offload { dest: SATELLITE, count: 1 }, 0).unwrap();
    check("satellite epoch includes propagation", out.epoch_delay, 0.2 + 1.0 + 4e7 / env.sat_rate() + 6.44e-3);

    // Actions and mask.
    check("action count", ActionSpace::new(5, 7).len() as f64, 43.0);
    check("action count without base stations", ActionSpace::new(0, 1).len() as f64, 2.0);
    let space = ActionSpace::for_env(&env);
    let busy = EnvState { backlog: 5, fwd_bits: 1.0, fwd_dest: Some(SATELLITE), fwd_rate: 1.0, ..EnvState::initial() };
    check("busy radio allows only idle", space.mask(&env, &busy).allowed_indices().len() as f64, 1.0);
    check("empty queue allows only idle", space.mask(&env, &EnvState::initial()).allowed_indices().len() as f64, 1.0);

    // Cost and risk.
    let outcome = StepOutcome { epoch_delay: 3.354, dropped: 4, ..idle.clone() };
    check("cost with drops", mdp::cost(&outcome, 10.0), 43.354);
    check("cost without drops", mdp::cost(&StepOutcome { dropped: 0, ..outcome }, 10.0), 3.354);
    check("risk overshoot", mdp::risk(&EnvState { energy: 120.0, epoch: 2, ..EnvState::initial() }, 55.0), 10.0);
    check("risk within budget", mdp::risk(&EnvState { energy: 110.0, epoch: 2, ..EnvState::initial() }, 55.0), 0.0);

    // Arrivals.
    let process = ArrivalProcess { rate: 2.0, truncation: 20 };
    let mut p = (-2.0f64).exp();
    let (mut mean, mut mass) = (0.0, 0.0);
    for k in 0..20 {
        mean += k as f64 * p;
        mass += p;
        p *= 2.0 / (k + 1) as f64;
    }
    mean += 20.0 * (1.0 - mass);
    check("arrival mean", process.mean(), mean);
    let sampler = process.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let empirical = (0..n).map(|_| sampler.sample(&mut rng) as f64).sum::<f64>() / n as f64;
    check("empirical arrival mean within 1%", ((empirical - mean).abs() / mean).min(0.01), (empirical - mean).abs() / mean);
    let none = ArrivalProcess { rate: 0.0, truncation: 5 }.sampler();
    check("no arrivals", (0..1000).map(|_| none.sample(&mut rng)).sum::<u32>() as f64, 0.0);

    let elapsed = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && elapsed < 1.0;
    verdict(1, "formulas", ok, &format!("{checked} checks, {} failed, {elapsed:.2} s {failures:?}", failures.len()));
}

/// Central-difference gradient of the TD loss.
fn numeric_grad(net: &DenseNet, xs: &[Vec<f64>], acts: &[usize], ys: &[f64], l2: f64) -> Vec<f64> {
    let h = 1e-5;
    let base = net.params();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p).unwrap();
        let up = probe.td_loss_and_grad(xs, acts, ys, l2).unwrap().0;
        p[i] = base[i] - h;
        probe.set_params(&p).unwrap();
        let down = probe.td_loss_and_grad(xs, acts, ys, l2).unwrap().0;
        out.push((up - down) / (2.0 * h));
    }
    out
}

#[test]
fn criterion_02_gradients() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let probes = 150;
    let mut worst: f64 = 0.0;
    for probe in 0..probes {
        let sizes = [rng.random_range(2..6), rng.random_range(3..9), rng.random_range(3..9), rng.random_range(2..5)];
        let mut net = DenseNet::init(&sizes, &mut rng).unwrap();
        for layer in &mut net.layers {
            layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let batch = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let acts: Vec<usize> = (0..batch).map(|_| rng.random_range(0..sizes[3])).collect();
        let ys: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
        let l2 = if probe % 2 == 0 { 0.0 } else { 1e-3 };
        let analytic = net.td_loss_and_grad(&xs, &acts, &ys, l2).unwrap().1.flat();
        let numeric = numeric_grad(&net, &xs, &acts, &ys, l2);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        worst = worst.max(if scale < 1e-12 { norm(&diff) } else { norm(&diff) / scale });
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(2, "gradient oracle", worst < 1e-4 && elapsed < 10.0, &format!("{probes} probes, worst relative error {worst:.2e}, {elapsed:.2} s"));
}

const ORACLE_SWEEPS: usize = 1_000_000;
const ORACLE_DISCOUNT: f64 = 0.9;

#[test]
fn criterion_03_tabular_oracle() {
    let start = Instant::now();
    let env = Environment::new(Scenario::tiny()).unwrap();
    let mdp = build_tabular(&env).unwrap();
    let mut ok = true;
    let mut detail = format!("{} states", mdp.num_states());
    let mut policies = Vec::new();
    for delta in [0.0, 1.0] {
        let exact = value_iteration(&mdp, delta, ORACLE_DISCOUNT, 1e-10).unwrap();
        let cfg = TabularConfig { discount: ORACLE_DISCOUNT, delta, sweeps: ORACLE_SWEEPS, ..Default::default() };
        let learned = learn_dual(&env, &mdp, &cfg, 5).unwrap().combined(delta);
        let err = sup_distance(&learned, &exact.q);
        let same = greedy_policy(&mdp, &learned) == exact.policy;
        ok &= err < 1e-3 && same;
        detail += &format!("; delta {delta}: sup error {err:.2e}, policies match {same}");
        policies.push(exact.policy);
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 120.0;
    detail += &format!("; weight changes policy {}; {elapsed:.1} s", policies[0] != policies[1]);
    verdict(3, "tabular oracle", ok, &detail);
}

#[test]
fn criterion_04_reward_equivalence() {
    let env = Environment::new(Scenario::tiny()).unwrap();
    let mdp = build_tabular(&env).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for delta in [0.0, 0.5, 1.0, 3.0] {
        let cfg = TabularConfig { discount: ORACLE_DISCOUNT, delta, sweeps: 200_000, ..Default::default() };
        let dual = greedy_policy(&mdp, &learn_dual(&env, &mdp, &cfg, 9).unwrap().combined(delta));
        let single = greedy_policy(&mdp, &learn_single(&env, &mdp, &cfg, 9).unwrap());
        let differ = dual.iter().zip(&single).filter(|(a, b)| a != b).count();
        ok &= differ == 0;
        detail += &format!("delta {delta}: {differ} differing states; ");
    }
    verdict(4, "reward equivalence", ok, detail.trim_end_matches("; "));
}

/// Budgets at which the constraint is checked; the middle one is used for
/// the delay comparison.
const DESK_BUDGETS: [f64; 3] = [0.15, 0.2, 0.3];
const DELAY_BUDGET: f64 = 0.15;
const DELAY_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn desk_agent() -> AgentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../agents/desk.toml");
    let text = std::fs::read_to_string(&path).expect("agents/desk.toml");
    let cfg: AgentConfig = toml::from_str(&text).expect("desk agent config");
    assert_eq!((cfg.episodes, cfg.iterations), (40, 2000));
    cfg
}

#[derive(Debug, Clone, Copy)]
struct DeskRun {
    budget: f64,
    seed: u64,
    dots_delay: f64,
    dots_energy: f64,
    spc_delay: f64,
    spc_energy: f64,
    rpc_delay: f64,
    rpc_energy: f64,
}

fn desk_run(budget: f64, seed: u64) -> DeskRun {
    let env = Environment::new(Scenario::desk().with_budget(budget)).unwrap();
    let cfg = desk_agent();
    let t = cfg.iterations;
    let mut agent = DotsAgent::new(&env, cfg, seed).unwrap();
    let reports = agent.run(&env, &mut |_| {}, &mut |_| {}).unwrap();
    let tail = &reports[reports.len() - 10..];
    // Satellite energy comes in large lumps, so the baselines need long
    // samples: 100 episodes' worth of flights.
    let flights = 100 * (t / env.num_waypoints());
    let table = spc_calibrate(&env, budget, flights, seed).unwrap();
    let spc = evaluate_episodic(&env, &mut SpcPolicy { table: &table }, t, flights, seed + 1000).unwrap();
    let rpc = evaluate_episodic(&env, &mut RpcPolicy, t, flights, seed + 1000).unwrap();
    DeskRun {
        budget,
        seed,
        dots_delay: tail.iter().map(|r| r.avg_delay).sum::<f64>() / 10.0,
        dots_energy: tail.iter().map(|r| r.avg_energy).sum::<f64>() / 10.0,
        spc_delay: spc.mean_delay,
        spc_energy: spc.mean_energy,
        rpc_delay: rpc.mean_delay,
        rpc_energy: rpc.mean_energy,
    }
}

/// Every desk run, computed once and shared by criteria 5 and 6.
fn desk_runs() -> &'static (Vec<DeskRun>, f64) {
    static RUNS: OnceLock<(Vec<DeskRun>, f64)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let mut runs: Vec<DeskRun> = DELAY_SEEDS.iter().map(|&s| desk_run(DELAY_BUDGET, s)).collect();
        for &b in DESK_BUDGETS.iter().filter(|&&b| b != DELAY_BUDGET) {
            runs.push(desk_run(b, DELAY_SEEDS[0]));
        }
        (runs, start.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_05_constraint() {
    let (runs, elapsed) = desk_runs();
    let mut ok = *elapsed < 1800.0;
    let mut detail = String::new();
    for &b in &DESK_BUDGETS {
        let r = runs.iter().find(|r| r.budget == b && r.seed == DELAY_SEEDS[0]).unwrap();
        let good = r.dots_energy <= 1.05 * b && r.spc_energy <= 1.05 * b && r.rpc_energy > b;
        ok &= good;
        detail += &format!(
            "eps {b}: dots {:.4} spc {:.4} rpc {:.4}; ",
            r.dots_energy, r.spc_energy, r.rpc_energy
        );
    }
    detail += &format!("{elapsed:.0} s");
    verdict(5, "constraint satisfaction", ok, &detail);
}

#[test]
fn criterion_06_delay_ordering() {
    let (runs, _) = desk_runs();
    let at: Vec<&DeskRun> = runs.iter().filter(|r| r.budget == DELAY_BUDGET).collect();
    let n = at.len() as f64;
    let mean = |f: fn(&DeskRun) -> f64| at.iter().map(|r| f(r)).sum::<f64>() / n;
    let (dots, spc, rpc) = (mean(|r| r.dots_delay), mean(|r| r.spc_delay), mean(|r| r.rpc_delay));
    let ordered = at.iter().all(|r| r.dots_delay < r.spc_delay && r.spc_delay < r.rpc_delay);
    let ok = ordered && dots <= 0.9 * spc && dots <= 0.8 * rpc;
    let per_seed: Vec<String> = at
        .iter()
        .map(|r| format!("seed {}: {:.3}/{:.3}/{:.3}", r.seed, r.dots_delay, r.spc_delay, r.rpc_delay))
        .collect();
    verdict(
        6,
        "delay ordering",
        ok,
        &format!(
            "eps {DELAY_BUDGET}: dots {dots:.4} spc {spc:.4} rpc {rpc:.4} (-{:.1}% vs spc, -{:.1}% vs rpc); {}",
            100.0 * (1.0 - dots / spc),
            100.0 * (1.0 - dots / rpc),
            per_seed.join(", ")
        ),
    );
}

fn small_agent(episodes: usize, delta_init: f64) -> AgentConfig {
    AgentConfig {
        cost_hidden: vec![16],
        risk_hidden: vec![16],
        batch_size: 8,
        memory_capacity: 1000,
        replace_period: 50,
        explore: ExploreSchedule { ramp_iterations: 1000, ..Default::default() },
        episodes,
        iterations: 300,
        delta_init,
        ..Default::default()
    }
}

#[test]
fn criterion_07_weight_dynamics() {
    let deltas = |budget: f64, delta_init: f64| -> Vec<f64> {
        let env = Environment::new(Scenario::desk().with_budget(budget)).unwrap();
        let mut agent = DotsAgent::new(&env, small_agent(10, delta_init), 4).unwrap();
        let reports = agent.run(&env, &mut |_| {}, &mut |_| {}).unwrap();
        std::iter::once(delta_init).chain(reports.iter().map(|r| r.next_delta)).collect()
    };
    let low = deltas(1e-9, 0.0);
    let rising = low.windows(2).all(|w| w[1] > w[0]);
    let high = deltas(1e9, 3.0);
    let falling = high.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    let floored = *high.last().unwrap() == 0.0;
    verdict(
        7,
        "weight dynamics",
        rising && falling && floored,
        &format!("tight budget {low:?}; loose budget {high:?}"),
    );
}

#[test]
fn criterion_08_schedule() {
    let s = ExploreSchedule::default();
    let values = [s.greedy_probability(0), s.greedy_probability(35_000), s.greedy_probability(17_500)];
    let ok = values == [0.0, 0.9995, 0.49975];
    verdict(8, "exploration schedule", ok, &format!("{values:?}"));
}

fn random_state(env: &Environment, rng: &mut ChaCha8Rng) -> EnvState {
    let fwd = rng.random_bool(0.3);
    EnvState {
        loc: rng.random_range(0..env.num_waypoints()),
        backlog: rng.random_range(0..=env.scenario().queue_capacity),
        fwd_bits: if fwd { rng.random_range(1.0..1e8) } else { 0.0 },
        fwd_dest: if fwd { Some(SATELLITE) } else { None },
        fwd_rate: if fwd { env.sat_rate() } else { 0.0 },
        ..EnvState::initial()
    }
}

#[test]
fn criterion_09_mask_safety() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let envs = [Environment::new(Scenario::default()).unwrap(), Environment::new(Scenario::desk()).unwrap()];
    let n = 100_000;
    let (mut bad_greedy, mut bad_explore) = (0, 0);
    for i in 0..n {
        let env = &envs[i % 2];
        let space = ActionSpace::for_env(env);
        let mask: ActionMask = space.mask(env, &random_state(env, &mut rng));
        // Magnitudes from ~1 up to far beyond the filter offset.
        let scale = 10f64.powi(rng.random_range(0..10));
        let qc: Vec<f64> = (0..space.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let qr: Vec<f64> = (0..space.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let delta = rng.random_range(0.0..20.0);
        if !mask.is_allowed(greedy_index(&qc, &qr, &mask, delta, FILTER_OFFSET)) {
            bad_greedy += 1;
        }
        if !mask.is_allowed(choose_action(&qc, &qr, &mask, delta, 0.0, FILTER_OFFSET, &mut rng)) {
            bad_explore += 1;
        }
    }
    verdict(
        9,
        "mask safety",
        bad_greedy == 0 && bad_explore == 0,
        &format!("{n} greedy and {n} exploratory choices, {bad_greedy} + {bad_explore} masked"),
    );
}

#[test]
fn criterion_10_determinism() {
    let env = Environment::new(Scenario::desk()).unwrap();
    let cfg = small_agent(3, 0.0);
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&env, &cfg, 21, 20, &a).unwrap();
    train(&env, &cfg, 21, 20, &b).unwrap();
    let mut same = Vec::new();
    for f in ["metrics.csv", "episodes.csv", "checkpoint.json", "flights.csv", "summary.json"] {
        same.push((f, std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap()));
    }
    verdict(10, "determinism", same.iter().all(|(_, s)| *s), &format!("{same:?}"));
}
