//! Acceptance run: criteria 1 to 10, executed in order, one line each.
//! Exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use gcrl::bench::{run_bench, BenchOptions};
use gcrl::config::{ExperimentConfig, Preset};
use gcrl::experiment::{run_experiment, RunOptions, METRICS_FILE};
use gcrl::metrics::{deterministic_columns, MetricsRow, MetricsWriter};
use gcrl::suite::{aggregate, cell_dir, write_suite_report, SuiteReport, SUITE_REPORT_JSON};
use gcrl_core::agent::{AgentConfig, CrlAgent};
use gcrl_core::energy::EnergyKind;
use gcrl_core::env::tabular::{tabular_visitation_oracle, TabularCmp, TabularPolicy};
use gcrl_core::env::{EnvId, EnvSpec};
use gcrl_core::gradcheck::max_rel_error;
use gcrl_core::matrix::Matrix;
use gcrl_core::objective::{critic_loss, flatnce_grad_oracle, flatnce_surrogate, logsumexp_penalty, LossKind};
use gcrl_core::replay::{her_relabel, truncated_geometric, truncated_geometric_pmf, CrlBatch, Episode, EpisodeStep};
use gcrl_core::rng::{standard_normal, stream};
use gcrl_core::stats::{iqm, iqm_stderr};
use gcrl_core::trainer::{CollectPolicy, Control, TrainConfig, Trainer};
use gcrl_tests::{chi_square_p, solve, Runner, Verdict};
use rand::Rng;

const BETA: f64 = 0.1;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| scale * standard_normal::<f64, _>(rng))
}

/// Flat kinds have a zero value; their gradient is that of this surrogate.
fn flat_surrogate(kind: LossKind, logits: &Matrix<f64>) -> f64 {
    let fwd = || flatnce_surrogate(logits).unwrap();
    let bwd = || flatnce_surrogate(&logits.transpose()).unwrap();
    match kind {
        LossKind::FlatNceFwd => fwd(),
        LossKind::FlatNceBwd => bwd(),
        LossKind::FlatNceSym => fwd() + bwd(),
        _ => unreachable!("not a flat kind"),
    }
}

fn flat_oracle(kind: LossKind, logits: &Matrix<f64>) -> Matrix<f64> {
    let fwd = || flatnce_grad_oracle(logits).unwrap();
    let bwd = || flatnce_grad_oracle(&logits.transpose()).unwrap().transpose();
    match kind {
        LossKind::FlatNceFwd => fwd(),
        LossKind::FlatNceBwd => bwd(),
        LossKind::FlatNceSym => Matrix::from_fn(logits.rows(), logits.cols(), |i, j| fwd().get(i, j) + bwd().get(i, j)),
        _ => unreachable!("not a flat kind"),
    }
}

/// Critic objective as a function of the logits, with the surrogate in place
/// of the flat kinds' constant value.
fn objective(kind: LossKind, logits: &Matrix<f64>) -> f64 {
    let main = if kind.is_flat() {
        flat_surrogate(kind, logits)
    } else {
        critic_loss(kind, logits).unwrap().0
    };
    main + logsumexp_penalty(logits, BETA).unwrap().0
}

/// Signs of every `φᵢₖ − ψⱼₖ`; the L1 energy is not differentiable where one
/// of them changes.
fn l1_signs(agent: &CrlAgent<f64>, batch: &CrlBatch<f64>) -> Vec<bool> {
    let phi = agent.sa_encoder.predict(&batch.states.hcat(&batch.actions).unwrap()).unwrap();
    let psi = agent.goal_encoder.predict(&batch.future_goals).unwrap();
    let mut out = Vec::with_capacity(phi.rows() * psi.rows() * phi.cols());
    for i in 0..phi.rows() {
        for j in 0..psi.rows() {
            for k in 0..phi.cols() {
                out.push(phi.get(i, k) > psi.get(j, k));
            }
        }
    }
    out
}

/// Central differences over one encoder's parameters with the step that
/// balances truncation against round-off in f64. Returns the worst relative
/// error and how many coordinates were skipped because the stencil crossed
/// an L1 kink.
fn check_encoder(agent: &CrlAgent<f64>, batch: &CrlBatch<f64>, sa: bool, analytic: &[f64]) -> (f64, usize) {
    let h = f64::EPSILON.cbrt();
    let cfg = agent.config();
    let eval = |p: usize, d: f64| {
        let mut a = agent.clone();
        let params = if sa { a.sa_encoder.values_mut() } else { a.goal_encoder.values_mut() };
        params[p] += d;
        let value = objective(cfg.loss, &a.logits(batch).unwrap());
        let signs = if cfg.energy == EnergyKind::L1 { l1_signs(&a, batch) } else { Vec::new() };
        (value, signs)
    };
    let (mut numeric, mut kept, mut skipped) = (Vec::new(), Vec::new(), 0);
    for (p, &g) in analytic.iter().enumerate() {
        let (fp, sp) = eval(p, h);
        let (fm, sm) = eval(p, -h);
        if sp != sm {
            skipped += 1;
            continue;
        }
        numeric.push((fp - fm) / (2.0 * h));
        kept.push(g);
    }
    (max_rel_error(&kept, &numeric), skipped)
}

fn gradient_suite() -> Verdict {
    let spec = EnvSpec::new(EnvId::PointReacher);
    let mut rng = stream(101, 0);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut oracle_worst = 0.0f64;
    let mut skipped = 0;
    let t0 = Instant::now();
    for loss in LossKind::ALL {
        for energy in EnergyKind::ALL {
            for instance in 0..20 {
                let mut cfg = AgentConfig::for_env(&spec);
                cfg.hidden = vec![8];
                cfg.repr_dim = 4;
                cfg.loss = loss;
                cfg.energy = energy;
                cfg.logsumexp_beta = BETA;
                let agent = CrlAgent::<f64>::new(cfg.clone(), instance).unwrap();
                let batch = CrlBatch {
                    states: random_matrix(8, cfg.state_dim, 1.0, &mut rng),
                    actions: random_matrix(8, cfg.action_dim, 0.5, &mut rng),
                    future_goals: random_matrix(8, cfg.goal_dim, 1.0, &mut rng),
                    random_goals: None,
                };
                let grads = agent.critic_gradients(&batch).unwrap();
                if loss.is_flat() {
                    let logits = agent.logits(&batch).unwrap();
                    let (value, dl) = critic_loss(loss, &logits).unwrap();
                    assert!(value.abs() <= 1e-9, "{loss}: value {value}");
                    let oracle = flat_oracle(loss, &logits);
                    oracle_worst = oracle_worst.max(max_rel_error(dl.data(), oracle.data()));
                }
                let (err_sa, skip_sa) = check_encoder(&agent, &batch, true, grads.sa_encoder.values());
                let (err_goal, skip_goal) = check_encoder(&agent, &batch, false, grads.goal_encoder.values());
                let err = err_sa.max(err_goal);
                skipped += skip_sa + skip_goal;
                if err > worst {
                    worst = err;
                    worst_at = format!("{loss}/{energy}#{instance}");
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(
        worst <= 1e-4 && oracle_worst <= 1e-4 && secs < 120.0,
        format!(
            "1100 instances, worst rel err {worst:.2e} at {worst_at}, flat oracle worst {oracle_worst:.2e}, \
             {skipped} coordinates straddling an L1 kink skipped, {secs:.1}s"
        ),
    )
}

fn loss_identities() -> Verdict {
    let mut rng = stream(102, 0);
    let mut problems = Vec::new();
    for _ in 0..50 {
        let b = rng.random_range(2..12);
        let logits = random_matrix(b, b, 2.0, &mut rng);
        for (sym, fwd, bwd) in [
            (LossKind::InfoNceSym, LossKind::InfoNceFwd, LossKind::InfoNceBwd),
            (LossKind::FlatNceSym, LossKind::FlatNceFwd, LossKind::FlatNceBwd),
        ] {
            let (vs, gs) = critic_loss(sym, &logits).unwrap();
            let (vf, gf) = critic_loss(fwd, &logits).unwrap();
            let (vb, gb) = critic_loss(bwd, &logits).unwrap();
            let summed: Vec<u64> = gf.data().iter().zip(gb.data()).map(|(a, b)| (a + b).to_bits()).collect();
            let got: Vec<u64> = gs.data().iter().map(|v| v.to_bits()).collect();
            if (vf + vb).to_bits() != vs.to_bits() || summed != got {
                problems.push(format!("{sym} is not bitwise {fwd} + {bwd}"));
            }
        }
        for kind in [LossKind::FlatNceFwd, LossKind::FlatNceBwd, LossKind::FlatNceSym] {
            let v = critic_loss(kind, &logits).unwrap().0;
            if v.abs() > 1e-9 {
                problems.push(format!("{kind} value {v}"));
            }
        }
        let c = rng.random_range(0.5..3.0);
        let shifted = logits.map(|v| v + c);
        for kind in LossKind::ALL {
            let before = critic_loss(kind, &logits).unwrap().0;
            let after = critic_loss(kind, &shifted).unwrap().0;
            let invariant = (before - after).abs() <= 1e-9 * before.abs().max(1.0);
            let expected = !matches!(kind, LossKind::Sppo | LossKind::ForwardBackward | LossKind::NceBinary);
            if invariant != expected {
                problems.push(format!("{kind}: shift invariance {invariant}, expected {expected}"));
            }
        }
        let p0 = logsumexp_penalty(&logits, BETA).unwrap().0;
        let p1 = logsumexp_penalty(&shifted, BETA).unwrap().0;
        if (p0 - p1).abs() <= 1e-9 {
            problems.push("penalty is shift invariant".into());
        }
    }
    let zero = Matrix::<f64>::zeros(2, 2);
    let ln2 = std::f64::consts::LN_2;
    let closed = [
        (Some(LossKind::InfoNceFwd), ln2),
        (Some(LossKind::InfoNceSym), 2.0 * ln2),
        (Some(LossKind::Dpo), ln2),
        (Some(LossKind::Ipo), 1.0),
        (Some(LossKind::Sppo), 2.0),
        (Some(LossKind::ForwardBackward), -0.5),
        (Some(LossKind::NceBinary), 2.0 * ln2),
        (Some(LossKind::FlatNceFwd), 0.0),
        (None, 0.1 * ln2 * ln2),
    ];
    for (kind, want) in closed {
        let got = match kind {
            Some(k) => critic_loss(k, &zero).unwrap().0,
            None => logsumexp_penalty(&zero, 0.1).unwrap().0,
        };
        if (got - want).abs() > 1e-9 {
            problems.push(format!("{kind:?} at zero logits: {got} vs {want}"));
        }
    }
    Verdict::new(
        problems.is_empty(),
        if problems.is_empty() {
            "sym sums bitwise, flat values 0, shift split as listed, 9 closed forms".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn sampler_law() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (gamma, m) in [(0.0, 50u64), (0.9, 60), (0.99, 400)] {
        let mut rng = stream(103, (gamma * 100.0) as u64);
        let mut counts = vec![0u64; m as usize];
        for _ in 0..100_000 {
            counts[truncated_geometric(&mut rng, gamma, m).unwrap() as usize - 1] += 1;
        }
        // The analytic law, written out here rather than taken from the pmf.
        let w: Vec<f64> = (0..m).map(|k| if gamma == 0.0 { (k == 0) as u8 as f64 } else { gamma.powi(k as i32) }).collect();
        let z: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / z).collect();
        let pmf_ok = (1..=m).all(|k| (truncated_geometric_pmf(gamma, m, k) - probs[k as usize - 1]).abs() < 1e-12);
        let p = if gamma == 0.0 {
            if counts[0] == 100_000 { 1.0 } else { 0.0 }
        } else {
            chi_square_p(&counts, &probs)
        };
        pass &= p > 0.01 && pmf_ok;
        details.push(format!("gamma {gamma}: p {p:.3}"));
    }

    let mut c = TrainConfig::desk(EnvId::PointMassCircle);
    c.num_envs = 16;
    c.unroll_length = 50;
    c.env.episode_length = 45;
    c.max_replay_size = 400;
    c.agent.hidden = vec![16];
    let mut t = Trainer::new(c).unwrap();
    for _ in 0..12 {
        t.collect(CollectPolicy::Random).unwrap();
    }
    let buf = t.buffer();
    let mut rng = stream(103, 9);
    let (mut checked, mut violations) = (0, 0);
    while checked < 100_000 {
        for ix in buf.sample_indices(&mut rng, 256, 0.99, 0.0).unwrap() {
            let end = buf.episode_end(ix.env, ix.seq).unwrap();
            let same = buf.stored_episode(ix.env, ix.seq) == buf.stored_episode(ix.env, ix.goal_seq);
            if ix.goal_seq < ix.seq || ix.goal_seq > end || !same {
                violations += 1;
            }
            checked += 1;
        }
    }
    pass &= violations == 0;
    details.push(format!("{violations} boundary violations in {checked} pairs"));
    Verdict::new(pass, details.join(", "))
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Q-function for the reward `(1 − γ)·1[s_t = g]`, by an exact linear solve.
fn dp_q(cmp: &TabularCmp, pi: &TabularPolicy, gamma: f64, g: usize) -> Vec<Vec<f64>> {
    let (n, na) = (cmp.n_states(), cmp.n_actions());
    let r: Vec<f64> = (0..n).map(|s| if s == g { 1.0 - gamma } else { 0.0 }).collect();
    let mut a = vec![vec![0.0; n]; n];
    for (s, row) in a.iter_mut().enumerate() {
        row[s] += 1.0;
        for act in 0..na {
            for (s2, v) in row.iter_mut().enumerate() {
                *v -= gamma * pi.prob(s, act) * cmp.prob(s, act, s2);
            }
        }
    }
    let v = solve(a, r.clone());
    (0..n)
        .map(|s| (0..na).map(|act| r[s] + gamma * (0..n).map(|s2| cmp.prob(s, act, s2) * v[s2]).sum::<f64>()).collect())
        .collect()
}

fn visitation_oracle() -> Verdict {
    let mut rng = stream(104, 0);
    let gamma = 0.9;
    let (mut mc_worst, mut dp_worst) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        // A chain whose moves slip towards a random kernel.
        let n = rng.random_range(2..=8);
        let slip = rng.random_range(0.1..0.5);
        let chain = TabularCmp::chain(n);
        let noise = TabularCmp::random(n, 3, &mut rng);
        let p = (0..n)
            .flat_map(|s| (0..3).flat_map(move |a| (0..n).map(move |s2| (s, a, s2))))
            .map(|(s, a, s2)| (1.0 - slip) * chain.prob(s, a, s2) + slip * noise.prob(s, a, s2))
            .collect();
        let cmp = TabularCmp::new(n, 3, p).unwrap();
        let pi = TabularPolicy::random(n, 3, &mut rng);
        let (s, a) = (rng.random_range(0..n), rng.random_range(0..3));
        let mut hits = vec![0u64; n];
        let rollouts = 100_000;
        for _ in 0..rollouts {
            let (mut state, mut action) = (s, a);
            // Horizon T with P(T = t) = (1 − γ)γᵗ; the visit is counted at T.
            while rng.random::<f64>() < gamma {
                state = draw(cmp.row(state, action), &mut rng);
                action = draw(pi.row(state), &mut rng);
            }
            hits[state] += 1;
        }
        for (g, &h) in hits.iter().enumerate() {
            let oracle = tabular_visitation_oracle(&cmp, &pi, gamma, s, a, g).unwrap();
            mc_worst = mc_worst.max((oracle - h as f64 / rollouts as f64).abs());
            dp_worst = dp_worst.max((oracle - dp_q(&cmp, &pi, gamma, g)[s][a]).abs());
        }
    }
    Verdict::new(
        mc_worst <= 2e-2 && dp_worst <= 1e-6,
        format!("10 CMPs: max |oracle - MC| {mc_worst:.2e}, max |oracle - DP Q| {dp_worst:.2e}"),
    )
}

struct SeedRun {
    seed: u64,
    reached: Option<u64>,
    best: f64,
    seconds: f64,
}

fn learn_until(env: EnvId, seed: u64, budget: u64, threshold: f64) -> SeedRun {
    let mut c = TrainConfig::desk(env);
    c.seed = seed;
    c.num_timesteps = budget;
    let t0 = Instant::now();
    let mut best = 0.0f64;
    let mut reached = None;
    let mut trainer = Trainer::new(c).unwrap();
    trainer
        .run(|r| {
            best = best.max(r.success_rate);
            if r.success_rate >= threshold {
                reached = Some(r.step);
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
    SeedRun {
        seed,
        reached,
        best,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn desk_learning() -> Verdict {
    let t0 = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for (env, budget, threshold) in [(EnvId::PointMassCircle, 2_000_000, 0.9), (EnvId::PointUMaze, 5_000_000, 0.5)] {
        let mut runs = Vec::new();
        for seed in 0..4 {
            let ok = runs.iter().filter(|r: &&SeedRun| r.reached.is_some()).count();
            let failed = runs.len() - ok;
            // Three successes settle it, as do two failures.
            if ok >= 3 || failed >= 2 {
                break;
            }
            let run = learn_until(env, seed, budget, threshold);
            println!(
                "  {} seed {}: {} (best {:.3}, {:.0}s)",
                env.name(),
                run.seed,
                run.reached.map_or("not reached".to_string(), |s| format!("success >= {threshold} at step {s}")),
                run.best,
                run.seconds
            );
            runs.push(run);
        }
        let ok = runs.iter().filter(|r| r.reached.is_some()).count();
        pass &= ok >= 3;
        details.push(format!("{} {ok}/{} seeds reached {threshold}", env.name(), runs.len()));
    }
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    pass &= minutes <= 30.0;
    details.push(format!("{minutes:.1} min total"));
    Verdict::new(pass, details.join(", "))
}

fn her_fraction() -> Verdict {
    let spec = EnvSpec::new(EnvId::PointMassCircle);
    let mut rng = stream(106, 0);
    let mut relabeled = 0;
    for _ in 0..10_000 {
        let steps = (0..5)
            .map(|t| EpisodeStep {
                state: vec![t as f32, 0.0, 0.0, 0.0],
                action: vec![0.0, 0.0],
                next_state: vec![t as f32 + 1.0, 0.5, 0.0, 0.0],
            })
            .collect();
        let ep = Episode {
            goal: vec![-3.0, 4.0],
            steps,
        };
        let (out, r) = her_relabel(&spec, &ep, &mut rng, 0.5).unwrap();
        assert_eq!(r, out != ep);
        relabeled += r as u32;
    }
    let frac = relabeled as f64 / 10_000.0;
    Verdict::new((0.48..=0.52).contains(&frac), format!("relabeled fraction {frac:.4}"))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_preset(Preset::Desk, EnvId::PointMassCircle);
    for (k, v) in [
        ("num_envs", "16"),
        ("num_timesteps", "40000"),
        ("eval_interval", "10000"),
        ("eval_episodes", "16"),
        ("hidden_layers", "32,32"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let run = |workers: usize, name: &str| {
        let mut c = cfg.clone();
        c.collect_workers = workers;
        let out = dir.path().join(name);
        run_experiment(&c, &out, &RunOptions::default()).unwrap();
        deterministic_columns(&out.join(METRICS_FILE)).unwrap()
    };
    let a = run(1, "a");
    let b = run(1, "b");
    let c = run(4, "c");
    let rows = a.len();
    Verdict::new(
        a == b && a == c && rows == 5,
        format!("{} metrics rows; same workers equal: {}, 1 vs 4 workers equal: {}", rows - 1, a == b, a == c),
    )
}

fn throughput() -> Verdict {
    let cfg = ExperimentConfig::from_preset(Preset::Desk, EnvId::PointMassCircle);
    let opts = BenchOptions {
        env_counts: vec![1, 64],
        collect_iterations: 4,
        min_seconds: 1.0,
        train_iterations: 1,
    };
    let rows = run_bench(&cfg, &opts).unwrap();
    let unroll = cfg.train.unroll_length as u64;
    let exact = rows
        .iter()
        .all(|r| r.collect_steps == r.num_envs as u64 * unroll * r.collect_iterations && r.train_steps == r.num_envs as u64 * unroll);
    let ratio = rows[1].collect_steps_per_second / rows[0].collect_steps_per_second;
    Verdict::new(
        exact && ratio >= 10.0,
        format!(
            "1 env {:.0} steps/s, 64 envs {:.0} steps/s, ratio {ratio:.2} (need 10), accounting exact: {exact}",
            rows[0].collect_steps_per_second, rows[1].collect_steps_per_second
        ),
    )
}

fn write_cell(root: &Path, env: EnvId, seed: u64, success_rate: f64) {
    let dir = cell_dir(root, env, seed);
    fs::create_dir_all(&dir).unwrap();
    let mut w = MetricsWriter::append(&dir.join(METRICS_FILE)).unwrap();
    for (step, s) in [(1000, -1.0), (2000, success_rate)] {
        w.write(&MetricsRow {
            step,
            wall_clock_seconds: 1.0,
            success_rate: s,
            time_near_goal: s,
            critic_loss: 0.0,
            actor_loss: 0.0,
            entropy_coef: 1.0,
            steps_per_second: 1.0,
        })
        .unwrap();
    }
}

fn iqm_examples() -> Verdict {
    let examples: [(EnvId, [f64; 4], f64); 3] = [
        (EnvId::PointReacher, [1.0, 2.0, 3.0, 4.0], 2.5),
        (EnvId::PointMassCircle, [0.0, 0.0, 0.0, 100.0], 0.0),
        (EnvId::PointUMaze, [0.7; 4], 0.7),
    ];
    let mut pass = true;
    for (_, values, want) in &examples {
        pass &= iqm(values).unwrap() == *want;
    }
    pass &= iqm_stderr(&[0.7; 4]).unwrap() == 0.0;

    let dir = tempfile::tempdir().unwrap();
    let envs: Vec<EnvId> = examples.iter().map(|e| e.0).collect();
    for (env, values, _) in &examples {
        // Seeds out of order, so aggregation has to sort.
        for (seed, &v) in [2u64, 0, 3, 1].iter().zip(values) {
            write_cell(dir.path(), *env, *seed, v);
        }
    }
    let report = aggregate(dir.path(), &envs, &[0, 1, 2, 3]).unwrap();
    write_suite_report(dir.path(), &report).unwrap();
    let back: SuiteReport = serde_json::from_str(&fs::read_to_string(dir.path().join(SUITE_REPORT_JSON)).unwrap()).unwrap();
    for ((_, _, want), summary) in examples.iter().zip(&back.envs) {
        pass &= summary.success_rate_iqm == *want && summary.seeds == 4;
    }
    pass &= back.envs[2].success_rate_stderr == 0.0 && back.failed_cells == 0;
    let got: Vec<f64> = back.envs.iter().map(|e| e.success_rate_iqm).collect();
    Verdict::new(pass, format!("direct and through suite_report.json: {got:?}"))
}

fn smoke_config(loss: LossKind, energy: EnergyKind) -> TrainConfig {
    let mut c = TrainConfig::desk(EnvId::PointReacher);
    c.num_envs = 4;
    c.unroll_length = 16;
    c.batch_size = 32;
    c.min_replay_size = 16;
    c.max_replay_size = 256;
    c.agent.loss = loss;
    c.agent.energy = energy;
    c
}

fn train_iterations(c: TrainConfig, n: usize) -> Result<u64, String> {
    let mut t = Trainer::new(c).map_err(|e| e.to_string())?;
    t.prefill().map_err(|e| e.to_string())?;
    for _ in 0..n {
        let w = t.collect(CollectPolicy::Actor).map_err(|e| e.to_string())?;
        t.run_updates(w).map_err(|e| e.to_string())?;
    }
    let a = t.agent();
    let finite = [a.sa_encoder.values(), a.goal_encoder.values(), a.actor.values()]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err("non-finite parameters".into());
    }
    Ok(t.counters().updates)
}

fn smoke_matrix() -> Verdict {
    let mut failures = Vec::new();
    let mut combos = 0;
    for loss in LossKind::ALL {
        for energy in EnergyKind::ALL {
            combos += 1;
            if let Err(e) = train_iterations(smoke_config(loss, energy), 10) {
                failures.push(format!("{loss}/{energy}: {e}"));
            }
        }
    }
    let mut wide = smoke_config(LossKind::InfoNceSym, EnergyKind::L2);
    wide.agent.hidden = vec![1024; 4];
    wide.agent.layer_norm = true;
    let wide_updates = match train_iterations(wide, 10) {
        Ok(u) => u,
        Err(e) => {
            failures.push(format!("layer-norm 1024x4: {e}"));
            0
        }
    };
    Verdict::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{combos} combinations and layer-norm 1024x4 ({wide_updates} updates) finite")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut r = Runner::default();
    r.run(1, "gradient suite", gradient_suite);
    r.run(2, "loss identities", loss_identities);
    r.run(3, "sampler law", sampler_law);
    r.run(4, "visitation oracle", visitation_oracle);
    r.run(5, "desk-scale learning", desk_learning);
    r.run(6, "relabel fraction", her_fraction);
    r.run(7, "determinism", determinism);
    r.run(8, "throughput", throughput);
    r.run(9, "IQM", iqm_examples);
    r.run(10, "smoke matrix", smoke_matrix);
    let failed = r.failed();
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
