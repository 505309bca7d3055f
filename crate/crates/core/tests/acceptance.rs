//! Acceptance criteria, one test each. Every test prints a single
//! `PASS` or `FAIL` line with the measured numbers before asserting.

use allact::analysis::{
    reference_gradient, run_mse_protocol, streams, theorem1_check, theorem2_check, theorem3_grid, warm_agent,
    CheckSizes, SLACK_SE,
};
use allact::config::ExperimentConfig;
use allact::critic::{AdvantageFn, AdvantageOracle};
use allact::envs::{bandit_oracle_gradient, rollout};
use allact::estimators::{
    mc_estimate, quadrature_estimate, trajectory_estimate, variance_decomposition, EstimatorKind, McSpec,
    QuadratureSpec,
};
use allact::nn::{finite_diff_gradient, mlp_backward, mlp_forward, init_params, LayerSpec};
use allact::rng;
use allact::stats;
use allact::trainer::{run_seeds, steps_to_solve, train_seeds};

fn verdict(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

#[test]
fn mse_progression() {
    let cfg = ExperimentConfig::preset("bandit").unwrap();
    assert!(cfg.sweep.reference_rollouts >= 10_000);
    assert_eq!(cfg.sweep.estimates, 1000);
    assert_eq!(cfg.sweep.ns, (0..10).map(|k| 1 << k).collect::<Vec<_>>());
    let out = run_mse_protocol(&cfg).unwrap();
    let ratio = out.rows[0].mse / out.rows.last().unwrap().mse;
    let fit = out.fit.unwrap();
    let ok = fit.r_squared >= 0.95 && fit.c0 > 0.0 && fit.c1 > 0.0 && ratio > 3.0;
    verdict(
        "mse_progression",
        ok,
        format!("R2 {:.4} c0 {:.3e} c1 {:.3e} ratio MC-1/MC-512 {ratio:.2}", fit.r_squared, fit.c0, fit.c1),
    );
}

#[test]
fn law_of_total_variance() {
    let cfg = ExperimentConfig::preset("bandit").unwrap();
    let spec = cfg.env_spec().unwrap();
    let agent = warm_agent(&cfg, cfg.seed).unwrap();
    let mut r = rng::stream(cfg.seed, streams::DECOMPOSITION);
    let states = allact::analysis::visited_states(&spec, &agent.policy, 16, &mut r).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 4, 16, 64] {
        let d = variance_decomposition(&agent.policy, &agent.critics, &states, McSpec::new(n).unwrap(), 1000, &mut r)
            .unwrap();
        let rel = (d.var_state + d.expected_cond_var - d.total_var).abs() / d.total_var;
        let floor = d.total_var >= d.var_state - SLACK_SE * d.var_state_se;
        ok &= rel <= 0.05 && floor;
        detail.push(format!("N_S={n} rel {rel:.2e} floor {floor}"));
    }
    verdict("law_of_total_variance", ok, detail.join("; "));
}

#[test]
fn theorem1_bound() {
    let mut ok = true;
    let mut detail = Vec::new();
    for env in ["bandit", "lqr"] {
        let mut cfg = ExperimentConfig::preset(env).unwrap();
        if env == "bandit" {
            cfg.sweep.reference_rollouts = 100_000;
        }
        let spec = cfg.env_spec().unwrap();
        let agent = warm_agent(&cfg, cfg.seed).unwrap();
        let oracle = AdvantageOracle::for_policy(&spec, &agent.policy).unwrap();
        let mut r = rng::stream(cfg.seed, streams::THEOREM);
        let reference =
            reference_gradient(&spec, &agent.policy, &oracle, cfg.sweep.reference_rollouts, &mut r).unwrap();
        let mut sizes = CheckSizes::from_config(&cfg);
        if env == "bandit" {
            // the single-sample MSE is heavy tailed; more estimates steady the slope
            sizes.estimates = 10_000;
        }
        let mut oracle_lhs = Vec::new();
        for n in [1, 8, 64] {
            let critics: [(&str, &dyn AdvantageFn); 2] = [("oracle", &oracle), ("learned", &agent.critics)];
            for (name, critic) in critics {
                let rep = theorem1_check(&spec, &agent.policy, critic, &oracle, McSpec::new(n).unwrap(), &reference.grad, sizes, &mut r)
                    .unwrap();
                ok &= rep.satisfied;
                detail.push(format!("{env}/{name}/N_S={n} lhs {:.3e} rhs {:.3e} {}", rep.lhs, rep.rhs, rep.satisfied));
                if name == "oracle" {
                    oracle_lhs.push(rep.lhs);
                }
            }
        }
        let slope = stats::log_log_slope(&[1.0, 8.0, 64.0], &oracle_lhs).unwrap();
        detail.push(format!("{env} oracle slope {slope:.3}"));
        if env == "bandit" {
            ok &= (slope + 1.0).abs() <= 0.1;
        }
    }
    verdict("theorem1_bound", ok, detail.join("; "));
}

#[test]
fn theorem2_bound() {
    let mut ok = true;
    let mut detail = Vec::new();
    let mut xis: Vec<(f64, f64)> = Vec::new();
    for noise in [0.0, 0.5, 1.0] {
        let mut cfg = ExperimentConfig::preset("bandit").unwrap();
        cfg.bandit.as_mut().unwrap().noise_std = noise;
        let spec = cfg.env_spec().unwrap();
        let agent = warm_agent(&cfg, cfg.seed).unwrap();
        let oracle = AdvantageOracle::for_policy(&spec, &agent.policy).unwrap();
        let truth = bandit_oracle_gradient(&spec, &agent.policy).unwrap();
        let sizes = CheckSizes::from_config(&cfg);
        let mut r = rng::stream(cfg.seed, streams::THEOREM);
        let rep = theorem2_check(&spec, &agent.policy, &agent.critics, &oracle, &truth, 10_000, sizes, &mut r).unwrap();
        ok &= rep.satisfied;
        let (xi, se) = (rep.term("xi").unwrap(), rep.term("xi_se").unwrap());
        detail.push(format!("noise {noise}: lhs {:.3e} rhs {:.3e} xi {xi:.3e}", rep.lhs, rep.rhs));
        xis.push((xi, se));
    }
    for w in xis.windows(2) {
        ok &= w[1].0 >= w[0].0 - SLACK_SE * w[0].1.hypot(w[1].1);
    }
    verdict("theorem2_bound", ok, detail.join("; "));
}

#[test]
fn theorem3_inequality() {
    let cells = theorem3_grid(rng::derive_seed(0, streams::THEOREM), 10_000).unwrap();
    assert_eq!(cells.len(), 9);
    let bound = cells.iter().all(|c| c.report.satisfied);
    let exact = cells.iter().all(|c| c.report.matches_exact);
    let worst = cells
        .iter()
        .flat_map(|c| c.report.points.iter())
        .map(|p| (p.empirical - p.bound) / p.se.max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    verdict(
        "theorem3_inequality",
        bound && exact,
        format!("bound holds {bound}, matches closed form {exact}, worst margin {worst:.2} SE"),
    );
}

#[test]
fn unbiasedness_cross_oracle() {
    let cfg = ExperimentConfig::preset("bandit").unwrap();
    let spec = cfg.env_spec().unwrap();
    let agent = warm_agent(&cfg, cfg.seed).unwrap();
    let oracle = AdvantageOracle::for_policy(&spec, &agent.policy).unwrap();
    let truth = bandit_oracle_gradient(&spec, &agent.policy).unwrap();
    let n = 100_000;
    let mut r = rng::stream(cfg.seed, 40);

    let reinforce = reference_gradient(&spec, &agent.policy, &agent.critics, n, &mut r).unwrap();
    let state = vec![0.0; spec.state_dim];
    let mc: Vec<Vec<f64>> = (0..n)
        .map(|_| mc_estimate(&agent.policy, &oracle, &state, McSpec::new(1).unwrap(), &mut r).unwrap().grad.into_inner())
        .collect();
    let (mc_mean, mc_se) = stats::vector_mean_se(&mc);

    let worst = |mean: &[f64], se: &[f64]| {
        mean.iter()
            .zip(se)
            .zip(truth.iter())
            .map(|((m, s), t)| (m - t).abs() / s.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    let z_r = worst(&reinforce.grad, &reinforce.se);
    let z_mc = worst(&mc_mean, &mc_se);
    verdict(
        "unbiasedness_cross_oracle",
        z_r <= SLACK_SE && z_mc <= SLACK_SE,
        format!("max |z| REINFORCE {z_r:.2}, MC-1 {z_mc:.2} over {} components", truth.len()),
    );
}

#[test]
fn sample_efficiency_direction() {
    let cfg = ExperimentConfig::preset("pendulum").unwrap();
    let seeds = run_seeds(&cfg);
    assert_eq!(seeds.len(), 25);
    let steps = |kind: EstimatorKind| {
        let mut c = cfg.clone();
        c.estimator = kind;
        train_seeds(&c, &seeds)
            .unwrap()
            .iter()
            .map(|rec| {
                let solved = steps_to_solve(rec, c.train.solve_threshold, c.train.window);
                (solved, rec.env_steps.last().copied().unwrap_or(0))
            })
            .collect::<Vec<_>>()
    };
    let base = steps(EstimatorKind::Reinforce);
    let mc = steps(EstimatorKind::Mc { samples: 64 });
    let wins = base
        .iter()
        .zip(&mc)
        .filter(|((b, _), (m, _))| match (b, m) {
            (Some(b), Some(m)) => m < b,
            (None, Some(_)) => true,
            _ => false,
        })
        .count();
    // unsolved runs count their whole budget
    let mean = |xs: &[(Option<u64>, u64)]| {
        stats::mean(&xs.iter().map(|(s, total)| s.unwrap_or(*total) as f64).collect::<Vec<_>>())
    };
    let (mb, mm) = (mean(&base), mean(&mc));
    let frac = wins as f64 / seeds.len() as f64;
    let solved = |xs: &[(Option<u64>, u64)]| xs.iter().filter(|(s, _)| s.is_some()).count();
    verdict(
        "sample_efficiency_direction",
        frac >= 0.7 || mm <= 0.8 * mb,
        format!(
            "MC-64 wins {wins}/{} pairs; mean steps REINFORCE {mb:.0} ({} solved), MC-64 {mm:.0} ({} solved)",
            seeds.len(),
            solved(&base),
            solved(&mc)
        ),
    );
}

#[test]
fn gradient_correctness_and_reproducibility() {
    let mut r = rng::from_seed(11);
    let mut worst: f64 = 0.0;
    for (input, hidden, output) in [(1, vec![], 1), (2, vec![4], 1), (3, vec![8, 8], 2), (5, vec![16, 3], 4)] {
        let spec = LayerSpec::chain(input, &hidden, output);
        for _ in 0..5 {
            let params = init_params(&spec, &mut r).unwrap();
            let x: Vec<f64> = (0..input).map(|i| 0.3 * i as f64 - 0.4).collect();
            let up: Vec<f64> = (0..output).map(|i| 1.0 - 0.5 * i as f64).collect();
            let g = mlp_backward(&params, &spec, &x, &up).unwrap();
            let fd = finite_diff_gradient(
                |p| mlp_forward(p, &spec, &x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum(),
                &params,
                1e-6,
            )
            .unwrap();
            worst = worst.max(rel_err(&g, &fd));
        }
    }

    let cfg = ExperimentConfig::preset("lqr").unwrap();
    let spec = cfg.env_spec().unwrap();
    let policy = cfg.build_policy(&mut r).unwrap();
    let traj = rollout(&spec, &policy, &mut r).unwrap();
    for (s, a) in traj.states.iter().zip(&traj.actions).take(10) {
        let score = policy.score(s, a).unwrap();
        let fd = finite_diff_gradient(
            |p| {
                let mut q = policy.clone();
                q.params_mut().copy_from_slice(p);
                q.log_prob(s, a).unwrap()
            },
            policy.params(),
            1e-6,
        )
        .unwrap();
        worst = worst.max(rel_err(&score, &fd));
    }

    // same seed, same bits, for every estimator kind
    let bandit = ExperimentConfig::preset("bandit").unwrap();
    let bspec = bandit.env_spec().unwrap();
    let agent = warm_agent(&bandit, 0).unwrap();
    let btraj = rollout(&bspec, &agent.policy, &mut rng::from_seed(5)).unwrap();
    let mut reproducible = true;
    for kind in [
        EstimatorKind::Reinforce,
        EstimatorKind::Mc { samples: 16 },
        EstimatorKind::Quadrature { points: 65 },
    ] {
        let run = |seed| {
            trajectory_estimate(kind, &btraj, &agent.policy, &agent.critics, &agent.critics, &mut rng::from_seed(seed))
                .unwrap()
                .grad
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        reproducible &= run(9) == run(9);
    }
    let q = QuadratureSpec::over_box(65, &agent.policy.action_box).unwrap();
    let s0 = vec![0.0; bspec.state_dim];
    reproducible &= quadrature_estimate(&agent.policy, &agent.critics, &s0, &q).unwrap().grad
        == quadrature_estimate(&agent.policy, &agent.critics, &s0, &q).unwrap().grad;

    verdict(
        "gradient_correctness_and_reproducibility",
        worst < 1e-5 && reproducible,
        format!("max relative error {worst:.2e}; bit-reproducible {reproducible}"),
    );
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 { diff } else { diff / scale }
}
