#![allow(clippy::needless_range_loop)]

use adp_sched_core::env::CostModel;
use adp_sched_core::oracle::{
    bellman_normal_iterate, evaluate_policy, greedy_policy, lagrange_point, pd_operator_at, policy_cost, solve_approx,
    solve_exact, DiscreteMdp, LagrangeOptions, ValueTable,
};
use adp_sched_core::pwl::PwlConcave;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn desk(lambda: f64, alpha: f64) -> DiscreteMdp {
    DiscreteMdp::from_parts(
        8.0,
        1.0,
        alpha,
        vec![0.1157, 0.3407],
        vec![vec![0.7, 0.3], vec![0.4, 0.6]],
        &[(0.0, 0.5), (2.0, 0.5)],
    )
    .unwrap()
    .with_lambda(lambda)
}

/// Finite-horizon dynamic program written out independently of the solver.
fn finite_horizon(m: &DiscreteMdp, steps: usize) -> Vec<Vec<f64>> {
    let n = m.levels();
    let hs = m.num_channels();
    let mut j = vec![vec![0.0; n]; hs];
    for _ in 0..steps {
        let mut next = vec![vec![0.0; n]; hs];
        for h in 0..hs {
            for i in 0..n {
                let mut best = f64::NEG_INFINITY;
                for k in 0..=i {
                    let (x, y) = (i as f64 * m.grid, k as f64 * m.grid);
                    let mut cont = 0.0;
                    for (h2, &ph) in m.transitions[h].iter().enumerate() {
                        for &(a, pa) in &m.arrivals {
                            let raw = i - k + a;
                            let drop = raw.saturating_sub(n - 1) as f64 * m.grid;
                            cont += ph * pa * (j[h2][raw.min(n - 1)] - m.overflow_penalty * drop);
                        }
                    }
                    let v = -(x - y) - m.lambda * m.cost.cost(m.gains[h], y) + m.alpha * cont;
                    best = best.max(v);
                }
                next[h][i] = best;
            }
        }
        j = next;
    }
    j
}

#[test]
fn exact_solution_matches_finite_horizon_dp() {
    let m = desk(0.5, 0.9);
    let sol = solve_exact(&m, 1e-12, 100_000).unwrap();
    assert!(sol.converged);
    let brute = finite_horizon(&m, 400);
    let range = sol.normal.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 0.9f64.powi(400) * range + 1e-6;
    for h in 0..2 {
        for i in 0..9 {
            assert!((sol.normal.get(i, h) - brute[h][i]).abs() <= tol);
        }
    }
}

#[test]
fn hand_unrolled_two_unit_buffer() {
    let mut m = DiscreteMdp::from_parts(2.0, 1.0, 0.5, vec![1.0], vec![vec![1.0]], &[(0.0, 1.0)])
        .unwrap()
        .with_lambda(1.0);
    m.cost = CostModel::Linear { scale: 1.0 };
    let mut j = ValueTable::zeros(&m);
    for _ in 0..30 {
        j = bellman_normal_iterate(&m, &j);
    }
    // Holding a unit costs as much as sending it, and the discount makes
    // waiting strictly worse, so every unit costs exactly 1.
    for (i, want) in [0.0, -1.0, -2.0].into_iter().enumerate() {
        assert!((j.get(i, 0) - want).abs() < 1e-12);
    }
}

#[test]
fn normal_and_post_decision_fixed_points_agree() {
    let m = desk(0.3, 0.9);
    let sol = solve_exact(&m, 1e-13, 100_000).unwrap();
    let mut j = ValueTable::zeros(&m);
    for _ in 0..2000 {
        let next = bellman_normal_iterate(&m, &j);
        let r = next.sup_distance(&j);
        j = next;
        if r < 1e-13 {
            break;
        }
    }
    assert!(j.sup_distance(&sol.normal) < 1e-9);
}

fn random_concave(rng: &mut ChaCha8Rng, buffer: f64) -> PwlConcave {
    let n = rng.random_range(2..7usize);
    let mut xs: Vec<f64> = (0..n - 2).map(|_| rng.random_range(0.0..buffer)).collect();
    xs.push(0.0);
    xs.push(buffer);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut slope = rng.random_range(-0.5..1.0);
    let mut v = rng.random_range(-20.0..0.0);
    let mut pts = vec![(xs[0], v)];
    for w in xs.windows(2) {
        v += slope * (w[1] - w[0]);
        pts.push((w[1], v));
        slope -= rng.random_range(0.0..1.5);
    }
    PwlConcave::new(pts.into_iter().map(Into::into).collect()).unwrap()
}

#[test]
fn post_decision_operator_is_a_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let m = desk(rng.random_range(0.0..2.0), rng.random_range(0.3..0.95));
        let v: Vec<PwlConcave> = (0..2).map(|_| random_concave(&mut rng, 8.0)).collect();
        let w: Vec<PwlConcave> = (0..2).map(|_| random_concave(&mut rng, 8.0)).collect();
        let dist = v.iter().zip(&w).map(|(a, b)| a.sup_distance(b).unwrap()).fold(0.0, f64::max);
        for h in 0..2 {
            for s in 0..=80 {
                let x = s as f64 * 0.1;
                let tv = pd_operator_at(&m, &v, x, h).unwrap();
                let tw = pd_operator_at(&m, &w, x, h).unwrap();
                assert!((tv - tw).abs() <= m.alpha * dist + 1e-7, "{} > {}", (tv - tw).abs(), m.alpha * dist);
            }
        }
    }
}

#[test]
fn approximate_values_are_sandwiched() {
    for alpha in [0.5, 0.9] {
        let m = desk(0.5, alpha);
        let exact = solve_exact(&m, 1e-12, 100_000).unwrap();
        for delta in [0.1, 0.5, 1.0] {
            let approx = solve_approx(&m, delta, 1e-12, 100_000, None).unwrap();
            assert!(approx.converged);
            let table = ValueTable::from_pwl(&m, &approx.values);
            let bound = delta / (1.0 - alpha);
            for h in 0..2 {
                for i in 0..9 {
                    let d = exact.post.get(i, h) - table.get(i, h);
                    assert!(d >= -1e-9 && d <= bound + 1e-9, "alpha {alpha} delta {delta}: {d}");
                }
            }
        }
    }
}

#[test]
fn approximate_iteration_forgets_its_start() {
    let m = desk(0.5, 0.9);
    let delta = 0.5;
    let a = solve_approx(&m, delta, 1e-12, 100_000, None).unwrap();
    let start = vec![
        PwlConcave::new(vec![(0.0, 0.0).into(), (8.0, -40.0).into()]).unwrap(),
        PwlConcave::new(vec![(0.0, -5.0).into(), (3.0, -6.0).into(), (8.0, -30.0).into()]).unwrap(),
    ];
    let b = solve_approx(&m, delta, 1e-12, 100_000, Some(start)).unwrap();
    let (ta, tb) = (ValueTable::from_pwl(&m, &a.values), ValueTable::from_pwl(&m, &b.values));
    assert!(ta.sup_distance(&tb) <= delta / (1.0 - m.alpha) + 1e-9);
}

#[test]
fn greedy_policy_cost_matches_monte_carlo() {
    let m = desk(0.5, 0.9);
    let sol = solve_exact(&m, 1e-12, 100_000).unwrap();
    let s0 = (0, 0);
    let exact = policy_cost(&m, &sol.policy, s0).unwrap();
    let top = m.levels() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let runs = 100_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..runs {
        let (mut i, mut h) = s0;
        let (mut total, mut disc) = (0.0, 1.0);
        for _ in 0..300 {
            let k = sol.policy.action(i, h);
            total += disc * m.cost.cost(m.gains[h], k as f64);
            disc *= m.alpha;
            let a = if rng.random::<f64>() < 0.5 { 0 } else { 2 };
            i = (i - k + a).min(top);
            h = if rng.random::<f64>() < m.transitions[h][0] { 0 } else { 1 };
        }
        sum += total;
        sq += total * total;
    }
    let mean = sum / runs as f64;
    let sd = ((sq / runs as f64 - mean * mean) / runs as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * sd, "mc {mean} exact {exact} sd {sd}");
}

#[test]
fn randomized_instances_have_concave_values_and_monotone_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let p = rng.random_range(0.05..0.95);
        let q = rng.random_range(0.05..0.95);
        let g0 = rng.random_range(0.05..0.3);
        let g1 = g0 + rng.random_range(0.05..0.5);
        let mut pmf: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|w| *w /= total);
        let arrivals: Vec<(f64, f64)> = pmf.iter().enumerate().map(|(a, &w)| (a as f64, w)).collect();
        let m = DiscreteMdp::from_parts(8.0, 1.0, rng.random_range(0.5..0.95), vec![g0, g1], vec![vec![p, 1.0 - p], vec![q, 1.0 - q]], &arrivals)
            .unwrap()
            .with_lambda(rng.random_range(0.01..3.0));
        let sol = solve_exact(&m, 1e-11, 100_000).unwrap();
        for h in 0..2 {
            let v = &sol.post.values[h];
            for i in 1..8 {
                assert!(v[i + 1] - 2.0 * v[i] + v[i - 1] <= 1e-8);
            }
        }
        assert!(sol.policy.is_monotone());
    }
}

#[test]
fn greedy_policy_of_exact_values_attains_them() {
    let m = desk(0.7, 0.9);
    let exact = solve_exact(&m, 1e-12, 100_000).unwrap();
    let approx = solve_approx(&m, 0.0, 1e-12, 100_000, None).unwrap();
    let policy = greedy_policy(&m, &approx.values);
    assert_eq!(policy, exact.policy);
    let pv = evaluate_policy(&m, &policy, 1e-12).unwrap();
    for h in 0..2 {
        for i in 0..9 {
            assert!((pv.lagrangian(&m, i, h) - exact.normal.get(i, h)).abs() < 1e-8);
        }
    }
}

#[test]
fn lagrangian_cost_is_non_increasing_over_twenty_multipliers() {
    let m = desk(0.0, 0.9);
    let opts = LagrangeOptions::default();
    let mut last = f64::INFINITY;
    for k in 0..20 {
        let p = lagrange_point(&m, 0.25 * k as f64, (0, 0), &opts).unwrap();
        assert!(p.cost <= last + 1e-9);
        last = p.cost;
    }
}
