use std::sync::Arc;

use gise::adaptive::{
    beta_peaks, beta_vector, decide, golden_split, midpoints, refine, Action, AdaptParams, RefinementReport,
    GOLDEN_RATIO,
};
use gise::gegenbauer::{
    basis_row, eval_gegenbauer, eval_shifted, gauss_nodes, leading_coefficient, norm_factor, Element,
    GaussGegenbauerRule, GegenbauerParam,
};
use gise::nlp::{solver_registry, SolveOptions, SolveStatus};
use gise::par::Execution;
use gise::problem::{tau_to_time, DecisionLayout, ElementConfig, Mesh, MeshElement};
use gise::quadrature::{barycentric_interpolate, barycentric_weights, build_obgim, scale_to_element};
use gise::registry;
use gise::transcription::{collocation_nodes, sample_solution, Side, SpectralSolution, Transcription};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn alpha(a: f64) -> GegenbauerParam {
    GegenbauerParam::new(a).unwrap()
}

fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `j`-th divided difference of `f` over `xs` (`j + 1` points).
fn divided_difference(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut d: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for level in 1..xs.len() {
        for i in (level..xs.len()).rev() {
            d[i] = (d[i] - d[i - 1]) / (xs[i] - xs[i - level]);
        }
    }
    d[xs.len() - 1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gegenbauer_orthogonality(a in -0.4f64..3.0, m in 0usize..=10, n in 0usize..=10) {
        prop_assume!(m != n);
        let p = alpha(a);
        let rule = GaussGegenbauerRule::new(p, 24).unwrap();
        let ip = rule.integrate(|x| eval_gegenbauer(p, m, x).unwrap() * eval_gegenbauer(p, n, x).unwrap());
        let el = Element::reference();
        let scale = (norm_factor(p, m, &el).unwrap() * norm_factor(p, n, &el).unwrap()).sqrt();
        prop_assert!(ip.abs() <= 1e-10 * scale, "{ip} vs {scale}");
    }

    #[test]
    fn endpoint_normalization(a in -0.45f64..20.0, j in 0usize..30, l in -1.0f64..0.99, w in 0.01f64..2.0) {
        let el = Element::new(l, (l + w).min(1.0)).unwrap();
        prop_assert_eq!(eval_shifted(alpha(a), j, &el, el.right()).unwrap(), 1.0);
        let left = eval_shifted(alpha(a), j, &el, el.left()).unwrap();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((left - sign).abs() <= 1e-13);
    }

    #[test]
    fn chebyshev_and_legendre_specializations(x in -1.0f64..=1.0, n in 0usize..25) {
        let t = (n as f64 * x.acos()).cos();
        prop_assert!((eval_gegenbauer(alpha(0.0), n, x).unwrap() - t).abs() <= 1e-12);
        prop_assert!((eval_gegenbauer(alpha(0.5), n, x).unwrap() - legendre(n, x)).abs() <= 1e-12);
    }

    #[test]
    fn gauss_nodes_are_zeros(a in -0.45f64..10.0, m in 1usize..40) {
        let p = alpha(a);
        let nodes = gauss_nodes(p, m).unwrap();
        prop_assert_eq!(nodes.len(), m);
        for &x in nodes.nodes() {
            prop_assert!(eval_gegenbauer(p, m, x).unwrap().abs() <= 1e-12, "G({x})");
        }
        prop_assert!(nodes.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn leading_coefficient_consistency(a in -0.4f64..3.0, j in 1usize..=8) {
        let p = alpha(a);
        let el = Element::reference();
        let xs: Vec<f64> = (0..=j).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / (j + 1) as f64).cos()).collect();
        let dd = divided_difference(&xs, |x| eval_gegenbauer(p, j, x).unwrap());
        let k = leading_coefficient(p, j, &el);
        prop_assert!((dd - k).abs() <= 1e-9 * k.abs().max(1.0), "{dd} vs {k}");
    }

    #[test]
    fn quadrature_rows_are_exact_on_monomials(a in -0.4f64..2.0, m in 1usize..=16, l in -1.0f64..0.9, w in 0.05f64..1.5) {
        let el = Element::new(l, (l + w).min(1.0)).unwrap();
        let rows = collocation_nodes(alpha(a), m, &el).unwrap();
        let p = build_obgim(&el, &rows, m, &vec![alpha(a); rows.len()]).unwrap();
        prop_assert_eq!((p.rows(), p.cols()), (m + 2, m + 1));
        for d in 0..=m {
            let got = p.integrate(|t| t.powi(d as i32));
            for (g, &y) in got.iter().zip(rows.nodes()) {
                let exact = (y.powi(d as i32 + 1) - l.powi(d as i32 + 1)) / (d + 1) as f64;
                prop_assert!((g - exact).abs() <= 1e-12, "d={d} y={y}: {g} vs {exact}");
            }
        }
    }

    #[test]
    fn quadrature_rows_are_linear(a in -0.4f64..2.0, m in 2usize..=12, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        let el = Element::reference();
        let rows = collocation_nodes(alpha(a), m, &el).unwrap();
        let p = build_obgim(&el, &rows, m, &vec![alpha(a); rows.len()]).unwrap();
        let f = |t: f64| (3.0 * t).sin();
        let g = |t: f64| (t * t - 0.2).exp();
        let lhs = p.integrate(|t| c1 * f(t) + c2 * g(t));
        let (pf, pg) = (p.integrate(f), p.integrate(g));
        for i in 0..lhs.len() {
            let rhs = c1 * pf[i] + c2 * pg[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn scaling_matches_direct_build(a in -0.4f64..2.0, m in 1usize..=16, l in -1.0f64..0.8, w in 0.05f64..1.0) {
        let el = Element::new(l, (l + w).min(1.0)).unwrap();
        let reference = Element::reference();
        let rows = collocation_nodes(alpha(a), m, &reference).unwrap();
        let params = vec![alpha(a); rows.len()];
        let scaled = scale_to_element(&build_obgim(&reference, &rows, m, &params).unwrap(), &el).unwrap();
        let direct = build_obgim(&el, scaled.upper_limits(), m, &params).unwrap();
        prop_assert!((scaled.entries() - direct.entries()).amax() <= 1e-12);
    }

    #[test]
    fn barycentric_weights_are_scale_free(c in 0.01f64..100.0, t in -1.0f64..1.0) {
        let nodes = gauss_nodes(alpha(0.3), 9).unwrap().into_vec();
        let w = barycentric_weights(&nodes).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let vals: Vec<f64> = nodes.iter().map(|x| x.exp()).collect();
        let a = barycentric_interpolate(&nodes, &w, &vals, t);
        let b = barycentric_interpolate(&nodes, &scaled, &vals, t);
        prop_assert!((a - b).abs() <= 1e-14);
        prop_assert!((w.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn beta_has_unit_mean(vals in prop::collection::vec(0.0f64..10.0, 1..40), cols in 1usize..4) {
        let rows = vals.len();
        let mut r = DMatrix::from_fn(rows, cols, |i, j| vals[i] * (j + 1) as f64 * 0.37);
        r[(rows - 1, 0)] += 1e-3;
        if let Some(beta) = beta_vector(&r) {
            let mean = beta.iter().sum::<f64>() / beta.len() as f64;
            prop_assert!((mean - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn golden_split_arithmetic(l in -1.0f64..0.99, w in 1e-3f64..2.0) {
        let el = Element::new(l, (l + w).min(1.0)).unwrap();
        let p = golden_split(&el);
        prop_assert!(el.left() < p && p < el.right());
        prop_assert!(((p - el.left()) * GOLDEN_RATIO - el.length()).abs() <= 1e-12);
    }

    #[test]
    fn endpoint_identities(seed in prop::collection::vec(-1.0f64..1.0, 64), split in -0.7f64..0.7) {
        let p = registry::breakwell();
        let cfg = ElementConfig::new(4, 5, 3, 6, 4);
        let mesh = Mesh::from_interfaces(&[split], cfg, alpha(0.3)).unwrap();
        let n = DecisionLayout::new(&mesh, 2, 1).len();
        let z: Vec<f64> = (0..n).map(|i| seed[i % seed.len()] * (1.0 + i as f64 * 0.01)).collect();
        let sol = SpectralSolution::new(&p, mesh.clone(), z, 0.0).unwrap();
        for (k, me) in mesh.elements().iter().enumerate() {
            let (xs, _) = sol.element_coeffs(k);
            let right = me.element.right();
            let row = basis_row(alpha(0.3), cfg.lx, &me.element, right).unwrap();
            let t = sample_solution(&sol, &[tau_to_time(right, p.t0, p.tf)]).unwrap();
            for (r, a) in xs.iter().enumerate() {
                let v: f64 = row.iter().zip(a).map(|(b, c)| b * c).sum();
                prop_assert!((v - t.x[0][r]).abs() <= 1e-14, "k={k} r={r} {v} vs {}", t.x[0][r]);
                prop_assert!((v - sol.endpoints[k].1[r]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn refit_after_split_is_exact(seed in prop::collection::vec(-1.0f64..1.0, 32), split in -0.8f64..0.8) {
        let p = registry::breakwell();
        let cfg = ElementConfig::new(6, 5, 4, 8, 4);
        let coarse = Mesh::single(cfg, alpha(0.5));
        let n = DecisionLayout::new(&coarse, 2, 1).len();
        let z: Vec<f64> = (0..n).map(|i| seed[i % seed.len()] / (1.0 + i as f64)).collect();
        let sol = SpectralSolution::new(&p, coarse.clone(), z, 0.0).unwrap();
        let fine = refine(&coarse, &[Action::Split(vec![split])]).unwrap();
        let t = Transcription::new(&p, &fine).unwrap();
        let fitted = SpectralSolution::new(&p, fine, t.fit(&sol).unwrap(), 0.0).unwrap();
        for i in 0..=50 {
            let tau = -1.0 + i as f64 / 25.0;
            for side in [Side::Left, Side::Right] {
                let (a, b) = (sol.eval_tau(tau, side).unwrap(), fitted.eval_tau(tau, side).unwrap());
                for (u, v) in a.0.iter().chain(&a.1).zip(b.0.iter().chain(&b.1)) {
                    prop_assert!((u - v).abs() <= 1e-11, "tau={tau}: {u} vs {v}");
                }
            }
        }
    }
}

/// Synthetic report for `element` with a random-looking residual profile.
fn synthetic_report(me: &MeshElement, beta_raw: &[f64], a_ok: bool, b_ok: bool) -> RefinementReport {
    let mids = midpoints(&me.element, me.config.n, alpha(0.5)).unwrap().into_vec();
    let vals: Vec<f64> = (0..mids.len()).map(|i| beta_raw[i % beta_raw.len()]).collect();
    let residual = DMatrix::from_column_slice(vals.len(), 1, &vals);
    let beta = beta_vector(&residual);
    let peaks = beta.as_deref().map(beta_peaks).unwrap_or_default();
    RefinementReport {
        element: me.element,
        config: me.config,
        midpoints: mids,
        residual,
        max_residual: vals.iter().fold(0.0, |m: f64, v| m.max(*v)),
        i_max: 0,
        j_max: 0,
        beta,
        peaks,
        last_coeffs: vec![if b_ok { 0.0 } else { 1.0 }],
        condition_a: a_ok,
        condition_b: b_ok,
        action: Action::Accept,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budgets_hold_over_200_decisions(
        k_max in 0usize..12,
        eps_es in 0.01f64..0.4,
        profiles in prop::collection::vec((prop::collection::vec(0.0f64..5.0, 1..12), any::<bool>(), any::<bool>(), any::<u16>()), 200),
    ) {
        let params = AdaptParams { k_max, eps_es, n_max: 14, lx_max: 13, lu_max: 11, n_inc: 3, lx_inc: 2, lu_inc: 4, ..AdaptParams::default() };
        let mut mesh = Mesh::single(ElementConfig::new(4, 3, 3, 6, 4), alpha(0.5));
        let mut splits = 0;
        for (raw, a_ok, b_ok, pick) in profiles {
            let k = pick as usize % mesh.len();
            let report = synthetic_report(&mesh.elements()[k], &raw, a_ok, b_ok);
            let action = decide(&report, &params, splits);
            splits += action.split_points().len();
            let mut actions = vec![Action::Accept; mesh.len()];
            actions[k] = action;
            mesh = refine(&mesh, &actions).unwrap();
            prop_assert!(splits <= k_max);
            prop_assert_eq!(mesh.len(), splits + 1);
            let els = mesh.elements();
            prop_assert_eq!(els[0].element.left(), -1.0);
            prop_assert_eq!(els[els.len() - 1].element.right(), 1.0);
            for w in els.windows(2) {
                prop_assert_eq!(w[0].element.right(), w[1].element.left());
            }
            for me in els {
                prop_assert!(me.element.length() > 0.0);
                prop_assert!(me.config.n <= 14 && me.config.lx <= 13 && me.config.lu <= 11);
            }
        }
    }
}

#[test]
fn accepted_elements_are_sound() {
    let cfg = gise::config::RunConfig::defaults_for("example3").unwrap();
    let out = gise::adaptive::run_adaptive(&cfg.problem().unwrap(), &cfg.initial_mesh().unwrap(), &cfg.adapt_params(), &cfg.run_options()).unwrap();
    assert!(out.reports.iter().all(|r| matches!(r.action, Action::Accept)));
    for r in &out.reports {
        assert!(r.residual.amax() < cfg.adapt.eps_r);
        assert!(r.last_coeffs.iter().all(|c| c.abs() < cfg.adapt.eps_coeff), "{:?}", r.last_coeffs);
    }
}

fn small_breakwell(exec: Execution) -> (Arc<Transcription>, Vec<f64>) {
    let p = registry::breakwell();
    let mesh = Mesh::from_interfaces(&[-0.4, 0.4], ElementConfig::new(6, 5, 5, 6, 4), alpha(0.5)).unwrap();
    let t = Arc::new(Transcription::with_options(&p, &mesh, gise::transcription::RowChoice::MeshAlpha, exec).unwrap());
    let z0 = vec![0.0; t.dimension()];
    (t, z0)
}

#[test]
fn solver_is_deterministic_across_runs_and_schedules() {
    let solver = solver_registry().select(None).unwrap();
    let opts = SolveOptions::default();
    let (t, z0) = small_breakwell(Execution::Parallel);
    let a = solver.solve(&t.to_nlp(), &z0, &opts).unwrap();
    let b = solver.solve(&t.to_nlp(), &z0, &opts).unwrap();
    assert_eq!(a, b);
    let (ts, z0s) = small_breakwell(Execution::Sequential);
    let c = solver.solve(&ts.to_nlp(), &z0s, &opts).unwrap();
    assert_eq!(a, c);
}

#[test]
fn converged_reports_meet_tolerances() {
    let solver = solver_registry().select(None).unwrap();
    let opts = SolveOptions::default();
    let (t, z0) = small_breakwell(Execution::Parallel);
    let r = solver.solve(&t.to_nlp(), &z0, &opts).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.stationarity <= opts.opt_tol, "{}", r.stationarity);
    assert!(r.max_violation <= opts.feas_tol);
    let h = &r.violation_history;
    assert!(h.len() >= 3);
    let tail = &h[h.len() - 3..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{h:?}");
}

#[test]
fn pipeline_is_deterministic_and_reports_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = gise::config::RunConfig::defaults_for("example3").unwrap();
    cfg.adapt.k_max = 0;
    cfg.adapt.n_max = cfg.mesh.n;
    cfg.adapt.lx_max = cfg.mesh.lx;
    cfg.adapt.lu_max = cfg.mesh.lu;
    let a = gise::cli::solve_config(&cfg, Some(&dir.path().join("a.sol"))).unwrap();
    let b = gise::cli::solve_config(&cfg, Some(&dir.path().join("b.sol"))).unwrap();
    let text_a = std::fs::read_to_string(&a.solution_path).unwrap();
    assert_eq!(text_a, std::fs::read_to_string(&b.solution_path).unwrap());
    assert_eq!(std::fs::read(&a.csv_path).unwrap(), std::fs::read(&b.csv_path).unwrap());
    assert!(!a.outcome.warnings.is_empty());
    let file = gise::io::SolutionFile::parse(&text_a).unwrap();
    for w in &a.outcome.warnings {
        assert!(file.warnings.contains(w), "{w}");
        assert!(file.trace.iter().any(|line| line.contains(w.as_str())), "{w}");
    }
}
