use icoadj::adjoint::AdjointMethod;
use icoadj::assim::{
    make_background, make_observations, observation_cells, AssimProblem, BackgroundMode, ObservationSet,
    TruthSource, Twin, TwinConfig, Weights,
};
use icoadj::cases::{initial_field, ScalarCase, WindCase, WindKind};
use icoadj::fields::CellField;
use icoadj::math::PI;
use icoadj::optim::{minimize, LbfgsConfig, Objective};
use icoadj::spheregrid::SphereGrid;
use icoadj::transport::{Limiter, SchemeConfig, Transport};
use icoadj::{Error, EARTH_RADIUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R: f64 = EARTH_RADIUS;

fn twin_config(method: AdjointMethod, limiter: Limiter, t_end: f64, dt: f64, n_obs: usize) -> TwinConfig {
    TwinConfig {
        case: ScalarCase::CosineBell,
        wind: WindKind::DeformationalNonDiv,
        t_end,
        scheme: SchemeConfig::new(dt).with_limiter(limiter),
        method,
        n_obs,
        truth: TruthSource::ReferenceRun,
        background: BackgroundMode::Uniform10Pct,
        weights: Weights::default(),
    }
}

fn direction(g: &SphereGrid, seed: u64) -> CellField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CellField::from_values(g, (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &CellField, b: &CellField) -> f64 {
    icoadj::math::dot(&a.values, &b.values)
}

#[test]
fn gradient_matches_finite_differences_over_a_range_of_steps() {
    let g = SphereGrid::build(2, 2, R).unwrap();
    let twin = Twin::build(&g, &twin_config(AdjointMethod::Standard, Limiter::None, 24.0 * 1200.0, 1200.0, 320)).unwrap();
    let p = &twin.problem;
    let q = twin.truth.axpy(0.3, &direction(&g, 1));
    let d = direction(&g, 2);
    let (_, grad) = p.cost_and_gradient(&q).unwrap();
    let gd = dot(&grad, &d);
    // the cost is quadratic, so centered differences are exact up to rounding
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let jp = p.cost(&q.axpy(eps, &d)).unwrap().total;
        let jm = p.cost(&q.axpy(-eps, &d)).unwrap().total;
        let fd = (jp - jm) / (2.0 * eps);
        assert!((fd - gd).abs() <= 1e-7 * gd.abs(), "{eps}: {fd} {gd}");
    }
}

#[test]
fn gradient_with_density_matches_finite_differences() {
    let g = SphereGrid::build(2, 1, R).unwrap();
    let mut cfg = twin_config(AdjointMethod::Standard, Limiter::None, 12.0 * 2400.0, 2400.0, 80);
    cfg.scheme.density = Some(CellField::from_fn(&g, |lon, lat| 1.0 + 0.3 * lon.cos() * lat.cos()));
    cfg.wind = WindKind::DeformationalDiv;
    let twin = Twin::build(&g, &cfg).unwrap();
    let p = &twin.problem;
    let q = twin.truth.axpy(0.5, &direction(&g, 3));
    let d = direction(&g, 4);
    let gd = dot(&p.gradient(&q).unwrap(), &d);
    let eps = 1e-3;
    let fd = (p.cost(&q.axpy(eps, &d)).unwrap().total - p.cost(&q.axpy(-eps, &d)).unwrap().total) / (2.0 * eps);
    assert!((fd - gd).abs() <= 1e-7 * gd.abs(), "{fd} {gd}");
}

#[test]
fn artsource_gradient_points_the_same_way() {
    let g = SphereGrid::build(2, 3, R).unwrap();
    let dt = 1200.0;
    let t_end = 72.0 * dt;
    let exact = Twin::build(&g, &twin_config(AdjointMethod::Standard, Limiter::None, t_end, dt, 1280)).unwrap();
    let approx = Twin::build(&g, &twin_config(AdjointMethod::ArtSource, Limiter::None, t_end, dt, 1280)).unwrap();
    let q = exact.problem.background.clone();
    let a = exact.problem.gradient(&q).unwrap();
    let b = approx.problem.gradient(&q).unwrap();
    let cos = dot(&a, &b) / (dot(&a, &a) * dot(&b, &b)).sqrt();
    assert!(cos > 0.95, "{cos}");
}

#[test]
fn cost_and_gradient_are_linear_in_the_weights() {
    let g = SphereGrid::build(2, 2, R).unwrap();
    let dt = 1200.0;
    let build = |w_b, w_o| {
        let mut c = twin_config(AdjointMethod::Standard, Limiter::None, 12.0 * dt, dt, 160);
        c.weights = Weights { w_b, w_o };
        Twin::build(&g, &c).unwrap()
    };
    let (b, o, mix) = (build(1.0, 0.0), build(0.0, 1.0), build(0.3, 1.7));
    let q = mix.truth.axpy(0.2, &direction(&g, 9));
    let (cb, gb) = b.problem.cost_and_gradient(&q).unwrap();
    let (co, go) = o.problem.cost_and_gradient(&q).unwrap();
    let (cm, gm) = mix.problem.cost_and_gradient(&q).unwrap();
    assert_eq!((cb.jb, cb.jo), (cm.jb, cm.jo));
    assert!((cm.total - (0.3 * cb.total + 1.7 * co.total)).abs() <= 1e-12 * cm.total);
    let want = gb.map(|v| 0.3 * v).axpy(1.7, &go);
    assert!(gm.axpy(-1.0, &want).max_abs() <= 1e-12 * gm.max_abs());
}

#[test]
fn reference_observations_vanish_at_the_truth() {
    let g = SphereGrid::build(2, 2, R).unwrap();
    for lim in [Limiter::None, Limiter::FctPositive] {
        let twin = Twin::build(&g, &twin_config(AdjointMethod::ArtSource, lim, 24.0 * 1200.0, 1200.0, 64)).unwrap();
        let c = twin.problem.cost(&twin.truth).unwrap();
        assert_eq!(c.jo, 0.0);
        assert!(c.jb > 0.0);
        let at_b = twin.problem.cost(&twin.problem.background).unwrap();
        assert_eq!(at_b.jb, 0.0);
    }
}

#[test]
fn cost_matches_hand_sum() {
    let g = SphereGrid::build(2, 1, R).unwrap();
    let dt = 2400.0;
    let twin = Twin::build(&g, &twin_config(AdjointMethod::Standard, Limiter::None, 6.0 * dt, dt, 40)).unwrap();
    let p = &twin.problem;
    let q0 = twin.truth.axpy(0.1, &direction(&g, 5));
    let tr = Transport::new(&g, SchemeConfig::new(dt)).unwrap();
    let mean = g.total_area() / g.n_cells() as f64;
    let jb: f64 = (0..g.n_cells())
        .map(|j| 0.5 * (g.cells[j].area / mean).powi(2) * (q0[j] - p.background[j]).powi(2))
        .sum();
    let obs_mean: f64 = p.obs.cells.iter().map(|&c| g.cells[c].area).sum::<f64>() / p.obs.n_obs() as f64;
    let mut jo = 0.0;
    tr.run_steps(&q0, 6, p.winds(), |n, q| {
        for (i, &c) in p.obs.cells.iter().enumerate() {
            let k = 0.5 * (g.cells[c].area / obs_mean).powi(2);
            jo += 0.5 * dt * k * (q[c] - p.obs.at_level(n)[i]).powi(2);
        }
    })
    .unwrap();
    let c = p.cost(&q0).unwrap();
    assert!((c.jb - jb).abs() <= 1e-12 * jb);
    assert!((c.jo - jo).abs() <= 1e-12 * jo);
    assert!((c.total - 0.5 * (jb + jo)).abs() <= 1e-12 * c.total);
}

#[test]
fn background_modes() {
    let g = SphereGrid::build(2, 2, 1.0).unwrap();
    let q0 = initial_field(ScalarCase::TwoCosineBells, &g);
    let u = make_background(&q0, BackgroundMode::Uniform10Pct, &g).unwrap();
    for j in 0..g.n_cells() {
        assert_eq!(u[j], 1.1 * q0[j]);
    }
    let h = make_background(&q0, BackgroundMode::half_domain(), &g).unwrap();
    let floor = 0.01 * q0.max();
    for j in 0..g.n_cells() {
        let (lon, _) = g.cell_lonlat(j);
        let want = if !(PI..2.0 * PI).contains(&lon) {
            q0[j]
        } else if q0[j] != 0.0 {
            1.1 * q0[j]
        } else {
            q0[j] + floor
        };
        assert_eq!(h[j], want, "{j}");
    }
    for m in [BackgroundMode::Uniform10Pct, BackgroundMode::half_domain()] {
        assert_eq!(BackgroundMode::parse(m.name()).unwrap(), m);
    }
}

#[test]
fn exact_truth_needs_the_vortex_pair() {
    let g = SphereGrid::build(2, 1, R).unwrap();
    let tr = Transport::new(&g, SchemeConfig::new(2400.0)).unwrap();
    let cells = observation_cells(g.n_cells(), 20).unwrap();
    let w = WindCase::standard(WindKind::SolidBodyRotation);
    assert_eq!(
        make_observations(TruthSource::Exact, ScalarCase::CosineBell, &w, &tr, 4800.0, cells.clone()).err(),
        Some(Error::NoExactSolution)
    );
    let w = WindCase::standard(WindKind::MovingVortices);
    let obs = make_observations(TruthSource::Exact, ScalarCase::Vortex, &w, &tr, 4800.0, cells).unwrap();
    assert_eq!(obs.values.len(), 3 * 20);
    let q0 = initial_field(ScalarCase::Vortex, &g);
    for (i, &c) in obs.cells.iter().enumerate() {
        assert_eq!(obs.at_level(0)[i], q0[c]);
    }
}

#[test]
fn malformed_problems_are_rejected() {
    let g = SphereGrid::build(2, 1, R).unwrap();
    let w = WindCase::standard(WindKind::SolidBodyRotation);
    let qb = CellField::zeros(&g);
    let obs = ObservationSet { cells: vec![0, 1], n_steps: 2, values: vec![0.0; 6] };
    let make = |cfg: SchemeConfig, method, obs: ObservationSet, weights| {
        AssimProblem::new(&g, cfg, &w, 4800.0, method, qb.clone(), obs, weights).err()
    };
    let ok = Weights::default();
    assert!(make(SchemeConfig::new(2400.0), AdjointMethod::Standard, obs.clone(), ok).is_none());
    assert_eq!(
        make(SchemeConfig::new(2400.0).with_limiter(Limiter::FctMinMax), AdjointMethod::Standard, obs.clone(), ok),
        Some(Error::LimitedScheme)
    );
    assert!(make(SchemeConfig::new(1200.0), AdjointMethod::Standard, obs.clone(), ok).is_some());
    let dup = ObservationSet { cells: vec![1, 1], ..obs.clone() };
    assert!(make(SchemeConfig::new(2400.0), AdjointMethod::Standard, dup, ok).is_some());
    assert!(make(SchemeConfig::new(2400.0), AdjointMethod::Standard, obs, Weights { w_b: -1.0, w_o: 1.0 }).is_some());
}

#[test]
fn restart_moves_the_background() {
    let g = SphereGrid::build(2, 1, R).unwrap();
    let mut twin = Twin::build(&g, &twin_config(AdjointMethod::Standard, Limiter::None, 4800.0, 2400.0, 80)).unwrap();
    let x = direction(&g, 6);
    twin.problem.restart(&x.values);
    assert_eq!(twin.problem.background, x);
    assert_eq!(twin.problem.cost(&x).unwrap().jb, 0.0);
}

#[test]
fn minimization_recovers_the_truth_on_a_short_window() {
    let g = SphereGrid::build(2, 2, R).unwrap();
    let dt = 1200.0;
    let mut twin = Twin::build(&g, &twin_config(AdjointMethod::Standard, Limiter::None, 72.0 * dt, dt, 1280)).unwrap();
    let truth = twin.truth.clone();
    let x0 = twin.problem.background.values.clone();
    let cfg = LbfgsConfig { max_iters: 30, ..LbfgsConfig::default() };
    let r = minimize(&mut twin.problem, &x0, &cfg).unwrap();
    let j0 = r.history[0].j;
    assert!(r.best.value < 1e-3 * j0, "{} {}", r.best.value, j0);
    for w in r.history.windows(2) {
        assert!(w[1].j <= w[0].j);
    }
    for h in &r.history {
        assert!(h.satisfies_wolfe(cfg.c1, cfg.c2), "{h:?}");
    }
    let x = CellField::from_values(&g, r.x).unwrap();
    let before = twin.problem.background.axpy(-1.0, &truth).max_abs();
    assert!(x.axpy(-1.0, &truth).max_abs() < before);
    assert_eq!(twin.problem.run_counts().0, twin.problem.run_counts().1);
}
