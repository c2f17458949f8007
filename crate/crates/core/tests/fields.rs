use icoadj::cases::{initial_field, ScalarCase};
use icoadj::fields::{compute_norms, inner, mass, CellField, NormReport};
use icoadj::math::PI;
use icoadj::spheregrid::SphereGrid;
use icoadj::Error;
use proptest::prelude::*;

/// Straight-line evaluation of the norm formulas over `(area, q, q_true)`.
fn oracle(rows: &[(f64, f64, f64)], lo: f64, hi: f64) -> NormReport {
    let mut r = NormReport::default();
    let (mut l1n, mut l1d, mut l2n, mut l2d, mut l1a, mut l2a, mut inf, mut tmax) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64, 0.0f64);
    r.min_value = f64::INFINITY;
    r.max_value = f64::NEG_INFINITY;
    for &(a, q, t) in rows {
        let d = q - t;
        l1n += a * d.abs();
        l1d += a * t.abs();
        l2n += a * d * d;
        l2d += a * t * t;
        l1a += d.abs();
        l2a += d * d;
        inf = inf.max(d.abs());
        tmax = tmax.max(t.abs());
        r.undershoot_count += (q < lo) as usize;
        r.overshoot_count += (q > hi) as usize;
        r.min_value = r.min_value.min(q);
        r.max_value = r.max_value.max(q);
    }
    r.l1_rel = l1n / l1d;
    r.l2_rel = (l2n / l2d).sqrt();
    r.l1_abs = l1a;
    r.l2_abs = l2a.sqrt();
    r.linf_rel = inf / tmax;
    r.linf_abs = inf;
    r
}

fn close(a: &NormReport, b: &NormReport) -> bool {
    a.row()
        .iter()
        .zip(b.row())
        .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300))
}

#[test]
fn hand_computed_three_cell_example() {
    // areas 1, 2, 3; truth (1, 0, 2); field (1.5, -0.5, 2)
    let rows = [(1.0, 1.5, 1.0), (2.0, -0.5, 0.0), (3.0, 2.0, 2.0)];
    let r = oracle(&rows, 0.0, 2.0);
    assert!((r.l1_rel - 1.5 / 7.0).abs() < 1e-15);
    assert!((r.l2_rel - (0.75f64 / 13.0).sqrt()).abs() < 1e-15);
    assert_eq!(r.linf_abs, 0.5);
    assert_eq!(r.linf_rel, 0.25);
    assert_eq!(r.l1_abs, 1.0);
    assert!((r.l2_abs - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!((r.undershoot_count, r.overshoot_count), (1, 0));
}

#[test]
fn matches_oracle_on_real_grid() {
    let g = SphereGrid::build(2, 1, 3.0).unwrap();
    let t = CellField::from_fn(&g, |lon, lat| 1.0 + lon.cos() * lat.cos());
    let q = CellField::from_fn(&g, |lon, lat| 1.05 + lon.cos() * lat.cos() - 0.2 * lat.sin());
    let rows: Vec<_> = (0..g.n_cells()).map(|j| (g.cells[j].area, q[j], t[j])).collect();
    let r = compute_norms(&q, &t, &g, (t.min(), t.max())).unwrap();
    assert!(close(&r, &oracle(&rows, t.min(), t.max())));
}

#[test]
fn constant_shift() {
    let g = SphereGrid::build(2, 1, 1.0).unwrap();
    let t = initial_field(ScalarCase::CosineBell, &g);
    let c = 0.125;
    let q = t.map(|v| v + c);
    let (lo, hi) = (t.min(), t.max());
    let r = compute_norms(&q, &t, &g, (lo, hi)).unwrap();
    assert!((r.linf_abs - c).abs() < 1e-15);
    let over = t.values.iter().filter(|&&v| v + c > hi).count();
    assert_eq!(r.overshoot_count, over);
    assert_eq!(r.undershoot_count, 0);
}

#[test]
fn zero_reference_is_an_error() {
    let g = SphereGrid::build(1, 0, 1.0).unwrap();
    let z = CellField::zeros(&g);
    let q = CellField::constant(&g, 1.0);
    assert_eq!(compute_norms(&q, &z, &g, (0.0, 1.0)), Err(Error::ZeroReference));
}

#[test]
fn grid_mismatch_is_an_error() {
    let a = SphereGrid::build(1, 0, 1.0).unwrap();
    let b = SphereGrid::build(1, 1, 1.0).unwrap();
    let qa = CellField::constant(&a, 1.0);
    let qb = CellField::constant(&b, 1.0);
    assert_eq!(compute_norms(&qa, &qb, &a, (0.0, 1.0)), Err(Error::GridMismatch));
    assert!(CellField::from_values(&a, vec![0.0; 3]).is_err());
}

#[test]
fn mass_of_unit_field_is_sphere_area() {
    let r = 6.371229e6;
    let g = SphereGrid::build(2, 2, r).unwrap();
    let one = CellField::constant(&g, 1.0);
    let m = mass(&one, &one, &g).unwrap();
    assert!((m - 4.0 * PI * r * r).abs() < 1e-12 * m);
    assert_eq!(mass(&CellField::zeros(&g), &one, &g).unwrap(), 0.0);
}

#[test]
fn bell_mass_matches_latlon_quadrature() {
    // midpoint rule in (lon, sin lat), fine enough to be exact at this scale
    let n = 2000;
    let mut quad = 0.0;
    for i in 0..n {
        let lon = (i as f64 + 0.5) * 2.0 * PI / n as f64;
        for k in 0..n {
            let z = -1.0 + (k as f64 + 0.5) * 2.0 / n as f64;
            quad += ScalarCase::CosineBell.eval(lon, z.asin());
        }
    }
    quad *= (2.0 * PI / n as f64) * (2.0 / n as f64);
    let g = SphereGrid::build(2, 2, 1.0).unwrap();
    let q = initial_field(ScalarCase::CosineBell, &g);
    let m = mass(&q, &CellField::constant(&g, 1.0), &g).unwrap();
    assert!((m - quad).abs() < 0.01 * quad, "{m} {quad}");
}

#[test]
fn inner_product_is_area_weighted() {
    let g = SphereGrid::build(2, 1, 2.0).unwrap();
    let a = CellField::from_fn(&g, |lon, _| lon.sin());
    let b = CellField::from_fn(&g, |_, lat| lat.cos());
    let direct: f64 = (0..g.n_cells()).map(|j| g.cells[j].area * a[j] * b[j]).sum();
    assert!((inner(&a, &b, &g) - direct).abs() < 1e-12 * direct.abs().max(1.0));
}

#[test]
fn csv_column_order() {
    assert_eq!(
        NormReport::COLUMNS,
        ["l1_rel", "l2_rel", "linf_rel", "l1_abs", "l2_abs", "linf_abs", "undershoot", "min", "overshoot", "max"]
    );
}

proptest! {
    #[test]
    fn permutation_invariant(
        vals in proptest::collection::vec((-1.0..1.0f64, 0.1..1.0f64), 80),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let g = SphereGrid::build(2, 0, 1.0).unwrap();
        let q = CellField::from_values(&g, vals.iter().map(|v| v.0).collect()).unwrap();
        let t = CellField::from_values(&g, vals.iter().map(|v| v.1).collect()).unwrap();
        let mut rows: Vec<_> = (0..80).map(|j| (g.cells[j].area, q[j], t[j])).collect();
        rows.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let r = compute_norms(&q, &t, &g, (0.0, 0.9)).unwrap();
        prop_assert!(close(&r, &oracle(&rows, 0.0, 0.9)));
    }

    #[test]
    fn l2_rel_vanishes_only_for_equal_fields(amp in -1.0..1.0f64, j in 0usize..80) {
        let g = SphereGrid::build(2, 0, 1.0).unwrap();
        let t = CellField::from_fn(&g, |lon, lat| 2.0 + lon.sin() * lat.cos());
        let mut q = t.clone();
        q[j] += amp;
        let r = compute_norms(&q, &t, &g, (0.0, 4.0)).unwrap();
        prop_assert_eq!(r.l2_rel == 0.0, amp == 0.0);
    }
}
