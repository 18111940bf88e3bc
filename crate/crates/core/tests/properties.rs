use nalgebra::DVector;
use proptest::prelude::*;

use bcwave::control::gate_value;
use bcwave::grids::{Grid, TimeFunction, TimeGrid};
use bcwave::harness::{make_noise, NoiseKind, NoiseSpec};
use bcwave::linalg::exact_norm;
use bcwave::operators::{apply_j, apply_r, j_matrix, weighted_adjoint};
use bcwave::postprocess::{
    clamp_speed, integrate_speed, partition_count, reciprocal_value, CellFunction, ReciprocalClamp, SpeedEstimate,
};
use bcwave::regularize::{alpha_of_epsilon, snap_step};
use bcwave::velocity::ClassConstants;

fn class() -> ClassConstants {
    ClassConstants {
        c0: 0.9,
        c1: 1.4,
        support: 0.8,
        m: 25.0,
    }
}

fn time_function(n: usize) -> impl Strategy<Value = TimeFunction> {
    prop::collection::vec(-10.0..10.0f64, n + 1)
        .prop_map(move |v| TimeFunction::new(TimeGrid::new(1.0, n).unwrap(), v).unwrap())
}

proptest! {
    #[test]
    fn inner_product_is_symmetric_and_bilinear(f in time_function(16), g in time_function(16), a in -3.0..3.0f64) {
        let fg = f.inner_product(&g).unwrap();
        prop_assert!((fg - g.inner_product(&f).unwrap()).abs() <= 1e-12 * (1.0 + fg.abs()));
        let af = f.axpby(a, &g, 0.0).unwrap();
        prop_assert!((af.inner_product(&g).unwrap() - a * fg).abs() <= 1e-10 * (1.0 + fg.abs()));
        prop_assert!(f.inner_product(&f).unwrap() >= 0.0);
    }

    #[test]
    fn reversal_is_an_isometric_involution(f in time_function(16)) {
        let rf = apply_r(&f);
        prop_assert_eq!(apply_r(&rf), f.clone());
        prop_assert!((rf.norm() - f.norm()).abs() <= 1e-12 * (1.0 + f.norm()));
    }

    #[test]
    fn j_matrix_and_weighted_adjoint_agree(f in time_function(16), g in time_function(16)) {
        let grid = *f.grid();
        let w = grid.weights();
        let j = j_matrix(&grid);
        let jf = apply_j(&f);
        let dense = &j * DVector::from_column_slice(f.values());
        for (a, b) in jf.values().iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let adj = weighted_adjoint(&j, &w);
        let adj_g = TimeFunction::new(grid, (&adj * DVector::from_column_slice(g.values())).as_slice().to_vec()).unwrap();
        let lhs = jf.inner_product(&g).unwrap();
        prop_assert!((lhs - f.inner_product(&adj_g).unwrap()).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gate_is_a_monotone_cutoff(s in 0.0..10.0f64, ds in 0.0..1.0f64, alpha in 1e-3..2.0f64, m3 in 3.0..8.0f64) {
        let g = gate_value(s, alpha, m3);
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert!(gate_value(s + ds, alpha, m3) <= g + 1e-12);
    }

    #[test]
    fn reciprocal_clamp_lands_in_the_speed_band(k in -5.0..5.0f64) {
        let c = class();
        let w = reciprocal_value(k, &c, ReciprocalClamp::Continuous);
        prop_assert!(w >= c.c0 && w <= c.c1);
        let lit = reciprocal_value(k, &c, ReciprocalClamp::Literal);
        let in_band = lit >= c.c0 && lit <= c.c1;
        prop_assert!(in_band || lit == 1.0 / c.c0 || lit == 1.0 / c.c1);
    }

    #[test]
    fn clamped_speed_integrates_to_a_monotone_bijection(values in prop::collection::vec(0.0..3.0f64, 1..12), x in 0.0..1.0f64) {
        let c = class();
        let n = values.len();
        let edges: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let w = clamp_speed(&SpeedEstimate { cells: CellFunction::new(edges, values).unwrap() }, &c);
        prop_assert_eq!(clamp_speed(&w, &c), w.clone());
        let chi = integrate_speed(&w).unwrap();
        prop_assert!(chi.values().windows(2).all(|p| p[1] > p[0]));
        let t = chi.inverse(x);
        prop_assert!((chi.eval(t) - x).abs() <= 1e-10);
        let end = chi.eval(1.0);
        prop_assert!(end >= c.c0 - 1e-12 && end <= c.c1 + 1e-12);
    }

    #[test]
    fn partition_covers_the_horizon(h in 1e-3..0.99f64) {
        let n = partition_count(1.0, h) as f64;
        prop_assert!(1.0 - h <= n * h + 1e-9 && n * h < 1.0);
    }

    #[test]
    fn snapped_steps_are_grid_multiples(h in 1e-4..0.5f64, intervals in 4usize..64) {
        let dt = 1.0 / intervals as f64;
        let s = snap_step(h, dt);
        prop_assert!(s >= h - 1e-9 * dt && s < h + dt);
        prop_assert!(((s / dt).round() * dt - s).abs() <= 1e-12);
    }

    #[test]
    fn alpha_schedule_is_increasing(e in 1e-8..1e-2f64, f in 1.01..10.0f64) {
        prop_assert!(alpha_of_epsilon(e * f, 1.0) > alpha_of_epsilon(e, 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_has_the_requested_norm(eps in 1e-6..1e-1f64, fill in 0.1..1.0f64, seed in 0u64..1000, kind in 0usize..3) {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let kind = [NoiseKind::Gaussian, NoiseKind::Lowrank, NoiseKind::Causal][kind];
        let spec = NoiseSpec { kind, ..NoiseSpec::new(eps, seed, fill) };
        let noise = make_noise(&grid, &spec).unwrap();
        let norm = exact_norm(noise.matrix(), &grid.weights());
        prop_assert!((norm - fill * eps).abs() <= 1e-8 * fill * eps);
        prop_assert_eq!(make_noise(&grid, &spec).unwrap(), noise);
    }
}
