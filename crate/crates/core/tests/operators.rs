mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;

use bcwave::control::control_wave;
use bcwave::grids::{Grid, TimeFunction};
use bcwave::linalg::{exact_norm, spectral_norm, weighted_conjugate};
use bcwave::operators::{apply_j, build_h, build_k, control_b1, weighted_adjoint, ConnectingOperator, Projector};
use bcwave::velocity::dv_inner;

use common::{bump, unit};

#[test]
fn connecting_form_matches_wave_inner_product_for_unit_speed() {
    let s = unit(256);
    let k = build_k(&s.data);
    let horizon = s.grid.horizon();
    let f = TimeFunction::from_fn(s.grid, |t| if t < horizon { (3.0 * t).sin() } else { 0.0 });
    let h = TimeFunction::from_fn(s.grid, |t| if t < horizon { t * (horizon - t) } else { 0.0 });
    let lhs = k.form(&f, &h).unwrap();
    let rhs = dv_inner(
        &control_wave(&s.profile, &f).unwrap(),
        &control_wave(&s.profile, &h).unwrap(),
        &s.profile,
    )
    .unwrap();
    assert_relative_eq!(lhs, rhs, max_relative = 1e-2);
}

#[test]
fn mass_identity_for_bump() {
    let s = bump(256);
    let b1 = control_b1(&s.grid);
    let horizon = s.grid.horizon();
    let f = TimeFunction::from_fn(s.grid, |t| if t < horizon { 1.0 + t } else { 0.0 });
    let wave = control_wave(&s.profile, &f).unwrap();
    let ones = bcwave::grids::SpaceFunction::from_fn(*s.profile.grid(), |_| 1.0);
    let rhs = dv_inner(&wave, &ones, &s.profile).unwrap();
    assert_relative_eq!(f.inner_product(&b1).unwrap(), rhs, max_relative = 1e-2);
}

#[test]
fn blocks_are_weighted_symmetric_and_semidefinite() {
    let s = bump(128);
    let family = build_h(&s.data, &s.grid.all_radii(), Projector::LateWindow).unwrap();
    let weights = s.grid.weights();
    let k_norm = exact_norm(family.connecting().matrix(), &weights);
    let mut last = 0.0;
    for idx in 0..family.len() {
        let window = family.window(idx);
        if window.is_empty() {
            continue;
        }
        let b = weighted_conjugate(&family.block(idx), &weights[window]);
        let asym = (&b - b.transpose()).norm();
        assert!(
            asym <= 1e-8 * k_norm.max(1.0),
            "radius {}: asymmetry {asym}",
            family.radii()[idx]
        );
        let sym = (&b + b.transpose()) * 0.5;
        let lowest = sym.symmetric_eigenvalues().min();
        assert!(
            lowest >= -1e-10 * k_norm,
            "radius {}: eigenvalue {lowest}",
            family.radii()[idx]
        );
        // nested windows: compression norms grow with the radius
        let spectral = sym.symmetric_eigenvalues().max();
        assert!(spectral >= last - 1e-12, "{spectral} < {last}");
        assert!(spectral <= k_norm * (1.0 + 1e-9));
        last = spectral;
    }
}

#[test]
fn j_adjoint_is_weighted_transpose() {
    let s = unit(64);
    let weights = s.grid.weights();
    let j = bcwave::operators::j_matrix(&s.grid);
    let adj = weighted_adjoint(&j, &weights);
    let f = TimeFunction::from_fn(s.grid, |t| (2.0 * t).cos());
    let g = TimeFunction::from_fn(s.grid, |t| t * t - 1.0);
    let jf = apply_j(&f);
    let adj_g = TimeFunction::new(
        s.grid,
        (&adj * nalgebra::DVector::from_column_slice(g.values()))
            .as_slice()
            .to_vec(),
    )
    .unwrap();
    assert_relative_eq!(
        jf.inner_product(&g).unwrap(),
        f.inner_product(&adj_g).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn power_iteration_agrees_with_svd_on_data() {
    let s = bump(128);
    let weights = s.grid.weights();
    let exact = exact_norm(s.data.matrix(), &weights);
    let power = spectral_norm(s.data.matrix(), &weights).unwrap();
    assert_relative_eq!(power, exact, max_relative = 1e-6);
}

#[test]
fn family_rejects_other_grids() {
    let a = unit(32);
    let b = unit(64);
    let family = build_h(&a.data, &a.grid.all_radii(), Projector::LateWindow).unwrap();
    let other = ConnectingOperator::from_matrix(b.grid, DMatrix::zeros(b.grid.len(), b.grid.len())).unwrap();
    assert!(family.with_operator(other).is_err());
}

#[test]
fn early_and_late_windows_have_equal_length() {
    let s = unit(64);
    let late = build_h(&s.data, &[0.25, 0.5], Projector::LateWindow).unwrap();
    let early = build_h(&s.data, &[0.25, 0.5], Projector::EarlyWindow).unwrap();
    for idx in 0..2 {
        assert_eq!(late.window(idx).len(), early.window(idx).len());
    }
    assert_eq!(early.window(0).start, 0);
}

#[test]
fn operator_binary_roundtrip() {
    let s = bump(32);
    let k = build_k(&s.data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.bin");
    k.write_binary(&path).unwrap();
    assert_eq!(ConnectingOperator::read_binary(&path).unwrap(), k);
}
