mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use repi_core::batch_vp::*;
use repi_core::data::rng_from_seed;
use repi_core::model::ComplexExponential3;
use repi_core::{Error, SeparableModel};

#[test]
fn linear_solve_matches_normal_equations() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(11);
    for _ in 0..20 {
        let (xs, y, a) = random_instance(&mut rng, 40);
        let data = BatchDataset::new(&model, y.clone(), xs.clone()).unwrap();
        let (c_hat, resid) = solve_linear(&data, a.as_slice()).unwrap();
        let phi = design(&model, a.as_slice(), &xs);
        let oracle = normal_equations(&phi, &y);
        assert!(rel_diff_vec(&c_hat, &oracle) < 1e-9);
        assert!(rel_diff_vec(&resid, &(&phi * &oracle - &y)) < 1e-9);
    }
}

#[test]
fn reduced_residual_matches_explicit_projector() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(12);
    for _ in 0..20 {
        let (xs, y, a) = random_instance(&mut rng, 35);
        let data = BatchDataset::new(&model, y.clone(), xs.clone()).unwrap();
        let (r2, sq) = reduced_residual(&data, a.as_slice()).unwrap();
        let p = explicit_complement(&design(&model, a.as_slice(), &xs));
        let oracle = &p * &y;
        assert!(rel_diff_vec(&r2, &oracle) < 1e-9);
        assert!((sq - oracle.norm_squared()).abs() <= 1e-9 * sq);
    }
}

#[test]
fn projector_properties() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(13);
    let (xs, y, a) = random_instance(&mut rng, 25);
    let data = BatchDataset::new(&model, y, xs.clone()).unwrap();
    let (r2, _) = reduced_residual(&data, a.as_slice()).unwrap();
    let phi = design(&model, a.as_slice(), &xs);
    // residual is orthogonal to the column space
    assert!((phi.transpose() * &r2).amax() < 1e-9 * r2.norm().max(1.0));
    // projecting again changes nothing
    let data2 = BatchDataset::new(&model, r2.clone(), xs).unwrap();
    let (r2_again, _) = reduced_residual(&data2, a.as_slice()).unwrap();
    assert!(rel_diff_vec(&r2_again, &r2) < 1e-10);
}

#[test]
fn single_exponential_closed_form_jacobian() {
    let model = ScalarExp;
    let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![0.25 * i as f64]).collect();
    let y = DVector::from_iterator(12, xs.iter().map(|x| 2.0 * (-0.7 * x[0]).exp() + 0.05 * x[0].sin()));
    let data = BatchDataset::new(&model, y.clone(), xs.clone()).unwrap();
    let a = 0.9;
    let phi = DVector::from_iterator(12, xs.iter().map(|x| (-a * x[0]).exp()));
    let dphi = DVector::from_iterator(12, xs.iter().map(|x| -x[0] * (-a * x[0]).exp()));
    let pp = phi.dot(&phi);
    let s = phi.dot(&y) / pp;
    let ds = (dphi.dot(&y) * pp - phi.dot(&y) * 2.0 * phi.dot(&dphi)) / (pp * pp);
    let oracle = -(&dphi * s) - &phi * ds;
    let j = jacobian_gp(&data, &[a]).unwrap();
    assert_eq!(j.shape(), (12, 1));
    assert!(rel_diff_vec(&j.column(0).into_owned(), &oracle) < 1e-10);
}

#[test]
fn kaufman_and_gp_share_the_gradient() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(14);
    for _ in 0..20 {
        let (xs, y, a) = random_instance(&mut rng, 30);
        let data = BatchDataset::new(&model, y, xs).unwrap();
        let (r2, _) = reduced_residual(&data, a.as_slice()).unwrap();
        let gp = jacobian_gp(&data, a.as_slice()).unwrap().transpose() * &r2;
        let kau = jacobian_kaufman(&data, a.as_slice()).unwrap().transpose() * &r2;
        assert!(rel_diff_vec(&kau, &gp) < 1e-8, "{gp} vs {kau}");
    }
}

#[test]
fn kaufman_matches_explicit_formula() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(15);
    let (xs, y, a) = random_instance(&mut rng, 30);
    let data = BatchDataset::new(&model, y.clone(), xs.clone()).unwrap();
    let phi = design(&model, a.as_slice(), &xs);
    let c = normal_equations(&phi, &y);
    let oracle = -(explicit_complement(&phi) * dphi_c(&model, a.as_slice(), &xs, &c));
    let j = jacobian_kaufman(&data, a.as_slice()).unwrap();
    assert!(rel_diff_mat(&j, &oracle) < 1e-8);
}

#[test]
fn epi_two_by_two_closed_form() {
    // k = n = 1: eliminate Δc from the bordered system by hand.
    let model = ScalarExp;
    let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![0.3 * i as f64]).collect();
    let y = DVector::from_iterator(8, xs.iter().map(|x| 1.5 * (-0.4 * x[0]).exp() + 0.02 * (3.0 * x[0]).cos()));
    let data = BatchDataset::new(&model, y.clone(), xs.clone()).unwrap();
    let a = 0.55;
    let phi = DVector::from_iterator(8, xs.iter().map(|x| (-a * x[0]).exp()));
    let c_hat = phi.dot(&y) / phi.dot(&phi);
    let ja = DVector::from_iterator(8, xs.iter().map(|x| -x[0] * (-a * x[0]).exp() * c_hat));
    let r = &phi * c_hat - &y;
    let (aa, ac, cc) = (ja.dot(&ja), ja.dot(&phi), phi.dot(&phi));
    let expected_da = -ja.dot(&r) / (aa - ac * ac / cc);
    let expected_dc = -ac * expected_da / cc;
    let state = repi_core::ParameterState::from_slices(&[a], &[c_hat]).unwrap();
    let (da, dc) = epi_direction(&data, &state).unwrap();
    assert!((da[0] - expected_da).abs() <= 1e-10 * expected_da.abs());
    assert!((dc[0] - expected_dc).abs() <= 1e-10 * expected_dc.abs().max(1e-12));
}

#[test]
fn vp_fit_recovers_noise_free_truth() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(16);
    let t = truth();
    let xs: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| normal(&mut rng)).collect()).collect();
    let y = design(&model, t.a.as_slice(), &xs) * &t.c;
    let data = BatchDataset::new(&model, y, xs).unwrap();
    let a0 = DVector::from_vec(vec![1.08, 1.4, 3.15, 0.86]);
    for jacobian in [JacobianVariant::Kaufman, JacobianVariant::GolubPereyra] {
        let opts = VpOptions {
            jacobian,
            ..VpOptions::default()
        };
        let report = vp_fit(&data, &a0, &opts).unwrap();
        assert!(report.converged, "{:?}", report.termination);
        assert!(rel_diff_vec(&report.a_hat, &t.a) < 1e-6, "{}", report.a_hat);
        assert!(rel_diff_vec(&report.c_hat, &t.c) < 1e-6);
        assert!(report
            .residual_history
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn gp_and_kaufman_reach_the_same_minimizer() {
    let model = ComplexExponential3;
    let mut rng = rng_from_seed(17);
    let (xs, y, _) = random_instance(&mut rng, 300);
    let data = BatchDataset::new(&model, y, xs).unwrap();
    let a0 = DVector::from_vec(vec![1.1, 1.45, 2.9, 0.75]);
    let fit = |jacobian| {
        vp_fit(&data, &a0, &VpOptions { jacobian, ..VpOptions::default() }).unwrap()
    };
    let gp = fit(JacobianVariant::GolubPereyra);
    let kau = fit(JacobianVariant::Kaufman);
    assert!(rel_diff_vec(&gp.a_hat, &kau.a_hat) < 1e-6);
    let (_, r_gp) = reduced_residual(&data, gp.a_hat.as_slice()).unwrap();
    let (_, r_kau) = reduced_residual(&data, kau.a_hat.as_slice()).unwrap();
    assert!((r_gp - r_kau).abs() <= 1e-9 * r_gp);
}

#[test]
fn rank_deficient_design_is_singular() {
    let model = ComplexExponential3;
    // x1 = 0 and x3 = 0 make φ3 vanish identically
    let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![0.0, 0.1 * i as f64, 0.0]).collect();
    let data = BatchDataset::new(&model, DVector::from_element(10, 1.0), xs).unwrap();
    let a = truth().a;
    assert!(matches!(
        solve_linear(&data, a.as_slice()),
        Err(Error::Singular { .. })
    ));
}

#[test]
fn gauss_newton_step_solves_least_squares() {
    let j = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0, 3.0, -1.0]);
    let r = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
    let step = gauss_newton_step(&j, &r).unwrap();
    let oracle = -normal_equations(&j, &r);
    assert!(rel_diff_vec(&step, &oracle) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gp_jacobian_matches_finite_differences(seed in 0u64..10_000) {
        let model = ComplexExponential3;
        let mut rng = rng_from_seed(seed);
        let (xs, y, a) = random_instance(&mut rng, 20);
        let data = BatchDataset::new(&model, y, xs).unwrap();
        let j = jacobian_gp(&data, a.as_slice()).unwrap();
        let mut fd = DMatrix::zeros(20, model.nonlinear_dim());
        for l in 0..a.len() {
            let h = 1e-6 * a[l].abs().max(1.0);
            let mut up = a.clone();
            up[l] += h;
            let mut dn = a.clone();
            dn[l] -= h;
            let (ru, _) = reduced_residual(&data, up.as_slice()).unwrap();
            let (rd, _) = reduced_residual(&data, dn.as_slice()).unwrap();
            fd.set_column(l, &((ru - rd) / (2.0 * h)));
        }
        prop_assert!(rel_diff_mat(&j, &fd) < 1e-5);
    }
}
