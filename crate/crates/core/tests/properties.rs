use jico::baselines::{fit_baseline, predict_baseline, BaselineKind, Scope};
use jico::{
    extract_directions, fit, predict, CrConstraints, FitOptions, Gamma, Group, GroupedDataset,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn vector(len: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0..2.0f64, len).prop_map(DVector::from_vec)
}

fn design(max_n: usize, max_p: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (4..=max_n, 2..=max_p).prop_flat_map(|(n, p)| (matrix(n, p), vector(n)))
}

/// Sign-insensitive distance between unit vectors.
fn axis_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// PLS coefficients from the Krylov space spanned by `(X'X)^j X'Y`.
fn krylov_pls(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> DVector<f64> {
    let gram = x.transpose() * x;
    let mut basis = DMatrix::zeros(x.ncols(), k);
    let mut v = x.transpose() * y;
    for j in 0..k {
        v /= v.norm();
        basis.set_column(j, &v);
        v = &gram * &v;
    }
    let reduced = basis.transpose() * &gram * &basis;
    let rhs = basis.transpose() * x.transpose() * y;
    &basis * reduced.lu().solve(&rhs).expect("full-rank Krylov basis")
}

fn single_group(x: DMatrix<f64>, y: DVector<f64>) -> GroupedDataset {
    GroupedDataset::new(vec![Group::new("g", x, y)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pls_baseline_matches_krylov_oracle((x, y) in design(12, 5), k in 1usize..3) {
        let oracle = krylov_pls(&x, &y, k);
        // Skip draws where the Krylov basis is near degenerate.
        prop_assume!(oracle.iter().all(|v| v.is_finite()) && oracle.norm() < 1e6);
        let model = fit_baseline(&single_group(x.clone(), y), BaselineKind::Pls(k), Scope::Global, false).unwrap();
        let coef = &model.blocks[0].coef;
        prop_assert!((coef - &oracle).norm() <= 1e-6 * (1.0 + oracle.norm()), "{coef} vs {oracle}");
    }

    #[test]
    fn directions_ignore_rescaling((x, y) in design(10, 4), a in 0.0..1.0f64, sx in 0.1..10.0f64, sy in -10.0..10.0f64) {
        prop_assume!(sy.abs() > 0.1);
        let gamma = Gamma::from_a(a).unwrap();
        let none = CrConstraints::none(x.nrows(), x.ncols());
        let base = extract_directions(&x, &y, gamma, 1, &none).unwrap();
        let scaled = extract_directions(&(&x * sx), &(&y * sy), gamma, 1, &none).unwrap();
        prop_assume!(!base.is_empty() && !scaled.is_empty());
        let (w, ws) = (base.weights.column(0).into_owned(), scaled.weights.column(0).into_owned());
        // Ties between optima are possible; compare objectives where directions differ.
        if axis_distance(&w, &ws) > 1e-6 {
            let obj = |v: &DVector<f64>| {
                let tau = (x.transpose() * &y).dot(v);
                let rho = (&x * v).norm_squared();
                tau * tau * rho.powf(gamma.value() - 1.0)
            };
            prop_assert!((obj(&w) - obj(&ws)).abs() <= 1e-8 * obj(&w).abs().max(1.0));
        }
    }

    #[test]
    fn half_way_direction_beats_a_dense_circle_search(x in matrix(8, 2), y in vector(8)) {
        let gamma = Gamma::new(0.5).unwrap();
        let path = extract_directions(&x, &y, gamma, 1, &CrConstraints::none(8, 2)).unwrap();
        prop_assume!(!path.is_empty());
        let xty = x.transpose() * &y;
        let objective = |v: &DVector<f64>| xty.dot(v).powi(2) * (&x * v).norm_squared().powf(-0.5);
        let best = (0..20_000)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / 20_000.0;
                objective(&DVector::from_vec(vec![t.cos(), t.sin()]))
            })
            .fold(0.0, f64::max);
        let found = objective(&path.weights.column(0).into_owned());
        prop_assert!(found >= best * (1.0 - 1e-6), "{found} < {best}");
    }

    #[test]
    fn paths_have_unit_weights_and_uncorrelated_scores((x, y) in design(14, 6), a in 0.0..=1.0f64) {
        let path = extract_directions(&x, &y, Gamma::from_a(a).unwrap(), 3, &CrConstraints::none(x.nrows(), x.ncols())).unwrap();
        let w = &path.weights;
        for j in 0..w.ncols() {
            prop_assert!((w.column(j).norm() - 1.0).abs() < 1e-10);
        }
        let scores = &x * w;
        let gram = scores.transpose() * &scores;
        let scale = gram.diagonal().max().max(1.0);
        for i in 0..gram.nrows() {
            for j in 0..i {
                prop_assert!(gram[(i, j)].abs() <= 1e-8 * scale, "score cross product {}", gram[(i, j)]);
            }
        }
    }

    #[test]
    fn predictions_scale_with_the_response(
        x1 in matrix(9, 4), y1 in vector(9), x2 in matrix(7, 4), y2 in vector(7), c in 0.2..5.0f64,
    ) {
        let data = GroupedDataset::new(vec![Group::new("a", x1.clone(), y1.clone()), Group::new("b", x2.clone(), y2.clone())]).unwrap();
        let scaled = GroupedDataset::new(vec![Group::new("a", x1.clone(), &y1 * c), Group::new("b", x2, &y2 * c)]).unwrap();
        let opts = FitOptions::new(Gamma::PLS, 1, vec![1, 1]);
        let base = fit(&data, &opts).unwrap();
        let other = fit(&scaled, &opts).unwrap();
        prop_assume!(base.converged && other.converged);
        let pb = predict(&base, &x1, 0).unwrap() * c;
        let po = predict(&other, &x1, 0).unwrap();
        prop_assert!((&pb - &po).norm() <= 1e-5 * (1.0 + pb.norm()));
    }
}

#[test]
fn group_baselines_predict_their_own_group() {
    let x1 = DMatrix::from_fn(12, 3, |i, j| ((i * 3 + j) as f64 * 0.91).sin());
    let x2 = DMatrix::from_fn(10, 3, |i, j| ((i * 5 + j) as f64 * 0.53).cos());
    let y1 = &x1 * DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let y2 = &x2 * DVector::from_vec(vec![-1.0, 0.0, 3.0]);
    let data = GroupedDataset::new(vec![
        Group::new("a", x1.clone(), y1.clone()),
        Group::new("b", x2.clone(), y2.clone()),
    ])
    .unwrap();
    let model = fit_baseline(&data, BaselineKind::Pls(3), Scope::GroupSpecific, true).unwrap();
    assert!((predict_baseline(&model, &x1, Some(0)).unwrap() - y1).norm() < 1e-8);
    assert!((predict_baseline(&model, &x2, Some(1)).unwrap() - y2).norm() < 1e-8);
}
