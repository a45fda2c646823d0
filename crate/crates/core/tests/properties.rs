use degenlab::fdm::{assemble_system, solve_fdm, FdmOptions, Scheme};
use degenlab::geometry::{cycloidal, euclidean, make_slab_grid, GridFunction, PointSet};
use degenlab::holder::holder_seminorm;
use degenlab::operators::CoefficientField;
use degenlab::probes::band_limited_forcing;
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-3.0..3.0f64, d - 1), 0.0..3.0f64).prop_map(|(mut t, xd)| {
        t.push(xd);
        t
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..5).prop_flat_map(|d| (point(d), point(d)))
}

fn rows_to_set(rows: &[Vec<f64>]) -> PointSet {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    PointSet::from_rows(&refs).unwrap()
}

proptest! {
    #[test]
    fn cycloidal_is_symmetric_and_vanishes_on_the_diagonal((x, y) in pair()) {
        prop_assert_eq!(cycloidal(&x, &y), cycloidal(&y, &x));
        prop_assert_eq!(cycloidal(&x, &x), 0.0);
        prop_assert!(cycloidal(&x, &y) >= 0.0);
    }

    #[test]
    fn cycloidal_bounded_by_root_euclidean((x, y) in pair()) {
        prop_assert!(cycloidal(&x, &y) <= euclidean(&x, &y).sqrt() * (1.0 + 1e-15));
    }

    #[test]
    fn euclidean_bounded_by_twice_square_from_boundary((x, mut y) in pair()) {
        let d = y.len();
        y[d - 1] = 0.0;
        let s = cycloidal(&x, &y);
        prop_assert!(euclidean(&x, &y) <= 2.0 * s * s * (1.0 + 1e-15));
    }

    #[test]
    fn cycloidal_scales_with_root_of_dilation((x, y) in pair(), lambda in 0.01..100.0f64) {
        let sx: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let sy: Vec<f64> = y.iter().map(|v| lambda * v).collect();
        let expected = lambda.sqrt() * cycloidal(&x, &y);
        prop_assert!((cycloidal(&sx, &sy) - expected).abs() <= 1e-12 * expected.max(1e-300));
    }

    #[test]
    fn cycloidal_invariant_under_tangential_translation((x, y) in pair(), shift in -5.0..5.0f64) {
        let mut tx = x.clone();
        let mut ty = y.clone();
        tx[0] += shift;
        ty[0] += shift;
        let s = cycloidal(&x, &y);
        prop_assert!((cycloidal(&tx, &ty) - s).abs() <= 1e-12 * (1.0 + s));
    }

    #[test]
    fn seminorm_monotone_on_subsets(
        rows in prop::collection::vec(point(2), 3..30),
        keep in prop::collection::vec(any::<bool>(), 30),
        alpha in 0.05..0.95f64,
    ) {
        let values: Vec<f64> = rows.iter().map(|x| (2.0 * x[0]).sin() + x[1] * x[1]).collect();
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| keep[i]).collect();
        prop_assume!(idx.len() >= 2);
        let all = rows_to_set(&rows);
        let part = all.select(&idx);
        let sub: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        prop_assert!(holder_seminorm(&sub, &part, alpha).unwrap() <= holder_seminorm(&values, &all, alpha).unwrap());
    }

    #[test]
    fn seminorm_is_absolutely_homogeneous(
        rows in prop::collection::vec(point(3), 2..20),
        scale in -10.0..10.0f64,
    ) {
        let set = rows_to_set(&rows);
        let values: Vec<f64> = rows.iter().map(|x| x[0] * x[2] + x[1].cos()).collect();
        let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
        let base = holder_seminorm(&values, &set, 0.5).unwrap();
        let got = holder_seminorm(&scaled, &set, 0.5).unwrap();
        prop_assert!((got - scale.abs() * base).abs() <= 1e-12 * (1.0 + got));
    }

    #[test]
    fn scatter_inverts_gather(n_t in 2usize..12, n_v in 3usize..10, seed in 0u64..1000) {
        let g = make_slab_grid(2, 1.0, 1.0, n_t, n_v).unwrap();
        let coeffs = CoefficientField::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 1.0], 0.0).unwrap();
        let f = band_limited_forcing(&g, seed, 2);
        let sys = assemble_system(&coeffs, &f, &vec![0.0; n_t], Scheme::Hybrid).unwrap();
        let x: Vec<f64> = (0..sys.unknowns()).map(|i| i as f64).collect();
        prop_assert_eq!(sys.gather(&sys.scatter(&x).unwrap()), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fdm_solution_is_linear_in_data(s1 in 0u64..500, s2 in 0u64..500, t in -3.0..3.0f64) {
        let g = make_slab_grid(2, 1.0, 1.0, 16, 16).unwrap();
        let coeffs = CoefficientField::from_rows(&[&[1.0, 0.3], &[0.3, 0.7]], &[-0.4, 0.9], 0.2).unwrap();
        let (f1, f2) = (band_limited_forcing(&g, s1, 3), band_limited_forcing(&g, s2, 3));
        let combined = f1.zip_with(&f2, |a, b| a + t * b).unwrap();
        let opts = FdmOptions::default();
        let top = vec![0.0; 16];
        let u1 = solve_fdm(&coeffs, &f1, &top, &opts).unwrap().u;
        let u2 = solve_fdm(&coeffs, &f2, &top, &opts).unwrap().u;
        let u = solve_fdm(&coeffs, &combined, &top, &opts).unwrap().u;
        let expected = u1.zip_with(&u2, |a, b| a + t * b).unwrap();
        let diff = u.zip_with(&expected, |a, b| a - b).unwrap().max_abs();
        prop_assert!(diff <= 1e-9 * (1.0 + expected.max_abs()), "diff {}", diff);
    }

    #[test]
    fn monotone_schemes_preserve_sign(
        a11 in 0.2..3.0f64,
        a22 in 0.2..3.0f64,
        b1 in -2.0..2.0f64,
        b2 in 0.1..3.0f64,
        c in 0.0..2.0f64,
        seed in 0u64..500,
        hybrid in any::<bool>(),
    ) {
        let g = make_slab_grid(2, 1.0, 1.0, 12, 12).unwrap();
        let coeffs = CoefficientField::from_rows(&[&[a11, 0.0], &[0.0, a22]], &[b1, b2], c).unwrap();
        let f = band_limited_forcing(&g, seed, 3).map(|v| -v.abs());
        let opts = FdmOptions {
            scheme: if hybrid { Scheme::Hybrid } else { Scheme::Upwind },
            ..Default::default()
        };
        let u = solve_fdm(&coeffs, &f, &[0.0; 12], &opts).unwrap().u;
        prop_assert!(u.max() <= 1e-10, "max {}", u.max());
    }

    #[test]
    fn constants_reproduced_when_c_vanishes(v in -5.0..5.0f64, b2 in 0.1..3.0f64) {
        let g = make_slab_grid(2, 1.0, 1.0, 8, 8).unwrap();
        let coeffs = CoefficientField::from_rows(&[&[1.0, 0.2], &[0.2, 1.0]], &[0.5, b2], 0.0).unwrap();
        let u = solve_fdm(&coeffs, &GridFunction::zeros(&g), &[v; 8], &FdmOptions::default()).unwrap().u;
        prop_assert!(u.map(|x| x - v).max_abs() <= 1e-11 * (1.0 + v.abs()));
    }
}
