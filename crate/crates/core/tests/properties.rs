mod common;

use proptest::prelude::*;

use thermocloak::dense::Basis;
use thermocloak::metrics::cloaking_efficiency;
use thermocloak::rom::{pod_enrich, pod_truncate, retained_modes};
use thermocloak::scenarios::{lhs_sample, stratum};
use thermocloak::sparse::CsrMatrix;
use thermocloak::transient::{armijo_backtracking, ArmijoParams};
use thermocloak::{ParamBox, Problem};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, rows), cols)
}

fn residual_energy(columns: &[Vec<f64>], basis: &Basis) -> f64 {
    columns
        .iter()
        .map(|c| {
            let r: Vec<f64> = c.iter().zip(basis.lift(&basis.project(c))).map(|(a, b)| a - b).collect();
            r.iter().map(|x| x * x).sum::<f64>()
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lhs_has_one_point_per_stratum(n in 1usize..60, seed in any::<u64>()) {
        let b = ParamBox::default();
        let s = lhs_sample(&b, n, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        for d in 0..3 {
            let mut seen = vec![false; n];
            for p in &s {
                prop_assert!(b.contains(p));
                let k = stratum(&b, d, n, p.as_array()[d]);
                prop_assert!(!seen[k]);
                seen[k] = true;
            }
        }
    }

    #[test]
    fn lhs_is_reproducible(n in 1usize..20, seed in any::<u64>()) {
        let b = ParamBox::default();
        prop_assert_eq!(lhs_sample(&b, n, seed).unwrap(), lhs_sample(&b, n, seed).unwrap());
    }

    #[test]
    fn pod_basis_is_orthonormal_and_meets_the_energy_bound(cols in matrix(30, 12), eps in 1e-6f64..0.5) {
        let pod = pod_truncate(30, &cols, eps).unwrap();
        prop_assert!(pod.basis.orthonormality_defect() < 1e-12);
        let total: f64 = cols.iter().flatten().map(|x| x * x).sum();
        prop_assert!(residual_energy(&cols, &pod.basis) <= eps * eps * total * (1.0 + 1e-9) + 1e-24);
        prop_assert!(pod.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pod_at_zero_tolerance_reconstructs(cols in matrix(20, 6)) {
        let pod = pod_truncate(20, &cols, 0.0).unwrap();
        let total: f64 = cols.iter().flatten().map(|x| x * x).sum();
        prop_assert!(residual_energy(&cols, &pod.basis) <= 1e-20 * total.max(1.0));
    }

    #[test]
    fn enrichment_keeps_old_snapshots(a in matrix(25, 5), b in matrix(25, 5)) {
        let first = pod_truncate(25, &a, 0.0).unwrap();
        let both = pod_enrich(&first, &b, 0.0).unwrap();
        prop_assert!(both.basis.orthonormality_defect() < 1e-12);
        let total: f64 = a.iter().chain(&b).flatten().map(|x| x * x).sum();
        let mut all = a.clone();
        all.extend(b);
        prop_assert!(residual_energy(&all, &both.basis) <= 1e-18 * total);
    }

    #[test]
    fn retained_modes_is_monotone_in_tolerance(mut s in prop::collection::vec(0.0f64..10.0, 1..20), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
        s.sort_by(|x, y| y.total_cmp(x));
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(retained_modes(&s, lo) >= retained_modes(&s, hi));
    }

    #[test]
    fn armijo_accepts_only_sufficient_decrease(a in 0.1f64..100.0, g in -50.0f64..-1e-3, tau0 in 0.1f64..10.0) {
        // J(τ) − J(0) = gτ + ½aτ² along a descent direction of unit length
        let params = ArmijoParams { initial_step: tau0, ..ArmijoParams::default() };
        let acc = armijo_backtracking(|t| Ok(g * t + 0.5 * a * t * t), g, 0.0, &params).unwrap();
        prop_assert!(acc.decrease <= params.sufficient_decrease * acc.step * g);
        prop_assert!(acc.decrease < 0.0);
        if acc.backtracks > 0 {
            let t = acc.step / params.contraction;
            prop_assert!(g * t + 0.5 * a * t * t > params.sufficient_decrease * t * g);
        }
    }

    #[test]
    fn efficiency_is_a_fraction_when_tracking_improves(m in 1e-6f64..1e3, frac in 0.0f64..=1.0) {
        let eta = cloaking_efficiency(m, frac * m).unwrap();
        prop_assert!((0.0..=1.0).contains(&eta));
        prop_assert!((eta - (1.0 - frac)).abs() < 1e-12);
    }

    #[test]
    fn restriction_is_a_row_selection(h in 0.09f64..0.2) {
        let pb = Problem::from_layout(&common::coarse_layout(h)).unwrap();
        let e = pb.ops.restriction.matrix();
        let n = e.nrows();
        // E Eᵀ via rows: every row has one unit entry and rows hit distinct columns
        let mut cols = std::collections::HashSet::new();
        for r in 0..n {
            let row: Vec<(usize, f64)> = e.row(r).collect();
            prop_assert_eq!(row.len(), 1);
            prop_assert_eq!(row[0].1, 1.0);
            prop_assert!(cols.insert(row[0].0));
        }
        let eet = CsrMatrix::from_triplets(
            n, n,
            &e.triplets().flat_map(|(r, c, v)| e.triplets().filter(move |t| t.1 == c).map(move |(r2, _, v2)| (r, r2, v * v2))).collect::<Vec<_>>(),
        );
        prop_assert_eq!(eet.max_abs_diff(&CsrMatrix::identity(n)), 0.0);
    }
}

#[test]
fn efficiency_boundary_cases() {
    assert_eq!(cloaking_efficiency(3.0, 3.0).unwrap(), 0.0);
    assert_eq!(cloaking_efficiency(3.0, 0.0).unwrap(), 1.0);
    assert_eq!(cloaking_efficiency(3.0, 6.0).unwrap(), 1.0);
    assert!(cloaking_efficiency(0.0, 0.0).is_err());
    assert!(cloaking_efficiency(-1.0, 0.0).is_err());
    assert!(cloaking_efficiency(f64::NAN, 0.0).is_err());
}

#[test]
fn armijo_rejects_ascent_and_reports_exhaustion() {
    let p = ArmijoParams::default();
    assert!(armijo_backtracking(Ok, 1.0, 0.0, &p).is_err());
    let e = armijo_backtracking(|_| Ok(1.0), -1.0, 0.0, &ArmijoParams { max_backtracks: 3, ..p }).unwrap_err();
    assert!(e.to_string().contains("3 backtracks"), "{e}");
}
