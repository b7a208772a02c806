mod common;

use hep2_gss::classifier::{predict, train_binary, train_svm, FeatureMatrix, SvmOptions};

fn decision_error(rows: &[Vec<f64>], y: &[f64], c: f64, opts: &SvmOptions) -> f64 {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (w, b, trace) = train_binary(&refs, y, &vec![c; rows.len()], opts, 5);
    assert!(trace.converged);
    let (rw, rb) = common::qp_reference(rows, y, c);
    rows.iter()
        .map(|x| (common::dot(&w, x) + b - common::dot(&rw, x) - rb).abs())
        .fold(0.0, f64::max)
}

#[test]
fn dual_coordinate_descent_matches_reference_qp() {
    let (rows, y) = common::overlapping_classes(50, 5, 31);
    let tight = SvmOptions {
        tol: 1e-8,
        max_epochs: 100_000,
        ..SvmOptions::default()
    };
    for c in [0.1, 1.0, 10.0] {
        let err = decision_error(&rows, &y, c, &tight);
        assert!(err < 1e-4, "c={c}: {err}");
    }
}

#[test]
fn default_tolerance_bounds_the_gap() {
    let (rows, y) = common::overlapping_classes(50, 5, 31);
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let opts = SvmOptions::default();
    let (_, _, trace) = train_binary(&refs, &y, &vec![1.0; 50], &opts, 5);
    assert!(trace.converged);
    assert!(trace.gap <= opts.tol * trace.primal.abs().max(1.0));
    for w in trace.dual_objectives.windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
}

#[test]
fn duplicated_rows_match_halved_cost() {
    let (rows, y) = common::overlapping_classes(30, 3, 8);
    let tight = SvmOptions {
        tol: 1e-12,
        max_epochs: 100_000,
        ..SvmOptions::default()
    };
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let doubled: Vec<&[f64]> = refs.iter().chain(&refs).copied().collect();
    let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
    let (w1, b1, _) = train_binary(&refs, &y, &vec![1.0; 30], &tight, 1);
    let (w2, b2, _) = train_binary(&doubled, &y2, &vec![0.5; 60], &tight, 1);
    for x in &rows {
        let d = (common::dot(&w1, x) + b1 - common::dot(&w2, x) - b2).abs();
        assert!(d < 1e-6, "{d}");
    }
}

#[test]
fn separable_data_is_fit_exactly() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for i in 0..20 {
            let mut v = vec![0.1 * i as f64, -0.05 * i as f64, 0.0];
            v[class] += 5.0;
            rows.push(v);
            labels.push(class);
        }
    }
    let mut fm = FeatureMatrix::new(3, vec!["a".into(), "b".into(), "c".into()]);
    for (i, (x, &t)) in rows.iter().zip(&labels).enumerate() {
        fm.push(x, t, format!("s{}", i % 4)).unwrap();
    }
    let model = train_svm(&fm, &SvmOptions::default(), 0).unwrap();
    for (x, &t) in rows.iter().zip(&labels) {
        assert_eq!(predict(&model, x).unwrap().0, t);
    }
}

