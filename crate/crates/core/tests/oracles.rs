//! Library results against values computed here by other routes: rational moment
//! formulas, the explicit area-measure matrix, dense eigensolves and hand-worked
//! examples.

use std::sync::Arc;

use approx::assert_relative_eq;
use hyponorm::measures::Cancelled;
use hyponorm::spectral::{chain_rayleigh, chain_top_eigenvector};
use hyponorm::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

fn area_gamma(t: f64) -> f64 {
    2.0 / (t + 2.0)
}

// β = 1: Γ(3)Γ(t/2+1)/Γ(t/2+3) = 2/((t/2+1)(t/2+2))
fn beta1_gamma(t: f64) -> f64 {
    2.0 / ((t / 2.0 + 1.0) * (t / 2.0 + 2.0))
}

/// Entry straight from the defining display, with raw moment differences.
fn raw_entry(gamma: impl Fn(f64) -> f64, n: usize, s: f64, k: usize) -> f64 {
    let (k, n) = (k as f64, n as f64);
    let g = |t: f64| gamma(t);
    let num = g(2.0 * k + 2.0 * n + s) - g(2.0 * k + 2.0 * n) * g(2.0 * k + s) / g(2.0 * k);
    let outer = g(2.0 * k + 4.0 * n) - g(2.0 * k + 2.0 * n).powi(2) / g(2.0 * k);
    let inner = if k < n {
        g(2.0 * k + 2.0 * n)
    } else {
        g(2.0 * k + 2.0 * n) - g(2.0 * k).powi(2) / g(2.0 * k - 2.0 * n)
    };
    num / (inner.sqrt() * outer.sqrt())
}

fn area_display(n: usize, s: f64, k: usize) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    let root = ((kf + nf + 1.0) * (kf + 2.0 * nf + 1.0)).sqrt();
    let den = (kf + 1.0 + s / 2.0) * (kf + nf + 1.0 + s / 2.0);
    if k < n {
        s * root / (2.0 * den)
    } else {
        s * (kf + 1.0) * root / (2.0 * nf * den)
    }
}

fn area(n: usize, s: f64) -> Jacobi {
    Jacobi::new(Params::new(n, s).unwrap(), Arc::new(Moments::area()))
}

fn beta(b: f64, n: usize, s: f64) -> Jacobi {
    Jacobi::new(Params::new(n, s).unwrap(), Arc::new(Moments::beta(b).unwrap()))
}

fn dense(m: &TruncatedMatrix<f64>) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(m.size(), m.size(), |i, j| rows[i][j])
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

#[test]
fn moment_examples() {
    let a = Moments::area();
    for (t, want) in [(0.0, 1.0), (1.0, 2.0 / 3.0), (2.0, 0.5), (3.0, 0.4)] {
        assert_relative_eq!(a.moment(t).unwrap().value, want, max_relative = 1e-15);
    }
    let b = Moments::beta(1.0).unwrap();
    assert_relative_eq!(b.moment(2.0).unwrap().value, 1.0 / 3.0, max_relative = 1e-14);
    for t in [0.3, 5.0, 17.25, 60.0] {
        assert_relative_eq!(b.moment(t).unwrap().value, beta1_gamma(t), max_relative = 1e-13);
    }
    assert_relative_eq!(a.projection_coefficient(0, 2.0).unwrap(), 0.5, max_relative = 1e-15);
    assert_relative_eq!(a.projection_coefficient(1, 2.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(a.projection_coefficient(4, 1e-9).unwrap(), 1.0, max_relative = 1e-9);
    let Cancelled { value, .. } = a.symmetrized_pair_integral(0, 2.0, 2.0).unwrap();
    assert_relative_eq!(value, 1.0 / 12.0, max_relative = 1e-15);
}

#[test]
fn validation_examples() {
    let r = MeasureSpec::<f64>::area().validate(false, false).unwrap();
    assert!(r.mass_ok && !r.atom_at_one && !r.sup_support_lt_one);
    assert!(matches!(MeasureSpec::atoms([(1.0, 1.0)]).validate(false, false), Err(Error::AtomAtOne)));
    let mut low = MeasureSpec::atoms([(0.5, 0.3), (0.9, 0.7)]);
    let r = low.validate(false, false).unwrap();
    assert!(r.sup_support_lt_one && !r.warnings.is_empty() && r.banner().is_some());
    assert!(matches!(
        Moments::new(low.clone(), ProviderOptions::default()),
        Err(Error::HypothesesViolated(_))
    ));
    let forced = Moments::new(low, ProviderOptions { force: true, ..Default::default() }).unwrap();
    assert!(forced.banner().unwrap().starts_with("ASSUMPTIONS VIOLATED"));
}

#[test]
fn single_atom_is_refused_at_the_matrix_stage() {
    let p = Moments::new(MeasureSpec::atoms([(0.6, 1.0)]), ProviderOptions { force: true, ..Default::default() }).unwrap();
    let op = Jacobi::new(Params::new(1, 1.0).unwrap(), Arc::new(p));
    assert!(matches!(op.entry(0), Err(Error::DegenerateDenominator { k: 0 })));
}

#[test]
fn entries_by_hand() {
    let op = area(1, 2.0);
    assert_relative_eq!(op.entry(0).unwrap(), 6f64.sqrt() / 6.0, max_relative = 1e-15);
    assert_relative_eq!(op.entry(1).unwrap(), 1.0 / 3f64.sqrt(), max_relative = 1e-15);
    // (γ_4 − γ_2²)/(√γ_2 √(γ_4 − γ_2²))
    let raw = (1.0 / 12.0) / ((0.5f64).sqrt() * (1.0f64 / 12.0).sqrt());
    assert_relative_eq!(op.entry(0).unwrap(), raw, max_relative = 1e-15);
}

#[test]
fn entries_match_area_display_and_raw_moments() {
    for n in 1..=3 {
        for s in [0.5, 1.0, 2.0, 5.0] {
            let op = area(n, s);
            for k in 0..=50 {
                let a = op.entry(k).unwrap();
                assert_relative_eq!(a, area_display(n, s, k), max_relative = 1e-12);
                if k < 12 {
                    assert_relative_eq!(a, raw_entry(area_gamma, n, s, k), max_relative = 1e-9);
                }
            }
        }
    }
}

#[test]
fn branch_switch_at_k_equals_n() {
    for n in 2..=4 {
        let op = area(n, 1.5);
        assert_relative_eq!(op.entry(n - 1).unwrap(), area_display(n, 1.5, n - 1), max_relative = 1e-14);
        assert_relative_eq!(op.entry(n).unwrap(), area_display(n, 1.5, n), max_relative = 1e-14);
    }
}

#[test]
fn beta_entries_match_raw_moments() {
    for (n, s) in [(1, 0.7), (2, 3.0), (3, 1.0)] {
        let op = beta(1.0, n, s);
        for k in 0..10 {
            assert_relative_eq!(op.entry(k).unwrap(), raw_entry(beta1_gamma, n, s, k), max_relative = 1e-8);
        }
    }
}

#[test]
fn atom_entries_match_raw_moments() {
    let atoms: [(f64, f64); 3] = [(0.3, 0.2), (0.7, 0.5), (1.0 - 1e-9, 0.3)];
    let gamma = |t: f64| atoms.iter().map(|&(x, w)| w * x.powf(t)).sum::<f64>();
    let p = Moments::new(MeasureSpec::atoms(atoms), ProviderOptions { force: true, ..Default::default() }).unwrap();
    let op = Jacobi::new(Params::new(2, 1.3).unwrap(), Arc::new(p));
    for k in 0..6 {
        assert_relative_eq!(op.entry(k).unwrap(), raw_entry(gamma, 2, 1.3, k), max_relative = 1e-8);
    }
}

#[test]
fn asymptote_and_edge_examples() {
    for (n, s, asym, edge) in [(1, 2.0, 1.0, 2.0), (3, 2.0, 1.0 / 3.0, 2.0 / 3.0), (2, 4.0, 1.0, 2.0), (2, 2.0, 0.5, 1.0)] {
        let p = Params::new(n, s).unwrap();
        assert_relative_eq!(p.asymptote(), asym, max_relative = 1e-15);
        assert_relative_eq!(essential_edge(&p), edge, max_relative = 1e-15);
        assert_relative_eq!(area(n, s).asymptote(), asym, max_relative = 1e-15);
    }
}

#[test]
fn truncation_examples() {
    let m = build_truncated(&area(1, 2.0), 3).unwrap();
    let d = m.to_dense();
    assert_relative_eq!(d[1][0], 6f64.sqrt() / 6.0, max_relative = 1e-15);
    assert_relative_eq!(d[2][1], 1.0 / 3f64.sqrt(), max_relative = 1e-15);
    assert!((0..3).all(|i| d[i][i] == 0.0) && d[2][0] == 0.0);

    let m = build_truncated(&area(3, 1.0), 4).unwrap();
    assert_eq!(m.entries().len(), 1);

    let op = area(2, 1.0);
    let m = build_truncated(&op, 4).unwrap();
    assert_relative_eq!(m.get(0, 2), area_display(2, 1.0, 0), max_relative = 1e-14);
    assert_relative_eq!(m.get(3, 1), area_display(2, 1.0, 1), max_relative = 1e-14);
    assert_eq!(m.get(0, 1), 0.0);
    // 4×4 eigenvalues are ±a_0, ±a_1
    let eig = sorted_eigenvalues(dense(&m));
    let (a0, a1) = (m.get(0, 2), m.get(1, 3));
    let mut want = vec![-a0, -a1, a0, a1];
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (x, y) in eig.iter().zip(&want) {
        assert!((x - y).abs() < 1e-14);
    }

    let chains = decouple(&area(2, 1.0), 5).unwrap();
    assert_eq!(chains.chains.iter().map(|c| c.slots).collect::<Vec<_>>(), vec![3, 2]);
    assert_eq!(chains.chains[0].offdiag, vec![op.entry(0).unwrap(), op.entry(2).unwrap()]);
    assert_eq!(chains.chains[1].offdiag, vec![op.entry(1).unwrap()]);
    let single = decouple(&area(1, 2.0), 6).unwrap();
    assert_eq!(single.chains.len(), 1);
    assert_eq!(single.chains[0].offdiag, build_truncated(&area(1, 2.0), 6).unwrap().entries());
}

#[test]
fn chain_eigenvalue_examples() {
    assert!((chain_extreme_eigenvalue(&[1.0f64], 1e-15).unwrap() - 1.0).abs() <= 1e-15);
    let off = [6f64.sqrt() / 6.0, 1.0 / 3f64.sqrt()];
    assert_relative_eq!(chain_extreme_eigenvalue(&off, 1e-15).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
    for m in [3usize, 10, 64] {
        let top = chain_extreme_eigenvalue(&vec![1.0; m], 1e-14).unwrap();
        let path = DMatrix::from_fn(m + 1, m + 1, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        let dense_top = *sorted_eigenvalues(path).last().unwrap();
        assert!((top - 2.0 * (std::f64::consts::PI / (m as f64 + 2.0)).cos()).abs() < 1e-13);
        assert!((top - dense_top).abs() < 1e-12);
    }
}

#[test]
fn section_norm_matches_dense_eigensolve() {
    let ops: Vec<Jacobi> = vec![area(1, 0.5), area(2, 3.0), area(3, 1.0), beta(-0.5, 2, 1.7), beta(3.0, 4, 9.0)];
    for op in &ops {
        for size in [op.band() + 1, 17, 40, 60] {
            let m = build_truncated(op, size).unwrap();
            let dense_eig = sorted_eigenvalues(dense(&m));
            let chain_top = decouple(op, size)
                .unwrap()
                .chains
                .iter()
                .filter(|c| !c.offdiag.is_empty())
                .map(|c| chain_extreme_eigenvalue(&c.offdiag, 0.0).unwrap())
                .fold(0.0, f64::max);
            assert!((chain_top - dense_eig.last().unwrap()).abs() < 1e-10);
            let scan = spectrum_scan(op, size, 1e-3).unwrap();
            for (x, y) in scan.eigenvalues.iter().zip(&dense_eig) {
                assert!((x.value - y).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn top_eigenvector_bounds_random_rayleigh_quotients() {
    let op = beta(0.5, 1, 0.8);
    let m = build_truncated(&op, 50).unwrap();
    let lambda = chain_extreme_eigenvalue(m.entries(), 0.0).unwrap();
    let v = chain_top_eigenvector(m.entries(), lambda);
    assert_relative_eq!(chain_rayleigh(m.entries(), &v), lambda, max_relative = 1e-14);
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let j = dense(&m);
    for _ in 0..200 {
        let x = nalgebra::DVector::from_fn(50, |_, _| rng.gen_range(-1.0..1.0));
        let q = x.dot(&(&j * &x)) / x.dot(&x);
        assert!(q <= lambda + 1e-12);
    }
}

#[test]
fn norm_examples() {
    for (n, s) in [(1, 2.0), (2, 4.0)] {
        let est = operator_norm(&area(n, s), 1e-6, &Policy::default()).unwrap();
        assert!(est.certified && est.contains(2.0) && est.gap() <= 1e-6);
    }
    let est = operator_norm(&ConstantChain { band: 1, value: 1.0 }, 1e-8, &Policy::default()).unwrap();
    assert!(est.certified && est.contains(2.0));
    // constant chains with band > 1 are n copies of the same chain
    let est = operator_norm(&ConstantChain { band: 3, value: 0.25 }, 1e-8, &Policy::default()).unwrap();
    assert!(est.contains(0.5));
}

#[test]
fn scan_examples() {
    let scan = spectrum_scan(&area(1, 2.0), 200, 1e-3).unwrap();
    assert_eq!(scan.outliers().count(), 0);
    assert_eq!(scan.essential_edge, 2.0);

    // s < 2n: whatever lies beyond the edge should not drift as N doubles
    let flagged: Vec<Vec<f64>> = [100, 200, 400]
        .iter()
        .map(|&size| {
            spectrum_scan(&area(1, 0.5), size, 1e-3).unwrap().outliers().map(|e| e.value).collect()
        })
        .collect();
    assert_eq!(flagged[1].len(), flagged[2].len());
    for (a, b) in flagged[1].iter().zip(&flagged[2]) {
        assert!((a - b).abs() < 1e-6);
    }
}

/// Q(u, c) from the defining series with rational moments.
fn raw_form(gamma: impl Fn(f64) -> f64, n: usize, s: f64, u: &[f64], c: f64) -> f64 {
    let g = |t: f64| gamma(t);
    let mut q = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        let t = 2.0 * k as f64;
        let nn = 2.0 * n as f64;
        let w = if k < n { g(t + nn) } else { g(t + nn) - g(t).powi(2) / g(t - nn) };
        q += uk * uk * w;
        if let Some(&partner) = u.get(k + n) {
            q -= 2.0 * c * uk * partner * (g(t + nn + s) - g(t + nn) * g(t + s) / g(t));
        }
    }
    q
}

#[test]
fn commutator_form_examples() {
    let op = area(1, 2.0);
    let u = CoefficientVector::dense(vec![1.0, 1.0]).unwrap();
    for c in [0.0, 0.25, 0.5, 2.0] {
        assert_relative_eq!(commutator_form(&op, &u, c).unwrap(), 7.0 / 12.0 - c / 6.0, max_relative = 1e-14);
    }
    assert_relative_eq!(rayleigh_kappa(&op, &u).unwrap(), 2.0 / 7.0, max_relative = 1e-14);
    for (n, s) in [(1, 2.0), (2, 0.5), (3, 7.0)] {
        let op = area(n, s);
        let e0 = CoefficientVector::dense(vec![1.0]).unwrap();
        assert_relative_eq!(commutator_form(&op, &e0, 5.0).unwrap(), area_gamma(2.0 * n as f64), max_relative = 1e-14);
        assert_eq!(rayleigh_kappa(&op, &e0).unwrap(), 0.0);
    }
}

#[test]
fn commutator_form_matches_raw_series() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for (n, s) in [(1, 2.0), (2, 0.9), (3, 4.5)] {
        for _ in 0..20 {
            let len = rng.gen_range(1..10);
            let mut u: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
            u[0] += 0.1;
            let c = rng.gen_range(0.0..3.0);
            let v = CoefficientVector::dense(u.clone()).unwrap();
            let area_q = commutator_form(&area(n, s), &v, c).unwrap();
            assert!((area_q - raw_form(area_gamma, n, s, &u, c)).abs() < 1e-10);
            let beta_q = commutator_form(&beta(1.0, n, s), &v, c).unwrap();
            assert!((beta_q - raw_form(beta1_gamma, n, s, &u, c)).abs() < 1e-10);
        }
    }
}

#[test]
fn threshold_examples() {
    for (n, s) in [(1, 2.0), (2, 4.0)] {
        let op = area(n, s);
        let r = threshold(&op, op.params(), 1e-7, &Policy::default()).unwrap();
        assert!(r.certified && (r.c_max - 0.5).abs() < 1e-7);
    }
    let op = area(1, 1.0);
    let r = threshold(&op, op.params(), 1e-7, &Policy::default()).unwrap();
    assert!(r.threshold_lower <= r.threshold_upper && r.threshold_upper <= 1.0 + 1e-7);

    let op = area(1, 2.0);
    let r = threshold(&op, op.params(), 1e-6, &Policy::default()).unwrap();
    assert_eq!(r.classify(num_complex::Complex::new(0.3, 0.0)), Classification::Hyponormal);
    assert_eq!(r.classify(num_complex::Complex::from_polar(0.5, std::f64::consts::PI / 7.0)), Classification::Hyponormal);
    assert_eq!(r.classify(num_complex::Complex::new(0.6, 0.0)), Classification::NotHyponormal);
}

#[test]
fn oracle_crosscheck_examples() {
    let tol = 1e-6;
    let op = area(1, 2.0);
    let est = operator_norm(&op, tol, &Policy::default()).unwrap();
    assert!(oracle_crosscheck(&op, &est).unwrap() <= 1e-5);

    let chain = ConstantChain { band: 1, value: 1.0 };
    let est = operator_norm(&chain, tol, &Policy::default()).unwrap();
    assert!(oracle_crosscheck(&chain, &est).unwrap() <= 1e-5);
    assert!((est.lower - 2.0).abs() <= 1e-5);

    let op = beta(1.0, 2, 3.0);
    let est = operator_norm(&op, tol, &Policy::default()).unwrap();
    assert!(oracle_crosscheck(&op, &est).unwrap() <= 10.0 * tol);
}

#[test]
fn recovered_vector_sits_on_the_boundary() {
    let op = area(1, 2.0);
    let (u, lambda) = leading_section_coefficients(&op, 4096).unwrap();
    let parts = form_parts(&op, &u).unwrap();
    assert_relative_eq!(parts.kappa(), lambda, max_relative = 1e-12);
    let at_half = parts.normalized(0.5);
    assert!((-1e-5..=1e-3).contains(&at_half), "{at_half}");
    assert!(parts.normalized(0.49) > 0.0 && parts.normalized(0.51) < 0.0);
}

#[test]
fn quadrature_provider_agrees_with_closed_forms() {
    let quad = |m: MeasureSpec<f64>| {
        Moments::new(m, ProviderOptions { method: MomentMethod::Quadrature { tolerance: 1e-12 }, ..Default::default() }).unwrap()
    };
    let qa = quad(MeasureSpec::area());
    let qb = quad(MeasureSpec::beta(1.0));
    for i in 0..=60 {
        let t = i as f64;
        assert!((qa.moment(t).unwrap().value - area_gamma(t)).abs() <= 1e-10);
        assert!((qb.moment(t).unwrap().value - beta1_gamma(t)).abs() <= 1e-10);
    }
}

#[test]
fn sampled_density_reproduces_area_moments() {
    // w(x) = 2x on a fine grid
    let grid = (0..=2000).map(|i| {
        let x = i as f64 / 2000.0;
        (x, 2.0 * x)
    });
    let p = Moments::new(MeasureSpec::density(grid), ProviderOptions::default()).unwrap();
    assert!(p.report().hypotheses_hold());
    for t in [1.0, 2.5, 8.0] {
        let m = p.moment(t).unwrap();
        assert!((m.value - area_gamma(t)).abs() < 1e-8, "{t}: {}", m.value);
    }
}

#[test]
fn f32_pipeline() {
    let op = JacobiOperator::<f32>::new(SymbolParams::new(1, 2.0f32).unwrap(), Arc::new(MomentProvider::area()));
    assert!((op.entry(0).unwrap() - 0.408_248_3).abs() < 1e-6);
    let policy = TruncationPolicy::<f32> { max_chain_slots: 1 << 12, ..Default::default() };
    let est = operator_norm(&op, 1e-3f32, &policy).unwrap();
    assert!(est.lower <= est.upper && est.lower > 1.9 && est.upper < 2.01, "{est:?}");
}
