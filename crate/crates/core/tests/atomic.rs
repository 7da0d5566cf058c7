use std::sync::Arc;

use covcurrents::atomic::*;
use covcurrents::connection::ChartConnection;
use covcurrents::covderiv::{CovContext, Field, LocalField, Rep};
use covcurrents::multialg::{binomial, AntiIndex, TensorExtElement, Word};
use covcurrents::sample::Sampler;
use covcurrents::{Expression, Rational, Scalar};

fn flat2() -> ChartConnection {
    ChartConnection::parse_metric("flat", &["x", "y"], &["1", "0", "0", "1"]).unwrap()
}

fn poly2() -> ChartConnection {
    ChartConnection::parse_metric("poly", &["x", "y"], &["1", "x", "x", "1 + x^2"]).unwrap()
}

fn poly3() -> ChartConnection {
    ChartConnection::parse_metric("poly3", &["x", "y", "z"], &["1", "0", "y", "0", "1", "0", "y", "0", "1 + y^2"]).unwrap()
}

fn s2() -> ChartConnection {
    ChartConnection::parse_metric("s2", &["t", "f"], &["1", "0", "0", "sin(t)^2"]).unwrap()
}

fn w(l: &[u8]) -> Word {
    Word::from_slice(l)
}

fn a(l: &[u8]) -> AntiIndex {
    AntiIndex::new(l).unwrap()
}

fn q(p: &[i64]) -> Vec<Rational> {
    p.iter().map(|v| Rational::new(*v as i128, 2)).collect()
}

#[test]
fn flat_chart_pbw() {
    let f = Fiber::<Rational>::at(&flat2(), &q(&[1, 3]), 3).unwrap();
    let table = f.table(1).unwrap();
    assert_eq!(table.len(), binomial(2 + 3, 2) * 2);
    for key in table.keys() {
        let t = f.to_pbw(&TensorExtElement::basis(key.0.clone(), key.1.clone()), 1).unwrap();
        assert_eq!(t, AtomicCurrent::basis(key.0.clone(), key.1.clone()).unwrap());
    }
    let mut x = TensorExtElement::basis(w(&[0, 1]), a(&[1]));
    x.add_term(w(&[1, 0]), a(&[1]), -Rational::one());
    assert!(f.to_pbw(&x, 1).unwrap().is_zero());
    // only the symmetrization matters
    let y = f.to_pbw(&TensorExtElement::basis(w(&[1, 0, 1]), a(&[0])), 1).unwrap();
    assert_eq!(y, AtomicCurrent::basis(w(&[0, 1, 1]), a(&[0])).unwrap());
}

#[test]
fn kernel_basis_annihilates_probes_exactly() {
    let f = Fiber::<Rational>::at(&poly2(), &q(&[1, -1]), 3).unwrap();
    for k in 0..=2 {
        let basis = f.kernel_basis(k).unwrap();
        assert_eq!(basis.len(), Fiber::<Rational>::kernel_dimension(2, 2, 3, k));
        for e in &basis {
            let v = f.probe_values(&e.element, k).unwrap();
            assert!(v.iter().all(|x| x.is_zero()), "{:?} {} {} {:?}", e.big_i, e.i, e.j, e.big_j);
        }
    }
    assert_eq!(Fiber::<Rational>::kernel_dimension(2, 2, 3, 1), 10);
}

#[test]
fn kernel_basis_three_dimensions() {
    let f = Fiber::<Rational>::at(&poly3(), &q(&[1, 1, -1]), 3).unwrap();
    let basis = f.kernel_basis(1).unwrap();
    for e in &basis {
        assert!(f.probe_values(&e.element, 1).unwrap().iter().all(|x| x.is_zero()));
    }
    // the labelled set spans the kernel but has one redundant element per K in degree 3
    assert_eq!(basis.len(), 63);
    assert_eq!(span_rank(&basis, 3, 3, 3, 1), Fiber::<Rational>::kernel_dimension(3, 3, 3, 1));
}

#[test]
fn kernel_basis_spans_at_order_four() {
    let f = Fiber::<Rational>::at(&poly2(), &q(&[1, 1]), 4).unwrap();
    let basis = f.kernel_basis(0).unwrap();
    for e in &basis {
        assert!(f.probe_values(&e.element, 0).unwrap().iter().all(|x| x.is_zero()));
    }
    assert_eq!(basis.len(), 1 + 4 + 12);
    assert_eq!(span_rank(&basis, 2, 2, 4, 0), Fiber::<Rational>::kernel_dimension(2, 2, 4, 0));
}

fn span_rank(basis: &[KernelElement<Rational>], n: usize, d: usize, r: usize, k: usize) -> usize {
    let mut coords = Vec::new();
    for len in 0..=r {
        for ww in Word::all_of_length(n, len) {
            for kk in AntiIndex::all(d, k) {
                coords.push((ww.clone(), kk));
            }
        }
    }
    let m: Vec<Vec<Rational>> = basis.iter().map(|e| coords.iter().map(|(ww, kk)| e.element.get(ww, kk)).collect()).collect();
    covcurrents::linalg::rank(&m, 0.0)
}

#[test]
fn probe_rank_matches_pbw_count() {
    for (n, r, k, d) in [(2usize, 2usize, 1usize, 2usize), (2, 3, 1, 2), (3, 2, 2, 3)] {
        let cc = if n == 2 { poly2() } else { poly3() };
        let p: Vec<Rational> = q(&[1, 2, -1])[..n].to_vec();
        let f = Fiber::<Rational>::at(&cc, &p, r).unwrap();
        assert_eq!(f.probe_rank(k, 0.0).unwrap(), binomial(n + r, n) * binomial(d, k));
    }
}

#[test]
fn curvature_in_the_quotient_on_s2() {
    let p = [0.9, 0.4];
    let f = Fiber::<f64>::at(&s2(), &p, 2).unwrap();
    let curv = f.ctx().chart().curvature().unwrap();
    for c in 0..2u8 {
        let mut x = TensorExtElement::basis(w(&[0, 1]), a(&[c]));
        x.add_term(w(&[1, 0]), a(&[c]), -1.0);
        let lhs = f.to_pbw(&x, 1).unwrap();
        let mut rx = TensorExtElement::zero();
        for b in 0..2u8 {
            rx.add_term(w(&[]), a(&[b]), curv.fiber(b as usize, c as usize, 0, 1));
        }
        let rhs = f.to_pbw(&rx, 1).unwrap().scale(-1.0);
        assert!(lhs.sub(&rhs).max_abs() < 1e-8);
        assert!(lhs.max_abs() > 0.1);
    }
    let mut top = TensorExtElement::basis(w(&[0, 1]), a(&[0, 1]));
    top.add_term(w(&[1, 0]), a(&[0, 1]), -1.0);
    assert!(f.to_pbw(&top, 2).unwrap().max_abs() < 1e-8);
}

#[test]
fn phi_of_basis_on_monomial_probes() {
    let f = Fiber::<Rational>::at(&poly2(), &q(&[3, 1]), 3).unwrap();
    let table = f.table(1).unwrap();
    for probe in table.keys() {
        let pf = f.probe_field(probe).unwrap();
        for len in 0..=probe.0.len() {
            for s in Word::all_of_length(2, len) {
                for kk in AntiIndex::all(2, 1) {
                    let v = f.phi_apply(&TensorExtElement::basis(s.clone(), kk.clone()), &pf).unwrap();
                    let want = s.multi_index(2) == probe.0.multi_index(2) && kk == probe.1;
                    assert_eq!(v, if want { Rational::one() } else { Rational::zero() });
                }
            }
        }
    }
    // zeroth derivative
    let om = Field::form(1, vec![Expression::parse("x*y", &["x", "y"]).unwrap(), Expression::parse("2", &["x", "y"]).unwrap()])
        .local(f.ctx(), 3)
        .unwrap();
    let v = f.phi_apply(&TensorExtElement::basis(w(&[]), a(&[0])), &om).unwrap();
    assert_eq!(v, Rational::new(3, 4));
}

fn random_current<S: Scalar>(f: &Fiber<S>, s: &mut Sampler, k: usize) -> AtomicCurrent<S> {
    let table = f.table(k).unwrap();
    let mut t = AtomicCurrent::zero(k);
    for key in table.keys() {
        let c = s.index(7) as i64 - 3;
        t.add_term(key.clone(), S::from_ratio(c as i128, 2));
    }
    t
}

fn random_form<S: Scalar>(f: &Fiber<S>, s: &mut Sampler, k: usize, order: usize) -> LocalField<S> {
    s.field(vec![Rep::CoFiberExt(k)], f.dim(), f.fiber_dim()).unwrap().local(f.ctx(), order).unwrap()
}

#[test]
fn coproduct_duality_on_s2() {
    let f = Fiber::<f64>::at(&s2(), &[1.1, 0.3], 3).unwrap();
    let mut s = Sampler::new(21, s2().symbols().clone(), 3);
    for trial in 0..50 {
        let k = trial % 3;
        let ka = s.index(k + 1);
        let t = random_current(&f, &mut s, k);
        let om = random_form(&f, &mut s, ka, 3);
        let et = random_form(&f, &mut s, k - ka, 3);
        let pair = f.coproduct(&t).unwrap();
        let lhs = f.eval_pair(&pair, &om, &et).unwrap();
        let wedge = covcurrents::covderiv::wedge_fields(f.ctx(), &om, &et).unwrap();
        let rhs = f.eval(&t, &wedge).unwrap();
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn coproduct_dirac_counit_and_coassociativity() {
    let f = Fiber::<Rational>::at(&poly2(), &q(&[1, 1]), 3).unwrap();
    let d = AtomicCurrent::<Rational>::dirac();
    let pair = f.coproduct(&d).unwrap();
    assert_eq!(pair.len(), 1);
    assert_eq!(f.counit(&d), Rational::one());
    let mut s = Sampler::new(22, poly2().symbols().clone(), 2);
    let t = random_current(&f, &mut s, 2);
    let pair = f.coproduct(&t).unwrap();
    // (ε ⊗ id)Δ T = T
    let mut back = AtomicCurrent::zero(2);
    for ((l, r), c) in &pair {
        if l.0.is_empty() && l.1.is_empty() {
            back.add_term(r.clone(), *c);
        }
    }
    assert_eq!(back, t);
    // coassociativity
    let left = triple(&f, &pair, true);
    let right = triple(&f, &pair, false);
    assert_eq!(left, right);
}

type Triple = std::collections::BTreeMap<(covcurrents::multialg::Key, covcurrents::multialg::Key, covcurrents::multialg::Key), Rational>;

fn triple(f: &Fiber<Rational>, pair: &CurrentPair<Rational>, split_left: bool) -> Triple {
    let mut out = Triple::new();
    for ((l, r), c) in pair {
        let (split, keep) = if split_left { (l, r) } else { (r, l) };
        let one = AtomicCurrent::basis(split.0.clone(), split.1.clone()).unwrap();
        for ((x, y), c2) in f.coproduct(&one).unwrap() {
            let key = if split_left { (x, y, keep.clone()) } else { (keep.clone(), x, y) };
            *out.entry(key).or_insert_with(Rational::zero) += *c * c2;
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

#[test]
fn coproduct_is_connection_independent() {
    let base = s2();
    let pert = s2()
        .with_perturbation(
            ["t*f", "0", "0", "1", "0", "f", "f", "t"].iter().map(|e| Expression::parse(e, &["t", "f"]).unwrap()).collect(),
        )
        .unwrap();
    let p = [0.8, -0.2];
    let f1 = Fiber::<f64>::at(&base, &p, 3).unwrap();
    let f2 = Fiber::<f64>::at(&pert, &p, 3).unwrap();
    let mut s = Sampler::new(23, base.symbols().clone(), 3);
    for _ in 0..5 {
        let t1 = random_current(&f1, &mut s, 1);
        let t2 = f2.from_probe_values(1, &f1.current_probe_values(&t1).unwrap()).unwrap();
        assert!(t1.sub(&t2).max_abs() > 1e-3);
        let (d1, d2) = (f1.coproduct(&t1).unwrap(), f2.coproduct(&t2).unwrap());
        let sym = base.symbols().clone();
        let mut s2 = Sampler::new(24, sym, 3);
        for ka in 0..=1 {
            let om = s2.field(vec![Rep::CoFiberExt(ka)], 2, 2).unwrap();
            let et = s2.field(vec![Rep::CoFiberExt(1 - ka)], 2, 2).unwrap();
            let v1 = f1.eval_pair(&d1, &om.local(f1.ctx(), 3).unwrap(), &et.local(f1.ctx(), 3).unwrap()).unwrap();
            let v2 = f2.eval_pair(&d2, &om.local(f2.ctx(), 3).unwrap(), &et.local(f2.ctx(), 3).unwrap()).unwrap();
            assert!((v1 - v2).abs() < 1e-7 * (1.0 + v1.abs()));
        }
    }
}

#[test]
fn f_action_duality() {
    let f = Fiber::<f64>::at(&s2(), &[1.3, 0.7], 3).unwrap();
    let mut s = Sampler::new(25, s2().symbols().clone(), 3);
    for _ in 0..30 {
        let t = random_current(&f, &mut s, 1);
        let g = s.field(vec![], 2, 2).unwrap().local(f.ctx(), 3).unwrap();
        let om = random_form(&f, &mut s, 1, 3);
        let lhs = f.eval(&f.f_action(&g, &t).unwrap(), &om).unwrap();
        let rhs = f.eval(&t, &om.mul_jet(&g.comps()[0])).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }
    let one = LocalField::scalar(f.ctx().constant_jet(1.0, 3));
    let t = random_current(&f, &mut s, 2);
    assert!(f.f_action(&one, &t).unwrap().sub(&t).max_abs() < 1e-12);
    let fq = Fiber::<Rational>::at(&poly2(), &q(&[1, 3]), 3).unwrap();
    let tq = random_current(&fq, &mut s, 1);
    let oneq = LocalField::scalar(fq.ctx().constant_jet(Rational::one(), 3));
    assert_eq!(fq.f_action(&oneq, &tq).unwrap(), tq);
    // f(p) = 0 kills the Dirac mass
    let z = Field::scalar(Expression::parse("t - 13/10", &["t", "f"]).unwrap()).local(f.ctx(), 3).unwrap();
    assert!(f.f_action(&z, &AtomicCurrent::dirac()).unwrap().max_abs() < 1e-15);
}

#[test]
fn json_round_trip() {
    let f = Fiber::<Rational>::at(&poly2(), &q(&[1, 1]), 2).unwrap();
    let mut s = Sampler::new(26, poly2().symbols().clone(), 2);
    let t = random_current(&f, &mut s, 1);
    let back = AtomicCurrent::<Rational>::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
}

#[test]
fn identity_transition() {
    let cc = poly2();
    let f = Fiber::<Rational>::at(&cc, &q(&[1, 2]), 2).unwrap();
    let map = ChartMap::new(vec![Expression::parse("x", &["x", "y"]).unwrap(), Expression::parse("y", &["x", "y"]).unwrap()]);
    for k in 0..=2 {
        let m = transition_matrix(&f, &f, &map, k).unwrap();
        assert_eq!(m, covcurrents::linalg::identity::<Rational>(m.len()));
    }
}

#[test]
fn linear_transition_on_the_line() {
    let a = ChartConnection::parse_metric("a", &["x"], &["1"]).unwrap();
    let b = ChartConnection::parse_metric("b", &["y"], &["4"]).unwrap();
    // x = 2y
    let map = ChartMap::new(vec![Expression::parse("x/2", &["x"]).unwrap()]);
    let fa = Fiber::<Rational>::at(&a, &[Rational::new(1, 1)], 1).unwrap();
    let fb = Fiber::<Rational>::at(&b, &[Rational::new(1, 2)], 1).unwrap();
    let m = transition_matrix(&fa, &fb, &map, 0).unwrap();
    assert_eq!(m, vec![vec![Rational::one(), Rational::zero()], vec![Rational::zero(), Rational::new(1, 2)]]);
    let back = ChartMap::new(vec![Expression::parse("2*y", &["y"]).unwrap()]);
    let m2 = transition_matrix(&fb, &fa, &back, 0).unwrap();
    assert_eq!(m2[1][1], Rational::new(2, 1));
}

#[test]
fn transition_cocycle_on_s2() {
    let sph = s2();
    let stereo_n = ChartConnection::parse_metric(
        "north",
        &["u", "v"],
        &["4/(1 + u^2 + v^2)^2", "0", "0", "4/(1 + u^2 + v^2)^2"],
    )
    .unwrap();
    let stereo_s = ChartConnection::parse_metric(
        "south",
        &["s", "w"],
        &["4/(1 + s^2 + w^2)^2", "0", "0", "4/(1 + s^2 + w^2)^2"],
    )
    .unwrap();
    let tf = ["t", "f"];
    let a_to_b = ChartMap::new(vec![
        Expression::parse("sin(t)*cos(f)/(1 - cos(t))", &tf).unwrap(),
        Expression::parse("sin(t)*sin(f)/(1 - cos(t))", &tf).unwrap(),
    ]);
    let a_to_c = ChartMap::new(vec![
        Expression::parse("sin(t)*cos(f)/(1 + cos(t))", &tf).unwrap(),
        Expression::parse("sin(t)*sin(f)/(1 + cos(t))", &tf).unwrap(),
    ]);
    let uv = ["u", "v"];
    let b_to_c = ChartMap::new(vec![
        Expression::parse("u/(u^2 + v^2)", &uv).unwrap(),
        Expression::parse("v/(u^2 + v^2)", &uv).unwrap(),
    ]);
    let pa = vec![1.2, 0.5];
    let pb = a_to_b.apply(&pa).unwrap();
    let pc = a_to_c.apply(&pa).unwrap();
    let r = 2;
    let fa = Fiber::<f64>::at(&sph, &pa, r).unwrap();
    let fb = Fiber::<f64>::at(&stereo_n, &pb, r).unwrap();
    let fc = Fiber::<f64>::at(&stereo_s, &pc, r).unwrap();
    for k in 0..=2 {
        let g_ba = transition_matrix(&fa, &fb, &a_to_b, k).unwrap();
        let g_cb = transition_matrix(&fb, &fc, &b_to_c, k).unwrap();
        let g_ca = transition_matrix(&fa, &fc, &a_to_c, k).unwrap();
        let prod = covcurrents::linalg::mat_mul(&g_cb, &g_ba);
        assert!(covcurrents::linalg::max_diff(&prod, &g_ca) < 1e-7, "k={k}");
    }
}

#[test]
fn shared_context_tables_are_cached() {
    let ctx = Arc::new(CovContext::<Rational>::at(&flat2(), &q(&[0, 0]), 2).unwrap());
    let f = Fiber::new(ctx, 2).unwrap();
    let t1 = f.table(1).unwrap();
    let t2 = f.table(1).unwrap();
    assert!(Arc::ptr_eq(&t1, &t2));
}
