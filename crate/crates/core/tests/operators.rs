use std::sync::Arc;

use covcurrents::atomic::{AtomicCurrent, Fiber};
use covcurrents::connection::ChartConnection;
use covcurrents::covderiv::*;
use covcurrents::multialg::{AntiIndex, TensorExtElement, Word};
use covcurrents::operators::*;
use covcurrents::sample::Sampler;
use covcurrents::{Rational, Scalar};
use rand::Rng;

fn s2() -> ChartConnection {
    ChartConnection::parse_metric("s2", &["t", "f"], &["1", "0", "0", "sin(t)^2"])
        .unwrap()
        .with_domain(vec![(0.1, 3.0), (-3.0, 3.0)])
        .unwrap()
}

fn poly() -> ChartConnection {
    ChartConnection::parse_metric("poly", &["x", "y"], &["1", "x", "x", "1 + x^2"]).unwrap()
}

fn flat(n: usize) -> ChartConnection {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let g: Vec<String> = (0..n * n).map(|i| if i % (n + 1) == 0 { "1".into() } else { "0".into() }).collect();
    let gr: Vec<&str> = g.iter().map(|s| s.as_str()).collect();
    ChartConnection::parse_metric("flat", &refs, &gr).unwrap()
}

const S2_POINTS: [[f64; 2]; 5] = [[0.6, 0.4], [1.2, -0.7], [1.57, 0.0], [2.3, 1.1], [0.9, 2.5]];

fn w(l: &[u8]) -> Word {
    Word::from_slice(l)
}

fn a(l: &[u8]) -> AntiIndex {
    AntiIndex::new(l).unwrap()
}

fn rat(p: &[i64]) -> Vec<Rational> {
    p.iter().map(|v| Rational::new(*v as i128, 3)).collect()
}

fn ctx<S: Scalar>(cc: &ChartConnection, p: &[S], order: usize) -> SharedCtx<S> {
    Arc::new(CovContext::at(cc, p, order).unwrap())
}

fn local<S: Scalar>(cc: &ChartConnection, ctx: &CovContext<S>, s: &mut Sampler, reps: Vec<Rep>, order: usize) -> LocalField<S> {
    s.field(reps, cc.dim(), cc.fiber_dim()).unwrap().local(ctx, order).unwrap()
}

fn mv<S: Scalar>(ctx: &CovContext<S>, f: &LocalField<S>) -> MixedField<S> {
    MixedField::from_ext(ctx, f).unwrap()
}

fn tens<S: Scalar>(ctx: &CovContext<S>, f: &LocalField<S>) -> MixedField<S> {
    MixedField::from_tensor(ctx, f).unwrap()
}

fn fiber_vec<S: Scalar>(ctx: &CovContext<S>, x: &LocalField<S>) -> LocalField<S> {
    LocalField::new(ctx, vec![Rep::Fiber], x.comps().to_vec()).unwrap()
}

fn random_current<S: Scalar>(s: &mut Sampler, n: usize, r: usize, k: usize) -> AtomicCurrent<S> {
    let mut t = AtomicCurrent::zero(k);
    for key in Fiber::<S>::pbw_keys(n, n, r, k) {
        let c: i64 = s.rng().random_range(-3..=3);
        t.add_term(key, S::from_int(c));
    }
    t
}

#[test]
fn flat_hand_values() {
    let cc = flat(3);
    let c = ctx::<Rational>(&cc, &rat(&[1, 2, 0]), 4);
    let ops = Operators::new(c.clone(), 3);
    let e1 = ops.ext_constant(&a(&[0]));
    let x = TensorExtElement::basis(Word::empty(), a(&[0, 1]));
    let expect = TensorExtElement::basis(Word::empty(), a(&[1]));
    assert_eq!(ops.op_edag(&mv(&c, &e1)).unwrap().apply(&x).unwrap(), expect);
    assert_eq!(ops.op_edag_perp(&mv(&c, &e1)).unwrap().apply(&x).unwrap(), expect);
    // 𝔼_{e2} on ()⊠e1 gives −()⊠e12
    let e2 = ops.ext_constant(&a(&[1]));
    let y = ops.op_e(&mv(&c, &e2)).unwrap().apply(&TensorExtElement::basis(Word::empty(), a(&[0]))).unwrap();
    assert_eq!(y.get(&Word::empty(), &a(&[0, 1])), -Rational::one());
    // flat 𝔻_{e3} appends the letter
    let d = ops.op_d_tensor(&word_field(&c, &w(&[2]), 4)).unwrap();
    let z = d.apply(&TensorExtElement::basis(w(&[0]), a(&[1]))).unwrap();
    assert_eq!(z, TensorExtElement::basis(w(&[0, 2]), a(&[1])));
}

#[test]
fn flat_boundary_hand_value() {
    let cc = flat(2);
    let f = Fiber::<Rational>::at(&cc, &rat(&[1, 1]), 3).unwrap();
    let t = AtomicCurrent::basis(Word::empty(), a(&[0, 1])).unwrap();
    let b = boundary(&f, &t).unwrap();
    let mut expect = AtomicCurrent::zero(1);
    expect.add_term((w(&[0]), a(&[1])), Rational::one());
    expect.add_term((w(&[1]), a(&[0])), -Rational::one());
    assert_eq!(b, expect);
    let ops = Operators::new(f.ctx().clone(), 3);
    for kind in [Frame::Coordinate, Frame::Orthonormal] {
        assert_eq!(boundary_trace(&ops, &f, &t, kind).unwrap(), expect);
    }
    assert!(boundary(&f, &AtomicCurrent::dirac()).unwrap().is_zero());
}

#[test]
fn trace_display_flat_and_curved() {
    let cc = flat(2);
    let c = ctx::<Rational>(&cc, &rat(&[0, 1]), 4);
    let key = (w(&[0, 1]), a(&[0, 1]));
    let disp = trace_display(&c, &key).unwrap();
    assert_eq!(disp.derivative_terms.max_abs(), 0.0);
    let f = Fiber::<Rational>::at(&cc, &rat(&[0, 1]), 4).unwrap();
    let t = AtomicCurrent::basis(key.0.clone(), key.1.clone()).unwrap();
    let lifted = boundary(&f, &t).unwrap().lift();
    assert_eq!(f.to_pbw(&disp.full, 1).unwrap().lift(), lifted);

    let cs = ctx::<f64>(&s2(), &[0.8, 0.3], 5);
    let disp = trace_display(&cs, &(w(&[0, 1]), a(&[1]))).unwrap();
    assert!(disp.derivative_terms.max_abs() > 1e-3);
}

#[test]
fn identities_on_s2() {
    let cc = s2();
    let mut s = Sampler::new(21, cc.symbols().clone(), 2);
    for p in S2_POINTS {
        let c = ctx::<f64>(&cc, &p, 8);
        let ops = Operators::new(c.clone(), 6);
        let basis = coordinate_basis::<f64>(2, 2, 2, &[0, 1, 2]);
        let x1 = local(&cc, &c, &mut s, vec![Rep::FiberExt(1)], 6);
        let x0 = local(&cc, &c, &mut s, vec![], 6);
        let v1 = local(&cc, &c, &mut s, vec![Rep::Tangent], 6);
        let v2 = local(&cc, &c, &mut s, vec![Rep::Tangent], 6);
        let y2 = local(&cc, &c, &mut s, vec![Rep::Tangent, Rep::Tangent], 6);
        let tol = 1e-7;
        let r = [
            ("EE", ops.ee_check(&mv(&c, &x1), &mv(&c, &x0), &basis).unwrap()),
            ("EE1", ops.ee_check(&mv(&c, &x1), &mv(&c, &x1.scale(0.5)), &basis).unwrap()),
            ("DD", ops.dd_check(&tens(&c, &v1), &tens(&c, &v2), &basis).unwrap()),
            ("DD2", ops.dd_check(&tens(&c, &y2), &tens(&c, &v1), &basis).unwrap()),
            ("ED", ops.ed_check(&mv(&c, &x1), &y2, &basis).unwrap()),
            ("EE†", ops.e_edag_check(&v1, &v2, &basis).unwrap()),
            ("E†E†", ops.edag_edag_check(&mv(&c, &x1), &mv(&c, &x0), &basis).unwrap()),
            ("E†routes", ops.edag_routes_check(&mv(&c, &x1), &basis).unwrap()),
            ("Clifford", ops.clifford_check(&basis).unwrap()),
            ("[D,D]", ops.dd_commutator_check(&v1, &v2, &basis).unwrap()),
            ("[D,D†]", ops.d_ddag_commutator_check(&v1, &v2, &basis).unwrap()),
            ("[D†,D†]", ops.ddag_ddag_commutator_check(&v1, &v2, &basis).unwrap()),
        ];
        for (name, v) in r {
            assert!(v < tol, "{name} at {p:?}: {v}");
        }
    }
}

#[test]
fn sharp_actions_on_s2() {
    let cc = s2();
    let mut s = Sampler::new(22, cc.symbols().clone(), 2);
    let p = [1.1, 0.2];
    let c = ctx::<f64>(&cc, &p, 8);
    let ops = Operators::new(c.clone(), 6);
    let basis = coordinate_basis::<f64>(2, 2, 1, &[0, 1, 2]);
    let mut av = MixedField::new();
    av.add_part(1, 1, local(&cc, &c, &mut s, MixedField::<f64>::reps(1, 1), 6)).unwrap();
    let mut bv = MixedField::new();
    bv.add_part(0, 1, local(&cc, &c, &mut s, MixedField::<f64>::reps(0, 1), 6)).unwrap();
    bv.add_part(1, 1, local(&cc, &c, &mut s, MixedField::<f64>::reps(1, 1), 6)).unwrap();
    assert!(ops.de_action_check(&av, &bv, &basis).unwrap() < 1e-7);
    assert!(ops.dedag_action_check(&av, &bv, &basis).unwrap() < 1e-7);
}

#[test]
fn identities_exact_on_polynomial_metric() {
    let cc = poly();
    let mut s = Sampler::new(23, cc.symbols().clone(), 2);
    let c = ctx::<Rational>(&cc, &rat(&[1, -1]), 7);
    let ops = Operators::new(c.clone(), 5);
    let basis = coordinate_basis::<Rational>(2, 2, 2, &[0, 1, 2]);
    let x1 = local(&cc, &c, &mut s, vec![Rep::FiberExt(1)], 5);
    let v1 = local(&cc, &c, &mut s, vec![Rep::Tangent], 5);
    let v2 = local(&cc, &c, &mut s, vec![Rep::Tangent], 5);
    assert_eq!(ops.ed_check(&mv(&c, &x1), &v1.tensor(&v2), &basis).unwrap(), 0.0);
    assert_eq!(ops.dd_commutator_check(&v1, &v2, &basis).unwrap(), 0.0);
    assert_eq!(ops.dd_check(&tens(&c, &v1), &tens(&c, &v2), &basis).unwrap(), 0.0);
}

#[test]
fn dualities_on_s2() {
    let cc = s2();
    let mut s = Sampler::new(24, cc.symbols().clone(), 2);
    let tol = 1e-8;
    for p in S2_POINTS {
        let c = ctx::<f64>(&cc, &p, 8);
        let fiber = Fiber::new(c.clone(), 3).unwrap();
        let ops = Operators::new(c.clone(), 5);
        let v = local(&cc, &c, &mut s, vec![Rep::Tangent], 6);
        let y2 = local(&cc, &c, &mut s, vec![Rep::Tangent, Rep::Tangent], 6);
        let e = ops.op_e(&ops.as_multivector(&v).unwrap()).unwrap();
        let dv = ops.op_d_tensor(&v).unwrap();
        let dy = ops.op_d_tensor(&y2).unwrap();
        let perp = ops.op_perp().unwrap();
        let ddag = ops.op_ddag(&v).unwrap();
        let trde = ops.trace_de(Frame::Coordinate).unwrap();
        let div = divergence(&c, &v).unwrap();
        for k in 0..=2 {
            let om_k = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(k)], 6);
            for x in coordinate_basis::<f64>(2, 2, 2, &[k]) {
                // 𝔻_Y against ∇_Y
                let r = duality_residual(&fiber, &dv, &x, &om_k, &nabla_tensor(&c, &v, &om_k).unwrap()).unwrap();
                assert!(r < tol, "D/∇ {r}");
                if x.max_word_len() <= 1 {
                    let r = duality_residual(&fiber, &dy, &x, &om_k, &nabla_tensor(&c, &y2, &om_k).unwrap()).unwrap();
                    assert!(r < tol, "D2/∇ {r}");
                }
                // 𝔻†_X against −div X − ∇_X
                let dual = om_k.mul_jet(&div.comps()[0]).scale(-1.0).sub(&nabla_along(&c, &v, &om_k).unwrap()).unwrap();
                let r = duality_residual(&fiber, &ddag, &x, &om_k, &dual).unwrap();
                assert!(r < tol, "D†/div {r}");
                // ⊥ against ⋆
                let om_c = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(2 - k)], 6);
                let r = duality_residual(&fiber, &perp, &x, &om_c, &hodge_star_form(&c, &om_c).unwrap()).unwrap();
                assert!(r < tol, "⊥/⋆ {r}");
                if k < 2 {
                    let om = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(k + 1)], 6);
                    // 𝔼_X against ι_X
                    let r = duality_residual(&fiber, &e, &x, &om, &interior_field(&c, &fiber_vec(&c, &v), &om).unwrap()).unwrap();
                    assert!(r < tol, "E/ι {r}");
                    if x.max_word_len() <= 1 {
                        // tr(𝔻𝔼) against −δ
                        let r = duality_residual(&fiber, &trde, &x, &om, &codifferential(&c, &om).unwrap().scale(-1.0)).unwrap();
                        assert!(r < tol, "tr(DE)/δ {r}");
                    }
                }
            }
        }
    }
}

#[test]
fn codifferential_flat_hand_value() {
    // δ(x dx∧dy) = −dy on ℝ²
    let cc = flat(2);
    let c = ctx::<Rational>(&cc, &rat(&[0, 0]), 3);
    let om = covcurrents::covderiv::Field::form(2, vec![covcurrents::Expression::parse("x0", &["x0", "x1"]).unwrap()])
        .local(&c, 2)
        .unwrap();
    let d = codifferential(&c, &om).unwrap();
    assert_eq!(d.values(), vec![Rational::zero(), -Rational::one()]);
}

#[test]
fn boundary_properties() {
    let cc = s2();
    let mut s = Sampler::new(25, cc.symbols().clone(), 3);
    let c = ctx::<f64>(&cc, &[0.9, 0.4], 6);
    let f = Fiber::new(c.clone(), 4).unwrap();
    let ops = Operators::new(c.clone(), 4);
    for k in 1..=2 {
        let t: AtomicCurrent<f64> = random_current(&mut s, 2, 2, k);
        let b = boundary(&f, &t).unwrap();
        assert_eq!(b.degree(), k - 1);
        assert!(b.order() <= 3);
        assert!(boundary(&f, &b).unwrap().max_abs() < 1e-8, "∂²");
        if k == 1 {
            assert!(f.counit(&b).abs() < 1e-10, "ε∘∂");
        }
        for kind in [Frame::Coordinate, Frame::Orthonormal] {
            let bt = boundary_trace(&ops, &f, &t, kind).unwrap();
            assert!(bt.sub(&b).max_abs() < 1e-8, "trace route {kind:?}");
        }
    }
    // duality with d on 30 random pairs
    for i in 0..30 {
        let k = 1 + i % 2;
        let t: AtomicCurrent<f64> = random_current(&mut s, 2, 2, k);
        let om = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(k - 1)], 5);
        let lhs = f.eval(&boundary(&f, &t).unwrap(), &om).unwrap();
        let rhs = f.eval(&t, &exterior_derivative(&c, &om).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{lhs} {rhs}");
    }
    let t: AtomicCurrent<f64> = random_current(&mut s, 2, 4, 1);
    assert!(matches!(boundary(&f, &t), Err(covcurrents::Error::InsufficientOrder { .. })));
}

#[test]
fn boundary_exact_on_polynomial_metric() {
    let cc = poly();
    let mut s = Sampler::new(26, cc.symbols().clone(), 3);
    let c = ctx::<Rational>(&cc, &rat(&[1, 2]), 5);
    let f = Fiber::new(c.clone(), 4).unwrap();
    let ops = Operators::new(c.clone(), 4);
    let t: AtomicCurrent<Rational> = random_current(&mut s, 2, 2, 2);
    let b = boundary(&f, &t).unwrap();
    assert!(boundary(&f, &b).unwrap().is_zero());
    assert_eq!(boundary_trace(&ops, &f, &t, Frame::Coordinate).unwrap(), b);
}

#[test]
fn trace_frame_independence() {
    let cc = s2();
    for p in S2_POINTS {
        let c = ctx::<f64>(&cc, &p, 7);
        let ops = Operators::new(c.clone(), 5);
        let basis = coordinate_basis::<f64>(2, 2, 2, &[0, 1, 2]);
        let a1 = ops.trace_dedag(Frame::Coordinate).unwrap();
        let b1 = ops.trace_dedag(Frame::Orthonormal).unwrap();
        assert!(endo_residual(&a1, &b1, &basis).unwrap() < 1e-8);
        let a2 = ops.trace_de(Frame::Coordinate).unwrap();
        let b2 = ops.trace_de(Frame::Orthonormal).unwrap();
        assert!(endo_residual(&a2, &b2, &basis).unwrap() < 1e-8);
    }
}

#[test]
fn kernel_preservation_on_s2() {
    let cc = s2();
    let mut s = Sampler::new(27, cc.symbols().clone(), 2);
    let c = ctx::<f64>(&cc, &[1.0, 0.5], 7);
    let f_in = Fiber::new(c.clone(), 3).unwrap();
    let f_out = Fiber::new(c.clone(), 4).unwrap();
    let ops = Operators::new(c.clone(), 5);
    let v = local(&cc, &c, &mut s, vec![Rep::Tangent], 6);
    let x1 = local(&cc, &c, &mut s, vec![Rep::FiberExt(1)], 6);
    let endos = [
        ("E", ops.op_e(&mv(&c, &x1)).unwrap(), 0..=1),
        ("E†", ops.op_edag(&mv(&c, &x1)).unwrap(), 1..=2),
        ("D", ops.op_d_tensor(&v).unwrap(), 0..=2),
        ("D†", ops.op_ddag(&v).unwrap(), 0..=2),
        ("⊥", ops.op_perp().unwrap(), 0..=2),
        ("tr", ops.trace_dedag(Frame::Coordinate).unwrap(), 1..=2),
    ];
    for (name, e, ks) in endos {
        for k in ks {
            let r = kernel_preservation(&f_in, &f_out, &e, k).unwrap();
            assert!(r < 1e-8, "{name} k={k}: {r}");
        }
    }
}

#[test]
fn trace_lift_exact_on_polynomial_metric() {
    let cc = poly();
    let c = ctx::<Rational>(&cc, &rat(&[2, 1]), 6);
    let ops = Operators::new(c.clone(), 5);
    let f_in = Fiber::new(c.clone(), 2).unwrap();
    let f_out = Fiber::new(c.clone(), 3).unwrap();
    for k in 1..=2 {
        let rep = trace_lift_check(&ops, &f_in, &f_out, k, 0.0).unwrap();
        assert_eq!(rep.kernel_residual, 0.0);
        assert_eq!(rep.coproduct_residual, 0.0);
        assert!(rep.max_word_len <= 3);
        assert!(rep.degree_drops);
    }
}

#[test]
fn trace_lift_square_nonzero_on_s2() {
    let cc = s2();
    let c = ctx::<f64>(&cc, &[0.7, 0.1], 6);
    let ops = Operators::new(c.clone(), 5);
    let f_in = Fiber::new(c.clone(), 2).unwrap();
    let f_out = Fiber::new(c.clone(), 3).unwrap();
    let rep = trace_lift_check(&ops, &f_in, &f_out, 2, 1e-6).unwrap();
    assert!(rep.kernel_residual < 1e-8);
    assert!(rep.coproduct_residual < 1e-9);
    assert!(rep.square_nonzero);
}

#[test]
fn errors() {
    let nm = ChartConnection::parse_christoffel("c", &["x"], &["0"]).unwrap();
    let c = ctx::<Rational>(&nm, &rat(&[0]), 3);
    let ops = Operators::new(c.clone(), 2);
    assert!(ops.op_perp().is_err());
    let v = word_field(&c, &w(&[0]), 3);
    assert!(ops.op_ddag(&v).is_err());
    assert!(ops.op_d_tensor(&v).is_ok());
}

#[test]
fn clifford_and_perp_flat() {
    for n in [2usize, 3] {
        let cc = flat(n);
        let p: Vec<f64> = (0..n).map(|i| 0.3 * i as f64).collect();
        let c = ctx::<f64>(&cc, &p, 4);
        let ops = Operators::new(c.clone(), 3);
        let degrees: Vec<usize> = (0..=n).collect();
        let basis = coordinate_basis::<f64>(n, n, 1, &degrees);
        assert!(ops.clifford_check(&basis).unwrap() < 1e-8);
        // ⊥² = (−1)^{k(n−k)} on degree k
        let perp = ops.op_perp().unwrap();
        let sq = perp.compose(&perp);
        let sign = FiberEndo::by_degree("s", move |k, x| Ok(x.scale(if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 })));
        assert!(endo_residual(&sq, &sign, &basis).unwrap() < 1e-12);
    }
    let cc = flat(2);
    let c = ctx::<Rational>(&cc, &rat(&[0, 0]), 3);
    let ops = Operators::new(c.clone(), 2);
    let y = ops.op_perp().unwrap().apply(&TensorExtElement::unit()).unwrap();
    assert_eq!(y, TensorExtElement::basis(Word::empty(), a(&[0, 1])));
    // constant X on flat space: 𝔻†_X = −𝔻_X
    let x = word_field(&c, &w(&[1]), 3);
    let basis = coordinate_basis::<Rational>(2, 2, 2, &[0, 1, 2]);
    let lhs = ops.op_ddag(&x).unwrap();
    let rhs = ops.op_d_tensor(&x).unwrap().scale(-Rational::one());
    assert_eq!(endo_residual(&lhs, &rhs, &basis).unwrap(), 0.0);
}

#[test]
fn lorentzian_clifford() {
    let cc = ChartConnection::parse_metric("mink", &["t", "x"], &["-1", "0", "0", "1"]).unwrap();
    let c = ctx::<f64>(&cc, &[0.0, 0.0], 4);
    let ops = Operators::new(c.clone(), 3);
    let basis = coordinate_basis::<f64>(2, 2, 1, &[0, 1, 2]);
    assert!(ops.clifford_check(&basis).unwrap() < 1e-8);
    let x1 = ops.ext_constant(&a(&[0]));
    assert!(ops.edag_routes_check(&mv(&c, &x1), &basis).unwrap() < 1e-12);
}

#[test]
fn adjoint_involution() {
    let cc = s2();
    let mut s = Sampler::new(28, cc.symbols().clone(), 2);
    let c = ctx::<f64>(&cc, &[1.3, 0.2], 7);
    let ops = Operators::new(c.clone(), 5);
    let basis = coordinate_basis::<f64>(2, 2, 2, &[0, 1, 2]);
    let x1 = mv(&c, &local(&cc, &c, &mut s, vec![Rep::FiberExt(1)], 6));
    // 𝔼_X = (−1)^{r(n−k+r)} ⊥⁻¹ 𝔼†_X ⊥ with r = 1, n = 2
    let h = ops.hodge().unwrap().clone();
    let edag = ops.op_edag(&x1).unwrap();
    let back = FiberEndo::by_degree("E††", move |k, xk| {
        let y = h.perp_inverse(&edag.apply(&h.perp(xk))?);
        Ok(y.scale(if (3 - k) % 2 == 0 { 1.0 } else { -1.0 }))
    });
    assert!(endo_residual(&back, &ops.op_e(&x1).unwrap(), &basis).unwrap() < 1e-9);
    // (𝔻†)† = 𝔻 with f⌟† = f⌟ and 𝔻†_X = −div(X)⌟ − 𝔻_X
    let v = local(&cc, &c, &mut s, vec![Rep::Tangent], 6);
    let div = ops.op_f(&divergence(&c, &v).unwrap()).unwrap();
    let twice = div.scale(-1.0).sub(&ops.op_ddag(&v).unwrap());
    assert!(endo_residual(&twice, &ops.op_d_tensor(&v).unwrap(), &basis).unwrap() < 1e-9);
}

#[test]
fn sharp_unit_associativity_and_sign() {
    let cc = s2();
    let mut s = Sampler::new(29, cc.symbols().clone(), 2);
    let c = ctx::<f64>(&cc, &[0.8, -0.4], 8);
    let ops = Operators::new(c.clone(), 5);
    let mk = |s: &mut Sampler, m: usize, k: usize| {
        let mut f = MixedField::new();
        f.add_part(m, k, local(&cc, &c, s, MixedField::<f64>::reps(m, k), 6)).unwrap();
        f
    };
    let (x, y, z) = (mk(&mut s, 1, 1), mk(&mut s, 1, 0), mk(&mut s, 0, 1));
    let one = MixedField::unit(&c, 6);
    assert!(ops.sharp(&one, &x).unwrap().sub(&x).unwrap().max_abs_coeff() < 1e-12);
    assert!(ops.sharp(&x, &one).unwrap().sub(&x).unwrap().max_abs_coeff() < 1e-12);
    let l = ops.sharp(&ops.sharp(&x, &y).unwrap(), &z).unwrap();
    let r = ops.sharp(&x, &ops.sharp(&y, &z).unwrap()).unwrap();
    let lv = l.value(&c);
    let rv = r.value(&c);
    assert!(lv.sub(&rv).max_abs() < 1e-7);
    let basis = coordinate_basis::<f64>(2, 2, 1, &[0, 1, 2]);
    assert!(endo_residual(&ops.op_de(&one).unwrap(), &FiberEndo::identity(), &basis).unwrap() < 1e-12);
    // the sign law shows up for |α| = |β| = 1
    let b = mk(&mut s, 1, 1);
    assert!(ops.dedag_action_check(&x, &b, &basis).unwrap() < 1e-7);
    let unsigned = ops.op_dedag(&x).unwrap().compose(&ops.op_dedag(&b).unwrap());
    assert!(endo_residual(&ops.op_dedag(&ops.sharp(&x, &b).unwrap()).unwrap(), &unsigned, &basis).unwrap() > 1e-3);
}

#[test]
fn boundary_co_leibniz() {
    let cc = s2();
    let mut s = Sampler::new(30, cc.symbols().clone(), 3);
    let c = ctx::<f64>(&cc, &[1.1, 0.6], 6);
    let f = Fiber::new(c.clone(), 4).unwrap();
    for k in 1..=2 {
        let t: AtomicCurrent<f64> = random_current(&mut s, 2, 2, k);
        let bt = boundary(&f, &t).unwrap();
        let dt = f.coproduct(&t).unwrap();
        let dbt = f.coproduct(&bt).unwrap();
        for k1 in 0..k {
            let om = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(k1)], 5);
            let eta = local(&cc, &c, &mut s, vec![Rep::CoFiberExt(k - 1 - k1)], 5);
            let lhs = f.eval_pair(&dbt, &om, &eta).unwrap();
            let d_om = exterior_derivative(&c, &om).unwrap();
            let d_eta = exterior_derivative(&c, &eta).unwrap();
            let sg = if k1 % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = f.eval_pair(&dt, &d_om, &eta).unwrap() + sg * f.eval_pair(&dt, &om, &d_eta).unwrap();
            assert!((lhs - rhs).abs() < 1e-7, "{lhs} {rhs}");
        }
    }
}
