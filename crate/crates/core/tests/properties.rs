use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;

use covcurrents::atomic::{AtomicCurrent, Fiber};
use covcurrents::cli::{self, ManifoldSpec, RunOptions};
use covcurrents::connection::ChartConnection;
use covcurrents::expr::monomial_form;
use covcurrents::multialg::{AntiIndex, ExtVec, Hodge, Key, MetricSignature, TensorExtElement, Word};
use covcurrents::{Expression, JetFamily, Mode, Rational, Scalar};

const XY: [&str; 2] = ["x", "y"];

fn rational_poly() -> impl Strategy<Value = String> {
    let term = (-4i64..=4, 0u32..=2, 0u32..=2).prop_map(|(c, a, b)| format!("({c})*x^{a}*y^{b}"));
    prop::collection::vec(term, 1..4).prop_map(|t| t.join(" + "))
}

fn elementary() -> impl Strategy<Value = String> {
    let lin = (-3i64..=3, -3i64..=3, -2i64..=2).prop_map(|(a, b, c)| format!("({a}*x/4 + {b}*y/4 + {c}/4)"));
    (0usize..8, lin, rational_poly()).prop_map(|(f, l, p)| match f {
        0 => format!("sin{l}"),
        1 => format!("cos{l} * ({p})"),
        2 => format!("exp{l}"),
        3 => format!("log(3 + {l}^2)"),
        4 => format!("sqrt(2 + {l}^2)"),
        5 => format!("sinh{l} + cosh{l}*x"),
        6 => format!("tan({l}/2)"),
        _ => format!("({p}) / (2 + {l}^2)"),
    })
}

fn point() -> impl Strategy<Value = [i64; 2]> {
    [-4i64..=4, -4i64..=4]
}

fn rat_point(p: [i64; 2]) -> Vec<Rational> {
    p.iter().map(|v| Rational::new(*v as i128, 8)).collect()
}

fn multi_indices(order: usize) -> Vec<[u8; 2]> {
    let mut out = Vec::new();
    for total in 0..=order {
        for a in 0..=total {
            out.push([a as u8, (total - a) as u8]);
        }
    }
    out
}

/// Central difference of order `t` of `f` at `p`, step `h`.
fn central(f: &dyn Fn(&[f64]) -> f64, p: &[f64], t: [u8; 2], h: f64) -> f64 {
    fn stencil(k: u8) -> Vec<(f64, f64)> {
        match k {
            0 => vec![(0.0, 1.0)],
            1 => vec![(1.0, 0.5), (-1.0, -0.5)],
            2 => vec![(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
            _ => unreachable!(),
        }
    }
    let hx = h.powi(t[0] as i32);
    let hy = h.powi(t[1] as i32);
    let mut acc = 0.0;
    for (dx, wx) in stencil(t[0]) {
        for (dy, wy) in stencil(t[1]) {
            acc += wx * wy * f(&[p[0] + dx * h, p[1] + dy * h]);
        }
    }
    acc / (hx * hy)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jet_product_is_truncated_cauchy_product(a in rational_poly(), b in rational_poly(), p in point()) {
        let fam = JetFamily::new(2, 3);
        let e1 = Expression::parse(&a, &XY).unwrap();
        let e2 = Expression::parse(&b, &XY).unwrap();
        let prod = Expression::parse(&format!("({a}) * ({b})"), &XY).unwrap();
        let q = rat_point(p);
        let j1 = e1.eval_jet(&q, &fam, 3).unwrap();
        let j2 = e2.eval_jet(&q, &fam, 3).unwrap();
        let direct = prod.eval_jet(&q, &fam, 3).unwrap();
        let product = j1.mul(&j2);
        prop_assert_eq!(direct.coeffs(), product.coeffs());
    }

    #[test]
    fn jet_matches_finite_differences(text in elementary(), p in point()) {
        let e = Expression::parse(&text, &XY).unwrap();
        let pf: Vec<f64> = p.iter().map(|v| *v as f64 / 8.0).collect();
        let fam = JetFamily::new(2, 3);
        let jet = e.eval_jet(&pf, &fam, 3).unwrap();
        let f = |x: &[f64]| e.eval(x).unwrap();
        let h = 1e-4;
        for t in multi_indices(2) {
            let fd = central(&f, &pf, t, h);
            prop_assert!(close(jet.partial(&t), fd, 1e-5), "{} at {:?}: {:?} {} vs {}", text, pf, t, jet.partial(&t), fd);
        }
        // third order: one more central difference of the order-2 jet
        for t in multi_indices(3).into_iter().filter(|t| t[0] + t[1] == 3) {
            let (dir, lower) = if t[0] > 0 { (0, [t[0] - 1, t[1]]) } else { (1, [t[0], t[1] - 1]) };
            let shifted = |s: f64| {
                let mut x = pf.clone();
                x[dir] += s;
                e.eval_jet(&x, &fam, 2).unwrap().partial(&lower)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            prop_assert!(close(jet.partial(&t), fd, 1e-5), "{} at {:?}: {:?}", text, pf, t);
        }
    }

    #[test]
    fn monomial_probe_is_kronecker(p in point(), t in [0u8..=3, 0u8..=3]) {
        let q = rat_point(p);
        let order = 4;
        let e = monomial_form(std::sync::Arc::from(vec!["x".to_string(), "y".to_string()]), &q, &t);
        let fam = JetFamily::new(2, order);
        let jet = e.eval_jet(&q, &fam, order).unwrap();
        for s in multi_indices(order) {
            let want = if s == t { Rational::one() } else { Rational::zero() };
            prop_assert_eq!(jet.partial(&s), want, "S={:?} T={:?}", s, t);
        }
    }
}

fn word() -> impl Strategy<Value = Word> {
    prop::collection::vec(0u8..3, 0..=5).prop_map(|l| Word::from_slice(&l))
}

fn anti() -> impl Strategy<Value = AntiIndex> {
    prop::sample::subsequence(vec![0u8, 1, 2, 3], 0..=4).prop_map(|l| AntiIndex::new(&l).unwrap())
}

fn element() -> impl Strategy<Value = TensorExtElement<Rational>> {
    prop::collection::vec((word(), anti(), -5i64..=5), 1..4).prop_map(|terms| {
        let mut x = TensorExtElement::zero();
        for (w, k, c) in terms {
            x.add_term(w, k, Rational::from_int(c));
        }
        x
    })
}

type Triple = BTreeMap<(Key, Key, Key), Rational>;

fn coassoc_side(x: &TensorExtElement<Rational>, left: bool) -> Triple {
    let mut out = Triple::new();
    for ((a, b), c) in x.coproduct().iter() {
        let (split, keep) = if left { (a, b) } else { (b, a) };
        let one = TensorExtElement::basis(split.0.clone(), split.1.clone());
        for ((u, v), c2) in one.coproduct().iter() {
            let key = if left { (u.clone(), v.clone(), keep.clone()) } else { (keep.clone(), u.clone(), v.clone()) };
            *out.entry(key).or_insert_with(Rational::zero) += *c * *c2;
        }
    }
    out.retain(|_, v| !v.is_zero());
    out
}

fn is_unit(k: &Key) -> bool {
    k.0.is_empty() && k.1.is_empty()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coproduct_is_coassociative(x in element()) {
        prop_assert_eq!(coassoc_side(&x, true), coassoc_side(&x, false));
    }

    #[test]
    fn coproduct_counit(x in element()) {
        let mut left = TensorExtElement::zero();
        let mut right = TensorExtElement::zero();
        for ((a, b), c) in x.coproduct().iter() {
            if is_unit(a) {
                left.add_term(b.0.clone(), b.1.clone(), *c);
            }
            if is_unit(b) {
                right.add_term(a.0.clone(), a.1.clone(), *c);
            }
        }
        prop_assert_eq!(&left, &x);
        prop_assert_eq!(&right, &x);
    }

    #[test]
    fn double_star_sign(n in 1usize..=4, neg in 0usize..=4, k in 0usize..=4, orient in prop::bool::ANY, coeffs in prop::collection::vec(-5i64..=5, 6)) {
        prop_assume!(k <= n);
        let sig = MetricSignature((0..n).map(|i| if i < neg.min(n) { -1 } else { 1 }).collect());
        let s: i64 = sig.0.iter().map(|v| *v as i64).product();
        let h = Hodge::<Rational>::orthonormal(&sig, if orient { 1 } else { -1 });
        let alpha: ExtVec<Rational> = AntiIndex::all(n, k)
            .into_iter()
            .zip(coeffs.iter().cycle())
            .filter(|(_, c)| **c != 0)
            .map(|(i, c)| (i, Rational::from_int(*c)))
            .collect();
        let twice = h.star(&h.star(&alpha));
        let sign = if (k * (n - k)) % 2 == 0 { s } else { -s };
        let want: ExtVec<Rational> = alpha.iter().map(|(i, c)| (i.clone(), *c * Rational::from_int(sign))).collect();
        prop_assert_eq!(twice, want);
        prop_assert_eq!(h.star_inverse(&h.star(&alpha)), alpha.clone());
    }
}

fn random_metric(seed: u64) -> ChartConnection {
    let text = cli::random_metric_spec(2, seed, 2);
    ManifoldSpec::parse(&text, "generated").unwrap().chart
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn levi_civita_is_torsion_free(seed in 0u64..1000, p in point()) {
        let cc = random_metric(seed);
        let q = rat_point(p);
        let local = cc.local::<Rational>(&q, 3).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert_eq!(local.gamma(k, i, j).coeffs(), local.gamma(k, j, i).coeffs());
                }
            }
        }
    }

    #[test]
    fn flat_chart_has_no_higher_symbols(p in point(), letters in prop::collection::vec(0u8..2, 1..=4), j in 0usize..2) {
        let cc = ChartConnection::parse_christoffel("flat", &XY, &["0"; 8]).unwrap();
        let local = cc.local::<Rational>(&rat_point(p), 5).unwrap();
        let col = local.higher_christoffel(&Word::from_slice(&letters), j).unwrap();
        prop_assert!(col.iter().all(|c| c.is_zero()));
        prop_assert!(local.curvature_jets(false).iter().all(|c| c.is_zero()));
    }

    #[test]
    fn to_pbw_inverts_lift(seed in 0u64..1000, p in point(), coeffs in prop::collection::vec(-3i64..=3, 1..12), k in 0usize..=2) {
        let cc = random_metric(seed);
        let f = Fiber::<Rational>::at(&cc, &rat_point(p), 3).unwrap();
        let keys = f.table(k).unwrap().keys().to_vec();
        let mut t = AtomicCurrent::zero(k);
        for (key, c) in keys.iter().zip(coeffs.iter()) {
            t.add_term(key.clone(), Rational::from_int(*c));
        }
        prop_assert_eq!(f.to_pbw(&t.lift(), k).unwrap(), t);
    }

    #[test]
    fn flat_chart_sees_only_symmetrization(p in point(), letters in prop::collection::vec(0u8..2, 0..=3), perm in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>()), k in 0usize..=2) {
        let cc = ChartConnection::parse_metric("flat", &XY, &["1", "0", "0", "1"]).unwrap();
        let f = Fiber::<Rational>::at(&cc, &rat_point(p), 3).unwrap();
        let mut shuffled = letters.clone();
        let len = shuffled.len().max(1);
        shuffled.rotate_left((perm as usize) % len);
        if perm % 2 == 1 {
            shuffled.reverse();
        }
        let kk = AntiIndex::all(2, k)[0].clone();
        let a = f.to_pbw(&TensorExtElement::basis(Word::from_slice(&letters), kk.clone()), k).unwrap();
        let b = f.to_pbw(&TensorExtElement::basis(Word::from_slice(&shuffled), kk), k).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn reports_are_deterministic(seed in 0u64..10_000, jobs in 1usize..=4) {
        let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("specs/hyperbolic.toml");
        let spec = ManifoldSpec::load(&p).unwrap();
        let opts = |jobs| RunOptions {
            suite: "coalgebra".into(),
            order: 2,
            mode: Mode::Float,
            seed: Some(seed),
            jobs: Some(jobs),
            ..RunOptions::default()
        };
        let a = cli::run(&spec, "h", &opts(1)).unwrap().to_json();
        let b = cli::run(&spec, "h", &opts(jobs)).unwrap().to_json();
        prop_assert_eq!(a, b);
    }
}
