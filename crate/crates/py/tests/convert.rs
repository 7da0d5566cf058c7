use covcurrents::atomic::Fiber;
use covcurrents::connection::ChartConnection;
use covcurrents::operators::boundary;
use covcurrents::{Error, Mode, Rational, Scalar};
use pycovcurrents::*;

fn terms(items: &[(&str, Num)]) -> Vec<(String, Num)> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn scalar_round_trip() {
    assert_eq!(from_scalar(to_scalar::<Rational>(Num::Ratio(-3, 4)).unwrap()), Num::Ratio(-3, 4));
    assert_eq!(from_scalar(to_scalar::<Rational>(Num::Float(0.125)).unwrap()), Num::Ratio(1, 8));
    assert_eq!(from_scalar(to_scalar::<f64>(Num::Ratio(1, 4)).unwrap()), Num::Float(0.25));
    assert_eq!(parse_mode("rational").unwrap(), Mode::Rational);
    assert!(parse_mode("exact").is_err());
}

#[test]
fn current_round_trip_and_degree_check() {
    let t = current_from_terms::<Rational>(&terms(&[("1,2|1", Num::Ratio(1, 2)), ("|1", Num::Ratio(3, 1))]), 1).unwrap();
    let mut back = current_to_terms(&t);
    back.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(back, terms(&[("1,2|1", Num::Ratio(1, 2)), ("|1", Num::Ratio(3, 1))]));
    let e = current_from_terms::<Rational>(&terms(&[("|1,2", Num::Ratio(1, 1))]), 1).unwrap_err();
    assert!(matches!(e, Error::DegreeMismatch { expected: 1, found: 2 }));
    assert!(current_from_terms::<f64>(&terms(&[("1|", Num::Float(1.0))]), 1).is_err());
}

#[test]
fn flat_boundary_through_terms() {
    let cc = ChartConnection::parse_metric("flat", &["x", "y"], &["1", "0", "0", "1"]).unwrap();
    let f = Fiber::<Rational>::at(&cc, &[Rational::zero(), Rational::zero()], 2).unwrap();
    let t = current_from_terms::<Rational>(&terms(&[("|1,2", Num::Ratio(1, 1))]), 2).unwrap();
    let mut out = current_to_terms(&boundary(&f, &t).unwrap());
    out.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(out, terms(&[("1|2", Num::Ratio(1, 1)), ("2|1", Num::Ratio(-1, 1))]));
}

#[test]
fn hodge_terms() {
    let star = hodge_star_terms(&[1, 1, 1], &terms(&[("1", Num::Ratio(1, 1))]), 1, false).unwrap();
    assert_eq!(star, terms(&[("2,3", Num::Ratio(1, 1))]));
    let back = hodge_star_terms(&[1, 1, 1], &star, 1, true).unwrap();
    assert_eq!(back, terms(&[("1", Num::Ratio(1, 1))]));
    let vol = hodge_star_terms(&[1, 1], &terms(&[("", Num::Ratio(1, 1))]), 1, false).unwrap();
    assert_eq!(vol, terms(&[("1,2", Num::Ratio(1, 1))]));
    assert!(hodge_star_terms(&[1, 1], &terms(&[("3", Num::Ratio(1, 1))]), 1, false).is_err());
}

#[test]
fn element_terms_feed_pbw() {
    let cc = ChartConnection::parse_metric("flat", &["x", "y"], &["1", "0", "0", "1"]).unwrap();
    let f = Fiber::<Rational>::at(&cc, &[Rational::zero(), Rational::zero()], 2).unwrap();
    let x = element_from_terms::<Rational>(&terms(&[("1,2|1", Num::Ratio(1, 1)), ("2,1|1", Num::Ratio(-1, 1))])).unwrap();
    assert!(f.to_pbw(&x, 1).unwrap().is_zero());
    assert_eq!(element_to_terms(&x).len(), 2);
}
