"""Smoke test for the pycovcurrents extension.

Build and install first:
    pip install maturin
    pip install -e crates/py --no-build-isolation
then run:
    python python/smoke_test.py
"""

import json
import math
from fractions import Fraction
from pathlib import Path

import pycovcurrents as cc

ROOT = Path(__file__).resolve().parent.parent
SPECS = ROOT / "crates" / "core" / "specs"


def test_sphere_geometry():
    s2 = cc.Chart("s2", ["t", "f"], metric=["1", "0", "0", "sin(t)^2"])
    t = 1.1
    gamma = s2.christoffel([t, 0.3])
    assert math.isclose(gamma[0][1][1], -math.sin(t) * math.cos(t), rel_tol=1e-12)
    assert math.isclose(gamma[1][0][1], math.cos(t) / math.sin(t), rel_tol=1e-12)
    r = s2.curvature([t, 0.3])
    # R^t_{f t f} = sin²t on the unit sphere
    assert math.isclose(r[0][1][0][1], math.sin(t) ** 2, rel_tol=1e-10)


def test_flat_boundary_rational():
    flat = cc.Chart("flat", ["x", "y"], metric=["1", "0", "0", "1"])
    fib = cc.Fiber(flat, [Fraction(1, 2), 0], 3, mode="rational")
    assert fib.mode == "rational"
    b = fib.boundary({"|1,2": 1}, 2)
    assert b == {"1|2": Fraction(1), "2|1": Fraction(-1)}
    assert fib.boundary(b, 1) == {}
    # only the symmetrization of the word survives on a flat chart
    assert fib.to_pbw({"1,2|1": 1, "2,1|1": -1}, 1) == {}


def test_pbw_kernel_on_polynomial_metric():
    poly = cc.Chart.from_spec(str(SPECS / "poly.toml"))
    fib = cc.Fiber(poly, [Fraction(1, 2), Fraction(-1, 4)], 3, mode="rational")
    for k in range(3):
        basis = fib.kernel_basis(k)
        assert len(basis) == cc.Fiber.kernel_dimension(2, 2, 3, k)
        for element in basis:
            assert all(v == 0 for v in fib.probe_values(element, k))
    assert fib.probe_rank(1) == len(fib.pbw_keys(1)) == math.comb(5, 2) * 2


def test_coproduct_counit():
    s2 = cc.Chart.from_spec(str(SPECS / "s2.toml"))
    fib = cc.Fiber(s2, [1.2, 0.5], 2)
    current = {key: 0.5 * (i + 1) for i, key in enumerate(fib.pbw_keys(1))}
    pairs = fib.coproduct(current, 1)
    left = {r: c for (l, r), c in pairs.items() if l == "|"}
    assert left.keys() == current.keys()
    assert all(math.isclose(left[k], current[k], abs_tol=1e-12) for k in current)
    assert fib.counit({"|": 2.0}, 0) == 2.0


def test_hodge_star():
    assert cc.hodge_star([1, 1, 1], {"1": 1}) == {"2,3": Fraction(1)}
    assert cc.hodge_star([1, 1], {"": 1}) == {"1,2": Fraction(1)}
    lorentz = cc.hodge_star([-1, 1, 1, 1], cc.hodge_star([-1, 1, 1, 1], {"1,2": 3}))
    assert lorentz == {"1,2": Fraction(-3)}


def test_suites_and_errors():
    names = {name: anchor for name, _, anchor in cc.list_suites()}
    assert names["fundamental-commutation"] == "Fundamental Commutation Lemma"
    code, report = cc.run_suite(str(SPECS / "flat-r2.toml"), "boundary", order=2, mode="rational")
    assert code == 0
    data = json.loads(report)
    assert data["summary"]["failed"] == 0 and data["summary"]["passed"] > 0
    code, _ = cc.run_suite(str(SPECS / "broken.toml"))
    assert code == 2
    try:
        cc.Chart("bad", ["x", "y"], christoffel=["0", "x", "0", "0", "0", "0", "0", "0"])
    except ValueError as exc:
        assert "torsion-free violation" in str(exc)
    else:
        raise AssertionError("asymmetric Christoffel symbols accepted")


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok  {t.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    main()
