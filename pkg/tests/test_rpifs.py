import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpquant.errors import DomainError, GeometryError, ResourceError
from rpquant.projline import INF, approx_eq, dist, normalize, point
from rpquant.rpifs import (
    Cone,
    Mat2,
    RPIFSSpec,
    apply,
    coding_map,
    compose,
    critical_exponent,
    hyperbolicity_certificate,
    midpoint,
    norm_max,
    refine,
    sl2_normalize,
    spectral_radius,
    zeta_partial,
)

R3 = math.sqrt(3)
A1 = Mat2(1 / 3, -2 / 3, 0, 1)
A2 = Mat2(1 / 3, 2 / 3, 0, 1)
LOG2_LOG3 = math.log(2) / math.log(3)


def sl2_cantor():
    return RPIFSSpec((Mat2(1 / R3, -2 / R3, 0, R3), Mat2(1 / R3, 2 / R3, 0, R3)), (0.5, 0.5))


def exact_cone(word, lo=F(-1), hi=F(1)):
    # independent rational evaluation of w_{i1} o ... o w_{in} on the endpoints
    maps = {1: (F(1, 3), F(-2, 3)), 2: (F(1, 3), F(2, 3))}
    for i in reversed(word):
        s, b = maps[i]
        lo, hi = s * lo + b, s * hi + b
    return min(lo, hi), max(lo, hi)


def test_mat2_rejects_singular():
    with pytest.raises(DomainError):
        Mat2(1, 2, 2, 4)


def test_apply_examples():
    assert approx_eq(apply(A1, point(1)), point(-1 / 3))
    assert approx_eq(apply(A2, point(-1)), point(1 / 3))
    assert apply(Mat2.identity(), point(0.7)) == point(0.7)
    assert apply(Mat2.identity(), INF) == INF


def test_apply_can_reach_infinity():
    assert apply(Mat2(1, 0, 1, 1), point(-1)) == INF
    with pytest.raises(GeometryError):
        Mat2(1, 0, 1, 1).chart(-1.0)


mats = st.tuples(*[st.floats(-5, 5, allow_nan=False)] * 4).filter(
    lambda a: abs(a[0] * a[3] - a[1] * a[2]) > 1e-3
)


@given(mats, st.floats(-10, 10), st.floats(0.1, 10) | st.floats(-10, -0.1))
def test_projective_invariance(a, x, c):
    A = Mat2(*a)
    p, q = apply(A, point(x)), apply(A.scaled(c), point(x))
    if p.is_infinite or q.is_infinite:
        return
    assert p.x == pytest.approx(q.x, rel=1e-9, abs=1e-9)


def test_sl2_normalize_examples():
    B = sl2_normalize(A1)
    for got, want in zip((B.a11, B.a12, B.a21, B.a22), (1 / R3, -2 / R3, 0, R3)):
        assert got == pytest.approx(want, abs=1e-15)
    assert sl2_normalize(Mat2.identity()) == Mat2.identity()
    assert sl2_normalize(Mat2(2, 0, 0, 2)) == Mat2.identity()
    with pytest.raises(DomainError):
        sl2_normalize(Mat2(1, 0, 0, -1))


@given(mats.filter(lambda a: a[0] * a[3] - a[1] * a[2] > 1e-3), st.floats(-10, 10))
def test_sl2_normalize_properties(a, x):
    A = Mat2(*a)
    B = sl2_normalize(A)
    assert B.det == pytest.approx(1.0, abs=1e-12)
    p, q = apply(A, point(x)), apply(B, point(x))
    if not (p.is_infinite or q.is_infinite):
        assert p.x == pytest.approx(q.x, rel=1e-9, abs=1e-9)


def test_norms():
    assert norm_max(Mat2(1 / R3, -2 / R3, 0, R3)) == pytest.approx(R3)
    assert spectral_radius(Mat2.identity()) == 1
    assert spectral_radius(Mat2(0, -1, 1, 0)) == pytest.approx(1.0)
    assert spectral_radius(Mat2(2, 0, 0, 0.5)) == pytest.approx(2.0)
    # complex pair: rotation scaled by 3
    assert spectral_radius(Mat2(0, -3, 3, 0)) == pytest.approx(3.0)


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_cantor_product_spectral_radius(n):
    spec = sl2_cantor()
    for w in itertools.islice(itertools.product((1, 2), repeat=n), 50):
        A = compose(spec, w)
        assert spectral_radius(A) == pytest.approx(R3**n, rel=1e-12)
        assert A.a11 == pytest.approx(R3**-n, rel=1e-12)
        assert A.a22 == pytest.approx(R3**n, rel=1e-12)
        assert A.a21 == 0


def test_compose(spec):
    assert compose(spec, (1,)) == spec.mats[0]
    assert compose(spec, ()) == Mat2.identity()
    with pytest.raises(DomainError):
        compose(spec, (3,))
    with pytest.raises(DomainError):
        compose(spec, (0,))


def test_spec_validation():
    with pytest.raises(DomainError):
        RPIFSSpec(())
    with pytest.raises(DomainError, match="probability"):
        RPIFSSpec((A1, A2), (0.5, 0.6))
    with pytest.raises(DomainError):
        RPIFSSpec((A1, A2), (1.0, 0.0))
    with pytest.raises(DomainError):
        RPIFSSpec((A1, A2), (1.0,))


def test_spec_json_roundtrip(spec):
    again = RPIFSSpec.from_json(spec.to_json())
    assert again == spec
    assert again.digest() == spec.digest()
    assert spec.to_json()["probs"] == [0.5, 0.5]


def test_hyperbolicity_cantor(spec):
    cert = hyperbolicity_certificate(spec, 10)
    assert cert.lambda_est == pytest.approx(R3, rel=1e-12)
    assert cert.passed
    assert cert.min_norms[4] == pytest.approx(R3**5, rel=1e-12)


def test_hyperbolicity_rotation_fails():
    t = 0.7
    rot = RPIFSSpec((Mat2(math.cos(t), -math.sin(t), math.sin(t), math.cos(t)),))
    assert not hyperbolicity_certificate(rot, 8).passed


def test_hyperbolicity_diagonal():
    cert = hyperbolicity_certificate(RPIFSSpec((Mat2(2, 0, 0, 0.5),)), 5)
    assert cert.lambda_est == pytest.approx(2.0)
    assert cert.passed


def test_hyperbolicity_guards(spec):
    with pytest.raises(DomainError):
        hyperbolicity_certificate(spec, 1)
    with pytest.raises(ResourceError):
        hyperbolicity_certificate(spec, 24)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.63, 0.9, 1.0])
def test_zeta_levels_are_geometric(spec, t):
    z = zeta_partial(spec, t, 8)
    for n, s in enumerate(z.level_sums, start=1):
        assert s == pytest.approx((2 / 3**t) ** n, rel=1e-12)
    for s0, s1 in zip(z.level_sums, z.level_sums[1:]):
        assert s1 / s0 == pytest.approx(2 / 3**t, rel=1e-12)


def test_zeta_examples(spec):
    assert zeta_partial(spec, 0, 4).level_sums == pytest.approx((2, 4, 8, 16))
    assert zeta_partial(spec, 1, 3).total == pytest.approx(2 / 3 + 4 / 9 + 8 / 27, rel=1e-13)
    with pytest.raises(DomainError):
        zeta_partial(spec, -1, 3)


def test_zeta_sl2_form_agrees(spec):
    a = zeta_partial(spec, 0.5, 6).level_sums
    b = zeta_partial(sl2_cantor(), 0.5, 6).level_sums
    assert a == pytest.approx(b, rel=1e-12)


def test_critical_exponent_cantor(spec):
    assert critical_exponent(spec, 12, 1e-6) == pytest.approx(LOG2_LOG3, abs=1e-6)


def test_critical_exponent_stable_in_depth(spec):
    tol = 1e-8
    assert abs(critical_exponent(spec, 8, tol) - critical_exponent(spec, 12, tol)) < 10 * tol


def test_critical_exponent_half():
    # triangular products: spectral radius of any length-n word is 2^n
    spec = RPIFSSpec((Mat2(2, 0, 0, 0.5), Mat2(2, 1, 0, 0.5)))
    assert critical_exponent(spec, 8, 1e-9) == pytest.approx(0.5, abs=1e-8)


def test_critical_exponent_no_bracketing():
    with pytest.raises(DomainError, match="no bracketing"):
        critical_exponent(RPIFSSpec((Mat2(2, 0, 0, 0.5),)), 6, 1e-6)
    t = 0.4
    rot = Mat2(math.cos(t), -math.sin(t), math.sin(t), math.cos(t))
    with pytest.raises(DomainError, match="no bracketing"):
        critical_exponent(RPIFSSpec((rot, rot @ rot)), 6, 1e-6)


def test_critical_exponent_guards(spec):
    with pytest.raises(DomainError):
        critical_exponent(spec, 2, 1e-6)
    with pytest.raises(DomainError):
        critical_exponent(spec, 5, 0)
    with pytest.raises(ResourceError):
        critical_exponent(spec, 24, 1e-6)


def test_refine_depth_one(spec):
    cones = refine(spec, Cone.between(-1, 1), 1)
    assert [w for w, _ in cones] == [(1,), (2,)]
    assert cones[0][1].bounds == pytest.approx((-1, -1 / 3), abs=1e-15)
    assert cones[1][1].bounds == pytest.approx((1 / 3, 1), abs=1e-15)


def test_refine_depth_two_matches_rational(spec):
    cones = dict(refine(spec, Cone.between(-1, 1), 2))
    assert cones[(1, 1)].bounds == pytest.approx((-1, -7 / 9), abs=1e-15)
    for w, c in cones.items():
        lo, hi = exact_cone(w)
        assert c.bounds == pytest.approx((float(lo), float(hi)), abs=1e-15)


def test_refine_depth_zero(spec):
    base = Cone.between(-1, 1)
    assert refine(spec, base, 0) == [((), base)]


def test_refine_rejects_wrap():
    spec = RPIFSSpec((Mat2(1, 0, 1, 1),))
    with pytest.raises(GeometryError):
        refine(spec, Cone.between(-2, 0), 1)
    with pytest.raises(GeometryError):
        Cone.between(-2, 0).image(Mat2(1, 0, 1, 1))


@pytest.mark.parametrize("depth", range(1, 9))
def test_cantor_cone_geometry(spec, depth):
    base = Cone.between(-1, 1)
    cones = refine(spec, base, depth)
    assert len(cones) == 2**depth
    diam = 2 * 3.0**-depth
    for _, c in cones:
        assert c.diameter == pytest.approx(diam, abs=1e-12)
    # nesting in the parent level
    parents = dict(refine(spec, base, depth - 1))
    for w, c in cones:
        assert parents[w[:-1]].contains(c, tol=1e-12)
    # disjoint, separated by at least one cone diameter
    bounds = sorted(c.bounds for _, c in cones)
    gaps = [b[0] - a[1] for a, b in zip(bounds, bounds[1:])]
    assert min(gaps) >= diam - 1e-12


def test_midpoint():
    assert midpoint(Cone.between(-1, -1 / 3)) == point(-2 / 3)
    assert midpoint(Cone.between(-1, 1)) == point(0)
    assert midpoint(Cone.between(1 / 3, 1)).x == pytest.approx(2 / 3, abs=1e-16)
    c = Cone.between(-0.3, 0.9)
    assert dist(midpoint(c), c.lo) == pytest.approx(dist(midpoint(c), c.hi))


def test_cone_validation():
    with pytest.raises(DomainError):
        Cone(point(1), point(0))
    with pytest.raises(GeometryError):
        Cone(point(0), INF)


@pytest.mark.parametrize("seed_x", [-1.0, -0.2, 0.5, 1.0])
def test_coding_map_fixed_points(spec, seed_x):
    assert approx_eq(coding_map(spec, (1,), point(seed_x), 40), point(-1), tol=1e-12)
    assert approx_eq(coding_map(spec, (2,), point(seed_x), 40), point(1), tol=1e-12)
    assert approx_eq(coding_map(spec, (1, 2), point(seed_x), 40, extend="last"), point(-1 / 3), tol=1e-12)


def test_coding_map_is_cauchy(spec):
    pts = [coding_map(spec, (1, 2, 2), point(0.3), d) for d in range(3, 30)]
    steps = [dist(p, q) for p, q in zip(pts, pts[1:])]
    assert all(b <= a + 1e-15 for a, b in zip(steps, steps[1:]))
    assert steps[-1] < 1e-12


def test_coding_map_periodic(spec):
    # (1,2) repeated: fixed point of w1 o w2, i.e. x = (x/3 + 2/3)/3 - 2/3
    assert coding_map(spec, (1, 2), point(0), 60).x == pytest.approx(-0.5, abs=1e-12)


def test_coding_map_errors(spec):
    with pytest.raises(DomainError):
        coding_map(spec, (1, 2), point(0), 1)
    with pytest.raises(DomainError):
        coding_map(spec, (), point(0), 4)
    with pytest.raises(GeometryError):
        coding_map(RPIFSSpec((Mat2(1, 0, 1, 1),)), (1,), point(-1), 3)


@settings(max_examples=30)
@given(st.lists(st.sampled_from([1, 2]), min_size=1, max_size=12))
def test_cylinder_cones_match_rational(word):
    spec = RPIFSSpec((A1, A2))
    A = compose(spec, word)
    c = Cone.between(-1, 1).image(A)
    lo, hi = exact_cone(tuple(word))
    assert c.bounds == pytest.approx((float(lo), float(hi)), abs=1e-14)


def test_products_order_is_lexicographic(spec):
    from rpquant.rpifs import products

    lvl = products(spec, 3)[3]
    for k, w in enumerate(itertools.product((1, 2), repeat=3)):
        assert np.allclose(lvl[k], compose(spec, w).to_array())


def test_normalize_reexport():
    assert normalize(2, 4) == point(0.5)
