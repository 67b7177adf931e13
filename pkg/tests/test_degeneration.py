import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import (EXAMPLE_PRODUCT, EXAMPLE_SHEARED, NONCONVEX, RANK1, brute_multiplicity,
                     integral_pieces, lcm_of_denominators, lp_lambda1, random_spec_data)
from toricdeg.degeneration import (DegenerationSpec, SpecError, ToroidalAtlas, divisor_multiplicity,
                                   is_simple, lambda_constants, minimal_base_extension,
                                   monomial_family, scale_weights, strata, toroidal_min_extension,
                                   validate_atlas)

# a complete rank-2 fan containing the non-unimodular cone ((1,0),(1,2)) with w = (0, 1)
HALF_CONE = ([(1, 0), (1, 2), (-1, 0), (0, -1)], [0, 1, 1, 0])


def spec(data, **kw):
    return DegenerationSpec(*data, **kw)


def random_valid_spec(seed, rational=True):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        try:
            return DegenerationSpec(*random_spec_data(rng, rational=rational))
        except SpecError:
            continue
    return None


# ---------------------------------------------------------------------------
# construction


def test_spec_convexifies_and_keeps_inputs():
    s = spec(NONCONVEX)
    assert s.rays == ((1, 0), (0, 1), (-1, -1))
    assert s.input_rays == tuple(NONCONVEX[0])
    assert s.dropped == ((1, 1),)
    raw = spec(NONCONVEX, convexify=False)
    assert not raw.convex and raw.rays == tuple(NONCONVEX[0])
    assert raw.reduced().rays == s.rays


def test_spec_errors():
    with pytest.raises(SpecError):
        DegenerationSpec([(1, 0), (0, 1)], [0, 0])
    with pytest.raises(SpecError, match="interior"):
        DegenerationSpec([(1,), (-1,)], [0, 0])
    with pytest.raises(SpecError):
        DegenerationSpec(*RANK1, eta=0)


def test_convexify_first():
    raw = spec(NONCONVEX, convexify=False)
    with pytest.raises(SpecError, match="convexify first"):
        is_simple(raw)
    with pytest.raises(SpecError, match="convexify first"):
        minimal_base_extension(raw)


# ---------------------------------------------------------------------------
# simplicity, base extension, multiplicity


@pytest.mark.parametrize("data", [RANK1, EXAMPLE_PRODUCT, EXAMPLE_SHEARED])
def test_worked_examples_are_simple(data):
    s = spec(data)
    assert is_simple(s)
    assert minimal_base_extension(s) == 1
    assert all(divisor_multiplicity(s, c) == 1 for c in s.fan.maximal)


def test_half_integral_cone():
    s = spec(HALF_CONE)
    sigma = s.fan.cone([(1, 0), (1, 2)])
    assert s.weight.linear_piece(sigma) == (0, Fraction(1, 2))
    assert not is_simple(s)
    assert divisor_multiplicity(s, sigma) == 2
    assert minimal_base_extension(s) == 2


@pytest.mark.parametrize("weights,d", [((0, Fraction(1, 2)), 2), ((Fraction(1, 3), Fraction(1, 2)), 6),
                                       ((0, 1), 1), ((0, Fraction(3, 4)), 4)])
def test_rank1_base_extension(weights, d):
    assert minimal_base_extension(DegenerationSpec([(1,), (-1,)], weights)) == d


def test_rank1_multiplicity():
    s = DegenerationSpec([(1,), (-1,)], [Fraction(1, 2), 0])
    assert divisor_multiplicity(s, s.fan.cone([(1,)])) == 2
    assert divisor_multiplicity(s, s.fan.cone([(-1,)])) == 1
    with pytest.raises(SpecError, match="not a maximal cone"):
        divisor_multiplicity(s, s.fan.cones_of_dim(0)[0])


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_simplicity_oracles(seed):
    s = random_valid_spec(seed)
    if s is None:
        return
    pieces = [s.weight.linear_piece(c) for c in s.fan.maximal]
    assert is_simple(s) == integral_pieces(pieces)
    d = minimal_base_extension(s)
    assert d == lcm_of_denominators(pieces)
    for c in s.fan.maximal:
        assert divisor_multiplicity(s, c) == brute_multiplicity(s.weight.linear_piece(c))
    assert is_simple(s) == all(divisor_multiplicity(s, c) == 1 for c in s.fan.maximal)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_base_extension_divisibility(seed):
    s = random_valid_spec(seed)
    if s is None:
        return
    d = minimal_base_extension(s)
    for dp in range(1, 13):
        assert is_simple(scale_weights(s, dp)) == (dp % d == 0)


# ---------------------------------------------------------------------------
# strata and monomial family


@pytest.mark.parametrize("data,census", [(RANK1, {0: 1, 1: 2}), (EXAMPLE_PRODUCT, {0: 1, 1: 4, 2: 4}),
                                         (EXAMPLE_SHEARED, {0: 1, 1: 4, 2: 4})])
def test_strata_census(data, census):
    s = spec(data)
    poset = strata(s)
    assert poset.census() == census
    assert poset.census() == s.fan.census()
    # graded covering relations, unique minimum
    for a, b in poset.edges:
        assert poset.nodes[b][1] == poset.nodes[a][1] + 1
    minima = [k for k, (_, d) in poset.nodes.items() if d == 0]
    assert len(minima) == 1
    assert set(poset.multiplicity) == {k for k, (_, d) in poset.nodes.items() if d == s.rank}
    doc = poset.to_json()
    assert doc["census"] == {str(k): v for k, v in census.items()}


def test_monomial_family_examples():
    s = spec(RANK1)
    vals = monomial_family(s, 0.1, [0.5])
    assert np.allclose(vals, [0.5, 0.2])
    s2 = spec(EXAMPLE_SHEARED)
    vals = monomial_family(s2, 0.01, [0.3, 0.4])
    assert np.allclose(vals, [0.3, 0.01 / 0.3, 0.4, 0.01 * 0.3 / 0.4])
    with pytest.raises(SpecError):
        monomial_family(s, 0, [0.5])


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 0.9), st.lists(st.floats(0.05, 0.95), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_monomial_log_identity(t_abs, z_abs, args):
    s = spec(EXAMPLE_SHEARED)
    t = cmath.rect(t_abs, args[0])
    z = [cmath.rect(z_abs[0], args[1]), cmath.rect(z_abs[1], args[2])]
    tau = -math.log(t_abs**2)
    a = [-math.log(x**2) for x in z_abs]
    for m, w, val in zip(s.rays, s.weights, monomial_family(s, t, z)):
        lhs = -math.log(abs(val) ** 2)
        assert lhs == pytest.approx(float(w) * tau + m[0] * a[0] + m[1] * a[1], abs=1e-9)


# ---------------------------------------------------------------------------
# lambda constants


@pytest.mark.parametrize("data,lam2", [(RANK1, 1), (([(1,), (-1,)], [0, 2]), 2), (EXAMPLE_PRODUCT, 1),
                                       (EXAMPLE_SHEARED, 2)])
def test_lambda2(data, lam2):
    assert lambda_constants(spec(data))[1] == lam2


def test_lambda2_by_sampling():
    # a_m / tau at the most degenerate point is bounded by lambda_2 and attained
    s = spec(RANK1)
    tau = 1e4
    a = np.linspace(0, tau, 10001)
    ratios = np.maximum(a, tau - a) / tau
    assert ratios.max() == pytest.approx(float(lambda_constants(s)[1]))


@pytest.mark.parametrize("data", [RANK1, EXAMPLE_PRODUCT, EXAMPLE_SHEARED, HALF_CONE])
def test_lambda1_matches_lp(data):
    s = spec(data)
    lam1, _ = lambda_constants(s)
    rays = list(s.weight.values)
    w = [s.weight.values[m] for m in rays]
    oracle = lp_lambda1(rays, w, [set(c.rays) for c in s.fan.maximal])
    assert float(lam1) == pytest.approx(oracle, abs=1e-9)
    assert lam1 > 0


# ---------------------------------------------------------------------------
# atlas


def _chain_atlas(break_cocycle=False):
    half = DegenerationSpec([(1,), (-1,)], [0, Fraction(1, 2)])
    third = DegenerationSpec([(1,), (-1,)], [0, Fraction(1, 3)])
    ident = {(1,): (1,), (-1,): (-1,)}
    inc = {("p", "q"): dict(ident), ("q", "r"): dict(ident), ("p", "r"): dict(ident)}
    if break_cocycle:
        inc[("p", "r")] = {(1,): (-1,), (-1,): (1,)}
    return ToroidalAtlas({"p": half, "q": half, "r": half}, inc), third


def test_atlas_valid_and_lcm():
    atlas, third = _chain_atlas()
    rep = validate_atlas(atlas)
    assert rep.valid and rep.violations == []
    assert toroidal_min_extension(atlas) == 2
    atlas.charts["s"] = third
    assert toroidal_min_extension(atlas) == 6
    single = ToroidalAtlas({"p": third})
    assert validate_atlas(single).valid


def test_atlas_cocycle_violation_names_ray():
    atlas, _ = _chain_atlas(break_cocycle=True)
    rep = validate_atlas(atlas)
    assert not rep.valid
    assert any("cocycle" in v and "[1]" in v for v in rep.violations)


def test_atlas_weight_mismatch_and_dangling():
    a = DegenerationSpec([(1,), (-1,)], [0, 1])
    b = DegenerationSpec([(1,), (-1,)], [0, 2])
    rep = validate_atlas(ToroidalAtlas({"p": a, "q": b}, {("p", "q"): {(1,): (1,), (-1,): (-1,)}}))
    assert not rep.valid and any("weight mismatch" in v for v in rep.violations)
    rep = validate_atlas(ToroidalAtlas({"p": a, "q": a}, {("p", "q"): {(1,): (1,), (-1,): (1,)}}))
    assert any("not injective" in v for v in rep.violations)
    with pytest.raises(SpecError, match="dangling"):
        validate_atlas(ToroidalAtlas({"p": a}, {("p", "x"): {}}))


def test_lcm_examples():
    d4 = DegenerationSpec([(1,), (-1,)], [0, Fraction(1, 4)])
    d6 = DegenerationSpec([(1,), (-1,)], [0, Fraction(1, 6)])
    assert toroidal_min_extension(ToroidalAtlas({"a": d4, "b": d6})) == 12
