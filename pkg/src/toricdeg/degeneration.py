"""Toric degeneration data and its combinatorial invariants.

A degeneration is given by a complete fan with rational weights on its rays;
the convexified weight determines the cone over which ``t`` is the marked
element. This module derives simplicity, the minimal base extension, divisor
multiplicities, the stratification of the central fibre, the monomial
family ``s_m = t^{w_m} z^m`` and the constants ``lambda_1, lambda_2`` that
control how fast the monomials degenerate. It also holds the toroidal atlas
layer (local toric charts glued along ray maps).
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import combinations
from math import lcm
from typing import Iterable, Sequence

from .fan_pl import Cone, Fan, FanError, PLWeight, build_fan, lower_hull
from .lattice import (
    as_vector,
    clear_denominators,
    dot,
    kernel_basis,
    parallelepiped_points,
    rank,
    solve,
    sublattice_index,
)

DEFAULT_TAU_GRID = (1e3, 1e4, 1e5, 1e6, 1e7)


class SpecError(ValueError):
    """Invalid degeneration data."""


class DegenerationSpec:
    """Rays and weights of a toric degeneration plus analysis parameters.

    Parameters
    ----------
    rays : sequence of integer vectors
        Primitive, distinct, positively spanning.
    weights : sequence of rationals
        One weight per ray (``Fraction``, int or ``"p/q"`` string).
    eta : float
        Shift in the a-coordinates, ``a_m = eta - log||s_m||^2``.
    tau_grid : sequence of float
        Values of ``tau = -log|t|^2`` used by the asymptotic analyses.
    rho : str
        Name of the bounded volume factor profile (see ``metrics.RHO_PROFILES``).
    convexify : bool
        If true (default) the stored rays and weights are the convexified
        ones; the inputs are kept in ``input_rays``/``input_weights``. If
        false the data are kept as given and ``convex`` records whether they
        already were convex.
    """

    def __init__(self, rays, weights, eta: float = 10.0, tau_grid=DEFAULT_TAU_GRID,
                 rho: str = "one", convexify: bool = True, name: str | None = None):
        self.input_rays = tuple(as_vector(r) for r in rays)
        self.input_weights = tuple(Fraction(w) for w in weights)
        if eta <= 0:
            raise SpecError("eta must be positive")
        if any(t <= 0 for t in tau_grid):
            raise SpecError("tau grid must be positive")
        self.eta = float(eta)
        self.tau_grid = tuple(float(t) for t in tau_grid)
        self.rho = rho
        self.name = name
        try:
            fan, weight, convex = build_fan(self.input_rays, self.input_weights)
            hull = lower_hull(self.input_rays, self.input_weights)
        except FanError as exc:
            raise SpecError(str(exc)) from exc
        self.fan: Fan = fan
        self.weight: PLWeight = weight
        self.convex = convex
        self.dropped = hull.above + hull.non_extremal
        if convexify:
            self.rays = tuple(hull.rays)
            self.weights = tuple(hull.weights)
            self.convex = True
        else:
            self.rays = self.input_rays
            self.weights = self.input_weights
        self._check_interior()

    @property
    def rank(self) -> int:
        return self.fan.dim

    @property
    def w(self) -> dict:
        """Weights as a ray -> Fraction map (reduced rays only)."""
        return dict(self.weight.values)

    def _check_interior(self):
        # t is interior to sigma_0 iff the weight normalized on a maximal
        # cone is strictly positive on every fan ray outside that cone
        for sigma in self.fan.maximal:
            l = self.weight.linear_piece(sigma)
            for m, wm in self.weight.values.items():
                if m not in sigma.rays and wm - dot(l, m) <= 0:
                    raise SpecError(f"marked element not interior: ray {m} off {sigma}")

    def reduced(self) -> "DegenerationSpec":
        """The convexified spec built from the original inputs."""
        return DegenerationSpec(self.input_rays, self.input_weights, self.eta,
                                self.tau_grid, self.rho, name=self.name)

    def with_params(self, **kw) -> "DegenerationSpec":
        args = dict(eta=self.eta, tau_grid=self.tau_grid, rho=self.rho, name=self.name)
        args.update(kw)
        return DegenerationSpec(self.rays, self.weights, **args)

    def __repr__(self):
        return (f"DegenerationSpec(rays={list(self.rays)}, "
                f"weights={[str(w) for w in self.weights]}, eta={self.eta})")


def scale_weights(spec: DegenerationSpec, d) -> DegenerationSpec:
    """The ``d``-fold base extension: every weight multiplied by ``d``."""
    d = Fraction(d)
    if d <= 0:
        raise SpecError("scale factor must be positive")
    return DegenerationSpec(spec.rays, [d * w for w in spec.weights], spec.eta,
                            spec.tau_grid, spec.rho, convexify=spec.convex, name=spec.name)


def _require_convex(spec):
    if not spec.convex:
        raise SpecError("convexify first")


def _cone_is_integral(cone: Cone, l) -> bool:
    """Linear function ``l`` integral on all lattice points of ``cone``.

    Lattice points of a full-dimensional cone are generated (as a group) by
    any ``n`` independent rays together with the lattice points of their
    half-open parallelepiped, so checking these suffices.
    """
    n = cone.dim
    if any(dot(l, m).denominator != 1 for m in cone.rays):
        return False
    for sub in combinations(cone.rays, n):
        if rank([list(m) for m in sub]) == n:
            for c in parallelepiped_points(sub):
                pt = [sum(c[i] * sub[i][j] for i in range(n)) for j in range(n)]
                if dot(l, pt).denominator != 1:
                    return False
            return True
    raise SpecError(f"cone {cone} is not full-dimensional")


def is_simple(spec: DegenerationSpec) -> bool:
    """True iff the convex weight is integer valued on every maximal cone."""
    _require_convex(spec)
    return all(_cone_is_integral(s, spec.weight.linear_piece(s)) for s in spec.fan.maximal)


def minimal_base_extension(spec: DegenerationSpec) -> int:
    """Smallest ``d >= 1`` such that the ``d``-fold base extension is simple."""
    _require_convex(spec)
    bound = reduce(lcm, (x.denominator for s in spec.fan.maximal
                         for x in spec.weight.linear_piece(s)), 1)
    for d in range(1, bound + 1):
        if bound % d == 0 and is_simple(scale_weights(spec, d)):
            return d
    return bound  # unreachable: d = bound clears every denominator


def divisor_multiplicity(spec: DegenerationSpec, sigma: Cone) -> int:
    """Multiplicity of ``t`` along the central-fibre divisor of ``sigma``.

    The divisor corresponds to the facet ``{(x, l(x))}`` of the lifted cone
    over ``sigma``. Its integral points are the kernel of the primitive
    normal ``(c, -D)`` with ``l = c / D``; projecting that kernel to ``M``
    gives ``{x : l(x) in Z}``, whose index in ``M`` is the multiplicity.
    """
    if sigma not in spec.fan.maximal:
        raise SpecError(f"{sigma} is not a maximal cone")
    l = spec.weight.linear_piece(sigma)
    normal = clear_denominators(list(l) + [Fraction(-1)])
    kern = kernel_basis(normal)
    proj = [k[:-1] for k in kern]
    return sublattice_index(proj)


# ---------------------------------------------------------------------------
# strata


@dataclass
class StrataPoset:
    """Torus-orbit stratification: one node per cone of the fan.

    ``nodes`` maps a node id to ``(rays, dimension)``; ``edges`` are covering
    face relations ``(smaller, larger)``; ``multiplicity`` is set on maximal
    nodes.
    """

    nodes: dict
    edges: list
    multiplicity: dict = field(default_factory=dict)

    def census(self) -> dict[int, int]:
        out = {}
        for _, dim in self.nodes.values():
            out[dim] = out.get(dim, 0) + 1
        return dict(sorted(out.items()))

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": k, "rays": [list(r) for r in rays], "dim": d,
                       **({"multiplicity": self.multiplicity[k]} if k in self.multiplicity else {})}
                      for k, (rays, d) in self.nodes.items()],
            "edges": [list(e) for e in self.edges],
            "census": {str(k): v for k, v in self.census().items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def strata(spec: DegenerationSpec) -> StrataPoset:
    cones = spec.fan.cones
    ids = {c.rays: i for i, c in enumerate(cones)}
    nodes = {i: (c.rays, c.rank) for i, c in enumerate(cones)}
    edges = []
    for c in cones:
        for d in cones:
            if d.rank == c.rank + 1 and set(c.rays) <= set(d.rays):
                edges.append((ids[c.rays], ids[d.rays]))
    mult = {ids[s.rays]: divisor_multiplicity(spec, s) for s in spec.fan.maximal}
    return StrataPoset(nodes, sorted(edges), mult)


# ---------------------------------------------------------------------------
# monomial family


def monomial_family(spec: DegenerationSpec, t: complex, z: Sequence[complex]) -> list[complex]:
    """Values ``s_m = t^{w_m} z^m`` for each ray, in ``spec.rays`` order.

    Fractional powers of ``t`` use the principal branch of ``log t``.
    """
    t = complex(t)
    z = [complex(x) for x in z]
    if t == 0 or any(x == 0 for x in z):
        raise SpecError("t and z must be nonzero")
    if len(z) != spec.rank:
        raise SpecError("z has the wrong dimension")
    logt = cmath.log(t)
    out = []
    for m, w in zip(spec.rays, spec.weights):
        val = cmath.exp(float(w) * logt)
        for zj, mj in zip(z, m):
            val *= zj ** mj
        out.append(val)
    return out


# ---------------------------------------------------------------------------
# lambda constants


def _lambda2(spec: DegenerationSpec) -> Fraction:
    """``max_m (w_m + f(-m))``: the smallest value of ``a_m / tau`` that can
    be forced at the most degenerate point, i.e. the largest slope in the
    bound ``a_m <= lambda_2 tau``."""
    f = spec.weight
    return max(w + f([-x for x in m]) for m, w in f.values.items())


def _minmax_value(rays, weights, subset) -> Fraction:
    """Exact ``min_{b in P} max_{m in subset} (w_m + <m, b>)``.

    ``P = {b : w_m + <m, b> >= 0 for all rays}``. Solved as the linear
    program ``min s`` subject to ``s >= g_m(b)`` (m in subset) and
    ``g_m(b) >= 0``, by enumerating vertices exactly.
    """
    n = len(rays[0])
    cons = []  # (normal in (b, s), offset) meaning normal.(b,s) + offset >= 0
    for m, w in zip(rays, weights):
        cons.append((tuple(m) + (0,), w))
    for m, w in subset:
        cons.append((tuple(-x for x in m) + (1,), -w))
    best = None
    for sub in combinations(range(len(cons)), n + 1):
        A = [list(cons[i][0]) for i in sub]
        x = solve(A, [-cons[i][1] for i in sub])
        if x is None:
            continue
        if all(dot(nrm, x) + off >= 0 for nrm, off in cons):
            if best is None or x[-1] < best:
                best = x[-1]
    return best


def lambda_constants(spec: DegenerationSpec) -> tuple[Fraction, Fraction]:
    """Return ``(lambda_1, lambda_2)``.

    ``lambda_2`` bounds every unshifted ``a_m / tau`` from above. For
    ``lambda_1`` the set ``S_x = {m : a_m <= lambda_1 tau}`` must lie in the
    ray set of a single maximal cone. For every ray subset ``S'`` not
    contained in a maximal cone the exact value ``v(S')`` of
    ``min_b max_{m in S'} a_m / tau`` is positive; half the smallest such
    value is returned.
    """
    _require_convex(spec)
    lam2 = _lambda2(spec)
    rays = list(spec.weight.values)
    weights = [spec.weight.values[m] for m in rays]
    maximal = [set(s.rays) for s in spec.fan.maximal]
    bad_min = []
    best = None
    for k in range(2, len(rays) + 1):
        for sub in combinations(rays, k):
            s = set(sub)
            if any(s <= c for c in maximal):
                continue
            if any(b <= s for b in bad_min):
                continue
            bad_min.append(s)
            v = _minmax_value(rays, weights, [(m, spec.weight.values[m]) for m in sub])
            if best is None or v < best:
                best = v
    if best is None:  # a single cone contains every ray (cannot happen for complete fans)
        best = lam2
    return best / 2, lam2


# ---------------------------------------------------------------------------
# toroidal atlas


@dataclass
class ToroidalAtlas:
    """Local toric charts glued along ray maps.

    ``incidences`` maps a pair ``(p, q)`` of chart names to the ray map
    ``e_pq``, a dict from rays of chart ``p`` to rays of chart ``q``.
    """

    charts: dict
    incidences: dict = field(default_factory=dict)


@dataclass
class AtlasReport:
    valid: bool
    violations: list

    def to_json(self) -> dict:
        return {"valid": self.valid, "violations": list(self.violations)}


def validate_atlas(atlas: ToroidalAtlas) -> AtlasReport:
    """Check injectivity, weight compatibility and the cocycle condition."""
    if not atlas.charts:
        raise SpecError("atlas has no charts")
    for p, q in atlas.incidences:
        for name in (p, q):
            if name not in atlas.charts:
                raise SpecError(f"dangling stratum name {name!r}")
    bad = []
    for (p, q), e in sorted(atlas.incidences.items()):
        src, dst = atlas.charts[p], atlas.charts[q]
        wp, wq = src.weight.values, dst.weight.values
        images = list(e.values())
        if len(set(images)) != len(images):
            bad.append(f"e[{p},{q}] not injective")
        for m, mq in sorted(e.items()):
            if m not in wp:
                bad.append(f"e[{p},{q}]: ray {list(m)} not in chart {p}")
                continue
            if mq not in wq:
                bad.append(f"e[{p},{q}]: image {list(mq)} of ray {list(m)} not in chart {q}")
                continue
            if wp[m] != wq[mq]:
                bad.append(f"e[{p},{q}]: weight mismatch on ray {list(m)} "
                           f"({wp[m]} vs {wq[mq]})")
    for (p, q), e1 in sorted(atlas.incidences.items()):
        for (q2, r), e2 in sorted(atlas.incidences.items()):
            if q2 != q or (p, r) not in atlas.incidences:
                continue
            e3 = atlas.incidences[(p, r)]
            for m in sorted(e1):
                if e1[m] in e2 and m in e3 and e3[m] != e2[e1[m]]:
                    bad.append(f"cocycle e[{p},{r}] != e[{q},{r}]o e[{p},{q}] on ray {list(m)}")
    return AtlasReport(not bad, bad)


def toroidal_min_extension(atlas: ToroidalAtlas) -> int:
    """Least common multiple of the charts' minimal base extensions."""
    return reduce(lcm, (minimal_base_extension(s) for s in atlas.charts.values()), 1)
