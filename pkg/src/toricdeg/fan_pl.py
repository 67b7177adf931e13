"""Cones, complete fans and piecewise-linear weights on their rays.

The convex hull machinery is exact: rays are integer tuples and weights are
``Fraction`` values. A weight assignment ``{w_m}`` is convexified by taking
the lower hull of the lifted rays ``(m, w_m)``: every linear function ``l``
with ``l(m) <= w_m`` for all rays and equality on ``n`` independent rays is a
linear piece of the largest convex minorant, and the rays where equality
holds span that piece's linearity domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

from .lattice import (
    LatticeError,
    as_vector,
    dot,
    is_primitive,
    nullspace,
    primitivize,
    rank,
    rref,
    solve,
)


class FanError(ValueError):
    """Invalid fan input: incomplete support, conflicting or degenerate data."""


class DegenerateWeightError(FanError):
    """The convexified weight is linear along a line: the cone sigma_0 is not
    strongly convex and the marked element is not interior."""


def _as_fraction_vector(v) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in v)


class Cone:
    """A strongly convex rational polyhedral cone given by its extreme rays.

    Parameters
    ----------
    rays : sequence of integer vectors
        Generators; they are primitivized and deduplicated. Every generator
        must be extreme.
    dim : int, optional
        Ambient rank; required when ``rays`` is empty (the origin cone).
    """

    def __init__(self, rays: Iterable[Sequence[int]], dim: int | None = None):
        seen = []
        for r in rays:
            p = primitivize(r)
            if p not in seen:
                seen.append(p)
        if dim is None:
            if not seen:
                raise FanError("ambient dimension required for the origin cone")
            dim = len(seen[0])
        if any(len(r) != dim for r in seen):
            raise FanError("rays of mismatched dimension")
        self.rays: tuple[tuple[int, ...], ...] = tuple(sorted(seen))
        self.dim = dim
        if not self.is_pointed:
            raise FanError(f"cone {self.rays} contains a line")
        nonext = [r for r in self.rays if not self.is_extreme(r)]
        if nonext:
            raise FanError(f"non-extreme generators {nonext}")

    @classmethod
    def from_generators(cls, gens: Iterable[Sequence[int]], dim: int | None = None) -> "Cone":
        """Build a cone from arbitrary generators, keeping only extreme ones."""
        gens = list(dict.fromkeys(primitivize(g) for g in gens))
        geo = _ConeGeometry(gens, dim if dim is not None else len(gens[0]))
        return cls([g for g in gens if geo.is_extreme(g)], dim=geo.dim)

    # -- geometry (delegated) -------------------------------------------
    @cached_property
    def _geo(self) -> "_ConeGeometry":
        return _ConeGeometry(self.rays, self.dim)

    @property
    def rank(self) -> int:
        return self._geo.rank

    @property
    def is_pointed(self) -> bool:
        return self._geo.is_pointed

    def is_extreme(self, ray) -> bool:
        return self._geo.is_extreme(ray)

    def contains(self, v) -> bool:
        return self._geo.contains(v)

    @property
    def is_simplicial(self) -> bool:
        return len(self.rays) == self.rank

    def facets(self) -> list["Cone"]:
        """Faces of codimension one (relative to the cone's span)."""
        return [Cone(s, dim=self.dim) for s in self._geo.facet_ray_sets]

    def face_ray_sets(self) -> list[frozenset]:
        return self._geo.face_ray_sets()

    def faces(self, k: int) -> list["Cone"]:
        """All ``k``-dimensional faces."""
        if not 0 <= k <= self.rank:
            raise FanError(f"face dimension {k} out of range 0..{self.rank}")
        out = [Cone(sorted(s), dim=self.dim) for s in self.face_ray_sets()
               if rank([list(r) for r in s]) == k]
        return sorted(out, key=lambda c: c.rays)

    def coefficients(self, v) -> tuple[Fraction, ...] | None:
        """Nonnegative coefficients expressing ``v`` in the cone's rays.

        For simplicial cones the expression is unique. Otherwise a
        Caratheodory subset is used and the unused rays get zero.
        """
        v = _as_fraction_vector(v)
        r = self.rank
        if r == 0:
            return () if all(x == 0 for x in v) else None
        for sub in combinations(range(len(self.rays)), r):
            R = [self.rays[i] for i in sub]
            if rank([list(x) for x in R]) < r:
                continue
            c = _solve_in_span(R, v)
            if c is not None and all(x >= 0 for x in c):
                full = [Fraction(0)] * len(self.rays)
                for i, x in zip(sub, c):
                    full[i] = x
                return tuple(full)
        return None

    def __eq__(self, other):
        return isinstance(other, Cone) and self.rays == other.rays and self.dim == other.dim

    def __hash__(self):
        return hash((self.rays, self.dim))

    def __repr__(self):
        return f"Cone({list(self.rays)})" if self.rays else f"Cone(origin, dim={self.dim})"


def _solve_in_span(R, v) -> list[Fraction] | None:
    """Coefficients ``c`` with ``sum c_i R_i = v``, or None if v not in span."""
    k = len(R)
    aug = [[Fraction(R[i][j]) for i in range(k)] + [Fraction(v[j])] for j in range(len(v))]
    A, piv = rref(aug)
    if k in piv:
        return None
    c = [Fraction(0)] * k
    for row, p in enumerate(piv):
        c[p] = A[row][k]
    return c


class _ConeGeometry:
    """Facet description of ``cone(gens)`` in local coordinates of its span.

    Works for any finitely generated cone, pointed or not, which is what the
    hull code needs for membership tests.
    """

    def __init__(self, gens, dim):
        self.gens = [tuple(g) for g in gens]
        self.dim = dim
        basis = []
        for g in self.gens:
            if rank([list(b) for b in basis + [g]]) > len(basis):
                basis.append(g)
        self.basis = basis
        self.rank = len(basis)
        self.local = {g: _solve_in_span(basis, g) for g in self.gens}
        self._facets = self._compute_facets()

    def _compute_facets(self):
        r = self.rank
        facets = {}
        if r == 0:
            return facets
        if r == 1:
            signs = {self.local[g][0] > 0 for g in self.gens}
            if len(signs) == 1:
                normal = (Fraction(1),) if signs.pop() else (Fraction(-1),)
                facets[frozenset()] = normal
            return facets
        pts = [self.local[g] for g in self.gens]
        for sub in combinations(range(len(pts)), r - 1):
            M = [pts[i] for i in sub]
            if rank(M) < r - 1:
                continue
            ns = nullspace(M)
            if len(ns) != 1:
                continue
            nu = ns[0]
            vals = [dot(nu, p) for p in pts]
            if all(x >= 0 for x in vals):
                pass
            elif all(x <= 0 for x in vals):
                nu = [-x for x in nu]
                vals = [-x for x in vals]
            else:
                continue
            tight = frozenset(g for g, x in zip(self.gens, vals) if x == 0)
            facets.setdefault(tight, tuple(nu))
        return facets

    @property
    def facet_ray_sets(self):
        return sorted(self._facets, key=lambda s: sorted(s))

    @property
    def is_pointed(self) -> bool:
        if self.rank == 0:
            return True
        return rank([list(n) for n in self._facets.values()]) == self.rank if self._facets else False

    def local_coords(self, v):
        return _solve_in_span(self.basis, v) if self.basis else (
            [] if all(Fraction(x) == 0 for x in v) else None)

    def contains(self, v) -> bool:
        c = self.local_coords(v)
        if c is None:
            return False
        return all(dot(n, c) >= 0 for n in self._facets.values())

    def tight_facets(self, v):
        c = self.local_coords(v)
        return [s for s, n in self._facets.items() if dot(n, c) == 0]

    def is_extreme(self, g) -> bool:
        g = tuple(g)
        others = [h for h in self.gens if h != g]
        if not others:
            return True
        return not _ConeGeometry(others, self.dim).contains(g)

    def face_ray_sets(self) -> list[frozenset]:
        """Every face as the set of generators it contains."""
        facets = list(self._facets)
        faces = {frozenset(self.gens)}
        frontier = {frozenset(self.gens)}
        while frontier:
            nxt = set()
            for F in frontier:
                for f in facets:
                    G = F & f
                    if G != F and G not in faces:
                        faces.add(G)
                        nxt.add(G)
            frontier = nxt
        if self.rank > 0:
            faces.add(frozenset())
        return sorted(faces, key=lambda s: (len(s), sorted(s)))


# ---------------------------------------------------------------------------
# piecewise linear weights and hulls


@dataclass(frozen=True)
class PLWeight:
    """Rational values on rays plus the linear piece on each maximal cone.

    ``pieces`` maps a maximal cone's ray tuple to the coefficient vector of
    the linear function agreeing with the weight on that cone.
    """

    values: dict
    pieces: dict = field(default_factory=dict)
    normalization: tuple | None = None

    def __call__(self, x) -> Fraction:
        x = _as_fraction_vector(x)
        return max(dot(l, x) for l in self.pieces.values())

    def linear_piece(self, cone: Cone) -> tuple[Fraction, ...]:
        """Linear function agreeing with the weight on ``cone``.

        For a non-maximal cone the piece of the first maximal cone containing
        it is returned; all such pieces agree on the cone itself.
        """
        if cone.rays in self.pieces:
            return self.pieces[cone.rays]
        s = set(cone.rays)
        for key in sorted(self.pieces):
            if s <= set(key):
                return self.pieces[key]
        raise KeyError(f"{cone} is not a cone of the weight's fan")

    def normalized(self, cone: Cone) -> "PLWeight":
        """Subtract the linear piece of ``cone`` so the weight vanishes on it."""
        l = self.linear_piece(cone)
        vals = {m: w - dot(l, m) for m, w in self.values.items()}
        pieces = {k: tuple(a - b for a, b in zip(p, l)) for k, p in self.pieces.items()}
        return PLWeight(vals, pieces, normalization=l)

    def scaled(self, d) -> "PLWeight":
        d = Fraction(d)
        return PLWeight({m: d * w for m, w in self.values.items()},
                        {k: tuple(d * a for a in p) for k, p in self.pieces.items()})


@dataclass(frozen=True)
class HullResult:
    """Outcome of convexifying a weight assignment.

    ``rays``/``weights`` are the surviving rays in input order; ``above``
    lists rays strictly above the hull and ``non_extremal`` rays on the hull
    that are not extreme in any linearity domain.
    """

    rays: tuple
    weights: tuple
    above: tuple
    non_extremal: tuple
    pieces: dict  # frozenset of on-hull rays -> linear function
    convex: bool

    def value(self, m) -> Fraction:
        """Value of the convexified function at ``m``."""
        return max(dot(l, m) for l in self.pieces.values())


def _check_input(rays, weights):
    if len(rays) != len(weights):
        raise FanError("rays and weights differ in length")
    if not rays:
        raise FanError("no rays given")
    n = len(rays[0])
    out_r, out_w = [], []
    for r, w in zip(rays, weights):
        r = as_vector(r)
        if len(r) != n:
            raise FanError("rays of mismatched dimension")
        if all(x == 0 for x in r):
            raise FanError("not a direction: zero ray")
        if not is_primitive(r):
            raise FanError(f"ray {r} is not primitive")
        w = Fraction(w)
        if r in out_r:
            if out_w[out_r.index(r)] != w:
                raise FanError(f"duplicate ray {r} with conflicting weights")
            continue
        out_r.append(r)
        out_w.append(w)
    return out_r, out_w, n


def positively_spans(rays, n) -> bool:
    """True iff the rays generate all of R^n as a cone."""
    if rank([list(r) for r in rays]) < n:
        return False
    return not _ConeGeometry(rays, n)._facets


def lower_hull(rays, weights) -> HullResult:
    """Exact lower hull of the lifted rays ``(m, w_m)``.

    The rays need only span ``R^n`` linearly; the hull is then taken over the
    cone they generate, so convexity verdicts and convexification also work
    for supports that are not the whole space.

    Raises
    ------
    FanError
        If the rays span a proper subspace or the weights admit no convex
        minorant.
    """
    rays, weights, n = _check_input(list(rays), list(weights))
    if rank([list(r) for r in rays]) < n:
        raise FanError("fan not complete: rays span a proper subspace")
    w = dict(zip(rays, weights))
    pieces = {}
    for sub in combinations(rays, n):
        l = solve([list(m) for m in sub], [w[m] for m in sub])
        if l is None:
            continue
        slack = {m: w[m] - dot(l, m) for m in rays}
        if any(s < 0 for s in slack.values()):
            continue
        eq = frozenset(m for m, s in slack.items() if s == 0)
        pieces.setdefault(eq, tuple(l))
    if not pieces:
        raise FanError("weights admit no convex minorant (negative positive relation)")
    on_hull = set().union(*pieces)
    survivors, nonext = [], []
    for m in rays:
        if m not in on_hull:
            continue
        extreme = False
        for eq in pieces:
            if m in eq:
                others = [x for x in eq if x != m]
                if not others or not _ConeGeometry(others, n).contains(m):
                    extreme = True
                break
        (survivors if extreme else nonext).append(m)
    return HullResult(
        rays=tuple(survivors),
        weights=tuple(w[m] for m in survivors),
        above=tuple(m for m in rays if m not in on_hull),
        non_extremal=tuple(nonext),
        pieces=pieces,
        convex=len(on_hull) == len(rays),
    )


def convexify(rays, weights) -> tuple[tuple, PLWeight]:
    """Largest convex piecewise-linear minorant of the given ray weights.

    Returns the surviving rays and the convex weight they generate.
    """
    hull = lower_hull(rays, weights)
    pieces = {}
    for eq, l in hull.pieces.items():
        key = tuple(sorted(m for m in eq if m in hull.rays))
        pieces[key] = l
    return hull.rays, PLWeight(dict(zip(hull.rays, hull.weights)), pieces)


class Fan:
    """A complete fan given by its maximal cones."""

    def __init__(self, maximal: Sequence[Cone], dim: int):
        self.dim = dim
        self.maximal: tuple[Cone, ...] = tuple(sorted(maximal, key=lambda c: c.rays))
        faces = {}
        for c in self.maximal:
            for s in c.face_ray_sets():
                key = tuple(sorted(s))
                if key not in faces:
                    faces[key] = c if key == c.rays else Cone(key, dim=dim)
        self._cones = faces
        self.rays: tuple = tuple(sorted({r for c in self.maximal for r in c.rays}))

    @property
    def cones(self) -> list[Cone]:
        return sorted(self._cones.values(), key=lambda c: (c.rank, c.rays))

    def cones_of_dim(self, k: int) -> list[Cone]:
        return [c for c in self.cones if c.rank == k]

    def cone(self, rays) -> Cone:
        return self._cones[tuple(sorted(tuple(r) for r in rays))]

    def census(self) -> dict[int, int]:
        out = {}
        for c in self.cones:
            out[c.rank] = out.get(c.rank, 0) + 1
        return dict(sorted(out.items()))

    def is_simplicial(self) -> bool:
        return all(c.is_simplicial for c in self.maximal)

    def is_complete(self) -> bool:
        """Facet pairing plus location of the signed standard basis."""
        if any(c.rank != self.dim for c in self.maximal):
            return False
        count = {}
        for c in self.maximal:
            for s in c._geo.facet_ray_sets:
                key = tuple(sorted(s))
                count[key] = count.get(key, 0) + 1
        if any(v != 2 for v in count.values()):
            return False
        for i in range(self.dim):
            for sgn in (1, -1):
                e = [0] * self.dim
                e[i] = sgn
                if not any(c.contains(e) for c in self.maximal):
                    return False
        return True

    def star(self, cone: Cone) -> list[Cone]:
        """Maximal cones having ``cone`` as a face."""
        s = set(cone.rays)
        return [c for c in self.maximal if s <= set(c.rays)]

    def link_rays(self, cone: Cone) -> list[tuple]:
        """Rays not in ``cone`` that span a cone of the fan together with it."""
        out = set()
        for c in self.star(cone):
            out.update(r for r in c.rays if r not in cone.rays)
        return sorted(out)

    def locate(self, v) -> Cone:
        """Minimal cone of the fan containing ``v``."""
        v = _as_fraction_vector(v)
        if len(v) != self.dim:
            raise FanError("dimension mismatch")
        for c in self.maximal:
            if c.contains(v):
                tight = c._geo.tight_facets(v)
                s = set(c.rays)
                for f in tight:
                    s &= f
                return self.cone(s)
        raise FanError(f"not covered: {v}")

    def __repr__(self):
        return f"Fan(dim={self.dim}, maximal={[list(c.rays) for c in self.maximal]})"


def build_fan(rays, weights) -> tuple[Fan, PLWeight, bool]:
    """Fan of linearity domains of the convexified weight.

    Returns ``(fan, weight, convex)`` where ``convex`` says whether every
    input ray already lay on the lower hull with its given weight.

    Raises
    ------
    DegenerateWeightError
        If some linearity domain contains a line.
    FanError
        If the rays do not positively span ``R^n``.
    """
    rays, weights, n = _check_input(list(rays), list(weights))
    if not positively_spans(rays, n):
        raise FanError("fan not complete: rays do not positively span")
    hull = lower_hull(rays, weights)
    cones, pieces = [], {}
    for eq, l in hull.pieces.items():
        gens = [m for m in eq if m in hull.rays]
        if not _ConeGeometry(gens, n).is_pointed:
            raise DegenerateWeightError(
                "weight is linear on a region containing a line; "
                "the marked element is not interior to sigma_0")
        c = Cone(gens, dim=n)
        cones.append(c)
        pieces[c.rays] = l
    fan = Fan(cones, n)
    if not fan.is_complete():
        raise FanError("fan not complete")
    weight = PLWeight(dict(zip(hull.rays, hull.weights)), pieces)
    return fan, weight, hull.convex


def faces(c: Cone, k: int) -> list[Cone]:
    return c.faces(k)


def is_simplicial(f: Fan) -> bool:
    return f.is_simplicial()


def locate(f: Fan, v) -> Cone:
    return f.locate(v)
