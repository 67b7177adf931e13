"""Model Kaehler metrics on the charts of a toric degeneration.

Conventions
-----------
All logarithmic quantities are stored positive: ``tau = -log|t|^2``,
``a_j = -log|z_j|^2`` and ``a_m = -log|s_m|^2``. On the chart of a maximal
cone ``sigma`` with rays ``S_sigma = (m_1, ..., m_n)`` the coordinates are
``z_j = s_{m_j}`` and every other ray has

    a_m = w^sigma_m * tau + sum_j m^j a_j,

where ``m^j`` are the coordinates of ``m`` in the basis ``S_sigma`` and
``w^sigma = w - l_sigma`` is the weight normalized to vanish on the chart.
These are the *raw* values. The *shifted* values ``a_m = eta - psi(-a_m)``
use the Hermitian model norm, which saturates to 1 near ``|s_m| = 1``.

The metric is written in the proper frame ``W_j = a_j z_j d/dz_j``. In the
exact toric mode the potential is ``-2 sum_m log a_m`` and

    g_jk = delta_jk + sum_{m not in S_sigma} (m^j a_j)(m^k a_k) / a_m^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .degeneration import DegenerationSpec, lambda_constants
from .fan_pl import Cone
from .lattice import dot, solve


class ChartDomainError(ValueError):
    """Point outside the chart's domain (some a_m <= 0)."""


class PositivityError(ArithmeticError):
    """Finite-difference metric failed to be positive definite."""


# ---------------------------------------------------------------------------
# smoothing profiles


def smoothstep(x):
    """``x^2 (3 - 2x)`` clamped to [0, 1]; C^1 with bounded derivative."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def smoothstep_d(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 6.0 * x * (1.0 - x), 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 6.0 - 12.0 * x, 0.0)


def _soft_gap(d):
    """Even C^2 function equal to |d|/2 for |d| >= 1."""
    d = np.abs(d)
    inner = (5.0 + 15.0 * d**2 - 5.0 * d**4 + d**6) / 32.0
    return np.where(d <= 1.0, inner, d / 2.0)


def soft_min(values: Sequence[float]) -> float:
    """Smooth minimum, equal to ``min`` when all pairwise gaps are >= 1.

    Built left-associatively from ``min'(x, y) = (x + y)/2 - s(x - y)``
    where ``s`` is :func:`_soft_gap`. Never exceeds the true minimum.
    """
    vals = list(values)
    if not vals:
        raise ValueError("soft_min of an empty list")
    acc = vals[0]
    for v in vals[1:]:
        acc = 0.5 * (acc + v) - float(_soft_gap(acc - v))
    return acc


class HermitianModel:
    """Model norm ``log||s||^2 = psi(log|s|^2)``.

    ``psi(x) = x (1 - smoothstep((x - x0)/(x1 - x0)))`` is the identity for
    ``x <= x0`` and vanishes for ``x >= x1``; it is nondecreasing and never
    positive, so ``||s|| <= 1`` everywhere.
    """

    def __init__(self, eta: float = 10.0, x0: float = -4.0, x1: float = -1.0):
        if not x0 < x1 <= 0:
            raise ValueError("need x0 < x1 <= 0")
        self.eta, self.x0, self.x1 = float(eta), float(x0), float(x1)
        grid = np.linspace(x0, x1, 2001)
        self.slope_bound = float(np.max(np.abs(self.dpsi(grid))))

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return x * (1.0 - smoothstep(self._u(x)))

    def dpsi(self, x):
        x = np.asarray(x, dtype=float)
        L = self.x1 - self.x0
        return 1.0 - smoothstep(self._u(x)) - x * smoothstep_d(self._u(x)) / L

    def d2psi(self, x):
        x = np.asarray(x, dtype=float)
        L = self.x1 - self.x0
        u = self._u(x)
        return -2.0 * smoothstep_d(u) / L - x * smoothstep_d2(u) / L**2

    def norm_sq(self, s_abs_sq):
        return np.exp(self.psi(np.log(s_abs_sq)))

    def shifted(self, a_raw):
        """``eta - log||s||^2`` from the raw ``a = -log|s|^2``."""
        return self.eta - self.psi(-np.asarray(a_raw, dtype=float))


# ---------------------------------------------------------------------------
# bounded volume factors


@dataclass(frozen=True)
class RhoProfile:
    """Bounded positive volume factor ``rho(b, theta)`` with ``b = a/tau``.

    ``angle_dims`` lists the angles the profile depends on; the others are
    integrated out exactly.
    """

    func: Callable
    angle_dims: tuple = ()

    def averaged(self, b: np.ndarray, nodes: int = 8) -> np.ndarray:
        """Angle average by the ``nodes``-point periodic trapezoid rule."""
        b = np.atleast_2d(b)
        if not self.angle_dims:
            return np.asarray(self.func(b, None), dtype=float)
        theta = 2 * np.pi * np.arange(nodes) / nodes
        grids = np.meshgrid(*([theta] * len(self.angle_dims)), indexing="ij")
        tot = np.zeros(b.shape[0])
        for idx in np.ndindex(*grids[0].shape):
            th = np.zeros(b.shape[1])
            for k, d in enumerate(self.angle_dims):
                th[d] = grids[k][idx]
            tot += self.func(b, th)
        return tot / grids[0].size


RHO_PROFILES = {
    "one": RhoProfile(lambda b, th: np.ones(b.shape[0])),
    "ripple": RhoProfile(lambda b, th: np.full(b.shape[0], 1.0 + 0.5 * math.cos(th[0])), (0,)),
    "slope": RhoProfile(lambda b, th: 1.0 / (1.0 + np.sum(b, axis=1))),
}


def rho_profile(name: str) -> RhoProfile:
    try:
        return RHO_PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown rho profile {name!r}") from None


# ---------------------------------------------------------------------------
# chart geometry


class Chart:
    """Coordinates on the chart of a simplicial maximal cone.

    Attributes
    ----------
    cone : Cone
    basis : tuple of rays ``S_sigma``
    coords : (N, n) array, coordinates of every fan ray in the basis
    wnorm : (N,) array of normalized weights ``w_m - l_sigma(m)``
    others : indices of rays outside ``S_sigma``
    """

    def __init__(self, spec: DegenerationSpec, cone: Cone):
        if not cone.is_simplicial:
            raise ValueError(f"chart cone {cone} is not simplicial")
        self.spec = spec
        self.cone = cone
        self.rays = tuple(spec.weight.values)
        # basis in input ray order so chart coordinates follow the input
        self.basis = tuple(m for m in self.rays if m in cone.rays)
        n = spec.rank
        B = [[Fraction(self.basis[i][j]) for i in range(n)] for j in range(n)]
        l = spec.weight.linear_piece(cone)
        self.coords_exact = [tuple(solve(B, list(m))) for m in self.rays]
        self.wnorm_exact = [spec.weight.values[m] - dot(l, m) for m in self.rays]
        self.coords = np.array([[float(x) for x in c] for c in self.coords_exact])
        self.wnorm = np.array([float(w) for w in self.wnorm_exact])
        self.basis_idx = [self.rays.index(m) for m in self.basis]
        self.others = [i for i, m in enumerate(self.rays) if m not in self.basis]
        self.n = n

    @property
    def id(self) -> str:
        return "cone(" + ",".join("(" + ",".join(map(str, r)) + ")" for r in self.basis) + ")"

    def raw_a(self, a, tau) -> np.ndarray:
        """Raw ``a_m`` for every ray; ``a`` may be (n,) or (k, n)."""
        a = np.asarray(a, dtype=float)
        return self.wnorm * tau + a @ self.coords.T

    def A_values(self, a_all: np.ndarray, charts: Sequence["Chart"]) -> np.ndarray:
        """``A_sigma' = min_{m not in S_sigma'} a_m`` for each chart."""
        return np.stack([a_all[..., c.others].min(axis=-1) for c in charts], axis=-1)


def charts(spec: DegenerationSpec) -> list[Chart]:
    return [Chart(spec, c) for c in spec.fan.maximal]


def chart_for(spec: DegenerationSpec, cone) -> Chart:
    if isinstance(cone, Chart):
        return cone
    if isinstance(cone, int):
        return Chart(spec, spec.fan.maximal[cone])
    rays = cone.rays if isinstance(cone, Cone) else tuple(sorted(tuple(r) for r in cone))
    return Chart(spec, spec.fan.cone(rays))


@dataclass
class ChartPoint:
    """A point of ``X_t`` in chart log-coordinates."""

    chart: Chart
    a: np.ndarray
    tau: float
    theta: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.theta is None:
            self.theta = np.zeros_like(self.a)

    @property
    def b(self) -> np.ndarray:
        return self.a / self.tau


def in_chart_region(chart: Chart, a, tau, all_charts=None, floor: float = 0.0) -> bool:
    """Membership in ``{a_m >= floor for all m, A_sigma >= A_sigma' for all sigma'}``."""
    all_charts = all_charts if all_charts is not None else charts(chart.spec)
    am = chart.raw_a(a, tau)
    if np.any(am < floor):
        return False
    A = chart.A_values(am, all_charts)
    own = [i for i, c in enumerate(all_charts) if c.cone == chart.cone][0]
    return bool(np.all(A[own] >= A - 1e-12 * max(1.0, tau)))


# ---------------------------------------------------------------------------
# a-values, weights, partition


def a_values(spec: DegenerationSpec, point: ChartPoint, shifted: bool = False,
             model: HermitianModel | None = None) -> dict:
    """Ray -> a_m at ``point``.

    With ``shifted=False`` (default) returns raw ``-log|s_m|^2``; with
    ``shifted=True`` returns ``eta - log||s_m||^2`` for the Hermitian model.

    Raises
    ------
    ChartDomainError
        If some raw ``a_m <= 0``.
    """
    am = point.chart.raw_a(point.a, point.tau)
    if np.any(am <= 0):
        bad = [point.chart.rays[i] for i in np.flatnonzero(am <= 0)]
        raise ChartDomainError(f"point outside chart domain: a_m <= 0 for {bad}")
    if shifted:
        model = model or HermitianModel(spec.eta)
        am = model.shifted(am)
    return dict(zip(point.chart.rays, am.tolist()))


@dataclass(frozen=True)
class StratumData:
    """Ray bookkeeping for the stratum of cone ``c``.

    ``link`` are rays spanning a cone with ``c`` but not in it, ``own`` the
    rays of ``c`` and ``star = own + link``; ``l = n - dim c`` is the number
    of vanishing coordinates transverse to the stratum.
    """

    cone: Cone
    link: tuple
    own: tuple
    l: int

    @property
    def star(self) -> tuple:
        return tuple(sorted(self.own + self.link))


def strata_data(spec: DegenerationSpec) -> list[StratumData]:
    out = []
    for c in spec.fan.cones:
        out.append(StratumData(c, tuple(spec.fan.link_rays(c)), c.rays, spec.rank - c.rank))
    return out


def _log_h(sd: StratumData, amap: dict, tau: float, eta: float) -> float:
    val = 2 * (len(sd.link) - sd.l) * math.log(tau)
    for m in sd.star:
        val += 2 * (math.log(eta) - math.log(amap[m]))
    return val


def h_weight(spec: DegenerationSpec, point: ChartPoint, p, shifted: bool = True,
             model: HermitianModel | None = None) -> float:
    """``h_p = tau^{2(|link|-l)} prod_{m in star} eta^2 / a_m^2``."""
    sd = p if isinstance(p, StratumData) else _stratum(spec, p)
    amap = a_values(spec, point, shifted=shifted, model=model)
    return math.exp(_log_h(sd, amap, point.tau, spec.eta))


def _stratum(spec, cone) -> StratumData:
    if not isinstance(cone, Cone):
        cone = spec.fan.cone(cone)
    return StratumData(cone, tuple(spec.fan.link_rays(cone)), cone.rays, spec.rank - cone.rank)


def mu_profile(x):
    return smoothstep(x)


def _mu_tilde(sd: StratumData, amap: dict, tau: float, eta: float) -> float:
    args = [math.log(amap[m] / eta) for m in sd.link]
    args += [math.log(tau / (amap[m] * eta)) for m in sd.own]
    return float(mu_profile(soft_min(args) / math.log(tau / eta**2)))


def partition(spec: DegenerationSpec, point: ChartPoint, model: HermitianModel | None = None,
              strata: list[StratumData] | None = None) -> dict:
    """Cone rays -> ``mu_p`` at ``point`` (shifted a-values).

    Raises
    ------
    ValueError
        If no stratum function is positive at the point.
    """
    strata = strata if strata is not None else strata_data(spec)
    amap = a_values(spec, point, shifted=True, model=model)
    tilde = {sd.cone.rays: _mu_tilde(sd, amap, point.tau, spec.eta) for sd in strata}
    tot = sum(tilde.values())
    if tot <= 0:
        raise ValueError("point outside partition cover")
    return {k: v / tot for k, v in tilde.items()}


def core_sample(spec: DegenerationSpec, cone, tau: float, count: int, rng: np.random.Generator,
                model: HermitianModel | None = None, max_tries: int = 200) -> list[ChartPoint]:
    """Random points of the core neighbourhood ``U_p^0`` of the stratum of ``cone``.

    In the Hermitian model ``U_p^0`` is where every section ``s_m`` with
    ``m`` a ray of ``cone`` has norm one (raw ``a_m <= -x1``). The remaining
    chart coordinates are drawn from ``[eta, lambda_2 tau]`` and the point
    must lie in the region of a maximal chart containing ``cone``.
    """
    model = model or HermitianModel(spec.eta)
    if not isinstance(cone, Cone):
        cone = spec.fan.cone(cone)
    all_c = charts(spec)
    hosts = [c for c in all_c if set(cone.rays) <= set(c.basis)]
    lam2 = float(lambda_constants(spec)[1])
    lo, hi = spec.eta, lam2 * tau
    out, tries = [], 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("core neighbourhood too small to sample")
        for ch in hosts:
            k = 4 * count
            small = np.array([r in cone.rays for r in ch.basis])
            logu = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(k, ch.n)))
            lin = rng.uniform(lo, hi, size=(k, ch.n))
            cand = np.where(rng.random((k, 1)) < 0.5, logu, lin)
            cand[:, small] = rng.uniform(1e-3, -model.x1, size=(k, int(small.sum())))
            for row in cand:
                if len(out) < count and in_chart_region(ch, row, tau, all_c, floor=1e-12):
                    out.append(ChartPoint(ch, row, tau))
    return out


def support_violations(spec: DegenerationSpec, tau: float, count: int, rng: np.random.Generator,
                       model: HermitianModel | None = None) -> dict:
    """Check that ``mu_q`` vanishes on ``U_p^0`` whenever ``p`` is not a face of ``q``.

    Returns ``{(p rays, q rays): number of samples with mu_q > 0}`` for every
    such ordered pair, using ``count`` fresh samples of ``U_p^0`` per pair.
    """
    model = model or HermitianModel(spec.eta)
    sdata = strata_data(spec)
    out = {}
    for p in spec.fan.cones:
        for q in spec.fan.cones:
            if set(p.rays) <= set(q.rays):
                continue
            bad = 0
            for pt in core_sample(spec, p, tau, count, rng, model):
                if partition(spec, pt, model, sdata)[q.rays] > 0:
                    bad += 1
            out[(p.rays, q.rays)] = bad
    return out


# ---------------------------------------------------------------------------
# metric


@dataclass
class MetricSample:
    """Metric in the proper frame plus derived scalars."""

    g: np.ndarray
    density: float
    h: float
    phi: float | None = None
    mode: str = "exact"
    extra: dict = field(default_factory=dict)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.g)

    @property
    def min_eig(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eig(self) -> float:
        return float(self.eigenvalues[-1])


def exact_metric(chart: Chart, a, tau) -> np.ndarray:
    """Closed-form exact-mode metric; ``a`` may be batched (k, n)."""
    a = np.asarray(a, dtype=float)
    am = chart.raw_a(a, tau)
    V = chart.coords[chart.others] * a[..., None, :] / am[..., chart.others, None]
    g = np.einsum("...mj,...mk->...jk", V, V)
    return g + np.eye(chart.n)


def _log_h_exact(chart: Chart, a, tau, eta) -> np.ndarray:
    """log of ``tau^{2(N-n)} prod_m eta^2/a_m^2`` with raw a-values."""
    am = chart.raw_a(a, tau)
    N, n = len(chart.rays), chart.n
    return 2 * (N - n) * math.log(tau) + np.sum(2 * np.log(eta) - 2 * np.log(am), axis=-1)


def glued_potential(spec: DegenerationSpec, chart: Chart, tau: float, partition_rule: str = "glued",
                    shifted: bool = True, model: HermitianModel | None = None) -> Callable:
    """``Phi(a) = sum_p mu_p log h_p + log rho`` as a function of chart ``a``.

    ``partition_rule="concentrated"`` puts all mass on the origin stratum
    (the toric model), which reproduces the exact mode.
    """
    model = model or HermitianModel(spec.eta)
    sdata = strata_data(spec)
    rho = rho_profile(spec.rho)
    origin = next(sd for sd in sdata if sd.cone.rank == 0)

    def Phi(a):
        a = np.asarray(a, dtype=float)
        am = chart.raw_a(a, tau)
        if shifted:
            am = model.shifted(am)
        amap = dict(zip(chart.rays, am.tolist()))
        if partition_rule == "concentrated":
            val = _log_h(origin, amap, tau, spec.eta)
        else:
            tilde = [_mu_tilde(sd, amap, tau, spec.eta) for sd in sdata]
            tot = sum(tilde)
            if tot <= 0:
                raise ValueError("point outside partition cover")
            val = sum(t / tot * _log_h(sd, amap, tau, spec.eta)
                      for t, sd in zip(tilde, sdata) if t > 0)
        return val + math.log(float(rho.averaged(a[None, :] / tau)[0]))

    return Phi


def fd_hessian(f: Callable, x: np.ndarray, steps: np.ndarray, richardson: bool = True) -> np.ndarray:
    """Central-difference Hessian with one Richardson extrapolation step."""
    x = np.asarray(x, dtype=float)
    n = len(x)

    def raw(hs):
        H = np.zeros((n, n))
        f0 = f(x)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = hs[i]
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / hs[i] ** 2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = hs[j]
                v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej))
                H[i, j] = H[j, i] = v / (4 * hs[i] * hs[j])
        return H

    steps = np.asarray(steps, dtype=float)
    if np.any(steps <= np.finfo(float).tiny):
        raise ValueError("finite-difference step underflow")
    H1 = raw(steps)
    if not richardson:
        return H1
    H2 = raw(steps / 2)
    return (4 * H2 - H1) / 3


def fd_steps(a) -> np.ndarray:
    """Documented step rule ``h_j = 1e-4 * max(1, a_j)``."""
    return 1e-4 * np.maximum(1.0, np.abs(np.asarray(a, dtype=float)))


def metric_matrix(spec: DegenerationSpec, point: ChartPoint, mode: str = "exact",
                  partition_rule: str = "glued", shifted: bool | None = None,
                  model: HermitianModel | None = None) -> MetricSample:
    """Metric in the proper frame at ``point``.

    ``mode="exact"`` uses the closed form. ``mode="glued"`` differentiates
    the glued potential numerically: ``g_jk = (1/2) a_j a_k d^2 Phi/da_j da_k``.
    """
    chart, a, tau = point.chart, point.a, point.tau
    a_values(spec, point)  # domain check
    rho = float(rho_profile(spec.rho).averaged(a[None, :] / tau)[0])
    if mode == "exact":
        g = exact_metric(chart, a, tau)
        logh = float(_log_h_exact(chart, a, tau, spec.eta))
    elif mode == "glued":
        if shifted is None:
            shifted = partition_rule != "concentrated"
        Phi = glued_potential(spec, chart, tau, partition_rule, shifted, model)
        H = fd_hessian(Phi, a, fd_steps(a))
        g = 0.5 * np.outer(a, a) * H
        g = 0.5 * (g + g.T)
        if np.linalg.eigvalsh(g)[0] <= 0:
            raise PositivityError(f"positivity failure at a={a.tolist()}, tau={tau}")
        logh = Phi(a) - math.log(rho)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n = chart.n
    density = float(np.linalg.det(g) * np.prod(1.0 / a**2) * rho)
    # e^{-phi} = omega^n / V = n! pi^{-n} det g prod a_j^{-2} / h   (rho cancels)
    log_ratio = (math.log(math.factorial(n)) - n * math.log(math.pi)
                 + math.log(np.linalg.det(g)) - 2 * float(np.sum(np.log(a))) - logh)
    return MetricSample(g=g, density=density, h=math.exp(logh), phi=-log_ratio, mode=mode)


def phi(spec: DegenerationSpec, point: ChartPoint, mode: str = "exact", **kw) -> float:
    """Monge-Ampere defect ``-log(omega^n / V)`` at ``point``."""
    return metric_matrix(spec, point, mode=mode, **kw).phi


def gamma_defect(spec: DegenerationSpec, point: ChartPoint,
                 model: HermitianModel | None = None) -> float:
    """Relative size of the gluing correction at ``point``.

    Operator norm of ``G^{-1/2} (g_glued - G) G^{-1/2}`` where ``G = I + alpha``
    is the exact toric metric. Positivity of the glued metric is not
    required, so this also works at small ``tau``.
    """
    chart, a, tau = point.chart, point.a, point.tau
    G = exact_metric(chart, a, tau)
    Phi = glued_potential(spec, chart, tau, "glued", True, model)
    g = 0.5 * np.outer(a, a) * fd_hessian(Phi, a, fd_steps(a))
    g = 0.5 * (g + g.T)
    w, V = np.linalg.eigh(G)
    R = V @ np.diag(w**-0.5) @ V.T
    return float(np.max(np.abs(np.linalg.eigvalsh(R @ (g - G) @ R))))


def metric_bound(spec: DegenerationSpec, chart: Chart) -> float:
    """Upper bound ``C(w)`` for the largest eigenvalue on the chart region.

    On the region every raw ``a_j <= lambda_2 tau`` and every ``a_m`` off
    the chart is ``> lambda_1 tau``, so each correction vector has squared
    length at most ``(lambda_2/lambda_1)^2 |m|^2``.
    """
    lam1, lam2 = lambda_constants(spec)
    ratio = float(lam2 / lam1) ** 2
    return 1.0 + ratio * float(np.sum(chart.coords[chart.others] ** 2))


# ---------------------------------------------------------------------------
# sampling and bounded geometry


def sample_chart(spec: DegenerationSpec, chart: Chart, tau: float, count: int,
                 rng: np.random.Generator, floor: float | None = None,
                 max_tries: int = 200) -> list[ChartPoint]:
    """Random points of the chart region ``F`` (rejection sampling).

    Half the proposals are log-uniform in ``[floor, lambda_2 tau]`` per
    coordinate and half uniform, so both the cusp end and the interior are
    represented.
    """
    floor = spec.eta if floor is None else floor
    lam2 = float(lambda_constants(spec)[1])
    hi = lam2 * tau
    all_c = charts(spec)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("chart region too small to sample")
        k = 4 * count
        logu = np.exp(rng.uniform(math.log(floor), math.log(hi), size=(k, chart.n)))
        lin = rng.uniform(floor, hi, size=(k, chart.n))
        cand = np.where(rng.random((k, 1)) < 0.5, logu, lin)
        am = chart.raw_a(cand, tau)
        A = chart.A_values(am, all_c)
        own = [i for i, c in enumerate(all_c) if c.cone == chart.cone][0]
        ok = np.all(am >= floor, axis=1) & np.all(A[:, [own]] >= A, axis=1)
        for row in cand[ok]:
            if len(out) < count:
                out.append(ChartPoint(chart, row, tau))
    return out


def frame_derivative(f: Callable, a: np.ndarray, j: int) -> np.ndarray:
    """``W_j f = -a_j df/da_j`` for functions of the real log-coordinates."""
    h = fd_steps(a)[j]
    e = np.zeros_like(a)
    e[j] = h
    return -a[j] * (np.asarray(f(a + e)) - np.asarray(f(a - e))) / (2 * h)


def bounded_geometry_sample(spec: DegenerationSpec, point: ChartPoint, order: int = 2) -> dict:
    """Frame-derivative magnitudes of ``g`` and ``phi`` up to ``order``.

    Returns ``{"g": [m0, m1, ...], "phi": [...], "curvature": K or None}``
    where ``m_k`` is the max absolute k-th frame derivative. For rank one the
    Gaussian curvature of the chart metric is included.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    chart, tau = point.chart, point.tau
    g_f = lambda a: exact_metric(chart, a, tau)
    phi_f = lambda a: np.asarray(metric_matrix(spec, ChartPoint(chart, a, tau)).phi)
    out = {}
    for name, f in (("g", g_f), ("phi", phi_f)):
        mags = [float(np.max(np.abs(f(point.a))))]
        if order >= 1:
            mags.append(max(float(np.max(np.abs(frame_derivative(f, point.a, j))))
                            for j in range(chart.n)))
        if order >= 2:
            vals = []
            for i in range(chart.n):
                for j in range(chart.n):
                    inner = lambda a, j=j: frame_derivative(f, a, j)
                    vals.append(float(np.max(np.abs(frame_derivative(inner, point.a, i)))))
            mags.append(max(vals))
        out[name] = mags
    out["curvature"] = gaussian_curvature(spec, point) if chart.n == 1 else None
    return out


def curvature_1d(G: Callable, a: float) -> float:
    """Gaussian curvature of ``i G(a) du ^ du-bar`` with ``a = -2 Re u``.

    ``K = -2 (log G)'' / G``; for ``G = 1/a^2`` this is ``-4``.
    """
    h = 1e-3 * max(1.0, abs(a))
    lg = lambda x: math.log(G(x))
    d2 = (-lg(a + 2 * h) + 16 * lg(a + h) - 30 * lg(a) + 16 * lg(a - h) - lg(a - 2 * h)) / (12 * h * h)
    return -2.0 * d2 / G(a)


def gaussian_curvature(spec: DegenerationSpec, point: ChartPoint) -> float:
    """Curvature of the rank-one exact chart metric (``G = g / a^2``)."""
    chart, tau = point.chart, point.tau
    if chart.n != 1:
        raise ValueError("curvature is only implemented in rank one")
    G = lambda x: float(exact_metric(chart, [x], tau)[0, 0]) / x**2
    return curvature_1d(G, float(point.a[0]))


def box_constants(spec: DegenerationSpec, chart: Chart, resolution: int = 41,
                  tau: float = 1.0) -> tuple[float, float]:
    """Numerical ``(c, c')`` with ``[0, c]^n`` inside and ``[0, c']^n``
    enclosing the scaled chart region ``{b = a/tau}`` (grid estimate)."""
    lam2 = float(lambda_constants(spec)[1])
    all_c = charts(spec)
    own = [i for i, c in enumerate(all_c) if c.cone == chart.cone][0]
    axis = np.linspace(0.0, lam2, resolution)
    pts = np.stack(np.meshgrid(*([axis] * chart.n), indexing="ij"), -1).reshape(-1, chart.n)

    def inside(b):
        am = chart.raw_a(b, 1.0)
        A = chart.A_values(am, all_c)
        return np.all(am >= -1e-12, axis=1) & np.all(A[:, [own]] >= A - 1e-12, axis=1)

    ok = inside(pts)
    c_out = float(np.max(pts[ok])) if ok.any() else 0.0
    lo, hi = 0.0, lam2
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        sub = np.stack(np.meshgrid(*([np.linspace(0, mid, resolution)] * chart.n),
                                   indexing="ij"), -1).reshape(-1, chart.n)
        if inside(sub).all():
            lo = mid
        else:
            hi = mid
    return lo, c_out
