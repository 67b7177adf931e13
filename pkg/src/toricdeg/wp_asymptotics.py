"""Kodaira-Spencer field, its dbar-norm and the Weil-Petersson decay.

On a chart the horizontal lift of ``t d/dt`` that is orthogonal to the
fibre is ``W = t d/dt + sum_j q_j z_j d/dz_j``. Orthogonality is the linear
system ``H q = -h0`` where ``H_jk = d^2 Phi / da_j da_k`` and
``h0_k = d^2 Phi / da_k dtau`` for the chart potential ``Phi``; for the toric
potential ``Phi = -2 sum_m log a_m``

    H_jk = 2 sum_m m^j m^k / a_m^2,    h0_k = 2 sum_m w_m m^k / a_m^2.

The Weil-Petersson surrogate is the ratio of ``int ||dbar W||^2 omega^n`` to
``int omega^n`` over the chart region
``F = {a_j >= eta, a_m >= eta, A_sigma >= A_sigma'}``. The measure is the
model one, ``rho prod da_j / a_j^2`` (angles integrated out), and
``||dbar W||^2 = sum_j 4 a_j^2 rho |sum_{m off chart} w_m m^j / a_m^2|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .degeneration import DegenerationSpec, lambda_constants
from .model_metrics import (
    Chart,
    ChartPoint,
    HermitianModel,
    a_values,
    chart_for,
    charts,
    exact_metric,
    fd_steps,
    partition,
    rho_profile,
    strata_data,
)
from .quadrature import QuadResult, Region, gauss_legendre01, integrate_region


@dataclass
class HorizontalField:
    """Coefficients ``q_j`` of ``W - t d/dt`` in the frame ``z_j d/dz_j``."""

    q: np.ndarray
    residual: float


def _toric_system(chart: Chart, a, tau, shift: float = 0.0, rays=None):
    """``H`` and ``h0`` for ``Phi = -2 sum log(a_m + shift)`` over ``rays``."""
    am = chart.raw_a(a, tau) + shift
    idx = range(len(chart.rays)) if rays is None else rays
    M = chart.coords[list(idx)]
    w = chart.wnorm[list(idx)]
    inv2 = 1.0 / am[list(idx)] ** 2
    H = 2.0 * np.einsum("m,mj,mk->jk", inv2, M, M)
    h0 = 2.0 * np.einsum("m,m,mk->k", inv2, w, M)
    return H, h0


def ks_field(spec: DegenerationSpec, point: ChartPoint) -> HorizontalField:
    """Solve the orthogonality system for the Kodaira-Spencer lift.

    The residual is measured in the proper frame, where the system reads
    ``g p = -r`` with ``g = D H D / 2``, ``p = q / a`` and ``r = D h0 / 2``.
    """
    a_values(spec, point)  # domain check
    H, h0 = _toric_system(point.chart, point.a, point.tau)
    try:
        q = np.linalg.solve(H, -h0)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("singular metric in Kodaira-Spencer solve") from exc
    D = np.diag(point.a)
    g = 0.5 * D @ H @ D
    p = q / point.a
    r = 0.5 * point.a * h0
    res = np.linalg.norm(g @ p + r) / max(np.linalg.norm(r) + np.linalg.norm(g) * np.linalg.norm(p), 1e-300)
    return HorizontalField(q, float(res))


def leading_q(chart: Chart, a, tau) -> np.ndarray:
    """Leading-order ``q_j = -sum_m w_m m^j a_j^2 / a_m^2`` (cross-check only)."""
    a = np.asarray(a, dtype=float)
    am = chart.raw_a(a, tau)
    o = chart.others
    return -np.sum(chart.wnorm[o, None] * chart.coords[o] * a**2 / am[o, None] ** 2, axis=0)


def dbar_closed(chart: Chart, a, tau, rho=None) -> np.ndarray:
    """Closed-form ``||dbar W||^2``; ``a`` may be batched ``(k, n)``."""
    a = np.asarray(a, dtype=float)
    am = chart.raw_a(a, tau)
    o = chart.others
    S = np.sum(chart.wnorm[o, None] * chart.coords[o] / am[..., o, None] ** 2, axis=-2)
    val = np.sum(4.0 * a**2 * S**2, axis=-1)
    return val if rho is None else val * rho


def dbar_fd(spec: DegenerationSpec, point: ChartPoint) -> float:
    """``||dbar W||^2`` from finite differences of the solved ``q``.

    In the proper frames ``dbar W`` has matrix
    ``T_jk = (dq_j/dy_k) a_k / a_j`` with ``y = -a``, and its norm is
    ``tr(T^T g T g^{-1})``.
    """
    a, tau, chart = point.a, point.tau, point.chart
    n = chart.n
    T = np.zeros((n, n))
    h = fd_steps(a)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h[k]
        qp = ks_field(spec, ChartPoint(chart, a + e, tau)).q
        qm = ks_field(spec, ChartPoint(chart, a - e, tau)).q
        T[:, k] = -(qp - qm) / (2 * h[k]) * a[k] / a
    g = exact_metric(chart, a, tau)
    return float(np.trace(T.T @ g @ T @ np.linalg.inv(g)))


def dbar_norm(spec: DegenerationSpec, point: ChartPoint, method: str = "closed") -> float:
    if method == "closed":
        rho = float(rho_profile(spec.rho).averaged(point.b[None, :])[0])
        return float(dbar_closed(point.chart, point.a, point.tau, rho))
    if method == "fd":
        return dbar_fd(spec, point)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# regions and integrals


def chart_region(spec: DegenerationSpec, chart: Chart, tau: float, floor: float | None = None) -> Region:
    """The polyhedral chart region ``F`` in a-coordinates.

    Ties ``A_sigma = A_sigma'`` go to the chart whose cone comes first in
    the fan's order, so the regions of different charts are disjoint.
    """
    floor = spec.eta if floor is None else floor
    all_c = charts(spec)
    own = [i for i, c in enumerate(all_c) if c.cone == chart.cone][0]
    lam2 = float(lambda_constants(spec)[1])
    n, N = chart.n, len(chart.rays)
    planes = []
    for i in range(N):
        planes.append((chart.coords[i], chart.wnorm[i] * tau - floor))
    for i, j in combinations(range(N), 2):
        c = chart.coords[i] - chart.coords[j]
        d = (chart.wnorm[i] - chart.wnorm[j]) * tau
        if np.any(c != 0):
            planes.append((c, d))

    def inside(x):
        am = chart.raw_a(x, tau)
        A = chart.A_values(am, all_c)
        ok = np.all(am >= floor, axis=1)
        for k in range(len(all_c)):
            if k < own:
                ok &= A[:, own] > A[:, k]
            elif k > own:
                ok &= A[:, own] >= A[:, k]
        return ok

    upper = np.full(n, max(lam2 * tau, 2 * floor))
    return Region(np.full(n, float(floor)), upper, planes, inside)


def _rho_of(spec, tau):
    prof = rho_profile(spec.rho)
    return lambda x: prof.averaged(x / tau)


def chart_integrals(spec: DegenerationSpec, chart, tau: float, order: int = 8):
    """Volume and ``int ||dbar W||^2`` over the chart region (one pass)."""
    chart = chart_for(spec, chart)
    n = chart.n
    rho = _rho_of(spec, tau)
    const = math.factorial(n) * 2**n

    def f(x):
        r = rho(x)
        base = r / np.prod(x**2, axis=1)
        return np.stack([base, base * dbar_closed(chart, x, tau)], axis=1)

    res = integrate_region(chart_region(spec, chart, tau), f, order)
    return const * res.value, const * res.error, res


def chart_volume(spec: DegenerationSpec, chart, tau: float, order: int = 8) -> tuple[float, float]:
    """``n! 2^n int_F rho prod da_j / a_j^2`` and its quadrature error."""
    val, err, _ = chart_integrals(spec, chart, tau, order)
    return float(val[0]), float(err[0])


@dataclass
class WPResult:
    tau: float
    volume: float
    integral: float
    ratio: float
    error: float  # relative error estimate of the ratio


def wp_ratio(spec: DegenerationSpec, chart, eta: float | None = None, tau: float = 1e5,
             order: int = 8) -> WPResult:
    """Weil-Petersson ratio ``int ||dbar W||^2 omega^n / int omega^n``."""
    if eta is not None and eta != spec.eta:
        spec = spec.with_params(eta=eta)
    if tau < 10 * spec.eta**2:
        raise ValueError("need tau >= 10 eta^2")
    val, err, _ = chart_integrals(spec, chart, tau, order)
    vol, wp = float(val[0]), float(val[1])
    rel = float(err[0] / abs(vol) + (err[1] / abs(wp) if wp else 0.0))
    return WPResult(tau, vol, wp, wp / vol, rel)


# ---------------------------------------------------------------------------
# B_j constants


def axis_exit(spec: DegenerationSpec, chart: Chart, j: int) -> tuple[Fraction, tuple]:
    """First exit ``c_j`` of the scaled region along the ``b_j`` axis.

    Along ``b = s e_j`` every ``g_m(s) = w_m + m^j s`` is linear; membership
    in ``{g_m >= 0, A_sigma >= A_sigma'}`` can only change where two of them
    meet or one vanishes, so checking interval midpoints is exact. Returns
    ``c_j`` and the ray attaining ``A_sigma`` there.
    """
    all_c = charts(spec)
    own = [i for i, c in enumerate(all_c) if c.cone == chart.cone][0]
    N = len(chart.rays)
    w = chart.wnorm_exact
    mj = [chart.coords_exact[i][j] for i in range(N)]
    g = lambda i, s: w[i] + mj[i] * s
    cands = set()
    for i in range(N):
        if mj[i] != 0:
            cands.add(-w[i] / mj[i])
        for k in range(i + 1, N):
            if mj[i] != mj[k]:
                cands.add((w[k] - w[i]) / (mj[i] - mj[k]))
    cands = sorted(s for s in cands if s > 0)

    def inside(s):
        vals = [g(i, s) for i in range(N)]
        if any(v < 0 for v in vals):
            return False
        A = [min(vals[i] for i in c.others) for c in all_c]
        return all(A[own] >= x for x in A)

    lo = Fraction(0)
    for s in cands:
        if not inside((lo + s) / 2):
            break
        lo = s
    else:
        raise ValueError("degenerate chart boundary: region unbounded along axis")
    if lo <= 0:
        raise ValueError("degenerate chart boundary")
    vals = {i: g(i, lo) for i in chart.others}
    binding = chart.rays[min(vals, key=lambda i: (vals[i], i))]
    return lo, binding


def b_constants(spec: DegenerationSpec, chart, panels: int = 16, order: int = 16) -> dict:
    """``B_j`` integrals, ``C = 4 eta sum B_j``, exits ``c_j`` and binding rays."""
    chart = chart_for(spec, chart)
    prof = rho_profile(spec.rho)
    o = chart.others
    B, cs, binding = [], [], []
    x, wq = gauss_legendre01(order)
    for j in range(chart.n):
        c, m = axis_exit(spec, chart, j)
        cf = float(c)
        edges = np.linspace(0.0, cf, panels + 1)
        pts = (edges[:-1, None] + x[None, :] * np.diff(edges)[:, None]).ravel()
        wts = (wq[None, :] * np.diff(edges)[:, None]).ravel()
        bvec = np.zeros((len(pts), chart.n))
        bvec[:, j] = pts
        S = np.sum(chart.wnorm[o, None] * chart.coords[o, j, None]
                   / (chart.wnorm[o, None] + chart.coords[o, j, None] * pts[None, :]) ** 2, axis=0)
        B.append(float(np.sum(wts * prof.averaged(bvec) * S**2)))
        cs.append(c)
        binding.append(m)
    return {"B": B, "C": 4 * spec.eta * sum(B), "c": cs, "binding": binding}


# ---------------------------------------------------------------------------
# decay fit


@dataclass
class DecayFit:
    taus: list
    ratios: list
    scaled: list  # ratio * tau^3
    exponent: float
    C: float
    K: float
    errors: list = field(default_factory=list)
    lower: float = float("nan")  # min ratio * tau^3 over the grid, a measured lower constant


def fit_exponent(taus: Sequence[float], ratios: Sequence[float], decades: int = 4) -> float:
    """Least-squares slope of ``log ratio`` vs ``log tau`` over the top decades."""
    t = np.asarray(taus, float)
    r = np.asarray(ratios, float)
    keep = t >= t.max() / 10 ** (decades - 1) * (1 - 1e-9)
    if keep.sum() < 2:
        keep[:] = True
    slope, _ = np.polyfit(np.log(t[keep]), np.log(r[keep]), 1)
    return float(slope)


def wp_decay(spec: DegenerationSpec, chart, taus: Sequence[float] | None = None, order: int = 8) -> DecayFit:
    taus = list(taus if taus is not None else spec.tau_grid)
    res = [wp_ratio(spec, chart, tau=t, order=order) for t in taus]
    ratios = [r.ratio for r in res]
    scaled = [r.ratio * t**3 for r, t in zip(res, taus)]
    C = b_constants(spec, chart)["C"]
    K = max(abs(s - C) * t / math.log(t) for s, t in zip(scaled, taus))
    return DecayFit(taus, ratios, scaled, fit_exponent(taus, ratios), C, K, [r.error for r in res],
                    min(scaled))


# ---------------------------------------------------------------------------
# glued field


def _stratum_q(chart: Chart, sd, a, tau, eta):
    """``q^{(p)}`` for the stratum potential ``-2 sum_{star} log(eta + a_m)``."""
    idx = [chart.rays.index(m) for m in sd.star]
    H, h0 = _toric_system(chart, a, tau, shift=eta, rays=idx)
    return np.linalg.solve(H, -h0)


def _mu_vector(spec, chart, a, tau, model, sdata):
    mu = partition(spec, ChartPoint(chart, a, tau), model=model, strata=sdata)
    return np.array([mu[sd.cone.rays] for sd in sdata])


def dbar_mu(spec, chart, a, tau, model=None, sdata=None) -> np.ndarray:
    """Frame components ``-a_k d mu_p / da_k`` for every stratum, shape ``(P, n)``."""
    model = model or HermitianModel(spec.eta)
    sdata = sdata or strata_data(spec)
    n = chart.n
    h = fd_steps(a)
    out = np.zeros((len(sdata), n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h[k]
        d = (_mu_vector(spec, chart, a + e, tau, model, sdata)
             - _mu_vector(spec, chart, a - e, tau, model, sdata)) / (2 * h[k])
        out[:, k] = -a[k] * d
    return out


def dbar_mu_norms(spec, point: ChartPoint, model=None, sdata=None) -> np.ndarray:
    """``||dbar mu_p||`` in the exact metric, per stratum."""
    chart, a, tau = point.chart, point.a, point.tau
    D = dbar_mu(spec, chart, a, tau, model, sdata)
    ginv = np.linalg.inv(exact_metric(chart, a, tau))
    return np.sqrt(np.maximum(np.einsum("pj,jk,pk->p", D, ginv, D), 0.0))


def shell_norm(spec, point: ChartPoint, model=None, sdata=None) -> float:
    """``|| sum_p dbar mu_p (x) (W_(p) - t d/dt) ||^2`` in the exact metric."""
    chart, a, tau = point.chart, point.a, point.tau
    sdata = sdata or strata_data(spec)
    D = dbar_mu(spec, chart, a, tau, model, sdata)
    T = np.zeros((chart.n, chart.n))
    for p, sd in enumerate(sdata):
        if np.any(D[p] != 0):
            q = _stratum_q(chart, sd, a, tau, spec.eta)
            T += np.outer(q / a, D[p])
    g = exact_metric(chart, a, tau)
    return float(np.trace(T.T @ g @ T @ np.linalg.inv(g)))


@dataclass
class GluedReport:
    taus: list
    chart_scaled: dict  # chart id -> list of ratio * tau^3
    C: float
    shell_scaled: list  # shell ratio * tau^3 * log tau
    mu_sup_scaled: list  # sup ||dbar mu|| * log tau
    stable: bool


def glued_field_check(spec: DegenerationSpec, taus: Sequence[float] | None = None,
                      samples: int = 200, seed: int = 0, order: int = 6) -> GluedReport:
    """Chart ratios, transition-shell term and ``sup ||dbar mu_p|| log tau``.

    The shell term is the ratio ``int ||T||^2 / int 1`` over the chart
    regions (model measure) with ``T = sum_p dbar mu_p (x) (W_(p) - t d/dt)``;
    it is reported multiplied by ``tau^3 log tau``.
    """
    taus = list(taus if taus is not None else spec.tau_grid)
    model = HermitianModel(spec.eta)
    sdata = strata_data(spec)
    all_c = charts(spec)
    chart_scaled = {c.id: [] for c in all_c}
    shell_scaled, mu_scaled = [], []
    rng = np.random.default_rng(seed)
    from .model_metrics import sample_chart

    for tau in taus:
        shell_num = vol = 0.0
        sup_mu = 0.0
        for c in all_c:
            chart_scaled[c.id].append(wp_ratio(spec, c, tau=tau, order=8).ratio * tau**3)

            def f(x, c=c):
                base = 1.0 / np.prod(x**2, axis=1)
                sh = np.array([shell_norm(spec, ChartPoint(c, row, tau), model, sdata) for row in x])
                return np.stack([base, base * sh], axis=1)

            res = integrate_region(chart_region(spec, c, tau), f, order)
            vol += res.value[0]
            shell_num += res.value[1]
            for pt in sample_chart(spec, c, tau, samples, rng):
                sup_mu = max(sup_mu, float(np.max(dbar_mu_norms(spec, pt, model, sdata))))
        shell_scaled.append(shell_num / vol * tau**3 * math.log(tau))
        mu_scaled.append(sup_mu * math.log(tau))
    top = [max(v[i] for v in chart_scaled.values()) for i in range(len(taus))]
    C = top[-1]
    stable = len(top) < 2 or abs(top[-1] - top[-2]) <= 0.05 * abs(top[-1])
    return GluedReport(taus, chart_scaled, C, shell_scaled, mu_scaled, stable)
