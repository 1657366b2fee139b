"""Scaling-limit degree trajectories and comparison solutions.

The limit trajectory zeta solves a lower-triangular linear ODE system
whose solution has the integral form

    zeta_i(t) = c_i M_i(0,t) + int_0^t g_i(s) M_i(s,t) ds,
    M_i(s,t)  = exp(-int_s^t (1-p(u)) (i+beta(u)) / sigma(u) du),

with g_0 = 1-p, g_1 = p + (1-p) beta zeta_0 / sigma, and
g_i = (1-p)(i-1+beta) zeta_{i-1} / sigma for i >= 2.  The aggregate
component integrates the flux through level d.  This module evaluates
that closed form by cell-wise propagation on a graded grid (exact
power-law kernels on piecewise-constant schedule segments), plus an
independent Runge-Kutta route, the constant-coefficient comparison
family, power-law envelopes, and reference target laws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .model import InitialProfile, Path, Schedule, sigma

_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)


@dataclass(frozen=True)
class LLNSolution:
    """Limit trajectory on a time grid; values has shape (len(grid), d+2)."""

    d: int
    grid: np.ndarray
    values: np.ndarray
    method: str

    def path(self) -> Path:
        return Path.from_knots(self.grid, self.values)

    def mass_deviation(self, profile: InitialProfile) -> float:
        """max_t |sum_i zeta_i + zetabar - (t + c_total)|."""
        total = self.values.sum(axis=1)
        return float(np.abs(total - (self.grid + profile.c_total)).max())

    def at(self, t) -> np.ndarray:
        return self.path().at(t)


@dataclass(frozen=True)
class WeightCheck:
    """Weight accounting for a truncated solution.

    raw_deficit(t)   = t + c_weighted - sum_{i<=d} i*zeta_i(t)
    adjusted(t)      = raw_deficit - (d+1)*zetabar  (weight left over after
                       counting every aggregated urn at its minimum size)
    tail_bound(t)    = (d+1)*zetabar(t)
    """

    times: np.ndarray
    raw_deficit: np.ndarray
    adjusted: np.ndarray
    tail_bound: np.ndarray
    max_adjusted: float
    condensed: bool


def weighted_sum_check(sol: LLNSolution, profile: InitialProfile) -> WeightCheck:
    d = sol.d
    idx = np.arange(d + 1)
    visible = sol.values[:, : d + 1] @ idx
    raw = sol.grid + profile.c_weighted - visible
    tail_bound = (d + 1) * sol.values[:, d + 1]
    adjusted = raw - tail_bound
    return WeightCheck(
        times=sol.grid,
        raw_deficit=raw,
        adjusted=adjusted,
        tail_bound=tail_bound,
        max_adjusted=float(np.abs(adjusted).max()),
        condensed=profile.condensed_flag,
    )


def graded_grid(schedule: Schedule, rel_spacing: float = 0.02,
                rel_floor: float = 1e-12, max_cells_per_segment: int = 100_000,
                extra=None, profile: InitialProfile | None = None) -> np.ndarray:
    """Grid on [0,1] refined after each schedule breakpoint.

    Cell widths grow like rel_spacing * (effective age), where age is the
    distance past the segment start offset by sigma(start)/(1+beta) -- the
    scale on which the coefficients of the level equations vary.  At a
    start where sigma vanishes the age is zero and the grading bottoms out
    at rel_floor * segment length, resolving the power behavior at t=0;
    at interior breakpoints sigma is positive and the solution is smooth,
    so no sub-scale cells are produced there (slopes measured on cells far
    below the value round-off scale would be pure noise).
    """
    pts = [np.asarray([] if extra is None else extra, dtype=float)]
    brks = schedule.breakpoints
    for a, b in zip(brks[:-1], brks[1:]):
        length = b - a
        if profile is None:
            age0 = 0.0
        else:
            beta_a = float(schedule.beta_at(np.asarray([a]))[0])
            age0 = float(sigma(schedule, profile, np.asarray([a]))[0]) / (1.0 + beta_a)
        nodes = [a]
        t = a + max(rel_spacing * age0, rel_floor * length)
        count = 0
        while t < b and count < max_cells_per_segment:
            nodes.append(t)
            t += max(rel_spacing * (t - a + age0), rel_floor * length)
            count += 1
        nodes.append(b)
        pts.append(np.asarray(nodes))
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= 0.0) & (grid <= 1.0)]


class _Kernel:
    """Per-cell quadrature data for one schedule segment's cells.

    For each cell [x,y] and each Gauss node s inside it, stores
    W1 = int (1-p)/sigma and W2 = int (1-p)*beta/sigma over [s,y] and
    over [x,y], so that M_i = exp(-(i*W1 + W2)) for every level i.
    """

    def __init__(self, schedule, profile, seg, lo, hi):
        self.x = lo  # cell left ends, shape (K,)
        self.y = hi
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        self.nodes = mid[:, None] + half[:, None] * _GL_X[None, :]  # (K,15)
        self.weights = half[:, None] * _GL_W[None, :]
        flat = self.nodes.ravel()
        self.p_nodes = schedule.p_at(flat).reshape(self.nodes.shape)
        self.beta_nodes = schedule.beta_at(flat).reshape(self.nodes.shape)
        self.sigma_nodes = sigma(schedule, profile, flat).reshape(self.nodes.shape)

        if seg.is_constant:
            p = float(seg.p_coeffs[0])
            beta = float(seg.beta_coeffs[0])
            sig = lambda t: (1.0 + beta) * t + profile.c_weighted + profile.c_total * beta
            base = (1.0 - p) / (1.0 + beta)
            sx, sy = sig(lo), sig(hi)
            # log(sy/sx) = log1p((1+beta)(y-x)/sx) avoids cancellation on
            # narrow cells where sy/sx is within a few ulps of 1
            with np.errstate(divide="ignore"):
                w1_cell = np.where(
                    sx > 0.0,
                    base * np.log1p((1.0 + beta) * (hi - lo) / np.where(sx > 0, sx, 1.0)),
                    np.inf)
            self.W1_cell = w1_cell
            self.W2_cell = beta * w1_cell
            # y - s at the Gauss nodes, exactly half*(1 - x_q)
            y_minus_s = half[:, None] * (1.0 - _GL_X[None, :])
            w1_nodes = base * np.log1p((1.0 + beta) * y_minus_s / sig(self.nodes))
            self.W1_nodes = w1_nodes
            self.W2_nodes = beta * w1_nodes
        else:
            # polynomial coefficients: integrate (1-p)/sigma numerically on
            # [s, y] for each node s (sub-rule per node), and on [x, y]
            w = (1.0 - self.p_nodes) / self.sigma_nodes
            bw = self.beta_nodes * w
            self.W1_cell = (self.weights * w).sum(axis=1)
            self.W2_cell = (self.weights * bw).sum(axis=1)
            K = lo.size
            W1n = np.empty((K, 15))
            W2n = np.empty((K, 15))
            for q in range(15):
                s = self.nodes[:, q]
                h2 = 0.5 * (hi - s)
                m2 = 0.5 * (hi + s)
                sub = m2[:, None] + h2[:, None] * _GL_X[None, :]
                wsub = h2[:, None] * _GL_W[None, :]
                pflat = schedule.p_at(sub.ravel()).reshape(sub.shape)
                bflat = schedule.beta_at(sub.ravel()).reshape(sub.shape)
                sflat = sigma(schedule, profile, sub.ravel()).reshape(sub.shape)
                integ = (1.0 - pflat) / sflat
                W1n[:, q] = (wsub * integ).sum(axis=1)
                W2n[:, q] = (wsub * integ * bflat).sum(axis=1)
            self.W1_nodes = W1n
            self.W2_nodes = W2n

    def decay(self, level: int):
        """(M over full cells, M from each node to the cell end)."""
        with np.errstate(over="ignore", invalid="ignore"):
            e_cell = level * self.W1_cell + self.W2_cell
            # 0 * inf from the sigma(0) = 0 cell: the kernel still vanishes
            e_cell = np.where(np.isnan(e_cell), np.inf, e_cell)
            m_cell = np.exp(-e_cell)
            m_nodes = np.exp(-(level * self.W1_nodes + self.W2_nodes))
        return m_cell, m_nodes


def _singular_first_cell(level, h, p, beta, prev_interp):
    """First-cell source integral when sigma(0) = 0.

    The kernel (sigma(s)/sigma(h))**kappa has a fractional-power
    singularity at s = 0 that defeats the plain Gauss rule, so integrate
    in u = (s/h)**(kappa+1) where the kernel contributes only the factor
    1/(kappa+1) and the remaining coefficient is smooth.
    """
    kappa = (1.0 - p) * (level + beta) / (1.0 + beta)
    if level == 0:
        return (1.0 - p) * h / (kappa + 1.0)
    u = 0.5 + 0.5 * _GL_X
    s = h * u ** (1.0 / (kappa + 1.0))
    sig = (1.0 + beta) * s
    z = prev_interp(s)
    if level == 1:
        g = p + (1.0 - p) * beta * z / sig
    else:
        g = (1.0 - p) * (level - 1 + beta) * z / sig
    return h / (kappa + 1.0) * float((0.5 * _GL_W * g).sum())


def _build_kernels(schedule, profile, grid):
    """Split the cell list by schedule segment and precompute kernels."""
    lo, hi = grid[:-1], grid[1:]
    mids = 0.5 * (lo + hi)
    seg_idx = schedule.segment_index(mids)
    kernels = []
    for k, seg in enumerate(schedule.segments):
        mask = seg_idx == k
        if np.any(mask):
            kernels.append((mask, _Kernel(schedule, profile, seg, lo[mask], hi[mask])))
    return kernels


def _segment_interps(fine, kernels, z):
    """One monotone cubic per schedule segment.

    The solution has slope kinks at the breakpoints; a single interpolant
    over the whole grid would leak them into the neighboring cells through
    the derivative estimates at the shared nodes.
    """
    out = []
    for mask, _ in kernels:
        idx = np.flatnonzero(mask)
        sub = slice(idx[0], idx[-1] + 2)
        out.append(PchipInterpolator(fine[sub], z[sub], extrapolate=True))
    return out


def _eval_on_nodes(kernels, interps, t_nodes):
    out = np.empty_like(t_nodes)
    for (mask, _), itp in zip(kernels, interps):
        out[mask] = itp(t_nodes[mask])
    return out


def solve_lln_closed(d: int, schedule: Schedule, profile: InitialProfile,
                     grid=None, rel_spacing: float = 0.02,
                     rel_floor: float = 1e-12) -> LLNSolution:
    """Evaluate the closed-form limit trajectory on a grid.

    Levels are computed in increasing i by propagating across cells of a
    graded grid; each level's values are cached on the full grid and fed
    to the next level through a monotone cubic interpolant.  If grid is
    given, it is merged into the computation grid and the solution is
    returned restricted to it.
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    requested = None if grid is None else np.asarray(grid, dtype=float)
    fine = graded_grid(schedule, rel_spacing=rel_spacing, rel_floor=rel_floor,
                       extra=requested, profile=profile)
    K = fine.size - 1
    kernels = _build_kernels(schedule, profile, fine)
    seg0 = schedule.segments[0]
    singular0 = (profile.c_total == 0.0 and profile.c_weighted == 0.0
                 and seg0.is_constant and fine[0] == 0.0)

    # per-node coefficient values, assembled in cell order
    t_nodes = np.empty((K, 15))
    p_nodes = np.empty((K, 15))
    beta_nodes = np.empty((K, 15))
    sigma_nodes = np.empty((K, 15))
    weights = np.empty((K, 15))
    for mask, ker in kernels:
        t_nodes[mask] = ker.nodes
        p_nodes[mask] = ker.p_nodes
        beta_nodes[mask] = ker.beta_nodes
        sigma_nodes[mask] = ker.sigma_nodes
        weights[mask] = ker.weights

    init = profile.truncated(d)
    values = np.empty((fine.size, d + 2))
    seg0_interp = None
    for i in range(d + 1):
        m_cell = np.empty(K)
        m_nodes = np.empty((K, 15))
        for mask, ker in kernels:
            mc, mn = ker.decay(i)
            m_cell[mask] = mc
            m_nodes[mask] = mn
        if i == 0:
            g = 1.0 - p_nodes
        else:
            interps = _segment_interps(fine, kernels, values[:, i - 1])
            seg0_interp = interps[0]
            zprev = _eval_on_nodes(kernels, interps, t_nodes)
            if i == 1:
                g = p_nodes + (1.0 - p_nodes) * beta_nodes * zprev / sigma_nodes
            else:
                g = (1.0 - p_nodes) * (i - 1 + beta_nodes) * zprev / sigma_nodes
        contrib = (weights * g * m_nodes).sum(axis=1)
        if singular0:
            contrib[0] = _singular_first_cell(
                i, fine[1], float(seg0.p_coeffs[0]), float(seg0.beta_coeffs[0]),
                seg0_interp)
        z = np.empty(fine.size)
        z[0] = init[i]
        for k in range(K):
            z[k + 1] = z[k] * m_cell[k] + contrib[k]
        values[:, i] = z

    # aggregate slot: plain integral of the flux through level d
    interps = _segment_interps(fine, kernels, values[:, d])
    zd = _eval_on_nodes(kernels, interps, t_nodes)
    flux = (1.0 - p_nodes) * (d + beta_nodes) * zd / sigma_nodes
    inc = (weights * flux).sum(axis=1)
    zbar = np.empty(fine.size)
    zbar[0] = init[d + 1]
    zbar[1:] = init[d + 1] + np.cumsum(inc)
    values[:, d + 1] = zbar

    sol = LLNSolution(d=d, grid=fine, values=values, method="closed-form")
    if requested is None:
        return sol
    pos = np.searchsorted(fine, requested)
    pos = np.clip(pos, 0, fine.size - 1)
    return LLNSolution(d=d, grid=requested, values=values[pos], method="closed-form")


def _rhs(t, y, schedule, profile, d):
    p = schedule.p_at(t)
    beta = schedule.beta_at(t)
    sig = sigma(schedule, profile, t)
    rates = (1.0 - p) * (np.arange(d + 1) + beta) * y[: d + 1] / sig
    dy = np.empty(d + 2)
    dy[0] = (1.0 - p) - rates[0]
    if d >= 1:
        dy[1] = p + rates[0] - rates[1]
        dy[2 : d + 1] = rates[1:d] - rates[2 : d + 1]
        dy[d + 1] = rates[d]
    else:
        dy[1] = rates[0]
    return dy


def _seed_values(d, schedule, profile, t0):
    """Solution values at a small t0 > 0 when sigma(0) = 0.

    sigma(0) = 0 forces an empty profile, and the first segment then admits
    the exactly-linear solution zeta_i = b_i t, so constant first segments
    are seeded in closed form; otherwise fall back to the cell solver.
    """
    seg = schedule.segments[0]
    if seg.is_constant:
        p0 = float(seg.p_coeffs[0])
        b0 = float(seg.beta_coeffs[0])
        b = b_sequence(EnvelopeParams(p0, p0, b0, b0, 0.0), d)
        y = np.empty(d + 2)
        y[: d + 1] = b * t0
        y[d + 1] = t0 * (1.0 - p0) * (d + b0) * b[d] / (1.0 + b0)
        return y
    coarse = solve_lln_closed(d, schedule, profile, grid=np.array([0.0, t0, 1.0]),
                              rel_spacing=0.05)
    return coarse.values[1]


def solve_lln_numeric(d: int, schedule: Schedule, profile: InitialProfile,
                      grid=None, rtol: float = 1e-10, atol: float = 1e-13,
                      t0: float = 1e-6) -> LLNSolution:
    """Integrate the limit ODE system with an adaptive Runge-Kutta scheme.

    Independent of the closed-form route: the right side is evaluated
    directly and the integrator restarts at every schedule breakpoint.
    When sigma(0) = 0 the system is singular at the origin; integration
    starts from t0 with the constant-coefficient seed.
    """
    if grid is None:
        grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, 201),
                                         schedule.breakpoints]))
    else:
        grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, d + 2))

    sig0 = float(sigma(schedule, profile, 0.0))
    if sig0 == 0.0:
        t_start = t0
        y = _seed_values(d, schedule, profile, t0)
        small = grid < t_start
        # below the seed point the trajectory is linear to leading order
        out[small] = np.outer(grid[small] / t_start, y)
    else:
        t_start = 0.0
        y = profile.truncated(d)
        small = grid < 0.0

    stops = [b for b in schedule.breakpoints if b > t_start] + [1.0]
    stops = np.unique(np.asarray(stops))
    left = t_start
    for right in stops:
        inside = (grid >= left) & (grid <= right) & ~small
        t_eval = np.unique(np.concatenate([grid[inside], [left, right]]))
        res = solve_ivp(_rhs, (left, right), y, method="RK45",
                        t_eval=t_eval, rtol=rtol, atol=atol,
                        args=(schedule, profile, d))
        if not res.success:
            raise RuntimeError(f"integration failed on [{left}, {right}]: {res.message}")
        sel = np.searchsorted(res.t, grid[inside])
        out[inside] = res.y[:, sel].T
        y = res.y[:, -1]
        left = right
    return LLNSolution(d=d, grid=grid, values=out, method="numeric")


# ---------------------------------------------------------------------------
# constant-coefficient comparison family

@dataclass(frozen=True)
class EnvelopeParams:
    """Parameters (o1..o5) of the constant-coefficient comparison system

        chi_i' = o1*[i=1] + (1-o2)*( (i-1+o3)*chi_{i-1} - (i+o3)*chi_i )
                             / ( (1+o4)*(t+o5) ),   i >= 0,

    with the i=0 source equal to 1-o1 and no inflow term.
    """

    o1: float
    o2: float
    o3: float
    o4: float
    o5: float

    def __post_init__(self):
        if not (0.0 <= self.o1 < 1.0):
            raise ValueError("o1 must lie in [0, 1)")
        if not (0.0 <= self.o2 < 1.0):
            raise ValueError("o2 must lie in [0, 1)")
        if self.o3 <= 0.0 or self.o4 <= 0.0:
            raise ValueError("o3 and o4 must be positive")
        if self.o5 < 0.0:
            raise ValueError("o5 must be nonnegative")

    @property
    def drift_ratio(self) -> float:
        return (1.0 - self.o2) / (1.0 + self.o4)

    @property
    def tail_exponent(self) -> float:
        """1 + (1+o4)/(1-o2): decay exponent of the density k^(-that)."""
        return 1.0 + (1.0 + self.o4) / (1.0 - self.o2)


def b_sequence(params: EnvelopeParams, d: int) -> np.ndarray:
    """Slopes b_i of the linear particular solution chi_i = b_i (t+o5)."""
    q = params.drift_ratio
    o1, o3 = params.o1, params.o3
    b = np.empty(d + 1)
    b[0] = (1.0 - o1) / (1.0 + q * o3)
    if d >= 1:
        b[1] = (o1 + q * o3 * b[0]) / (1.0 + q * (1.0 + o3))
    for i in range(2, d + 1):
        b[i] = b[i - 1] * q * (i - 1 + o3) / (1.0 + q * (i + o3))
    return b


def b_sequence_gamma(params: EnvelopeParams, d: int) -> np.ndarray:
    """Same as b_sequence, via the Gamma-ratio closed form (for i >= 1)."""
    b = b_sequence(params, min(d, 1))
    if d < 2:
        return b[: d + 1]
    o3 = params.o3
    w = 1.0 / params.drift_ratio
    i = np.arange(1, d + 1, dtype=float)
    logs = (gammaln(2.0 + o3 + w) - gammaln(1.0 + o3)
            + gammaln(i + o3) - gammaln(i + 1.0 + o3 + w))
    out = np.empty(d + 1)
    out[0] = b[0]
    out[1:] = b[1] * np.exp(logs)
    return out


@dataclass(frozen=True)
class ChiSolution:
    params: EnvelopeParams
    d: int
    grid: np.ndarray
    values: np.ndarray          # (K, d+1)
    b: np.ndarray               # linear slopes
    a: np.ndarray               # transient coefficients, lower triangular
    exponents: np.ndarray       # e_l, decay exponents of the transients

    def derivative(self) -> np.ndarray:
        t5 = self.grid + self.params.o5
        if self.params.o5 == 0.0:
            return np.tile(self.b, (self.grid.size, 1))
        ratio = self.params.o5 / t5
        pw = ratio[:, None] ** self.exponents[None, :]
        dpw = -pw * self.exponents[None, :] / t5[:, None]
        return self.b[None, :] + dpw @ self.a.T

    def residual(self) -> float:
        """max | chi' - RHS | over grid points with t + o5 > 0."""
        q = self.params.drift_ratio
        o1, o3, o5 = self.params.o1, self.params.o3, self.params.o5
        t5 = self.grid + o5
        ok = t5 > 0.0
        der = self.derivative()[ok]
        vals = self.values[ok]
        t5 = t5[ok]
        i = np.arange(self.d + 1, dtype=float)
        inflow = np.zeros((t5.size, self.d + 1))
        inflow[:, 0] = 1.0 - o1
        if self.d >= 1:
            inflow[:, 1] = o1 + q * o3 * vals[:, 0] / t5
            if self.d >= 2:
                inflow[:, 2:] = q * (i[1:-1] + o3)[None, :] * vals[:, 1:-1] / t5[:, None]
        drain = q * (i + o3)[None, :] * vals / t5[:, None]
        return float(np.abs(der - inflow + drain).max())


def constant_coefficient_solution(params: EnvelopeParams, profile: InitialProfile,
                                  grid, d: int) -> ChiSolution:
    """Exact solution of the comparison system from the given initial masses.

    chi_i(t) = b_i (t+o5) + sum_{l<=i} a_{i,l} (o5/(t+o5))^{e_l},
    e_l = (1-o2)(l+o3)/(1+o4).  With o5 = 0 the transients are
    identically zero for t > 0 and the initial masses must vanish.
    """
    grid = np.asarray(grid, dtype=float)
    b = b_sequence(params, d)
    q = params.drift_ratio
    o3, o5 = params.o3, params.o5
    c = profile.truncated(d)[: d + 1]
    exponents = q * (np.arange(d + 1) + o3)
    a = np.zeros((d + 1, d + 1))
    if o5 == 0.0:
        if profile.c_total != 0.0 or profile.c_weighted != 0.0:
            raise ValueError("o5 = 0 requires an empty initial profile")
        values = np.outer(grid + o5, b)
        return ChiSolution(params, d, grid, values, b, a, exponents)
    for i in range(d + 1):
        for l in range(i):
            a[i, l] = a[i - 1, l] * (i - 1 + o3) / (i - l)
        a[i, i] = c[i] - b[i] * o5 - a[i, :i].sum()
    ratio = o5 / (grid + o5)
    pw = ratio[:, None] ** exponents[None, :]
    values = np.outer(grid + o5, b) + pw @ a.T
    return ChiSolution(params, d, grid, values, b, a, exponents)


@dataclass(frozen=True)
class Envelopes:
    upper: ChiSolution          # bounds partial sums of zeta from above
    lower: ChiSolution          # bounds partial sums of zeta from below
    eta: np.ndarray             # upper linear slopes
    eta_prime: np.ndarray       # lower linear slopes
    upper_tail_exponent: float  # density decay of the upper comparison law
    lower_tail_exponent: float


def power_law_envelopes(schedule: Schedule, profile: InitialProfile,
                        grid, d: int) -> Envelopes:
    """Constant-coefficient envelopes for a bounded time-varying schedule.

    The upper system slows the drain (smallest p, largest offset) and the
    lower system speeds it up, so their partial sums bracket those of the
    true trajectory.
    """
    up = EnvelopeParams(schedule.p_min, schedule.p_max,
                        schedule.beta_min, schedule.beta_max,
                        max(profile.c_weighted, profile.c_total))
    low = EnvelopeParams(schedule.p_max, schedule.p_min,
                         schedule.beta_max, schedule.beta_min,
                         min(profile.c_weighted, profile.c_total))
    chi_up = constant_coefficient_solution(up, profile, grid, d)
    chi_low = constant_coefficient_solution(low, profile, grid, d)
    return Envelopes(
        upper=chi_up, lower=chi_low,
        eta=chi_up.b, eta_prime=chi_low.b,
        upper_tail_exponent=up.tail_exponent,
        lower_tail_exponent=low.tail_exponent,
    )


# ---------------------------------------------------------------------------
# reference target laws on urn sizes

@dataclass(frozen=True)
class ReferenceLaw:
    """Probability law q on per-urn weights k = 1, 2, ...; values[k-1] = q(k).

    A weight counts the balls in the urn plus the unit the urn itself
    carries, so the shifted array gamma_i = q(i+1), i >= 0, is the target
    occupancy profile (fraction of urns holding i balls): gamma has total
    mass 1, and the visible ball mass sum_i i*gamma_i equals mean(q) - 1,
    which is the full unit supply exactly when q has mean 2.
    """

    kind: str
    params: dict
    values: np.ndarray
    tail_mass: float
    tail_mean: float

    def total(self) -> float:
        return float(math.fsum(self.values) + self.tail_mass)

    def mean(self) -> float:
        k = np.arange(1, self.values.size + 1)
        return float(math.fsum(k * self.values) + self.tail_mean)

    def gamma(self) -> np.ndarray:
        return self.values


def geometric_law(num_terms: int = 200) -> ReferenceLaw:
    k = np.arange(1, num_terms + 1)
    q = 0.5 ** k
    # exact geometric tails: sum_{k>K} q = 2^-K, sum_{k>K} k q = (K+2) 2^-K
    tail = 0.5 ** num_terms
    return ReferenceLaw("geometric", {}, q, tail, (num_terms + 2) * tail)


def star_law() -> ReferenceLaw:
    """One urn swallows the whole ball supply: every surviving fraction is
    an empty urn (gamma = (1, 0, ...)), and the unit ball mass condenses
    beyond all finite levels."""
    return ReferenceLaw("star", {}, np.array([1.0]), 0.0, 0.0)


def dirac_law(k: int) -> ReferenceLaw:
    """Point mass on per-urn weight k, i.e. k - 1 balls in every urn
    (k = 2 is the all-singletons road; k = 1 coincides with star_law)."""
    if k < 1:
        raise ValueError("weight must be at least 1")
    q = np.zeros(k)
    q[k - 1] = 1.0
    return ReferenceLaw("dirac", {"k": k}, q, 0.0, 0.0)


def _stretched_partial(mu: float, r: float, tol: float, max_terms: int):
    """Products prod_{j<=k} (1+mu/j^r)^(-1) until they are negligible."""
    prods = []
    term = 1.0
    for k in range(1, max_terms + 1):
        term /= 1.0 + mu / k ** r
        prods.append(term)
        if term * k * k < tol:
            break
    return np.asarray(prods)


def stretched_exponential(r: float, tol: float = 1e-12,
                          max_terms: int = 2_000_000) -> ReferenceLaw:
    """Size law q(k) = (mu / k^r) prod_{j<=k} (1+mu/j^r)^(-1), r in (0,1).

    mu is calibrated so the law is normalized (equivalently, has mean 2):
    the normalization sum is strictly decreasing in mu, so bisection
    applies after doubling out an upper bracket.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("r must lie in (0, 1)")

    def exceeds_one(mu):
        # early exit: the partial sums are increasing, so crossing 1 decides
        term, acc = 1.0, 0.0
        for k in range(1, max_terms + 1):
            term /= 1.0 + mu / k ** r
            acc += term
            if acc > 1.0:
                return True
            if term * k * k < tol * 1e-3:
                return False
        raise RuntimeError(
            f"size-law series did not converge within {max_terms} terms; "
            "r this close to 1 needs a larger max_terms")

    lo, hi = 0.0, 1.0          # normalization decreases in mu; sum(0+) = inf
    while exceeds_one(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise RuntimeError("failed to bracket the normalizing constant")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if exceeds_one(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, lo):
            break
    mu = 0.5 * (lo + hi)
    prods = _stretched_partial(mu, r, tol * 1e-3, max_terms)
    k = np.arange(1, prods.size + 1)
    q = (mu / k ** r) * prods
    # remaining mass/mean, extrapolated from the last product ratio
    ratio = prods[-1] / prods[-2]
    tail = q[-1] * ratio / (1.0 - ratio)
    tail_mean = q[-1] * ratio * (k[-1] / (1.0 - ratio) + 1.0 / (1.0 - ratio) ** 2)
    return ReferenceLaw("stretched", {"r": r, "mu": mu}, q, tail, tail_mean)
