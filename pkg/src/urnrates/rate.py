"""Deviation-rate functionals on truncated occupancy paths.

The cost of holding the scaled trajectory at phi with slope v at time t is

    L(t, phi, v) = min KL(nu | u(t, phi))  over laws nu on the d+2
                   one-step increments whose mean is v,

which is attained at nu0 with nu0_i = 1 - [v]_i for i <= d (partial sums
of the slope) and the complement on the aggregate slot; u is the natural
transition law of the scheme along the path.  The path functional
integrates L over [0,1] with an adaptive Gauss-Kronrod rule, and the
untruncated functional is the increasing limit of the truncated values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lln import ReferenceLaw
from .model import InitialProfile, Path, Schedule, entropy_term, entropy_terms, sigma

# 15-point Kronrod extension of 7-point Gauss on [-1,1] (nodes symmetric;
# the embedded Gauss rule sits at the odd positions)
_XK_HALF = np.array([
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993945, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0,
])
_WK_HALF = np.array([
    0.02293532201052922, 0.06309209262997855, 0.10479001032225018,
    0.14065325971552591, 0.16900472663926790, 0.19035057806478540,
    0.20443294007529889, 0.20948214108472782,
])
_WG_HALF = np.array([
    0.12948496616886969, 0.27970539148927666, 0.38183005050511894,
    0.41795918367346938,
])

_XK = np.concatenate([-_XK_HALF[:-1], _XK_HALF[::-1]])          # ascending
_WK = np.concatenate([_WK_HALF[:-1], _WK_HALF[::-1]])
_GAUSS_IDX = np.arange(1, 15, 2)
_WG = np.concatenate([_WG_HALF[:-1], _WG_HALF[::-1]])           # 7 weights


def relative_entropy(w, u, tol: float = 1e-12) -> float:
    """KL divergence sum_k w_k log(w_k/u_k) between laws on the increments."""
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    if w.shape != u.shape:
        raise ValueError("w and u must have the same length")
    if np.any(w < -tol) or np.any(u < -tol):
        raise ValueError("negative probability")
    if abs(math.fsum(w) - 1.0) > tol or abs(math.fsum(u) - 1.0) > tol:
        raise ValueError("inputs must be normalized probability vectors")
    return float(sum(entropy_term(max(x, 0.0), max(y, 0.0)) for x, y in zip(w, u)))


def minimizer_nu0(slope, tol: float = 1e-9) -> np.ndarray:
    """The cost-minimizing increment law with mean equal to the given slope.

    Requires an admissible slope: nonnegative, summing to 1, partial sums
    at most 1, and total escape sum_{i<=d}(1-[v]_i) at most 1.
    """
    v = np.asarray(slope, dtype=float)
    d = v.size - 2
    if d < 0:
        raise ValueError("slope needs at least 2 components")
    partial = np.cumsum(v)[: d + 1]
    w = np.empty(d + 2)
    w[: d + 1] = 1.0 - partial
    w[d + 1] = partial.sum() - d
    if abs(v.sum() - 1.0) > tol:
        raise ValueError(f"slope components must sum to 1 (got {v.sum()})")
    if np.any(w < -tol):
        raise ValueError("inadmissible slope: some increment weight is negative")
    return np.clip(w, 0.0, None)


def _slope_law(slope, sum_tol: float = 1e-6):
    """nu0 for a numerically admissible slope, or None.

    Interpolated limit trajectories carry slope-sum noise at the
    quadrature scale; rows within sum_tol of total 1 are renormalized
    before the strict admissibility checks, anything further off (or any
    other constraint violation) reports None and the caller charges +inf.
    """
    row = np.asarray(slope, dtype=float)
    s = float(row.sum())
    if not math.isfinite(s) or abs(s - 1.0) > sum_tol:
        return None
    try:
        return minimizer_nu0(row / s)
    except ValueError:
        return None


def natural_law(t, phi, schedule: Schedule, profile: InitialProfile) -> np.ndarray:
    """Transition law u(t, phi) on the d+2 increments at a single time.

    At sigma = 0 (only the initial instant of an empty configuration) the
    law degenerates to p on the new-urn move and 1-p on the aggregate slot.
    """
    phi = np.asarray(phi, dtype=float)
    d = phi.size - 2
    p = float(schedule.p_at(t))
    beta = float(schedule.beta_at(t))
    sig = float(sigma(schedule, profile, t))
    u = np.zeros(d + 2)
    if sig == 0.0:
        u[0] = p
        u[d + 1] = 1.0 - p
        return u
    u[0] = p + (1.0 - p) * beta * max(phi[0], 0.0) / sig
    i = np.arange(1, d + 1)
    u[1 : d + 1] = (1.0 - p) * (i + beta) * np.clip(phi[1 : d + 1], 0.0, None) / sig
    u[d + 1] = max(1.0 - u[: d + 1].sum(), 0.0)
    return u


def local_cost(t, phi, slope, schedule: Schedule, profile: InitialProfile) -> float:
    """L(t, phi, slope); +inf for inadmissible slopes or unreachable moves."""
    try:
        w = minimizer_nu0(slope)
    except ValueError:
        return math.inf
    u = natural_law(t, phi, schedule, profile)
    return float(sum(entropy_term(x, y) for x, y in zip(w, u)))


def _cost_on_nodes(t, w_row, path, schedule, profile):
    """Vectorized local cost on node times t (any shape) with fixed nu0."""
    phi = path.at(t)
    p = schedule.p_at(t)
    beta = schedule.beta_at(t)
    sig = sigma(schedule, profile, t)
    d = path.d
    u = np.empty(t.shape + (d + 2,))
    u[..., 0] = p + (1.0 - p) * beta * np.clip(phi[..., 0], 0.0, None) / sig
    i = np.arange(1, d + 1)
    u[..., 1 : d + 1] = ((1.0 - p)[..., None] * (i + beta[..., None])
                         / sig[..., None]
                         * np.clip(phi[..., 1 : d + 1], 0.0, None))
    u[..., d + 1] = np.clip(1.0 - u[..., : d + 1].sum(axis=-1), 0.0, None)
    return entropy_terms(w_row, u).sum(axis=-1)


@dataclass
class RateReport:
    value: float
    error: float
    num_panels: int
    deepest: int
    diverged: bool
    floor_hits: int = 0


def path_rate_Id(path: Path, schedule: Schedule, profile: InitialProfile,
                 tol: float = 1e-10, max_depth: int = 48) -> RateReport:
    """Adaptive Gauss-Kronrod integral of the local cost along the path.

    Panels start as knot intervals split at schedule breakpoints (the
    integrand jumps there), each carrying its constant minimizing law; a
    panel whose nodes all cost +inf is declared divergent, and isolated
    endpoint singularities are bisected down to a width floor.
    """
    cuts = np.unique(np.concatenate([path.times, schedule.breakpoints]))
    cuts = cuts[(cuts >= path.times[0]) & (cuts <= path.times[-1])]
    slopes = path.slopes
    seg = np.clip(np.searchsorted(path.times, cuts[:-1], side="right") - 1,
                  0, slopes.shape[0] - 1)

    # precompute nu0 per knot interval; inadmissible slope => infinite rate
    w_rows = np.empty((slopes.shape[0], path.d + 2))
    for k in range(slopes.shape[0]):
        w = _slope_law(slopes[k])
        if w is None:
            return RateReport(math.inf, math.inf, cuts.size - 1, 0, True)
        w_rows[k] = w

    span = float(cuts[-1] - cuts[0])
    floor = 1e-14 * span
    total = 0.0
    err_total = 0.0
    diverged = False
    floor_hits = 0
    deepest = 0
    num_done = 0
    stack = [(float(a), float(b), int(s), 0)
             for a, b, s in zip(cuts[:-1], cuts[1:], seg) if b > a]

    while stack:
        batch = [stack.pop() for _ in range(min(len(stack), 256))]
        a = np.array([e[0] for e in batch])
        b = np.array([e[1] for e in batch])
        ks = np.array([e[2] for e in batch])
        depth = np.array([e[3] for e in batch])
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _XK[None, :]
        f = _cost_on_nodes(nodes, w_rows[ks][:, None, :], path, schedule, profile)
        finite = np.isfinite(f)
        vk = np.where(finite.all(axis=1),
                      half * (f * _WK[None, :]).sum(axis=1), math.inf)
        vg = half * (np.where(finite, f, 0.0)[:, _GAUSS_IDX] * _WG[None, :]).sum(axis=1)
        err = np.abs(vk - vg)

        for j in range(len(batch)):
            deepest = max(deepest, int(depth[j]))
            width = b[j] - a[j]
            if not finite[j].any():
                # structurally impossible move on the whole panel
                return RateReport(math.inf, math.inf, num_done + len(stack) + 1,
                                  deepest, True)
            all_finite = bool(finite[j].all())
            if all_finite and err[j] <= tol * max(width / span, 1e-6):
                total += vk[j]
                err_total += err[j]
                num_done += 1
            elif width <= floor or depth[j] >= max_depth:
                # sliver around an isolated singular point: keep the finite
                # part, count the remainder as unresolved
                floor_hits += 1
                if all_finite:
                    total += vk[j]
                    err_total += err[j]
                num_done += 1
            else:
                m = 0.5 * (a[j] + b[j])
                stack.append((a[j], m, int(ks[j]), int(depth[j]) + 1))
                stack.append((m, b[j], int(ks[j]), int(depth[j]) + 1))

    return RateReport(total, err_total, num_done, deepest, diverged, floor_hits)


def project_path(path: Path, d: int) -> Path:
    """Fold levels above d into the aggregate slot (counts are additive)."""
    if d > path.d:
        raise ValueError(f"cannot project a depth-{path.d} path up to {d}")
    vals = np.empty((path.times.size, d + 2))
    vals[:, : d + 1] = path.values[:, : d + 1]
    vals[:, d + 1] = path.values[:, d + 1 :].sum(axis=1)
    return Path.from_knots(path.times, vals)


def _gamma_profile(law):
    """Occupancy fractions gamma_i (urns holding i balls) of a target.

    A ReferenceLaw q on per-urn weights shifts down one slot, gamma_i =
    q(i+1), with its analytic tail kept separate; a plain nonnegative
    sequence is gamma itself.  Returns (gamma, tail_count, ball_mass)
    with ball_mass = sum_i i*gamma_i including the tail.  Rejects inputs
    that are not occupancy profiles or that carry more than the unit
    ball supply (the law objects get extra slack for their extrapolated
    tails).
    """
    if isinstance(law, ReferenceLaw):
        gamma = np.asarray(law.values, dtype=float)
        tail_count = float(law.tail_mass)
        total = law.total()
        ball_mass = law.mean() - total
        tol = 1e-4
    else:
        gamma = np.asarray(law, dtype=float)
        if gamma.ndim != 1 or gamma.size == 0:
            raise ValueError("gamma must be a nonempty 1-d sequence")
        tail_count = 0.0
        total = float(math.fsum(gamma))
        ball_mass = float(np.arange(gamma.size) @ gamma)
        tol = 1e-9
    if np.any(gamma < 0.0):
        raise ValueError("gamma components must be nonnegative")
    if abs(total - 1.0) > tol:
        raise ValueError(f"gamma must sum to 1 (got {total})")
    if ball_mass > 1.0 + tol:
        raise ValueError(
            f"gamma carries ball mass {ball_mass} > 1, not reachable by one "
            "ball per step")
    return gamma, tail_count, min(ball_mass, 1.0)


def linear_target_path(law, d: int) -> Path:
    """Straight path t -> t*gamma from the empty state, truncated at d.

    Slots 0..d carry the occupancy fractions; the aggregate slot carries
    the count of urns beyond level d.  Ball mass beyond all levels (the
    condensed part) is invisible to the truncated coordinates and enters
    only through the functionals charging the aggregate slot.
    """
    gamma, tail_count, _ = _gamma_profile(law)
    x = np.zeros(d + 2)
    upto = min(d + 1, gamma.size)
    x[:upto] = gamma[:upto]
    x[d + 1] = float(gamma[upto:].sum()) + tail_count
    knots = np.array([0.0, 1.0])
    return Path.from_knots(knots, np.outer(knots, x))


@dataclass
class IinfReport:
    value: float
    trace: list                 # [(d, I_d)]
    converged: bool
    escape_mass: float
    condensation: float         # last-block integral at the final depth
    error: float


def _last_block_integral(path: Path, schedule, profile, tol) -> float:
    """Integral of the aggregate-slot entropy term along the path."""
    d = path.d
    total = 0.0
    cuts = np.unique(np.concatenate([path.times, schedule.breakpoints]))
    slopes = path.slopes
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        k = min(np.searchsorted(path.times, a, side="right") - 1,
                slopes.shape[0] - 1)
        w = _slope_law(slopes[k])
        if w is None:
            return math.inf
        half = 0.5 * (b - a)
        nodes = 0.5 * (b + a) + half * _XK
        phi = path.at(nodes)
        p = schedule.p_at(nodes)
        beta = schedule.beta_at(nodes)
        sig = sigma(schedule, profile, nodes)
        i = np.arange(1, d + 1)
        head = (p + (1.0 - p) * beta * np.clip(phi[:, 0], 0.0, None) / sig
                + ((1.0 - p)[:, None] * (i + beta[:, None])
                   * np.clip(phi[:, 1 : d + 1], 0.0, None)).sum(axis=1) / sig)
        u_last = np.clip(1.0 - head, 0.0, None)
        total += half * (_WK * entropy_terms(w[d + 1], u_last)).sum()
    return float(total)


def condensation_term(path: Path, schedule: Schedule, profile: InitialProfile,
                      tol: float = 1e-9) -> float:
    """Cost carried by the aggregate slot alone (the condensation charge)."""
    return _last_block_integral(path, schedule, profile, tol)


def path_rate_Iinf(target, schedule: Schedule, profile: InitialProfile,
                   tol: float = 1e-6, d_min: int = 4, d_max: int = 256,
                   quad_tol: float = None) -> IinfReport:
    """Untruncated deviation rate as the increasing limit of truncated ones.

    target is either a ReferenceLaw (evaluated along its straight path) or
    a callable d -> Path producing compatible truncations.  The trace
    I_{d_min}, I_{d_min+1}, ... is monotone up to quadrature error; it is
    declared converged once three consecutive increments fall below tol
    and the weight escaping all finite levels is either below tol or its
    condensation cost has stabilized.
    """
    if quad_tol is None:
        quad_tol = min(1e-9, 0.01 * tol)
    if callable(target):
        escape = -1.0           # unknown; rely on condensation stabilizing
        make = target
    else:
        _, _, ball_mass = _gamma_profile(target)
        escape = min(1.0, max(0.0, 1.0 - ball_mass))
        make = lambda d: linear_target_path(target, d)

    trace = []
    cond_hist = []
    err_acc = 0.0
    small_steps = 0
    cond_steps = 0
    for d in range(d_min, d_max + 1):
        path = make(d)
        rep = path_rate_Id(path, schedule, profile, tol=quad_tol)
        err_acc = max(err_acc, rep.error)
        trace.append((d, rep.value))
        if math.isinf(rep.value):
            return IinfReport(math.inf, trace, True, escape, math.inf, 0.0)
        cond = _last_block_integral(path, schedule, profile, quad_tol)
        cond_hist.append(cond)
        if len(trace) >= 2:
            inc = trace[-1][1] - trace[-2][1]
            small_steps = small_steps + 1 if abs(inc) < tol else 0
            dc = cond_hist[-1] - cond_hist[-2]
            cond_steps = cond_steps + 1 if abs(dc) < tol else 0
            escaped_small = 0.0 <= escape < tol or cond >= 0 and cond_steps >= 3
            if small_steps >= 3 and escaped_small:
                return IinfReport(trace[-1][1], trace, True, escape, cond, err_acc)
    return IinfReport(trace[-1][1], trace, False, escape, cond_hist[-1], err_acc)


@dataclass
class SeriesRate:
    value: float
    series_part: float
    condensation_part: float
    escape_mass: float
    truncation_error: float


def linear_path_rate_classical(law, p: float = 0.0,
                               beta: float = 1.0) -> SeriesRate:
    """Closed series for the rate of the straight path t -> t*gamma under
    a constant schedule started empty.

    Along a linear path both the minimizing law and the natural law are
    constant in time, so the cost integrates level by level to
        sum_{i>=0} h(1 - [gamma]_i, u_i) + escape * log((1+beta)/(1-p)),
    where [gamma]_i are the partial sums, u_0 = p + (1-p)beta gamma_0 /
    (1+beta), u_i = (1-p)(i+beta)gamma_i/(1+beta) for i >= 1, and escape
    = 1 - sum_i i*gamma_i is the ball mass condensing beyond all levels.
    """
    gamma, tail_count, ball_mass = _gamma_profile(law)
    escape = min(1.0, max(0.0, 1.0 - ball_mass))
    ratio = (1.0 - p) / (1.0 + beta)
    # 1 - [gamma]_i counts every urn above level i, tail included, since
    # the profile is normalized
    w = np.clip(1.0 - np.cumsum(gamma), 0.0, None)
    u0 = p + (1.0 - p) * beta * gamma[0] / (1.0 + beta)
    terms = [entropy_term(w[0], u0)]
    if gamma.size > 1:
        i = np.arange(1, gamma.size, dtype=float)
        terms.extend(entropy_terms(w[1:], ratio * (i + beta) * gamma[1:]))
    series = float(math.fsum(terms))
    cond = escape * math.log((1.0 + beta) / (1.0 - p)) if escape > 0.0 else 0.0
    # levels beyond the stored profile hold at most the last tail weight
    trunc = float(w[-1])
    return SeriesRate(series + cond, series, cond, escape, trunc)

