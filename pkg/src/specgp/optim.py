"""Derivative-free minimization and PSD peak finding.

Powell's direction-set method with a bounded golden-section/parabolic line
search.  The frequency search is one-dimensional, where the method
degenerates to repeated line minimization; the n-dimensional direction
bookkeeping is kept for generality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonFiniteObjectiveError, UsageError

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


def _brent_bounded(f, lo: float, hi: float, xatol: float, max_iter: int = 200):
    """Minimize f on [lo, hi] by golden section with parabolic steps."""
    a, b = lo, hi
    x = w = v = a + _GOLDEN * (b - a)
    fx = fw = fv = f(x)
    d = e = 0.0
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tol1 = xatol + np.finfo(float).eps * abs(x)
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        take_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev, e = e, d
            if abs(p) < abs(0.5 * q * e_prev) and p > q * (a - x) and p < q * (b - x):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if x < m else -tol1
                take_golden = False
        if take_golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLDEN * e
        u = x + d if abs(d) >= tol1 else x + (tol1 if d > 0.0 else -tol1)
        fu = f(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


@dataclass
class PowellState:
    """Search state: current point, direction set and progress counters."""

    point: np.ndarray
    directions: np.ndarray
    best_value: float
    iterations: int = 0
    fevals: int = 0
    tol: float = 1e-8


@dataclass(frozen=True)
class PowellResult:
    x: np.ndarray
    value: float
    iterations: int
    fevals: int
    converged: bool
    state: PowellState = field(repr=False, default=None)


def powell_minimize(objective, x0, bounds, tol: float = 1e-8, max_iter: int = 100, seed=None) -> PowellResult:
    """Minimize within a box by Powell's method; never worse than the start.

    Stops when a full cycle over the direction set improves the value by
    less than ``tol`` (also the spatial tolerance of each line search) or
    after ``max_iter`` cycles.  A non-finite objective value raises
    :class:`NonFiniteObjectiveError` carrying the offending point.  The
    procedure is deterministic; ``seed`` is accepted for interface
    uniformity with the stochastic routines.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = x.size
    lo = np.asarray([b[0] for b in bounds], dtype=float)
    hi = np.asarray([b[1] for b in bounds], dtype=float)
    if lo.size != n or hi.size != n:
        raise UsageError(f"need one (lo, hi) bound per coordinate ({n}), got {lo.size}")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
        raise UsageError("bounds must be finite with lo < hi")
    if np.any(x < lo) or np.any(x > hi):
        raise UsageError(f"start {x} is outside the bounds")

    state = PowellState(point=x, directions=np.eye(n), best_value=math.inf, tol=tol)

    def f(point):
        state.fevals += 1
        val = float(objective(point if n > 1 else point.copy()))
        if not math.isfinite(val):
            raise NonFiniteObjectiveError(np.array(point), val)
        return val

    fx = f(x)
    state.best_value = fx

    def line_min(point, fval, direction):
        # parameter interval keeping point + t*direction inside the box
        t_lo, t_hi = -math.inf, math.inf
        for k in range(n):
            d = direction[k]
            if d == 0.0:
                continue
            t1 = (lo[k] - point[k]) / d
            t2 = (hi[k] - point[k]) / d
            t_lo = max(t_lo, min(t1, t2))
            t_hi = min(t_hi, max(t1, t2))
        if not (t_lo < t_hi):
            return point, fval
        scale = float(np.linalg.norm(direction)) or 1.0
        t_star, f_star = _brent_bounded(lambda t: f(point + t * direction), t_lo, t_hi, xatol=tol / scale)
        if f_star <= fval:
            new_point = np.clip(point + t_star * direction, lo, hi)
            return new_point, f_star
        return point, fval

    converged = False
    for cycle in range(1, max_iter + 1):
        state.iterations = cycle
        f_cycle_start, x_cycle_start = fx, x.copy()
        biggest_drop, drop_idx = 0.0, 0
        for i in range(n):
            x_new, f_new = line_min(x, fx, state.directions[i])
            if fx - f_new > biggest_drop:
                biggest_drop, drop_idx = fx - f_new, i
            x, fx = x_new, f_new
        if n > 1:
            new_dir = x - x_cycle_start
            norm = float(np.linalg.norm(new_dir))
            if norm > 0.0:
                state.directions[drop_idx] = state.directions[n - 1]
                state.directions[n - 1] = new_dir / norm
                if abs(np.linalg.det(state.directions)) < 1e-10:
                    state.directions = np.eye(n)
        state.point, state.best_value = x, fx
        if f_cycle_start - fx < tol:
            converged = True
            break
    return PowellResult(x=x, value=fx, iterations=state.iterations, fevals=state.fevals,
                        converged=converged, state=state)


def find_psd_peaks(post, freq_range, n_starts: int = 8, tol: float = 1e-8, seed=None,
                   coarse_size: int = 512, max_iter: int = 100):
    """Locate maxima of the posterior-mean PSD inside ``freq_range``.

    Seeds Powell at the ``n_starts`` best values of a coarse grid, minimizes
    the negated PSD mean from each, merges results that landed within
    10*tol of each other, and returns (frequency, psd) pairs ranked by PSD.
    """
    lo, hi = float(freq_range[0]), float(freq_range[1])
    if not (lo < hi):
        raise UsageError(f"freq_range must satisfy lo < hi, got ({lo}, {hi})")
    if n_starts < 1:
        raise UsageError("n_starts must be >= 1")
    grid = np.linspace(lo, hi, coarse_size)
    values = np.asarray(post.psd_mean(grid), dtype=float)
    seeds = grid[np.argsort(values)[::-1][:n_starts]]

    def objective(v):
        return -float(post.psd_mean(np.atleast_1d(v))[0])

    found = []
    for s in seeds:
        res = powell_minimize(objective, [s], [(lo, hi)], tol=tol, max_iter=max_iter, seed=seed)
        found.append((float(res.x[0]), -res.value))
    found.sort(key=lambda fp: fp[1], reverse=True)
    merged: list[tuple[float, float]] = []
    for freq, val in found:
        if all(abs(freq - kept) > 10.0 * tol for kept, _ in merged):
            merged.append((freq, val))
    return merged


def peaks_csv(peaks) -> str:
    """Serialize a ranked peak list as ``rank,freq,psd_mean`` lines."""
    lines = ["rank,freq,psd_mean"]
    for rank, (freq, val) in enumerate(peaks, start=1):
        lines.append(f"{rank},{freq!r},{val!r}")
    return "\n".join(lines) + "\n"
