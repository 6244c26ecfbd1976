"""Action difference along unperturbed trajectories and its p0-derivatives.

The perturbation potential V is defined so that -eps*V'(r) is exactly the
extra kick force of the perturbed branch at first order in eps:

* ``cat_sawtooth`` (K -> K + eps):  V(r) = -[(r - pi)^2/2 - eta*cos r]
* ``sawtooth_poly``:                V(r) = -N_i (r - pi)^i

The kicked-map discretization of the action difference is a sum of V at the
pre-kick positions of the unperturbed orbit,

    dS(p0, r0; t) = eps * sum_{n=0}^{t-1} V(r_n),        dS(t=0) = 0,

which is the exact first-order phase difference between the two Floquet
branches (kick phase applied at the start of each period).  ``action_slope``
is the p0-derivative of dS/eps computed with the exact tangent map; finite
differences of the trajectory itself collapse after ~15 steps of
e^{lambda t} growth.

Positions enter V through (r - pi) with r in [0, 2pi), matching the branch
used by the quantum kick phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import TWO_PI, MapSpec, SAWTOOTH_POLY


class UnresolvedOscillations(RuntimeError):
    """Stationary-point count did not stabilize under one grid doubling."""


def potential(spec: MapSpec, r):
    if spec.family == SAWTOOTH_POLY:
        return -spec.poly_norm * (r - np.pi) ** spec.poly_i
    return -((r - np.pi) ** 2 / 2.0 - spec.eta * np.cos(r))


def potential_slope(spec: MapSpec, r):
    if spec.family == SAWTOOTH_POLY:
        i = spec.poly_i
        return -i * spec.poly_norm * (r - np.pi) ** (i - 1)
    return -((r - np.pi) + spec.eta * np.sin(r))


def potential_curvature(spec: MapSpec, r):
    if spec.family == SAWTOOTH_POLY:
        i = spec.poly_i
        return -i * (i - 1) * spec.poly_norm * (r - np.pi) ** (i - 2)
    return -(1.0 + spec.eta * np.cos(r)) * np.ones_like(np.asarray(r, dtype=float))


def _force_curvature(spec: MapSpec, r):
    # second r-derivative of the unperturbed kick force
    if spec.family == SAWTOOTH_POLY:
        return np.zeros_like(r)
    return -spec.K * spec.eta * np.sin(r)


def trajectory_sums(spec: MapSpec, r0, p0, t: int, curvature: bool = False):
    """Accumulate dS/eps, its p0-slope, and optionally the slope's own
    p0-derivative along unperturbed trajectories.

    ``r0`` and ``p0`` broadcast against each other; outputs share the
    broadcast shape.  The slope uses the exact tangent map; the curvature
    adds the second-variation recursion (the bracketed quantity of the
    near-stationary-point expansion, V''*(dr/dp0)^2 + V'*d2r/dp0^2).
    """
    r0b, p0b = np.broadcast_arrays(np.asarray(r0, dtype=float),
                                   np.asarray(p0, dtype=float))
    r = r0b.copy()
    p = p0b.copy()
    jp = np.ones_like(p)   # d p_n / d p0
    jr = np.zeros_like(p)  # d r_n / d p0
    ds = np.zeros_like(p)
    slope = np.zeros_like(p)
    if curvature:
        hp = np.zeros_like(p)  # d^2 p_n / d p0^2
        hr = np.zeros_like(p)
        curv = np.zeros_like(p)
    for _ in range(t):
        ds += potential(spec, r)
        slope += potential_slope(spec, r) * jr
        a = spec.kick_derivative(r, False)
        if curvature:
            curv += potential_curvature(spec, r) * jr ** 2 + potential_slope(spec, r) * hr
            hp = hp + _force_curvature(spec, r) * jr ** 2 + a * hr
            hr = hr + hp
        jp = jp + a * jr
        jr = jr + jp
        p = np.mod(p + spec.kick_force(r, False), TWO_PI)
        r = np.mod(r + p, TWO_PI)
    if curvature:
        return ds, slope, curv
    return ds, slope


def slope_series_stream(spec: MapSpec, r0, p0, t_max: int):
    """Yield (t, slope, slope_curvature) for t = 1..t_max over sample arrays.

    Single pass over the trajectory ensemble; the yielded arrays are live
    accumulators, so consumers must reduce them before the next iteration.
    """
    r = np.asarray(r0, dtype=float).copy()
    p = np.asarray(p0, dtype=float).copy()
    jp = np.ones_like(p)
    jr = np.zeros_like(p)
    hp = np.zeros_like(p)
    hr = np.zeros_like(p)
    slope = np.zeros_like(p)
    curv = np.zeros_like(p)
    for n in range(t_max):
        slope = slope + potential_slope(spec, r) * jr
        curv = curv + potential_curvature(spec, r) * jr ** 2 + potential_slope(spec, r) * hr
        a = spec.kick_derivative(r, False)
        hp = hp + _force_curvature(spec, r) * jr ** 2 + a * hr
        hr = hr + hp
        jp = jp + a * jr
        jr = jr + jp
        p = np.mod(p + spec.kick_force(r, False), TWO_PI)
        r = np.mod(r + p, TWO_PI)
        yield n + 1, slope, curv


def action_difference(spec: MapSpec, r0: float, p0: float, t: int) -> float:
    """dS(p0, r0; t) = eps * sum of V at the pre-kick unperturbed positions."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    ds, _ = trajectory_sums(spec, np.float64(r0), np.float64(p0), t)
    return float(spec.epsilon * ds)


def action_slope(spec: MapSpec, r0: float, p0: float, t: int) -> float:
    """Slope of dS/eps with respect to p0 (exact tangent-map derivative)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    _, slope = trajectory_sums(spec, np.float64(r0), np.float64(p0), t)
    return float(slope)


def action_slope_at_center(spec: MapSpec, packet, t: int) -> float:
    """Slope of dS/eps at the packet center (r_center, p_center)."""
    return action_slope(spec, packet.r_center, packet.p_center, t)


def action_profile(spec: MapSpec, r0: float, p0_grid: np.ndarray, t: int):
    """(dS/eps, slope) sampled on a p0 grid at fixed r0."""
    return trajectory_sums(spec, np.full_like(p0_grid, r0), p0_grid, t)


@dataclass(frozen=True)
class StationaryPoint:
    """Root of the action slope with the curvature of dS there.

    ``flat`` marks |d2s| below the degeneracy threshold (or a failed
    curvature stencil); flat roots are excluded from stationary-phase sums
    and only counted.
    """

    p0_alpha: float
    ds_at: float
    d2s: float
    flat: bool = False


FLAT_THRESHOLD = 1e-8
ROOT_REL_TOL = 1e-8  # genuine root: |slope| < tol * max|slope| on the grid


def _slope_at(spec: MapSpec, r0: float, p0s: np.ndarray, t: int) -> np.ndarray:
    _, s = trajectory_sums(spec, np.full_like(p0s, r0), p0s, t)
    return s


def _bisect_roots(spec: MapSpec, r0: float, lo: np.ndarray, hi: np.ndarray,
                  f_lo: np.ndarray, t: int, tol: float = 1e-10) -> np.ndarray:
    lo = lo.copy()
    hi = hi.copy()
    f_lo = f_lo.copy()
    n_iter = int(np.ceil(np.log2(np.max(hi - lo) / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        f_mid = _slope_at(spec, r0, mid, t)
        left = (f_lo < 0) != (f_mid < 0)
        hi = np.where(left, mid, hi)
        f_lo = np.where(left, f_lo, f_mid)
        lo = np.where(left, lo, mid)
    return 0.5 * (lo + hi)


def _curvatures_fd(spec: MapSpec, r0: float, roots: np.ndarray, t: int,
                   h0: float) -> np.ndarray:
    """d2S via centered differences of eps*slope, per-root h shrinking until
    two step sizes agree within 1%.  Handles stencils that straddle the
    sawtooth discontinuity set; unresolved roots come back as nan.
    """
    eps = spec.epsilon
    h = np.full_like(roots, h0)
    out = np.full_like(roots, np.nan)
    prev = np.full_like(roots, np.nan)
    todo = np.ones(roots.shape, dtype=bool)
    for _ in range(7):
        if not np.any(todo):
            break
        rr = roots[todo]
        hh = h[todo]
        d = eps * (_slope_at(spec, r0, rr + hh, t)
                   - _slope_at(spec, r0, rr - hh, t)) / (2.0 * hh)
        ok = np.abs(d - prev[todo]) <= 0.01 * np.maximum(np.abs(d), FLAT_THRESHOLD)
        idx = np.nonzero(todo)[0]
        out[idx[ok]] = d[ok]
        prev[idx] = d
        todo[idx[ok]] = False
        h[idx[~ok]] /= 4.0
    return out


def find_stationary_points(spec: MapSpec, r0: float, t: int,
                           grid_size: int = 4096,
                           p0_range: tuple[float, float] | None = None
                           ) -> list[StationaryPoint]:
    """Roots of the action slope in p0 at fixed r0.

    Scans a uniform grid over ``p0_range`` (default the full circle
    [0, 2pi)), requires the sign-change count to be stable under one grid
    doubling (raises UnresolvedOscillations otherwise), refines each
    bracket by bisection to 1e-10, and drops brackets that straddle kick
    discontinuities rather than genuine zeros.
    """
    if t <= 1:
        return []  # slope identically zero: degenerate, no isolated roots
    full_circle = p0_range is None
    lo_edge, hi_edge = (0.0, TWO_PI) if full_circle else p0_range
    span = hi_edge - lo_edge

    counts = {}
    cache = {}
    for n in (grid_size, 2 * grid_size):
        p0 = lo_edge + span * np.arange(n) / n
        _, kp = action_profile(spec, r0, p0, t)
        s = np.sign(kp)
        if full_circle:
            idx = np.nonzero(s * np.roll(s, -1) < 0)[0]
        else:
            idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
        counts[n] = len(idx)
        cache[n] = (p0, kp, idx)
    if np.max(np.abs(cache[grid_size][1])) == 0.0:
        return []
    if counts[grid_size] != counts[2 * grid_size]:
        raise UnresolvedOscillations(
            f"sign-change count changed under grid doubling "
            f"({counts[grid_size]} -> {counts[2 * grid_size]}); increase grid_size")

    p0, kp, idx = cache[2 * grid_size]
    if len(idx) == 0:
        return []
    kp_max = np.max(np.abs(kp))
    dp = span / (2 * grid_size)
    spacing = span / len(idx)

    roots = _bisect_roots(spec, r0, p0[idx], p0[idx] + dp, kp[idx], t)
    k_at = np.abs(_slope_at(spec, r0, roots, t))
    genuine = k_at <= ROOT_REL_TOL * kp_max
    roots = np.mod(roots[genuine], TWO_PI) if full_circle else roots[genuine]
    if len(roots) == 0:
        return []

    d2s = _curvatures_fd(spec, r0, roots, t, h0=min(1e-4, 0.02 * spacing))
    ds_at = spec.epsilon * trajectory_sums(spec, np.full_like(roots, r0), roots, t)[0]
    out = []
    for pa, sa, ca in zip(roots, ds_at, d2s):
        flat = (not np.isfinite(ca)) or abs(ca) < FLAT_THRESHOLD
        out.append(StationaryPoint(p0_alpha=float(pa), ds_at=float(sa),
                                   d2s=float(ca), flat=bool(flat)))
    return out
