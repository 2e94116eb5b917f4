"""Quadrature and shape-testing primitives shared by the higher layers.

Everything here works on plain callables or precomputed value arrays over a
uniform Grid.  Shape checks return a ShapeVerdict rather than a bare bool:
a verdict can be `holds`, `fails` (with a witness point), or `boundary`
when every tested discrepancy sits inside tolerance — the exponential
distribution, for instance, is on the boundary of every ageing class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Grid",
    "ShapeVerdict",
    "QuadratureError",
    "ShapeCheckError",
    "DEFAULT_TOL",
    "integrate",
    "integrate_to_inf",
    "cumulative_simpson",
    "check_monotone",
    "check_convex",
    "check_concave",
    "check_logconvex",
    "check_logconcave",
    "check_nonnegative",
    "probe_divergence",
]

DEFAULT_TOL = 1e-9

# Lemma-style divergence probe defaults: horizon, magnitude threshold, and
# the decade-ratio cutoff separating geometric tail decay from slower decay.
DIVERGENCE_HORIZON = 1.0e6
DIVERGENCE_THRESHOLD = 1.0e4
DECADE_RATIO_CUTOFF = 0.5


class QuadratureError(Exception):
    """Adaptive refinement hit max depth before converging."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (partial estimate {estimate!r}, error {error:.3e})")
        self.estimate = estimate
        self.error = error


class ShapeCheckError(Exception):
    """A shape check could not run, e.g. log of a nonpositive node."""


@dataclass(frozen=True)
class Grid:
    """Uniform evaluation grid: node k = lower + k*(upper-lower)/(points-1)."""

    lower: float
    upper: float
    points: int

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if self.points < 2:
            raise ValueError("need at least 2 points")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.points - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.points)


@dataclass
class ShapeVerdict:
    """Outcome of one shape test.

    holds=False always comes with a witness (t, violation magnitude) whose
    violation exceeds the tolerance; kind == "boundary" means every tested
    discrepancy stayed within tolerance in absolute value.
    """

    kind: str
    holds: bool
    tolerance: float
    witness: Optional[tuple] = None
    max_violation: float = 0.0
    skipped: int = 0
    note: str = ""

    @property
    def boundary(self) -> bool:
        return self.kind == "boundary"

    def __str__(self):
        if self.kind == "boundary":
            return "boundary"
        if self.holds:
            return f"{self.kind}: holds"
        w = f" at t={self.witness[0]:.6g}" if self.witness else ""
        return f"{self.kind}: fails{w} (violation {self.max_violation:.3g})"


# ---------------------------------------------------------------------------
# Adaptive Simpson quadrature


def _adaptive(f, a, fa, b, fb, m, fm, whole, tol, depth, max_depth, leftovers):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    h = b - a
    left = (h / 12.0) * (fa + 4.0 * flm + fm)
    right = (h / 12.0) * (fm + 4.0 * frm + fb)
    err = (left + right - whole) / 15.0
    if depth >= max_depth or abs(err) <= tol:
        if depth >= max_depth and abs(err) > tol:
            leftovers.append(abs(err))
        return left + right + err
    return _adaptive(
        f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1, max_depth, leftovers
    ) + _adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1, max_depth, leftovers)


def _simpson_finite(f, a, b, tol, max_depth):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb)
    leftovers: list[float] = []
    val = _adaptive(f, a, fa, b, fb, m, fm, whole, tol, 0, max_depth, leftovers)
    if leftovers:
        achieved = math.fsum(leftovers)
        if achieved > tol:
            raise QuadratureError("quadrature did not converge", val, achieved)
    return val


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = 48,
) -> float:
    """Adaptive-Simpson integral of f over [a, b]; b may be math.inf.

    Infinite upper limits use the substitution u = t/(1+t), which maps
    [a, inf) onto [a/(1+a), 1); the transformed endpoint is pulled in by
    one ulp-scale step so f is never evaluated at t = inf.  Raises
    QuadratureError with the partial estimate when refinement bottoms out.
    """
    if a == b:
        return 0.0
    if math.isinf(b):
        return integrate_to_inf(f, a, tol=tol, max_depth=max_depth)
    if a > b:
        return -integrate(f, b, a, tol=tol, max_depth=max_depth)
    return _simpson_finite(f, a, b, tol, max_depth)


def integrate_to_inf(
    f: Callable[[float], float],
    a: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = 48,
) -> float:
    if a < 0:
        raise ValueError("improper integration needs a >= 0")

    def g(u: float) -> float:
        w = 1.0 - u
        return f(u / w) / (w * w)

    lo = a / (1.0 + a)
    return _simpson_finite(g, lo, 1.0 - 1e-12, tol, max_depth)


def integrate_rel(
    f: Callable[[float], float],
    a: float,
    b: float,
    rel: float = 1e-10,
    floor: float = 1e-14,
) -> float:
    """Two-stage integration targeting relative accuracy `rel`."""
    rough = integrate(f, a, b, tol=1e-6, max_depth=40)
    return integrate(f, a, b, tol=max(floor, rel * abs(rough)))


def cumulative_simpson(x: np.ndarray, fx: np.ndarray, fmid: np.ndarray) -> np.ndarray:
    """Cumulative integral of f along nodes x.

    fx holds f at the nodes and fmid f at each interval midpoint, so every
    panel gets its own Simpson rule and node layouts may be non-uniform.
    Returns an array aligned with x, starting at 0.
    """
    h = np.diff(x)
    panels = (h / 6.0) * (fx[:-1] + 4.0 * fmid + fx[1:])
    out = np.empty_like(x)
    out[0] = 0.0
    np.cumsum(panels, out=out[1:])
    return out


def half_panel_values(x: np.ndarray, fx: np.ndarray, fmid: np.ndarray, cum: np.ndarray) -> np.ndarray:
    """Cumulative integral at the interval midpoints, given node cumulants.

    Uses the quadratic through (x_i, mid, x_{i+1}):
    ∫_{x_i}^{mid} ≈ (h/12)(5 f_i + 8 f_mid − f_{i+1}).
    """
    h = np.diff(x)
    return cum[:-1] + (h / 12.0) * (5.0 * fx[:-1] + 8.0 * fmid - fx[1:])


# ---------------------------------------------------------------------------
# Shape checks

ArrayOrFn = Union[np.ndarray, Callable[[float], float], Callable[[np.ndarray], np.ndarray]]


def _values_on(f: ArrayOrFn, grid: Grid) -> np.ndarray:
    if isinstance(f, np.ndarray):
        if len(f) != grid.points:
            raise ValueError(f"value array has {len(f)} entries for a {grid.points}-point grid")
        return np.asarray(f, dtype=float)
    ts = grid.nodes()
    try:
        vals = f(ts)
        vals = np.asarray(vals, dtype=float)
        if vals.shape == ts.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(f(float(t))) for t in ts])


def _finite_mask(vals: np.ndarray) -> np.ndarray:
    return np.isfinite(vals)


def check_monotone(
    f: ArrayOrFn,
    grid: Grid,
    direction: str = "inc",
    tol: float = DEFAULT_TOL,
) -> ShapeVerdict:
    """Grid test of monotonicity.

    A consecutive difference opposing `direction` by more than
    tol*max(1, |f|) is a violation; the verdict reports the first violating
    node pair and the largest violation.  All-flat data yields `boundary`.
    Non-finite nodes (e.g. a ratio blowing up at 0) are skipped.
    """
    if direction not in ("inc", "dec"):
        raise ValueError("direction must be 'inc' or 'dec'")
    vals = _values_on(f, grid)
    ts = grid.nodes()
    keep = _finite_mask(vals)
    skipped = int((~keep).sum())
    v, t = vals[keep], ts[keep]
    if len(v) < 2:
        raise ShapeCheckError("fewer than two finite nodes")
    d = np.diff(v)
    scale = tol * np.maximum(1.0, np.maximum(np.abs(v[:-1]), np.abs(v[1:])))
    signed = d if direction == "inc" else -d
    viol = np.maximum(0.0, -signed)
    bad = viol > scale
    kind = "increasing" if direction == "inc" else "decreasing"
    if bad.any():
        first = int(np.argmax(bad))
        worst = int(np.argmax(viol))
        return ShapeVerdict(
            kind,
            False,
            tol,
            witness=(float(t[first]), float(viol[first])),
            max_violation=float(viol[worst]),
            skipped=skipped,
        )
    if np.all(np.abs(d) <= scale):
        return ShapeVerdict("boundary", True, tol, skipped=skipped)
    return ShapeVerdict(kind, True, tol, skipped=skipped)


def _second_diff_check(vals, ts, want_convex: bool, tol: float, kind: str, skipped: int):
    s = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
    scale = tol * np.maximum.reduce(
        [np.ones_like(s), np.abs(vals[:-2]), np.abs(vals[1:-1]), np.abs(vals[2:])]
    )
    signed = s if want_convex else -s
    viol = np.maximum(0.0, -signed)
    bad = viol > scale
    if bad.any():
        first = int(np.argmax(bad))
        worst = int(np.argmax(viol))
        return ShapeVerdict(
            kind,
            False,
            tol,
            witness=(float(ts[1:-1][first]), float(viol[first])),
            max_violation=float(viol[worst]),
            skipped=skipped,
        )
    if np.all(np.abs(s) <= scale):
        return ShapeVerdict("boundary", True, tol, skipped=skipped)
    return ShapeVerdict(kind, True, tol, skipped=skipped)


def check_convex(f: ArrayOrFn, grid: Grid, tol: float = DEFAULT_TOL) -> ShapeVerdict:
    """Second-difference convexity test: f(t_k) - 2 f(t_{k+1}) + f(t_{k+2}) >= -tol·scale."""
    vals = _values_on(f, grid)
    ts = grid.nodes()
    keep = _finite_mask(vals)
    if not keep.all():
        vals, ts = vals[keep], ts[keep]
    if len(vals) < 3:
        raise ShapeCheckError("fewer than three finite nodes")
    return _second_diff_check(vals, ts, True, tol, "convex", int((~keep).sum()))


def check_concave(f: ArrayOrFn, grid: Grid, tol: float = DEFAULT_TOL) -> ShapeVerdict:
    vals = _values_on(f, grid)
    ts = grid.nodes()
    keep = _finite_mask(vals)
    if not keep.all():
        vals, ts = vals[keep], ts[keep]
    if len(vals) < 3:
        raise ShapeCheckError("fewer than three finite nodes")
    return _second_diff_check(vals, ts, False, tol, "concave", int((~keep).sum()))


def _log_values(f: ArrayOrFn, grid: Grid) -> tuple[np.ndarray, np.ndarray, int]:
    vals = _values_on(f, grid)
    ts = grid.nodes()
    keep = _finite_mask(vals)
    vals, ts = vals[keep], ts[keep]
    if (vals <= 0.0).any():
        idx = int(np.argmax(vals <= 0.0))
        raise ShapeCheckError(f"nonpositive value {vals[idx]!r} at node t={ts[idx]!r} in log-shape test")
    return np.log(vals), ts, int((~keep).sum())


def check_logconvex(f: ArrayOrFn, grid: Grid, tol: float = DEFAULT_TOL) -> ShapeVerdict:
    """Convexity of ln f; requires f > 0 at every finite node."""
    logs, ts, skipped = _log_values(f, grid)
    if len(logs) < 3:
        raise ShapeCheckError("fewer than three finite nodes")
    v = _second_diff_check(logs, ts, True, tol, "logconvex", skipped)
    return v


def check_logconcave(f: ArrayOrFn, grid: Grid, tol: float = DEFAULT_TOL) -> ShapeVerdict:
    logs, ts, skipped = _log_values(f, grid)
    if len(logs) < 3:
        raise ShapeCheckError("fewer than three finite nodes")
    return _second_diff_check(logs, ts, False, tol, "logconcave", skipped)


def check_nonnegative(f: ArrayOrFn, grid: Grid, tol: float = DEFAULT_TOL) -> ShapeVerdict:
    """Pointwise sign test: f(t) >= -tol*max(1, |f|) at every node."""
    vals = _values_on(f, grid)
    ts = grid.nodes()
    keep = _finite_mask(vals)
    vals, ts = vals[keep], ts[keep]
    if len(vals) == 0:
        raise ShapeCheckError("no finite nodes")
    scale = tol * np.maximum(1.0, np.abs(vals))
    viol = np.maximum(0.0, -vals)
    bad = viol > scale
    if bad.any():
        first = int(np.argmax(bad))
        worst = int(np.argmax(viol))
        return ShapeVerdict(
            "nonnegative",
            False,
            tol,
            witness=(float(ts[first]), float(viol[first])),
            max_violation=float(viol[worst]),
        )
    if np.all(np.abs(vals) <= scale):
        return ShapeVerdict("boundary", True, tol)
    return ShapeVerdict("nonnegative", True, tol)


# ---------------------------------------------------------------------------
# Divergence probing for integrals over [0, inf)


def probe_divergence(
    f: Callable[[float], float],
    horizon: float = DIVERGENCE_HORIZON,
    threshold: float = DIVERGENCE_THRESHOLD,
    ratio_cutoff: float = DECADE_RATIO_CUTOFF,
    tol: float = 1e-6,
) -> tuple[str, dict]:
    """Heuristically classify ∫_0^∞ f as divergent or convergent-suspected.

    Integrates decade by decade up to `horizon` and declares divergence
    when either the running total exceeds `threshold` (integrands bounded
    away from zero) or the last-decade contribution fails to decay
    geometrically (ratio >= ratio_cutoff), which catches logarithmically
    divergent integrands such as 1/(a + b t).  Quadrature cannot prove
    divergence, so the verdict is a documented, configurable heuristic.
    """
    edges = [0.0, 10.0]
    while edges[-1] < horizon:
        edges.append(min(edges[-1] * 10.0, horizon))
    chunks = []
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        part = integrate(f, a, b, tol=tol * max(1.0, (b - a) / horizon))
        chunks.append(part)
        total += part
        if total >= threshold:
            return "divergent", {"total": total, "chunks": chunks, "reason": "threshold"}
    ratio = math.inf
    if len(chunks) >= 2 and chunks[-2] > 0:
        ratio = chunks[-1] / chunks[-2]
    if chunks[-1] <= 1e-10:
        return "convergent-suspected", {"total": total, "chunks": chunks, "ratio": ratio}
    if ratio >= ratio_cutoff:
        return "divergent", {"total": total, "chunks": chunks, "ratio": ratio, "reason": "tail-ratio"}
    return "convergent-suspected", {"total": total, "chunks": chunks, "ratio": ratio}
