"""Stability of effective generators and the Floquet reference.

Thresholds are located by plain bisection on a sign change; the Floquet
monodromy uses a fixed-step RK4 with step doubling.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .backends.matrix import MatrixOp
from .backends.psop import vector_field
from .cumulants import GeneratorSeries, TruncationPolicy, effective_generator
from .expavg import WindowSpec
from .models import KapitzaParams, ct_first_order_printed, kapitza

# Window used for lab-frame threshold scans (dimensionless time).  Wide
# enough that e^{-tau^2/2} leakage of the drive is below 1e-18 through
# window moment 7.
THRESHOLD_TAU = 12.0
THRESHOLD_POLICY = dict(coeff_floor=1e-13, moment_floor=1e-20)


class NoThresholdError(RuntimeError):
    pass


class NumericError(RuntimeError):
    pass


@dataclass
class StabilityResult:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stable: bool
    marginal: bool = False


@dataclass
class ThresholdResult:
    lambda_star: float
    order: int
    bracket: Tuple[float, float]
    iterations: int
    info: dict = field(default_factory=dict)


@dataclass
class MonodromyResult:
    monodromy: np.ndarray
    multipliers: np.ndarray
    spectral_radius: float
    steps: int
    liouville_error: float


# ------------------------------------------------------------ jacobians

def jacobian_at(series: GeneratorSeries, point=(0.0, 0.0), t: float = 0.0) -> np.ndarray:
    """Jacobian of the effective vector field at ``point``.

    Matrix backends return the generator matrix itself (a linear field);
    PsOp backends differentiate the e^{ik theta} p^a basis analytically.
    """
    cut = series.policy.cutoff(series.window)
    fast = [e.word for e in series.entries() if any(w != 0 for _, w, _ in e.u)]
    if fast:
        warnings.warn(f"{len(fast)} words keep oscillating terms (|w| <= {cut:g}); "
                      f"evaluating at t={t}")
    elem = series.element(t)
    if isinstance(elem, MatrixOp):
        return elem.m.real[:2, :2].copy()
    return vector_field(elem).jacobian(*point)


def stability(jac: np.ndarray, tol: float = 1e-12) -> StabilityResult:
    ev = np.linalg.eigvals(jac)
    re = ev.real
    stable = bool(np.all(re < -tol))
    marginal = bool(np.all(re <= tol)) and not stable
    return StabilityResult(np.asarray(jac), ev, stable, marginal)


def kapitza_series(params: KapitzaParams, order: int, backend: str = "matrix",
                   tau: float = THRESHOLD_TAU) -> GeneratorSeries:
    policy = TruncationPolicy(n_max=order, **THRESHOLD_POLICY)
    return effective_generator(kapitza(params, backend), WindowSpec("gaussian", tau), policy)


def kapitza_jacobian(gamma: float, beta: float, lam: float, order: int,
                     tau: float = THRESHOLD_TAU) -> np.ndarray:
    p = KapitzaParams(gamma=gamma, lam=lam, beta=beta)
    return jacobian_at(kapitza_series(p, order, "matrix", tau))


# ----------------------------------------------------------- bisection

def bisect(fn: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10,
           max_iter: int = 200) -> Tuple[float, Tuple[float, float], int]:
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo, (lo, lo), 0
    if fhi == 0:
        return hi, (hi, hi), 0
    if (flo > 0) == (fhi > 0):
        raise NoThresholdError(f"no sign change on [{lo}, {hi}]")
    it = 0
    while hi - lo > xtol and it < max_iter:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        it += 1
        if fm == 0:
            return mid, (mid, mid), it
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi), (lo, hi), it


def _scan(fn, start: float, stop: float, step: float):
    """First sub-interval [a, b] of the scan on which fn changes sign."""
    a, fa = start, fn(start)
    n = int(math.ceil((stop - start) / step))
    for i in range(1, n + 1):
        b = min(start + i * step, stop)
        fb = fn(b)
        if (fa > 0) != (fb > 0) or fb == 0:
            return a, b
        a, fa = b, fb
    raise NoThresholdError(f"no sign change on [{start}, {stop}]")


def lambda0_threshold(gamma: float, beta: float, order: int, lam_max: float = 1.5,
                      bracket: Optional[Tuple[float, float]] = None,
                      tau: float = THRESHOLD_TAU) -> ThresholdResult:
    """Smallest drive at which the order-n effective generator stabilizes the
    inverted position: sign change of det(J) at the origin."""
    if order not in (1, 3, 5, 7) and order < 1:
        raise ValueError("order must be positive")
    if gamma > 0.3:
        warnings.warn("gamma above 0.3 is outside the perturbative regime")

    def det(lam):
        return float(np.linalg.det(kapitza_jacobian(gamma, beta, lam, order, tau)))

    if bracket is None:
        step = max(gamma, 1e-3) / 4
        bracket = _scan(det, 0.0, lam_max, step)
    lam, br, it = bisect(det, *bracket)
    return ThresholdResult(lam, order, br, it)


def closed_form_lambda0(order: int, gamma: float, beta: float) -> float:
    """Minimal stabilizing drive from the closed forms (orders 3, 5, 7).

    Order 7 uses X = 1 - b^2 + b^4 - 4G^2 + 8 b^2 G^2 + 16 G^4 inside and
    outside the square root (b = Q^-1 Gamma).
    """
    G2, b2 = gamma * gamma, beta * beta
    if order == 3:
        val = 2 * G2
    elif order == 5:
        den = 1 - 4 * G2 - b2
        if den <= 0:
            raise ValueError("order-5 formula outside its domain")
        val = 2 * G2 / den
    elif order == 7:
        X = 1 - b2 + b2 * b2 - 4 * G2 + 8 * b2 * G2 + 16 * G2 * G2
        val = 8 / 25 * (math.sqrt(25 * G2 / 2 + X * X) - X)
    else:
        raise ValueError("closed forms exist for orders 3, 5 and 7")
    if val < 0:
        raise ValueError("negative lambda0^2")
    return math.sqrt(val)


def lambda0_series_approx(order: int, gamma: float, beta: float) -> float:
    """Small-Gamma expansions of the closed forms, squared threshold."""
    G2, b2 = gamma * gamma, beta * beta
    if order == 3:
        return 2 * G2
    if order == 5:
        return 2 * G2 * (1 + 4 * G2 + b2)
    if order == 7:
        return 2 * G2 * (1 + 7 / 8 * G2 + b2 - 575 / 32 * G2 * G2 - 75 / 8 * G2 * b2)
    raise ValueError("orders 3, 5, 7 only")


# ------------------------------------------------- upper boundary (CT)

def self_consistency(lam: float, gamma: float, beta: float) -> float:
    """Cross-multiplied first-order self-consistency residual."""
    G2, b2 = gamma * gamma, beta * beta
    lhs = 4 * lam ** 2 * 4 * lam ** 2 * ((1 + 2 * lam + 4 * G2) ** 2 + 4 * b2)
    rhs = ((1 + 4 * G2) ** 2 - 4 * lam ** 2 + 4 * b2) ** 2 * ((9 + 4 * G2) ** 2 + 36 * b2)
    return lhs - rhs


def lambda_c_first_order(gamma: float, beta: float, lam_max: float = 1.5) -> ThresholdResult:
    """Smallest positive root of the first-order CT self-consistency equation."""
    fn = lambda lam: self_consistency(lam, gamma, beta)
    lo, hi = _scan(fn, 1e-6, lam_max, 1e-3)
    lam, br, it = bisect(fn, lo, hi, xtol=1e-14)
    stable = []
    for frame in (1, 2):
        M, _ = ct_first_order_printed(frame, KapitzaParams(gamma=max(gamma, 1e-12), lam=lam, beta=beta), 1.0)
        ev = np.linalg.eigvals(M)
        stable.append(bool(np.all(ev.real > 0)))
    return ThresholdResult(lam, 1, br, it, {"ct_eigs_positive": stable,
                                            "marginal": beta == 0})


def butikov_lambda_c(gamma: float) -> float:
    G2 = gamma * gamma
    return (math.sqrt(117 + 232 * G2 + 80 * G2 * G2) - 9 - 4 * G2) / 4


# --------------------------------------------------------------- floquet

def _rk4_monodromy(gamma: float, beta: float, lam: float, steps: int) -> np.ndarray:
    """Fundamental matrix of theta'' + beta theta' - (G^2 - lam cos t) theta = 0 over 2 pi."""
    G2 = gamma * gamma
    h = 2 * math.pi / steps
    cols = []
    for y0 in ((1.0, 0.0), (0.0, 1.0)):
        x, v = y0
        for n in range(steps):
            t = n * h
            c0 = G2 - lam * math.cos(t)
            c1 = G2 - lam * math.cos(t + 0.5 * h)
            c2 = G2 - lam * math.cos(t + h)
            k1x, k1v = v, c0 * x - beta * v
            x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
            k2x, k2v = v2, c1 * x2 - beta * v2
            x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
            k3x, k3v = v3, c1 * x3 - beta * v3
            x4, v4 = x + h * k3x, v + h * k3v
            k4x, k4v = v4, c2 * x4 - beta * v4
            x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (math.isfinite(x) and math.isfinite(v)):
            raise NumericError(f"monodromy integration diverged (lam={lam}, steps={steps})")
        cols.append((x, v))
    return np.array(cols).T


def monodromy(gamma: float, beta: float, lam: float, steps: int = 4096,
              tol: float = 1e-10, max_steps: int = 1 << 17) -> MonodromyResult:
    """Monodromy over one drive period with step doubling until converged."""
    prev = _rk4_monodromy(gamma, beta, lam, steps)
    while True:
        steps *= 2
        cur = _rk4_monodromy(gamma, beta, lam, steps)
        if np.max(np.abs(cur - prev)) < tol:
            break
        if steps >= max_steps:
            raise NumericError(f"monodromy not converged at {steps} steps (lam={lam})")
        prev = cur
    mult = np.linalg.eigvals(cur)
    liou = abs(np.linalg.det(cur) - math.exp(-2 * math.pi * beta))
    if liou > 1e-8:
        raise NumericError(f"Liouville check failed: {liou:.3e}")
    return MonodromyResult(cur, mult, float(np.max(np.abs(mult))), steps, liou)


def floquet_margin(gamma: float, beta: float, lam: float) -> float:
    """Positive iff both multipliers lie strictly inside the unit circle.

    For a real 2x2 monodromy with 0 < det < 1 this is 1 + det - |tr|; at
    beta = 0 (det = 1) it reduces to the |tr| < 2 elliptic criterion, the
    boundary of which is where the spectral radius leaves 1.
    """
    m = monodromy(gamma, beta, lam).monodromy
    return 1 + float(np.linalg.det(m)) - abs(float(np.trace(m)))


def floquet_threshold(gamma: float, beta: float, which: str = "lower",
                      lam_max: float = 1.5, step: float | None = None) -> ThresholdResult:
    fn = lambda lam: floquet_margin(gamma, beta, lam)
    if which == "lower":
        lo, hi = _scan(fn, 0.0, lam_max, step or max(gamma, 1e-3) / 4)
    elif which == "upper":
        low = floquet_threshold(gamma, beta, "lower", lam_max, step).lambda_star
        lo, hi = _scan(fn, low + 1e-6, lam_max, step or 0.02)
    else:
        raise ValueError("which must be 'lower' or 'upper'")
    lam, br, it = bisect(fn, lo, hi)
    return ThresholdResult(lam, 0, br, it, {"which": which})
