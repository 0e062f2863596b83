"""Trajectories: fixed-step RK4, window filtering, effective dynamics,
comparison metrics and phase-space area of an advected loop."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .backends.psop import PhaseFn, split_hamiltonian_dissipator, vector_field
from .cumulants import GeneratorSeries, TruncationPolicy, effective_generator
from .expavg import WindowSpec
from .models import (KapitzaParams, ModulationParams, modulated_amplitudes,
                     modulated_kapitza, modulated_lab_rhs)


class DivergenceError(RuntimeError):
    def __init__(self, msg, t_last):
        super().__init__(msg)
        self.t_last = t_last


class SupportError(ValueError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray   # shape (N, 2): theta, p
    error_estimate: Optional[float] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def theta(self):
        return self.states[:, 0]

    @property
    def p(self):
        return self.states[:, 1]

    def window(self, t0: float, t1: float) -> "Trajectory":
        m = (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)
        return Trajectory(self.times[m], self.states[m])

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no sample at t={t}")
        return self.states[i].copy()

    def to_csv(self, path, header_lines: Sequence[str] = ()):
        with open(path, "w") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("t,theta,p\n")
            for t, (a, b) in zip(self.times, self.states):
                fh.write(f"{t:.17g},{a:.17g},{b:.17g}\n")


@dataclass
class ComparisonReport:
    rms: float
    max_dev: float
    times: np.ndarray
    deviation: np.ndarray

    def as_dict(self):
        return {"rms": self.rms, "max_dev": self.max_dev, "n": int(len(self.times))}


@dataclass
class AreaSeries:
    times: np.ndarray
    areas: np.ndarray
    vertices: np.ndarray = None
    flagged: list = field(default_factory=list)

    @property
    def relative(self):
        return self.areas / self.areas[0]


# ----------------------------------------------------------- integrator

def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(field: Callable, init, t_span, dt: float, richardson: bool = False,
              every: int = 1) -> Trajectory:
    """Classical RK4 with a fixed step; ``every`` thins the stored samples.

    With ``richardson`` the run is repeated at dt/2 and the max-norm
    difference of the end states, divided by 15, is recorded.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t0, t1 = t_span
    n = int(round((t1 - t0) / dt))
    if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ValueError("t_span must be a whole number of steps")
    y = np.array(init, dtype=float)
    ts, ys = [t0], [y.copy()]
    for i in range(n):
        t = t0 + i * dt
        y = _rk4_step(field, t, y, dt)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state after t={t}", t)
        if (i + 1) % every == 0 or i + 1 == n:
            ts.append(t0 + (i + 1) * dt)
            ys.append(y.copy())
    err = None
    if richardson:
        half = integrate(field, init, t_span, dt / 2)
        err = float(np.max(np.abs(half.states[-1] - ys[-1]))) / 15.0
    return Trajectory(np.array(ts), np.array(ys), err)


# ------------------------------------------------------------ filtering

def filter_trajectory(traj: Trajectory, win: WindowSpec, min_mass: float = 0.99) -> Trajectory:
    """Discrete convolution with the sampled window on a uniform grid.

    Near the edges the window is truncated and renormalized; only samples
    whose window keeps at least ``min_mass`` of its weight are returned.
    """
    t = traj.times
    dt = np.diff(t)
    if len(t) < 2 or np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValueError("filtering needs a uniform time grid")
    h = float(dt[0])
    offs, w = win.weights(h)
    m = len(w) // 2
    n = len(t)
    x = traj.states
    num = np.zeros_like(x)
    mass = np.zeros(n)
    for j, wj in enumerate(w):
        shift = j - m       # sample t_i - s_j reads x[i - shift]
        lo, hi = max(0, shift), min(n, n + shift)
        if lo >= hi:
            continue
        num[lo:hi] += wj * x[lo - shift:hi - shift]
        mass[lo:hi] += wj
    keep = mass >= min_mass - 1e-12
    if not np.any(keep):
        raise SupportError("trajectory span too short for the window")
    out = num[keep] / mass[keep][:, None]
    return Trajectory(t[keep], out)


def _match_times(ta, tb, rtol=1e-9):
    j = np.clip(np.searchsorted(tb, ta), 1, max(len(tb) - 1, 1))
    j = np.where(np.abs(tb[j - 1] - ta) <= np.abs(tb[j] - ta), j - 1, j) if len(tb) > 1 else np.zeros(len(ta), int)
    ok = np.abs(tb[j] - ta) <= rtol * np.maximum(1.0, np.abs(ta))
    return np.nonzero(ok)[0], j[ok]


def compare(a: Trajectory, b: Trajectory, t_range=None) -> ComparisonReport:
    """Deviation |a - b| (Euclidean in (theta, p)) on the common sample times."""
    ia, ib = _match_times(a.times, b.times)
    common = a.times[ia]
    if t_range is not None:
        m = (common >= t_range[0] - 1e-9) & (common <= t_range[1] + 1e-9)
        common, ia, ib = common[m], ia[m], ib[m]
    if len(common) == 0:
        raise ValueError("no common sample times")
    dev = np.sqrt(np.sum((a.states[ia] - b.states[ib]) ** 2, axis=1))
    rms = float(np.sqrt(np.mean(dev ** 2)))
    return ComparisonReport(rms, float(np.max(dev)), common, dev)


# ------------------------------------------------------- effective field

class EffectiveField:
    """Vector field sum_w c_w(t) X_w(theta, p) from a PsOp generator series.

    c_w(t) = U_w(t) * prod(amp) by default.  With ``amps_fn`` the series is
    treated as a local expansion: U_w is evaluated at local time 0 and the
    letter amplitudes are re-evaluated at each t (slowly varying
    coefficients).  ``part`` selects the full field ('full'), only the
    Hamiltonian pieces ('hamiltonian') or only the non-Hamiltonian pieces.
    """

    def __init__(self, series: GeneratorSeries, orders=None, amps_fn=None, part: str = "full",
                 keep_first_order_dissipation: bool = True):
        self.series = series
        self.amps_fn = amps_fn
        entries = list(series.entries(orders))
        basis = {}
        rows_t, rows_p = [], []
        for e in entries:
            vf = self._part_field(e, part, keep_first_order_dissipation)
            rt, rp = {}, {}
            for key, v in vf[0].c.items():
                rt[basis.setdefault(key, len(basis))] = v
            for key, v in vf[1].c.items():
                rp[basis.setdefault(key, len(basis))] = v
            rows_t.append(rt)
            rows_p.append(rp)
        nb = max(len(basis), 1)
        self.Bt = np.zeros((len(entries), nb), dtype=complex)
        self.Bp = np.zeros((len(entries), nb), dtype=complex)
        for i, (rt, rp) in enumerate(zip(rows_t, rows_p)):
            for j, v in rt.items():
                self.Bt[i, j] = v
            for j, v in rp.items():
                self.Bp[i, j] = v
        keys = sorted(basis, key=basis.get)
        self.k = np.array([k for k, _ in keys] or [0])
        self.a = np.array([a for _, a in keys] or [0])
        self.entries = entries
        self.words = np.array([list(e.word) + [-1] * (series.n_max - len(e.word)) for e in entries],
                              dtype=int).reshape(len(entries), series.n_max)
        self.amp = np.array([e.amp for e in entries], dtype=complex)
        # local expansion: polynomial parts are taken at local time 0, the
        # phases at absolute time
        freqs = sorted({w for e in entries for k, w, _ in e.u if k == 0}) or [0.0]
        col = {w: j for j, w in enumerate(freqs)}
        self.freqs = np.array(freqs)
        self.C = np.zeros((len(entries), len(freqs)), dtype=complex)
        for i, e in enumerate(entries):
            for k, w, c in e.u:
                if k == 0:
                    self.C[i, col[w]] += c
        self.static = bool(np.all(self.freqs == 0))
        self.autonomous = all(e.u.max_power() == 0 for e in entries)

    @staticmethod
    def _part_field(e, part, keep_first):
        vf = vector_field(e.op)
        if part == "full":
            return vf.f_theta, vf.f_p
        sp = split_hamiltonian_dissipator(e.op)
        hvf = (sp.H.d_p(), -sp.H.d_theta())
        dvf = (PhaseFn(), sp.D.d_p())
        if part == "hamiltonian":
            if keep_first and len(e.word) == 1:
                return hvf[0], hvf[1] + dvf[1]
            return hvf
        if part == "dissipative":
            return dvf
        raise ValueError(f"unknown part {part!r}")

    def coefficients(self, t: float) -> np.ndarray:
        if self.amps_fn is None and not self.autonomous:
            return np.array([e.u(t) * e.amp for e in self.entries], dtype=complex)
        u = self.C[:, 0] if self.static else self.C @ np.exp(-1j * self.freqs * t)
        if self.amps_fn is None:
            return u * self.amp
        amps = np.append(np.asarray(self.amps_fn(t), dtype=complex), 1.0)
        return u * np.prod(amps[self.words], axis=1)

    def field_coeffs(self, t: float):
        c = self.coefficients(t)
        return c @ self.Bt, c @ self.Bp

    def __call__(self, t, y):
        ct, cp = self.field_coeffs(t)
        th, p = y[0], y[1]
        th = np.asarray(th)
        p = np.asarray(p)
        basis = np.exp(1j * np.multiply.outer(th, self.k)) * np.power.outer(p, self.a)
        return np.array([np.real(basis @ ct), np.real(basis @ cp)])

    def divergence(self, t, y):
        ct, cp = self.field_coeffs(t)
        th, p = y
        e = np.exp(1j * self.k * th)
        dth = np.sum(ct * 1j * self.k * e * p ** self.a)
        pa1 = np.where(self.a > 0, p ** np.maximum(self.a - 1, 0), 0.0)
        dp = np.sum(cp * self.a * e * pa1)
        return float(np.real(dth + dp))


def effective_trajectory(series_or_field, init, t_span, dt: float, **kw) -> Trajectory:
    f = series_or_field
    if isinstance(f, GeneratorSeries):
        f = EffectiveField(f, **kw)
    return integrate(f, init, t_span, dt)


# ---------------------------------------------------------------- area

def shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def circle_polygon(center, radius, n=64, radius_p=None) -> np.ndarray:
    ang = 2 * np.pi * np.arange(n) / n
    rp = radius if radius_p is None else radius_p
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + rp * np.sin(ang)])


def _self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    a = v
    b = np.roll(v, -1, axis=0)
    for i in range(n):
        p, r = a[i], b[i] - a[i]
        q = a[i + 2:n - (1 if i == 0 else 0)]
        s = b[i + 2:n - (1 if i == 0 else 0)] - q
        if len(q) == 0:
            continue
        rxs = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            tt = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / rxs
            uu = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / rxs
        if np.any((np.abs(rxs) > 0) & (tt > 0) & (tt < 1) & (uu > 0) & (uu < 1)):
            return True
    return False


def phase_space_area(field: Callable, polygon, t_span, dt: float, every: int = 1,
                     refine: bool = True, check_every: int = 0) -> AreaSeries:
    """Advect a closed polygon and record its shoelace area.

    ``field(t, y)`` must accept y of shape (2, N).  When neighbouring
    vertices drift further apart than twice the initial spacing a
    midpoint vertex is inserted.
    """
    v = np.array(polygon, dtype=float)
    if len(v) < 32:
        raise ValueError("polygon needs at least 32 vertices")
    spacing = float(np.max(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))
    t0, t1 = t_span
    n = int(round((t1 - t0) / dt))
    fT = lambda t, y: field(t, y)
    ts, areas, flagged = [t0], [shoelace(v)], []
    if _self_intersects(v):
        raise ValueError("seed polygon is not simple")
    for i in range(n):
        t = t0 + i * dt
        v = _rk4_step(fT, t, v.T, dt).T
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"non-finite vertex after t={t}", t)
        if refine:
            gap = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
            big = np.nonzero(gap > 2 * spacing)[0]
            if len(big):
                mids = 0.5 * (v[big] + np.roll(v, -1, axis=0)[big])
                v = np.insert(v, big + 1, mids, axis=0)
        if (i + 1) % every == 0 or i + 1 == n:
            ts.append(t0 + (i + 1) * dt)
            areas.append(shoelace(v))
            if check_every and (len(ts) % check_every == 0) and _self_intersects(v):
                warnings.warn(f"polygon self-intersects at t={ts[-1]:.6g}")
                flagged.append(len(ts) - 1)
    return AreaSeries(np.array(ts), np.array(areas), v, flagged)


# ------------------------------------------------- length-modulated model

@dataclass
class ModulatedSetup:
    params: KapitzaParams
    mod: ModulationParams
    window: WindowSpec
    t_start: float = -2.0
    t_end: float = 40.0
    init: tuple = (0.01, 0.0)
    steps_per_period: int = 256
    effective_stride: int = 8


def fig4_setup() -> ModulatedSetup:
    return ModulatedSetup(KapitzaParams(gamma=math.sqrt(0.02), lam=0.3, beta=0.05, nu=20.0),
                          ModulationParams(amplitude=0.2, period=5 / (2 * math.pi)),
                          WindowSpec("gaussian", 0.4))


def setup_grid(setup: ModulatedSetup):
    """Step and grid ends; the grid is anchored at t = 0 so that the
    start and end are the nearest whole steps outside the requested span."""
    dt = 2 * math.pi / setup.params.nu / setup.steps_per_period
    k0 = math.ceil(-setup.t_start / dt - 1e-9)
    k1 = math.ceil(setup.t_end / dt - 1e-9)
    return dt, -k0 * dt, k1 * dt


def exact_modulated(setup: ModulatedSetup) -> Trajectory:
    """Lab-frame run reported as (theta, p / (m l(t)^2))."""
    dt, t0, t1 = setup_grid(setup)
    rhs = modulated_lab_rhs(setup.params, setup.mod)
    traj = integrate(rhs, setup.init, (t0, t1), dt)
    ratio = (setup.mod.l0 / setup.mod.length(traj.times)) ** 2
    st = traj.states.copy()
    st[:, 1] *= ratio
    return Trajectory(traj.times, st)


def modulated_series(setup: ModulatedSetup, order: int, policy: TruncationPolicy | None = None):
    model = modulated_kapitza(setup.params, setup.mod)
    policy = policy or TruncationPolicy(n_max=order, max_grade=(("alpha", 1),))
    return effective_generator(model, setup.window, policy)


def modulated_field(setup: ModulatedSetup, order: int, part: str = "full"):
    """Effective field for (theta, p / (m l(t)^2)) with slowly varying coefficients.

    The local expansion at t0 uses p / (m l(t0)^2); converting to the
    running normalization adds -2 (l'/l) p.
    """
    series = modulated_series(setup, order)
    amps_fn = lambda t: modulated_amplitudes(setup.params, setup.mod, t)
    ef = EffectiveField(series, amps_fn=amps_fn, part=part)
    mod = setup.mod

    def field(t, y):
        out = ef(t, y)
        a1 = mod.local(t)[1]
        out[1] = out[1] - 2 * a1 * np.asarray(y[1])
        return out

    field.effective = ef
    return field


def modulated_comparison(setup: ModulatedSetup, orders=(1, 3), t_range=(0.0, 40.0)):
    """Filtered exact run versus effective runs started from the filtered state."""
    exact = exact_modulated(setup)
    filt = filter_trajectory(exact, setup.window)
    y0 = filt.at(t_range[0])
    dt = setup_grid(setup)[0]
    h = dt * setup.effective_stride
    t_range = (t_range[0], t_range[0] + h * math.ceil((t_range[1] - t_range[0]) / h - 1e-9))
    out = {"exact": exact, "filtered": filt.window(*t_range)}
    reports = {}
    for n in orders:
        tr = integrate(modulated_field(setup, n), y0, t_range, dt * setup.effective_stride)
        out[n] = tr
        reports[n] = compare(tr, filt, t_range)
    return out, reports
