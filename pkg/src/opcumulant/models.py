"""Model alphabets for the worked examples.

A model is a list of letters (time function, operator, amplitude).  The
generator is L(t) = sum_i amp_i f_i(t) L_i.  Kapitza-type models use the
momentum p~ = p / (m l^2 nu) in dimensionless time nu t unless stated.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .backends.matrix import MatrixOp
from .backends.psop import PhaseFn, PsOp
from .expavg import ExpPoly


@dataclass
class Letter:
    name: str
    time: ExpPoly
    op: object
    amp: complex = 1.0
    grade: Dict[str, int] = field(default_factory=dict)


@dataclass
class ModelSpec:
    name: str
    letters: List[Letter]
    backend: str
    params: object = None
    info: Dict[str, object] = field(default_factory=dict)

    def generator(self, t: float):
        """The instantaneous generator as a backend element."""
        elem = self.letters[0].op.zero_like()
        for l in self.letters:
            elem = elem + l.op * (complex(l.time(t)) * l.amp)
        return elem

    def is_real_at(self, t: float, atol: float = 1e-12) -> bool:
        g = self.generator(t)
        if isinstance(g, MatrixOp):
            return float(np.max(np.abs(g.m.imag), initial=0.0)) <= atol * max(1.0, g.norm())
        return g.is_real(atol)

    def names(self) -> List[str]:
        return [l.name for l in self.letters]


# --------------------------------------------------------------- params

@dataclass(frozen=True)
class KapitzaParams:
    gamma: float          # omega_0 / nu
    lam: float            # dimensionless drive
    beta: float = 0.0     # gamma / Q
    nu: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.beta < 0 or self.lam < 0:
            raise ValueError("beta and lambda must be nonnegative")
        if not self.nu > 0:
            raise ValueError("nu must be positive")

    @property
    def q_inv(self) -> float:
        return self.beta / self.gamma


@dataclass(frozen=True)
class ModulationParams:
    alpha1: float = 0.0
    alpha2: float = 0.0
    amplitude: Optional[float] = None   # A in l(t) = l0 (1 + A sin(t/T))
    period: Optional[float] = None      # T
    l0: float = 1.0

    @property
    def periodic(self) -> bool:
        return self.amplitude is not None

    def length(self, t):
        if not self.periodic:
            return self.l0 * (1 + self.alpha1 * t + self.alpha2 * np.square(t))
        return self.l0 * (1 + self.amplitude * np.sin(np.asarray(t) / self.period))

    def local(self, t0: float):
        """(l(t0), alpha1(t0), alpha2(t0)) of the local expansion at t0."""
        if not self.periodic:
            return self.l0, self.alpha1, self.alpha2
        A, T = self.amplitude, self.period
        x = t0 / T
        l = self.l0 * (1 + A * math.sin(x))
        dl = self.l0 * A * math.cos(x) / T
        d2l = -self.l0 * A * math.sin(x) / T ** 2
        return l, dl / l, 0.5 * d2l / l


@dataclass(frozen=True)
class ParamOscParams:
    eps: float
    omega0: float
    Omega: float

    def __post_init__(self):
        if self.eps < 0 or not self.omega0 > 0:
            raise ValueError("need eps >= 0 and omega0 > 0")

    @property
    def delta(self) -> float:
        return self.Omega - 2 * self.omega0

    @property
    def sigma(self) -> float:
        return self.Omega + 2 * self.omega0


# -------------------------------------------------------------- kapitza

def _sin_dp(coeff) -> PsOp:
    return PsOp.times(PhaseFn.sin(1, coeff), dp=1)


def kapitza(params: KapitzaParams, backend: str = "psop") -> ModelSpec:
    """Damped Kapitza pendulum about the inverted position, letters L0, L+nu, L-nu.

    Dimensionless time; the drive letters carry e^{+it} and e^{-it}.
    ``backend='matrix'`` linearizes sin(theta) -> theta.
    """
    G2, lam, b = params.gamma ** 2, params.lam, params.beta
    if backend == "psop":
        L0 = (PsOp.term(1.0, 0, 1, 1, 0) + _sin_dp(G2) + PsOp.term(-b, 0, 1, 0, 1))
        Ld = _sin_dp(-lam / 2)
    elif backend == "matrix":
        L0 = MatrixOp([[0, 1], [G2, -b]])
        Ld = MatrixOp([[0, 0], [-lam / 2, 0]])
    else:
        raise ValueError(f"unknown backend {backend!r}")
    letters = [
        Letter("L0", ExpPoly.const(1.0), L0),
        Letter("L+nu", ExpPoly.harmonic(-1.0), Ld),
        Letter("L-nu", ExpPoly.harmonic(1.0), Ld),
    ]
    return ModelSpec("kapitza", letters, backend, params)


def kapitza_lab_matrix(params: KapitzaParams, t: float) -> np.ndarray:
    """Linearized lab-frame generator A(t) in dimensionless time."""
    return np.array([[0.0, 1.0], [params.gamma ** 2 - params.lam * math.cos(t), -params.beta]])


# ---------------------------------------------------- length modulation

MOD_LETTERS = ("kin", "grav", "damp", "kin1", "grav1", "kin2", "grav2",
               "drive+", "drive-", "drive1+", "drive1-", "drive2+", "drive2-")


def modulated_amplitudes(params: KapitzaParams, mod: ModulationParams, t0: float = 0.0) -> List[complex]:
    """Letter amplitudes of the local expansion around t0.

    The letter operators are fixed; only these numbers depend on the slow
    modulation (l(t0), alpha1(t0), alpha2(t0)).
    """
    nu = params.nu
    l, a1, a2 = mod.local(t0)
    w02 = params.gamma ** 2 * nu ** 2 * mod.l0 / l   # g / l(t0)
    drive = -params.lam * nu ** 2
    return [1.0, w02, params.beta * nu,
            -2 * a1, a1 * w02, -2 * a2, a2 * w02,
            drive / 2, drive / 2, drive * a1, drive * a1, drive * a2, drive * a2]


def modulated_kapitza(params: KapitzaParams, mod: ModulationParams, tau: Optional[float] = None,
                      t0: float = 0.0) -> ModelSpec:
    """Length-modulated damped Kapitza pendulum in physical time.

    Momentum variable is p / (m l(t0)^2) (an angular velocity), time is
    physical with drive frequency ``params.nu``.  To linear order in the
    modulation Delta(s) = alpha1 s + alpha2 s^2 (s = t - t0):

        theta' = p (1 - 2 Delta)
        p'     = w0^2 (1 + Delta) sin(theta) - lam nu^2 (1 + 2 Delta) cos(nu t) sin(theta) - beta nu p

    Letters whose amplitude carries alpha have grade {'alpha': 1}.
    """
    nu = params.nu
    pdth = PsOp.term(1.0, 0, 1, 1, 0)
    sdp = _sin_dp(1.0)
    pdp = PsOp.term(-1.0, 0, 1, 0, 1)
    one, t1, t2 = ExpPoly.const(1.0), ExpPoly.term(1.0, 1), ExpPoly.term(1.0, 2)
    ep, em = ExpPoly.harmonic(-nu), ExpPoly.harmonic(nu)
    times = [one, one, one, t1, t1, t2, t2,
             ep, em, ExpPoly.term(1.0, 1, -nu), ExpPoly.term(1.0, 1, nu),
             ExpPoly.term(1.0, 2, -nu), ExpPoly.term(1.0, 2, nu)]
    ops = [pdth, sdp, pdp, pdth, sdp, pdth, sdp, sdp, sdp, sdp, sdp, sdp, sdp]
    amps = modulated_amplitudes(params, mod, t0)
    letters = []
    for name, f, op, a in zip(MOD_LETTERS, times, ops, amps):
        g = {"alpha": 1} if ("1" in name or "2" in name) else {}
        letters.append(Letter(name, f, op, a, g))
    if tau is not None:
        l, a1, a2 = mod.local(t0)
        slow = min(1 / abs(a1) if a1 else math.inf, 1 / math.sqrt(abs(a2)) if a2 else math.inf)
        if not (1.0 / nu < tau < slow):
            warnings.warn("window scale outside 1/nu << tau << 1/alpha1, 1/sqrt(alpha2)")
    return ModelSpec("modulated_kapitza", letters, "psop", params, {"mod": mod})


def modulated_lab_rhs(params: KapitzaParams, mod: ModulationParams):
    """Exact equations of motion in (theta, p) with p the canonical momentum
    divided by m l0^2, for H = p^2/(2 m l^2) + m l (g - lam l nu^2 cos nu t) cos theta
    and dissipator -(1/2) Q^-1 w0 p^2 (w0 fixed at l0)."""
    nu = params.nu
    g = params.gamma ** 2 * nu ** 2 * mod.l0
    bn = params.beta * nu
    lam = params.lam

    def rhs(t, y):
        th, p = y
        l = mod.length(t) / mod.l0
        l0 = mod.l0
        dth = p / l ** 2
        dp = (l * (g / l0 - lam * l * nu ** 2 * math.cos(nu * t))) * math.sin(th) - bn * p
        return np.array([dth, dp])

    return rhs


# ------------------------------------------------------------ CT frames

def _ct_geometry(frame: int):
    if frame == 1:
        return 1.5, 0.5
    if frame == 2:
        return 0.5, 1.5
    raise ValueError("frame must be 1 or 2")


def ct_frame_generator(frame: int, params: KapitzaParams, amplitude: float, t: float) -> np.ndarray:
    """3x3 affine generator of the linearized dynamics in a CT frame.

    Z = R(t) (z - d(t)) with R the scaled rotation at rate r and d the
    displaced sideband at rate s.  Returns [[G, g], [0, 0]] with
    G = R' R^-1 + R A R^-1 and g = R (A d - d').
    """
    r, s = _ct_geometry(frame)
    c, sn = math.cos(r * t), math.sin(r * t)
    R = np.array([[c, -sn / r], [sn, c / r]])
    dR = r * np.array([[-sn, -c / r], [c, -sn / r]])
    Rinv = np.linalg.inv(R)
    A = kapitza_lab_matrix(params, t)
    d = amplitude * np.array([math.cos(s * t), -s * math.sin(s * t)])
    dd = amplitude * np.array([-s * math.sin(s * t), -s * s * math.cos(s * t)])
    out = np.zeros((3, 3))
    out[:2, :2] = dR @ Rinv + R @ A @ Rinv
    out[:2, 2] = R @ (A @ d - dd)
    return out


def ct_frame(frame: int, params: KapitzaParams, amplitude: float, nsamples: int = 64) -> ModelSpec:
    """Letters = Fourier components (0, +-1, ..., +-4 in units of nu) of the
    transformed linearized generator, in the affine matrix representation."""
    ts = 2 * math.pi * np.arange(nsamples) / nsamples
    samples = np.array([ct_frame_generator(frame, params, amplitude, t) for t in ts])
    letters = []
    for w in range(-4, 5):
        comp = np.tensordot(np.exp(1j * w * ts), samples, axes=1) / nsamples
        comp[np.abs(comp) < 1e-15] = 0
        if not np.any(comp):
            continue
        letters.append(Letter(f"ct{frame}[{w:+d}]", ExpPoly.harmonic(float(w)), MatrixOp(comp)))
    return ModelSpec(f"ct{frame}", letters, "matrix", params,
                     {"frame": frame, "amplitude": amplitude})


def ct_first_order_printed(frame: int, params: KapitzaParams, amplitude: float):
    """The printed first-order matrix M and centre Z0 (dimensionless time)."""
    G2, lam, b = params.gamma ** 2, params.lam, params.beta
    if frame == 1:
        k = (9 + 4 * G2) / 12
        M = np.array([[b / 2, k], [-k, b / 2]])
        Z0 = 2 * lam * amplitude / ((9 + 4 * G2) ** 2 + 36 * b * b) * np.array([9 + 4 * G2, -6 * b])
    else:
        M = np.array([[b / 2, (1 + 2 * lam + 4 * G2) / 4], [-(1 - 2 * lam + 4 * G2) / 4, b / 2]])
        Z0 = (2 * lam * amplitude / ((1 + 4 * G2) ** 2 - 4 * lam * lam + 4 * b * b)
              * np.array([1 + 2 * lam + 4 * G2, -2 * b]))
    return M, Z0


# ------------------------------------------------- parametric oscillator

def _lie(h: PhaseFn) -> PsOp:
    # {f, h} = h_J f_theta - h_theta f_J, with J in the momentum slot
    return PsOp.from_field(h.d_p(), -h.d_theta())


def parametric_oscillator(params: ParamOscParams, keep: Sequence[str] = ("O", "S", "D")) -> ModelSpec:
    """Six letters at +-Omega, +-Sigma, +-Delta in action-angle variables.

    The momentum slot of PsOp holds the action J.  ``keep`` selects which
    frequency families are included.
    """
    e, w0 = params.eps, params.omega0
    hO = PhaseFn.p(1, e * w0 / 4)
    hm = PhaseFn({(-2, 1): e * w0 / 8})   # (eps/8) w0 J e^{-2 i theta}
    hp = PhaseFn({(2, 1): e * w0 / 8})
    fam = {
        "O": [("h+Omega", params.Omega, hO), ("h-Omega", -params.Omega, hO)],
        "S": [("h+Sigma", params.sigma, hm), ("h-Sigma", -params.sigma, hp)],
        "D": [("h+Delta", params.delta, hm), ("h-Delta", -params.delta, hp)],
    }
    letters = []
    for key in ("O", "S", "D"):
        if key in keep:
            for name, w, h in fam[key]:
                letters.append(Letter(name, ExpPoly.harmonic(w), _lie(h)))
    return ModelSpec("parametric_oscillator", letters, "psop", params,
                     {"hamiltonians": {l.name: h for key in keep for (n, _, h) in fam[key]
                                       for l in letters if l.name == n}})


# ------------------------------------------------------------ raw input

def matrix_model(mats: Sequence, times: Sequence[ExpPoly], names: Sequence[str] | None = None) -> ModelSpec:
    names = names or [f"A{i}" for i in range(len(mats))]
    letters = [Letter(n, f, MatrixOp(m)) for n, f, m in zip(names, times, mats)]
    return ModelSpec("matrix", letters, "matrix")
