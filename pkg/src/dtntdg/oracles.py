"""Closed-form reference fields for layered media and guided modes.

Every field object is callable on an ``(n, 2)`` array of points and has a
``gradient`` method returning an ``(n, 2)`` array.  Fields are written
with the vertical wavenumbers ``beta = sqrt(k^2 eps - alpha0^2)`` so that
they hold for any incidence, not only for ``eps_plus = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ResonanceDetected

RESONANCE_COND = 1e13


def _points(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def _vertical(k2eps, alpha):
    return complex(np.sqrt(complex(k2eps - alpha * alpha)))


class _Field:
    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        return self.evaluate(_points(x))[0]

    def gradient(self, x):
        return self.evaluate(_points(x))[1]


def _layer(x, alpha, down, up, beta):
    """``exp(i alpha x1) (down e^{-i beta x2} + up e^{i beta x2})`` and its gradient."""
    ex = np.exp(1j * alpha * x[:, 0])
    em = np.exp(-1j * beta * x[:, 1])
    ep = np.exp(1j * beta * x[:, 1])
    u = ex * (down * em + up * ep)
    du2 = ex * 1j * beta * (-down * em + up * ep)
    return u, np.column_stack([1j * alpha * u, du2])


class IncidentWave(_Field):
    """``exp(i kappa+ (x1 cos(theta) + x2 sin(theta)))``."""

    def __init__(self, config):
        self.config = config
        self.alpha0 = config.alpha0
        self.beta0 = config.beta0

    def evaluate(self, x):
        return _layer(x, self.alpha0, 1.0, 0.0, self.beta0)


def incident_wave(config):
    return IncidentWave(config)


@dataclass(frozen=True, eq=False)
class TwoLayerSolution(_Field):
    """Reflection and transmission at a flat interface ``x2 = 0``.

    Above: ``e^{i alpha0 x1}(e^{-i beta0 x2} + R e^{i beta0 x2})``;
    below: ``T e^{i alpha0 x1} e^{-i beta_minus x2}``.
    """

    R: complex
    T: complex
    alpha0: float
    beta0: float
    beta_minus: complex
    config: object = None

    def evaluate(self, x):
        u = np.empty(len(x), dtype=complex)
        g = np.empty((len(x), 2), dtype=complex)
        up = x[:, 1] >= 0
        u[up], g[up] = _layer(x[up], self.alpha0, 1.0, self.R, self.beta0)
        u[~up], g[~up] = _layer(x[~up], self.alpha0, self.T, 0.0, self.beta_minus)
        return u, g

    def energy_balance(self):
        """``|R|^2 + (Re beta_minus / beta0) |T|^2``; equals one without loss."""
        return abs(self.R) ** 2 + self.beta_minus.real / self.beta0 * abs(self.T) ** 2


def two_layer(config):
    """Exact solution for ``eps_plus`` above and ``eps_minus`` below ``x2 = 0``.

    With ``eps_plus = 1`` this is ``T = 2 sin(theta) / (sin(theta) - s)``,
    ``R = (sin(theta) + s) / (sin(theta) - s)``, ``s = sqrt(eps- - cos^2)``.
    """
    b0 = config.beta0
    bm = _vertical(config.k**2 * config.eps_minus, config.alpha0)
    R = (b0 - bm) / (b0 + bm)
    T = 2 * b0 / (b0 + bm)
    return TwoLayerSolution(complex(R), complex(T), config.alpha0, b0, bm, config)


@dataclass(frozen=True, eq=False)
class ThreeLayerSolution(_Field):
    """Slab ``|x2| < d`` with permittivity ``eps_in`` between two half-spaces.

    ``gamma`` is the normalised vertical wavenumber in the slab, equal to
    ``sqrt(eps_in - cos^2(theta))`` for ``eps_plus = 1``.
    """

    R: complex
    T1: complex
    T2: complex
    T3: complex
    gamma: complex
    d: float
    alpha0: float
    beta0: float
    beta_in: complex
    beta_minus: complex
    residual: float = 0.0

    def evaluate(self, x):
        u = np.empty(len(x), dtype=complex)
        g = np.empty((len(x), 2), dtype=complex)
        top = x[:, 1] >= self.d
        bot = x[:, 1] <= -self.d
        mid = ~(top | bot)
        u[top], g[top] = _layer(x[top], self.alpha0, 1.0, self.R, self.beta0)
        u[mid], g[mid] = _layer(x[mid], self.alpha0, self.T1, self.T2, self.beta_in)
        u[bot], g[bot] = _layer(x[bot], self.alpha0, self.T3, 0.0, self.beta_minus)
        return u, g


def three_layer_matrix(beta0, beta_in, beta_minus, d):
    """Interface system for ``(R, T1, T2, T3)`` and its right-hand side."""
    e0m, e0p = np.exp(-1j * beta0 * d), np.exp(1j * beta0 * d)
    eim, eip = np.exp(-1j * beta_in * d), np.exp(1j * beta_in * d)
    emd = np.exp(1j * beta_minus * d)
    A = np.array([
        [e0p, -eim, -eip, 0],
        [beta0 * e0p, beta_in * eim, -beta_in * eip, 0],
        [0, eip, eim, -emd],
        [0, -beta_in * eip, beta_in * eim, beta_minus * emd],
    ], dtype=complex)
    rhs = np.array([-e0m, beta0 * e0m, 0, 0], dtype=complex)
    return A, rhs


def three_layer(config, d, eps_in):
    """Exact solution for a slab ``|x2| < d`` of permittivity ``eps_in``.

    ``eps_plus`` fills ``x2 > d`` and ``eps_minus`` fills ``x2 < -d``.

    Raises
    ------
    ResonanceDetected
        If the interface system is numerically singular.
    """
    k, a0 = config.k, config.alpha0
    b0 = config.beta0
    bi = _vertical(k**2 * eps_in, a0)
    bm = _vertical(k**2 * config.eps_minus, a0)
    A, rhs = three_layer_matrix(b0, bi, bm, d)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > RESONANCE_COND:
        raise ResonanceDetected(f"slab interface system has condition number {cond:.3e}")
    R, T1, T2, T3 = np.linalg.solve(A, rhs)
    res = float(np.linalg.norm(A @ [R, T1, T2, T3] - rhs) / np.linalg.norm(rhs))
    return ThreeLayerSolution(R, T1, T2, T3, bi / k, d, a0, b0, bi, bm, res)


@dataclass(frozen=True, eq=False)
class GuidedMode(_Field):
    """Trapped solution of the slab, decaying like ``exp(-k3 |x2|)``.

    ``C = cos(k2 d) exp(k3 d)``, which is negative on odd branches.
    ``thetas`` lists every ``(n, theta)`` with ``k1 = kappa+ cos(theta) + 2 pi n / L``
    and ``theta`` in ``[-pi, 0]``; ``theta_critical`` is the one whose
    ``kappa+ cos(theta)`` lies in ``[0, 2 pi / L)``.
    """

    C: float
    k1: float
    k2: float
    k3: float
    d: float
    branch: int
    thetas: tuple
    theta_critical: float | None
    n_critical: int | None

    def evaluate(self, x):
        ex = np.exp(1j * self.k1 * x[:, 0])
        y = x[:, 1]
        u = np.empty(len(x), dtype=complex)
        du2 = np.empty(len(x), dtype=complex)
        top, bot = y > self.d, y < -self.d
        mid = ~(top | bot)
        u[top] = self.C * np.exp(-self.k3 * y[top])
        du2[top] = -self.k3 * u[top]
        u[bot] = self.C * np.exp(self.k3 * y[bot])
        du2[bot] = self.k3 * u[bot]
        u[mid] = np.cos(self.k2 * y[mid])
        du2[mid] = -self.k2 * np.sin(self.k2 * y[mid])
        u *= ex
        du2 *= ex
        return u, np.column_stack([1j * self.k1 * u, du2])


def _critical_angles(k1, kappa, L):
    """All ``(n, theta)`` with ``kappa cos(theta) = k1 - 2 pi n / L``, ``theta <= 0``."""
    step = 2 * math.pi / L
    out = []
    n_lo = math.ceil((k1 - kappa) / step - 1e-12)
    n_hi = math.floor((k1 + kappa) / step + 1e-12)
    for n in range(n_lo, n_hi + 1):
        c = (k1 - step * n) / kappa
        if -1 <= c <= 1:
            out.append((n, -math.acos(c)))
    return tuple(out)


def find_guided_modes(k, eps_in, eps_plus, d, L):
    """All guided modes of a symmetric slab, fundamental first.

    Solves ``k2^2 (1 + tan^2(k2 d)) = k^2 (eps_in - eps_plus)`` with
    ``k3 = k2 tan(k2 d) > 0``.  On the branch ``k2 d`` in
    ``(m pi, m pi + pi/2)`` this is ``k2 = K |cos(k2 d)|``,
    ``K = k sqrt(eps_in - eps_plus)``, whose left side minus right side
    changes sign exactly once, so bracketing is safe.
    """
    if eps_in <= eps_plus:
        return []
    K = k * math.sqrt(eps_in - eps_plus)
    kappa = k * math.sqrt(eps_plus)
    modes = []
    m = 0
    while m * math.pi / d < K:
        lo = m * math.pi / d
        hi = min((m * math.pi + math.pi / 2) / d, K)

        def g(k2):
            return k2 - K * abs(math.cos(k2 * d))

        if g(lo) < 0 < g(hi) or (g(lo) < 0 and g(hi) == 0):
            k2 = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            k3 = k2 * math.tan(k2 * d)
            if k3 > 0:
                k1 = math.sqrt(k**2 * eps_in - k2**2)
                C = math.cos(k2 * d) * math.exp(k3 * d)
                thetas = _critical_angles(k1, kappa, L)
                step = 2 * math.pi / L
                crit = [(n, t) for n, t in thetas if 0 <= kappa * math.cos(t) < step * (1 + 1e-12)]
                n_c, t_c = crit[0] if crit else (None, None)
                modes.append(GuidedMode(C, k1, k2, k3, d, m, thetas, t_c, n_c))
        m += 1
    return modes
