"""Quasi-periodic Fourier machinery on the artificial boundaries x2 = +-H.

Traces on the top/bottom lines are expanded as ``sum_n u_n exp(i alpha_n x1)``
with ``alpha_n = alpha_0 + 2 pi n / L``.  The outgoing Dirichlet-to-Neumann
maps act diagonally on these coefficients with symbol ``i beta_n``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotApplicable, RayleighWoodWarning


def vertical_wavenumbers(k2eps, alphas):
    """``beta_n`` for the squared wavenumber ``k2eps = k**2 * eps``.

    Real ``eps``: ``sqrt(k2eps - alpha**2)`` when non-negative, otherwise
    ``i * sqrt(alpha**2 - k2eps)`` built explicitly.  Complex ``eps`` (loss):
    principal root, which has positive real and imaginary parts.
    """
    alphas = np.asarray(alphas, dtype=float)
    k2eps = complex(k2eps)
    if k2eps.imag == 0:
        q = k2eps.real - alphas**2
        out = np.empty(alphas.shape, dtype=complex)
        prop = q >= 0
        out[prop] = np.sqrt(q[prop])
        out[~prop] = 1j * np.sqrt(-q[~prop])
        return out
    return np.sqrt(k2eps - alphas**2)


@dataclass(frozen=True, eq=False)
class SpectralLadder:
    alpha0: float
    L: float
    kappa_plus: float
    kappa_minus: complex
    M: int
    orders: np.ndarray
    alphas: np.ndarray
    betas_plus: np.ndarray
    betas_minus: np.ndarray

    def index(self, n):
        """Array position of order ``n``."""
        if abs(n) > self.M:
            raise IndexError(f"order {n} outside |n| <= {self.M}")
        return n + self.M

    def betas(self, boundary):
        return self.betas_plus if boundary == "top" else self.betas_minus

    def apply_dtn(self, coeffs, boundary="top"):
        """Fourier coefficients of the truncated DtN map applied to a trace."""
        return 1j * self.betas(boundary) * np.asarray(coeffs)


def build_ladder(config, M):
    if M < 0 or int(M) != M:
        raise DomainError(f"truncation order M={M} must be a non-negative integer")
    M = int(M)
    orders = np.arange(-M, M + 1)
    alphas = config.alpha0 + 2 * math.pi * orders / config.L
    k2 = config.k**2
    return SpectralLadder(
        alpha0=config.alpha0,
        L=config.L,
        kappa_plus=config.kappa_plus,
        kappa_minus=complex(config.kappa_minus),
        M=M,
        orders=orders,
        alphas=alphas,
        betas_plus=vertical_wavenumbers(k2 * config.eps_plus, alphas),
        betas_minus=vertical_wavenumbers(k2 * config.eps_minus, alphas),
    )


def m_star(config):
    """Smallest truncation order preserving the energy flux of the DtN maps.

    ``(L / 2 pi) * (max(kappa+, kappa-) + |alpha_0|)``; any integer
    ``M >= ceil(m_star)`` is admissible.
    """
    if complex(config.eps_minus).imag != 0:
        raise NotApplicable("M* requires a real permittivity below the grating")
    kmax = max(config.kappa_plus, float(np.real(config.kappa_minus)))
    return config.L / (2 * math.pi) * (kmax + abs(config.alpha0))


def auto_truncation(config):
    """Default truncation order ``ceil(M*) + 1``."""
    return math.ceil(m_star(config)) + 1


def rayleigh_wood_distance(config, scan=None):
    """Distance ``(delta_plus, delta_minus, delta)`` from the nearest anomaly.

    ``delta_pm = min_n |beta_n^pm|`` scanned over ``|n| <= scan``; past
    ``M*`` the moduli increase, so any ``scan >= ceil(M*)`` is exact.
    Warns with :class:`RayleighWoodWarning` when ``delta < 1e-8 k``.
    """
    if complex(config.eps_minus).imag != 0:
        raise NotApplicable("Rayleigh-Wood distance requires real permittivities")
    mstar = math.ceil(m_star(config))
    if scan is None:
        scan = 4 * max(mstar, 1)
    if scan < mstar:
        raise DomainError(f"scan={scan} must be at least ceil(M*)={mstar}")
    ladder = build_ladder(config, scan)
    dp = float(np.min(np.abs(ladder.betas_plus)))
    dm = float(np.min(np.abs(ladder.betas_minus)))
    delta = min(dp, dm)
    if delta < 1e-8 * config.k:
        warnings.warn(f"Rayleigh-Wood anomaly: delta = {delta:.3e}", RayleighWoodWarning, stacklevel=2)
    return dp, dm, delta


@dataclass(frozen=True, eq=False)
class TraceCoefficients:
    coeffs: np.ndarray
    boundary: str

    @property
    def M(self):
        return (len(self.coeffs) - 1) // 2


def incident_trace_coeffs(config, M):
    """Fourier coefficients of the incident wave on the top boundary."""
    coeffs = np.zeros(2 * M + 1, dtype=complex)
    coeffs[M] = np.exp(-1j * config.beta0 * config.H)
    return TraceCoefficients(coeffs, "top")


def truncation_error_bound(M, s, t, config):
    """Operator bound factor ``(2 pi M / L - |alpha_0|)**(-t)``.

    Valid for real ``eps_minus`` and ``M >= M*``; ``s`` only labels the
    Sobolev index of the estimate and does not enter the factor.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    if M < m_star(config):
        raise DomainError(f"M={M} below M*={m_star(config):.6g}")
    return (2 * math.pi * M / config.L - abs(config.alpha0)) ** (-t)


def hs_norm(coeffs, alphas, L, s):
    """Discrete quasi-periodic Sobolev norm of a coefficient vector."""
    coeffs = np.asarray(coeffs)
    return math.sqrt(L * float(np.sum((1 + np.asarray(alphas) ** 2) ** s * np.abs(coeffs) ** 2)))
