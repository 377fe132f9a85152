"""Plane-wave Trefftz spaces and closed-form segment integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SINC_SWITCH = 1e-4


def default_directions(p, rotation=0.0):
    """Unit directions ``(cos(2 pi j / p + rotation), sin(...))``, ``j = 1..p``."""
    ang = 2 * math.pi * np.arange(1, p + 1) / p + rotation
    return np.column_stack([np.cos(ang), np.sin(ang)])


def sinc(z):
    """``sin(z) / z`` for complex arrays, Taylor series near zero."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < SINC_SWITCH
    safe = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1 - z2 / 6 + z2 * z2 / 120, np.sin(safe) / safe)


def segment_exp_integral(w, a, b):
    """Closed form of ``int_[a,b] exp(i w . x) ds`` for complex wavevectors.

    All arguments broadcast along leading axes; the last axis has length 2.
    The result has the broadcast leading shape.
    """
    w = np.asarray(w, dtype=complex)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = b - a
    m = 0.5 * (a + b)
    length = np.sqrt(np.sum(t * t, axis=-1))
    wm = w[..., 0] * m[..., 0] + w[..., 1] * m[..., 1]
    wt = w[..., 0] * t[..., 0] + w[..., 1] * t[..., 1]
    return length * np.exp(1j * wm) * sinc(0.5 * wt)


@dataclass(frozen=True, eq=False)
class PlaneWaveSpace:
    """Span of ``exp(i kappa d_j . x)`` on one element."""

    element_id: int
    kappa: complex
    directions: np.ndarray

    @property
    def p(self):
        return len(self.directions)

    @property
    def wavevectors(self):
        return self.kappa * self.directions

    @property
    def test_wavevectors(self):
        """Wavevectors of the test functions ``exp(i conj(kappa) d_j . x)``.

        Their conjugates solve the same Helmholtz equation as the trial
        functions, which keeps the scheme consistent in lossy elements.
        For real ``kappa`` test and trial spaces coincide.
        """
        return np.conj(self.kappa) * self.directions

    def values(self, x):
        """Basis values at points ``x`` of shape ``(n, 2)``; returns ``(n, p)``."""
        return np.exp(1j * (np.atleast_2d(x) @ self.wavevectors.T))

    def gradients(self, x):
        """Basis gradients, shape ``(n, p, 2)``."""
        vals = self.values(x)
        return 1j * vals[:, :, None] * self.wavevectors[None, :, :]


def eval_basis(space, j, x):
    return np.exp(1j * space.kappa * np.dot(space.directions[j], x))


def eval_grad(space, j, x):
    return 1j * space.kappa * space.directions[j] * eval_basis(space, j, x)


class GlobalBasis:
    """Per-element plane-wave spaces with a contiguous global numbering."""

    def __init__(self, mesh, p, rotation=0.0):
        dirs = default_directions(p, rotation)
        self.p = p
        self.rotation = rotation
        self.spaces = [PlaneWaveSpace(e, complex(mesh.kappa[e]), dirs) for e in range(mesh.n_elements)]
        sizes = [s.p for s in self.spaces]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.N = int(self.offsets[-1])

    def __len__(self):
        return self.N

    def slice(self, e):
        return slice(int(self.offsets[e]), int(self.offsets[e + 1]))

    def indices(self, e):
        return np.arange(self.offsets[e], self.offsets[e + 1])

    def index(self, e, j):
        return int(self.offsets[e]) + j

    def locate(self, i):
        """Inverse of :meth:`index`."""
        e = int(np.searchsorted(self.offsets, i, side="right")) - 1
        return e, i - int(self.offsets[e])
