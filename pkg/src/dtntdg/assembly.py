"""Closed-form assembly of the DtN-TDG linear system.

Every matrix entry is a coefficient times the integral of a complex
exponential over a straight face, so no quadrature is needed.  Trial
functions are ``exp(i w . x)`` with ``w = kappa d``; test functions are
``exp(i v . x)`` with ``v = conj(kappa) d``, so that their conjugates solve
the local Helmholtz equation also in lossy elements.  The entry coupling
trial ``phi_l`` and test ``psi_j`` on a face ``F`` is

    C_jl * int_F exp(i (w_l - conj(v_j)) . x) ds,

and ``w_l - conj(v_j) = kappa (d_l - d_j)``.

The top/bottom boundaries contribute a face-local part plus a global
coupling that is low rank in the Fourier coefficients of the traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import segment_exp_integral
from .errors import GeometryError
from .geometry import FaceKind

CHUNK = 512


@dataclass(frozen=True)
class FluxParameters:
    """Numerical flux coefficients; the defaults give the UWVF."""

    a: float = 0.5
    b: float = 0.5
    d: float = 0.5

    def __post_init__(self):
        if min(self.a, self.b, self.d) < 0 or min(self.a, self.b) == 0:
            raise GeometryError("flux parameters must be positive (d may be zero)")

    @classmethod
    def from_config(cls, config):
        return cls(*config.flux_params)

    @staticmethod
    def xi(kappa1, kappa2):
        return 0.5 * (np.real(kappa1) + np.real(kappa2))


# ------------------------------------------------------------------ helpers

def _side_factor(w, phase, shift):
    """Factor turning ``exp(i w.x)`` into its quasi-periodic translate.

    The translate ``phase * exp(i w.(x - shift))`` equals the factor times
    ``exp(i w.x)``.
    """
    if shift is None:
        return np.ones(w.shape[:-1], dtype=complex)
    return phase * np.exp(-1j * (w[..., 0] * shift[0] + w[..., 1] * shift[1]))


def _interior_blocks(a, b, n, trial, test, xi, flux):
    """Batched face blocks.

    ``a, b, n`` have shape (F, 2) and ``xi`` shape (F,).  ``trial`` and
    ``test`` map side 1, 2 to ``(w, f)``: wavevectors (F, p, 2) and
    quasi-periodic side factors (F, p).  Returns a dict keyed by
    (test side, trial side) with arrays of shape (F, p_test, p_trial).
    """
    sgn = {1: 1.0, 2: -1.0}
    xi = xi[:, None, None]
    A = a[:, None, None, :]
    B = b[:, None, None, :]
    out = {}
    for t in (1, 2):
        wv, gv = test[t]
        wvn = np.conj(np.einsum("fpk,fk->fp", wv, n))[:, :, None]
        for s in (1, 2):
            wu, fu = trial[s]
            wun = np.einsum("fpk,fk->fp", wu, n)[:, None, :]
            C = sgn[t] * (-0.5j) * (wun + wvn) - 1j * sgn[s] * sgn[t] * (flux.a * xi + flux.b / xi * wun * wvn)
            S = segment_exp_integral(wu[:, None, :, :] - np.conj(wv)[:, :, None, :], A, B)
            out[(t, s)] = C * S * fu[:, None, :] * np.conj(gv)[:, :, None]
    return out


def _periodic_setup(face, alpha0, L, convention):
    """Face geometry, side shifts and phases for an identified face pair."""
    ga, gb = face.geometry.a, face.geometry.b
    if convention == "left":
        return ga, gb, (np.array([L, 0.0]), np.exp(1j * alpha0 * L)), None
    if convention == "right":
        shift = np.array([-L, 0.0])
        return ga + shift, gb + shift, None, (shift, np.exp(-1j * alpha0 * L))
    raise ValueError(f"unknown periodic convention {convention!r}")


def assemble_interior_face(face, spaces, flux, alpha0=0.0, L=None, convention="left"):
    """The four ``p x p`` blocks of an interior or periodic face.

    Parameters
    ----------
    face : Face
        Interior face (normal from the first into the second element) or a
        periodic face ``(left, right)``.
    spaces : sequence of PlaneWaveSpace
        Indexed by element id.
    flux : FluxParameters
    alpha0, L : float
        Quasi-periodicity data, used on periodic faces only.
    convention : {"left", "right"}
        Which side of a periodic pair is translated: the left element by
        ``+L`` with phase ``exp(i alpha0 L)`` or the right one by ``-L``
        with the conjugate phase.  Both give the same discrete solution.

    Returns
    -------
    dict
        ``{(test_side, trial_side): block}`` with sides 1, 2 referring to
        ``face.elements`` and ``block[j, l] = A(phi_l, phi_j)``.
    """
    e1, e2 = face.elements
    s1, s2 = spaces[e1], spaces[e2]
    trial = {1: s1.wavevectors[None], 2: s2.wavevectors[None]}
    test = {1: s1.test_wavevectors[None], 2: s2.test_wavevectors[None]}
    a, b = face.geometry.a, face.geometry.b
    shifts = {1: None, 2: None}
    if face.kind is FaceKind.PERIODIC:
        a, b, shifts[1], shifts[2] = _periodic_setup(face, alpha0, L, convention)
    trial = {i: (w, _side_factor(w, *_unpack(shifts[i]))) for i, w in trial.items()}
    test = {i: (w, _side_factor(w, *_unpack(shifts[i]))) for i, w in test.items()}
    blocks = _interior_blocks(
        a[None], b[None], face.geometry.normal[None], trial, test,
        np.array([FluxParameters.xi(s1.kappa, s2.kappa)]), flux,
    )
    return {key: val[0] for key, val in blocks.items()}


def _unpack(shift):
    return (None, None) if shift is None else (shift[1], shift[0])


def assemble_dirichlet_face(face, space, flux):
    """Block ``A[j, l] = (-i w_l.n - i kappa a) int_F phi_l conj(phi_j)``."""
    w, v = space.wavevectors, space.test_wavevectors
    wn = w @ face.geometry.normal
    C = (-1j * wn - 1j * space.kappa * flux.a)[None, :]
    S = segment_exp_integral(w[None, :, :] - np.conj(v)[:, None, :], face.geometry.a, face.geometry.b)
    return C * S


def boundary_local_block(face, space, flux):
    """Face-local part of the top/bottom boundary terms."""
    w, v = space.wavevectors, space.test_wavevectors
    wn = w @ face.geometry.normal
    vn = v @ face.geometry.normal
    C = (1 + flux.d * wn[None, :] / space.kappa) * (-1j * np.conj(vn)[:, None])
    S = segment_exp_integral(w[None, :, :] - np.conj(v)[:, None, :], face.geometry.a, face.geometry.b)
    return C * S


def trace_fourier_coeffs(space, face, ladder, test=False):
    """Fourier coefficients ``(1/L) int_F phi_l exp(-i alpha_n x1) dx1``.

    Returns an array of shape ``(2M+1, p)``; ``test=True`` uses the test
    functions instead of the trial functions.
    """
    w = space.test_wavevectors if test else space.wavevectors
    shifted = w[None, :, :] - np.stack([ladder.alphas, np.zeros_like(ladder.alphas)], axis=-1)[:, None, :]
    return segment_exp_integral(shifted, face.geometry.a, face.geometry.b) / ladder.L


@dataclass(frozen=True, eq=False)
class DtnCoupling:
    """Factored global coupling on one artificial boundary.

    ``B`` and ``Bt`` hold trace Fourier coefficients of the trial and test
    functions of the boundary-touching elements (global indices ``cols``),
    ``wn`` and ``wnt`` their normal wavenumbers and ``betas`` the vertical
    wavenumbers.  With ``Bt^H`` the conjugate transpose, the dense block over
    ``cols x cols`` is

        L [Bt^H diag(-i beta) B + (d/kappa) diag(conj wnt) Bt^H diag(i beta) B
           + (d/kappa) Bt^H diag(i conj beta) B diag(wn)
           - (i d/kappa) Bt^H diag(|beta|^2) B].

    Test and trial coefficients differ only in lossy elements.
    """

    boundary: str
    cols: np.ndarray
    B: np.ndarray
    Bt: np.ndarray
    wn: np.ndarray
    wnt: np.ndarray
    betas: np.ndarray
    kappa: complex
    d: float
    L: float

    def _apply(self, Bx, Bwx):
        """Fourier-side weights for the trial traces ``Bx`` and ``B(wn x)``."""
        beta = self.betas.reshape((-1,) + (1,) * (np.ndim(Bx) - 1))
        g = self.d / self.kappa
        plain = -1j * beta * Bx - 1j * g * np.abs(beta) ** 2 * Bx + g * 1j * np.conj(beta) * Bwx
        weighted = g * 1j * beta * Bx
        return plain, weighted

    def dense(self):
        BtH = self.Bt.conj().T
        plain, weighted = self._apply(self.B, self.B * self.wn[None, :])
        return self.L * (BtH @ plain + np.conj(self.wnt)[:, None] * (BtH @ weighted))

    def matvec(self, x, out):
        xc = x[self.cols]
        plain, weighted = self._apply(self.B @ xc, self.B @ (self.wn * xc))
        BtH = self.Bt.conj().T
        out[self.cols] += self.L * (BtH @ plain + np.conj(self.wnt) * (BtH @ weighted))
        return out


def assemble_dtn_boundary(mesh, basis, ladder, flux, boundary):
    """Local triplets and the factored global coupling on ``x2 = +-H``.

    Returns ``(rows, cols, vals, coupling)``; ``coupling`` is None when no
    element touches the boundary.
    """
    kind = FaceKind.TOP if boundary == "top" else FaceKind.BOTTOM
    rows, cols, vals = [], [], []
    trial, test = {}, {}
    for face in mesh.faces_of_kind(kind):
        e = face.elements[0]
        space = basis.spaces[e]
        idx = basis.indices(e)
        block = boundary_local_block(face, space, flux)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(block.ravel())
        trial[e] = trial.get(e, 0) + trace_fourier_coeffs(space, face, ladder)
        test[e] = test.get(e, 0) + trace_fourier_coeffs(space, face, ladder, test=True)
    if not trial:
        return rows, cols, vals, None
    elems = sorted(trial)
    normal = np.array([0.0, 1.0]) if boundary == "top" else np.array([0.0, -1.0])
    coupling = DtnCoupling(
        boundary,
        np.concatenate([basis.indices(e) for e in elems]),
        np.hstack([trial[e] for e in elems]),
        np.hstack([test[e] for e in elems]),
        np.concatenate([basis.spaces[e].wavevectors @ normal for e in elems]),
        np.concatenate([basis.spaces[e].test_wavevectors @ normal for e in elems]),
        ladder.betas(boundary),
        basis.spaces[elems[0]].kappa,
        flux.d,
        ladder.L,
    )
    return rows, cols, vals, coupling


def assemble_rhs(mesh, basis, ladder, flux, config):
    """Load vector ``L_j = l(phi_j)``; nonzero only on elements touching the top.

    ``L_j = -2i beta0 [(1 - d conj(w_j.n)/kappa) int_F u_inc conj(phi_j)
    + (d/kappa) L beta0 exp(-i beta0 H) conj(phi_j^0)]``.
    """
    rhs = np.zeros(basis.N, dtype=complex)
    beta0 = config.beta0
    if beta0 == 0:
        return rhs
    kinc = config.kappa_plus * np.array([math.cos(config.theta), math.sin(config.theta)])
    c0 = np.exp(-1j * beta0 * config.H)
    for face in mesh.faces_of_kind(FaceKind.TOP):
        e = face.elements[0]
        space = basis.spaces[e]
        v = space.test_wavevectors
        vn = v @ face.geometry.normal
        S = segment_exp_integral(kinc[None, :] - np.conj(v), face.geometry.a, face.geometry.b)
        B0 = trace_fourier_coeffs(space, face, ladder, test=True)[ladder.M]
        g = flux.d / space.kappa
        rhs[basis.slice(e)] += -2j * beta0 * ((1 - g * np.conj(vn)) * S + g * ladder.L * beta0 * c0 * np.conj(B0))
    return rhs


# ------------------------------------------------------------------- system

@dataclass(frozen=True, eq=False)
class TdgSystem:
    """Assembled system ``A c = rhs``.

    ``sparse_part`` holds every face-local interaction; the global DtN
    couplings are kept factored and folded in by :meth:`to_sparse`.
    """

    N: int
    sparse_part: sp.csr_matrix
    dtn_part_top: DtnCoupling | None
    dtn_part_bottom: DtnCoupling | None
    rhs: np.ndarray
    M: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def couplings(self):
        return [c for c in (self.dtn_part_top, self.dtn_part_bottom) if c is not None]

    def to_sparse(self):
        if "sparse" not in self._cache:
            A = self.sparse_part.tocoo()
            rows, cols, vals = [A.row], [A.col], [A.data]
            for c in self.couplings:
                blk = c.dense()
                rows.append(np.repeat(c.cols, len(c.cols)))
                cols.append(np.tile(c.cols, len(c.cols)))
                vals.append(blk.ravel())
            self._cache["sparse"] = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.N, self.N)
            )
        return self._cache["sparse"]

    def to_dense(self):
        return self.to_sparse().toarray()

    def matvec(self, x):
        x = np.asarray(x, dtype=complex)
        out = self.sparse_part @ x
        for c in self.couplings:
            c.matvec(x, out)
        return out

    def dump(self, path):
        """Write the matrix as ``row col re im`` lines after an ``N nnz`` header."""
        A = self.to_sparse().tocoo()
        with open(path, "w") as fh:
            fh.write(f"{self.N} {A.nnz}\n")
            for r, c, v in zip(A.row, A.col, A.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def _batched_faces(faces, mesh, basis, alpha0, L, convention):
    """Stacked geometry, trial and test data of a batch of faces."""
    a = np.array([f.geometry.a for f in faces])
    b = np.array([f.geometry.b for f in faces])
    n = np.array([f.geometry.normal for f in faces])
    e1 = np.array([f.elements[0] for f in faces])
    e2 = np.array([f.elements[1] for f in faces])
    dirs = basis.spaces[0].directions
    k1, k2 = mesh.kappa[e1], mesh.kappa[e2]
    shifts = {1: (None, None), 2: (None, None)}
    if faces[0].kind is FaceKind.PERIODIC:
        if convention == "left":
            shifts[1] = (np.exp(1j * alpha0 * L), (L, 0.0))
        elif convention == "right":
            a = a - [L, 0.0]
            b = b - [L, 0.0]
            shifts[2] = (np.exp(-1j * alpha0 * L), (-L, 0.0))
        else:
            raise ValueError(f"unknown periodic convention {convention!r}")
    trial, test = {}, {}
    for side, k in ((1, k1), (2, k2)):
        w = k[:, None, None] * dirs[None]
        v = np.conj(k)[:, None, None] * dirs[None]
        trial[side] = (w, _side_factor(w, *shifts[side]))
        test[side] = (v, _side_factor(v, *shifts[side]))
    return a, b, n, trial, test, FluxParameters.xi(k1, k2), e1, e2


def assemble_system(mesh, basis, ladder, flux, config, convention="left"):
    """Assemble ``A[j, l] = A_h(phi_l, phi_j)`` and ``rhs[j] = l_h(phi_j)``.

    Faces are processed in the mesh's deterministic order, so repeated
    assembly is bit-for-bit reproducible.
    """
    if len({s.p for s in basis.spaces}) != 1:
        raise NotImplementedError("assembly requires the same p on every element")
    p = basis.p
    rows, cols, vals = [], [], []
    local = np.arange(p)
    for kind in (FaceKind.INTERIOR, FaceKind.PERIODIC):
        faces = mesh.faces_of_kind(kind)
        for start in range(0, len(faces), CHUNK):
            batch = faces[start:start + CHUNK]
            a, b, n, trial, test, xi, e1, e2 = _batched_faces(batch, mesh, basis, ladder.alpha0, ladder.L, convention)
            blocks = _interior_blocks(a, b, n, trial, test, xi, flux)
            elem = {1: e1, 2: e2}
            for (t, s), blk in blocks.items():
                r = basis.offsets[elem[t]][:, None, None] + local[None, :, None]
                c = basis.offsets[elem[s]][:, None, None] + local[None, None, :]
                rows.append(np.broadcast_to(r, blk.shape).ravel())
                cols.append(np.broadcast_to(c, blk.shape).ravel())
                vals.append(blk.ravel())
    for face in mesh.faces_of_kind(FaceKind.DIRICHLET):
        e = face.elements[0]
        idx = basis.indices(e)
        blk = assemble_dirichlet_face(face, basis.spaces[e], flux)
        rows.append(np.repeat(idx, p))
        cols.append(np.tile(idx, p))
        vals.append(blk.ravel())
    couplings = {}
    for boundary in ("top", "bottom"):
        r, c, v, coupling = assemble_dtn_boundary(mesh, basis, ladder, flux, boundary)
        rows += r
        cols += c
        vals += v
        couplings[boundary] = coupling
    if rows:
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(basis.N, basis.N)
        )
    else:
        A = sp.csr_matrix((basis.N, basis.N), dtype=complex)
    A.sum_duplicates()
    rhs = assemble_rhs(mesh, basis, ladder, flux, config)
    return TdgSystem(basis.N, A, couplings["top"], couplings["bottom"], rhs, ladder.M)
