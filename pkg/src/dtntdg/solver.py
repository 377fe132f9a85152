"""Direct solution of the TDG system and evaluation of the discrete field."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from matplotlib.path import Path

from .errors import IllConditionedWarning, InvalidInput, SingularSystem

DENSE_LIMIT = 4000
COND_WARN = 1e14
LOCATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Coefficients of the TDG solution together with their basis and mesh.

    Calling the object evaluates the field; :meth:`gradient` evaluates its
    gradient.  Both use only the block of the containing element.
    """

    coeffs: np.ndarray
    basis: object
    mesh: object
    config: object = None
    condition_estimate: float = float("nan")
    backward_error: float = float("nan")
    system: object = field(default=None, repr=False)
    ladder: object = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.coeffs) != self.basis.N:
            raise InvalidInput("coefficient vector does not match the basis size")

    def locate(self, points):
        return locate_points(self.mesh, points)

    def evaluate(self, points, elements=None):
        """Values and gradients; points outside the mesh give NaN."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if elements is None:
            elements = self.locate(x)
        u = np.full(len(x), np.nan + 0j)
        g = np.full((len(x), 2), np.nan + 0j)
        for e in np.unique(elements[elements >= 0]):
            sel = elements == e
            space = self.basis.spaces[e]
            c = self.coeffs[self.basis.slice(e)]
            vals = space.values(x[sel]) * c[None, :]
            u[sel] = vals.sum(axis=1)
            g[sel] = 1j * vals @ space.wavevectors
        return u, g

    def __call__(self, points):
        return self.evaluate(points)[0]

    def value(self, points):
        return self.evaluate(points)[0]

    def gradient(self, points):
        return self.evaluate(points)[1]


def locate_points(mesh, points, tol=LOCATE_TOL):
    """Containing element of each point (lowest id on shared faces), -1 outside."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(x), -1, dtype=np.int64)
    lo = np.array([mesh.polygon(e).min(axis=0) for e in range(mesh.n_elements)])
    hi = np.array([mesh.polygon(e).max(axis=0) for e in range(mesh.n_elements)])
    pad = tol * max(mesh.L, mesh.H)
    for e in range(mesh.n_elements):
        todo = out < 0
        box = todo & np.all(x >= lo[e] - pad, axis=1) & np.all(x <= hi[e] + pad, axis=1)
        if not np.any(box):
            continue
        idx = np.nonzero(box)[0]
        P = mesh.polygon(e)
        # element polygons are counter-clockwise, so a positive radius grows them
        inside = Path(P).contains_points(x[idx], radius=2 * pad)
        if not np.all(inside):
            inside |= Path(P[::-1]).contains_points(x[idx], radius=-2 * pad)
        out[idx[inside]] = e
    return out


def _check_finite(*arrays):
    for arr in arrays:
        data = arr.data if hasattr(arr, "data") and not isinstance(arr, np.ndarray) else arr
        if not np.all(np.isfinite(data)):
            raise InvalidInput("system contains NaN or Inf")


def solve_dense(A, rhs):
    """LU solve with a 1-norm condition estimate."""
    _check_finite(A, rhs)
    anorm = np.linalg.norm(A, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu, piv = sla.lu_factor(A, check_finite=False)
        except (sla.LinAlgError, sla.LinAlgWarning) as exc:
            raise SingularSystem(str(exc)) from exc
    if np.any(np.abs(np.diag(lu)) == 0):
        raise SingularSystem("exactly singular factorization")
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    x = sla.lu_solve((lu, piv), rhs, check_finite=False)
    return x, float(cond)


def solve_sparse(A, rhs):
    """Sparse LU solve; the condition number is estimated with ``onenormest``."""
    _check_finite(A, rhs)
    A = A.tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("factorization produced non-finite values")
    inv = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="H"), dtype=complex)
    # onenormest draws from the global generator; fix it so repeated runs agree
    state = np.random.get_state()
    np.random.seed(0)
    try:
        cond = spla.onenormest(A) * spla.onenormest(inv)
    except Exception:  # estimator failure is not fatal
        cond = float("nan")
    finally:
        np.random.set_state(state)
    return x, float(cond)


def solve(system, basis=None, mesh=None, config=None, dense=None):
    """Solve ``A c = rhs``.

    Dense LU for ``N <= 4000`` (or when ``dense`` is true), sparse LU above.
    Emits :class:`IllConditionedWarning` when the condition estimate exceeds
    ``1e14``.

    Raises
    ------
    InvalidInput
        Non-finite matrix or right-hand side.
    SingularSystem
        Exactly singular factorization.
    """
    if dense is None:
        dense = system.N <= DENSE_LIMIT
    rhs = np.asarray(system.rhs, dtype=complex)
    if dense:
        A = system.to_dense()
        x, cond = solve_dense(A, rhs)
        anorm = np.linalg.norm(A, 1)
    else:
        A = system.to_sparse()
        x, cond = solve_sparse(A, rhs)
        anorm = spla.norm(A, 1)
    if cond > COND_WARN:
        warnings.warn(f"condition estimate {cond:.3e} exceeds {COND_WARN:.0e}", IllConditionedWarning, stacklevel=2)
    res = np.linalg.norm(A @ x - rhs, 1)
    denom = anorm * np.linalg.norm(x, 1) + np.linalg.norm(rhs, 1)
    berr = float(res / denom) if denom > 0 else 0.0
    if basis is None:
        return x, cond, berr
    return DiscreteSolution(x, basis, mesh, config, cond, berr)


def export_field(sol, path, nx=200, ny=200, bounds=None):
    """Evaluate on a regular grid and write ``x1 x2 re im abs`` rows.

    The first line records the grid metadata as a comment.
    """
    mesh = sol.mesh
    x0, x1, y0, y1 = bounds or (0.0, mesh.L, -mesh.H, mesh.H)
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    u = sol(pts)
    with open(path, "w") as fh:
        fh.write(f"# grid nx={nx} ny={ny} x1=[{x0!r},{x1!r}] x2=[{y0!r},{y1!r}]\n")
        fh.write("x1 x2 re im abs\n")
        for (a, b), v in zip(pts, u):
            fh.write(f"{a:.12g} {b:.12g} {v.real:.12g} {v.imag:.12g} {abs(v):.12g}\n")
    return pts, u


def solve_problem(config, mesh, p, M=None, rotation=0.0, convention="left", flux=None, dense=None):
    """Assemble and solve on a given mesh.

    ``M`` defaults to ``ceil(M*) + 1``, which requires a real ``eps_minus``.

    Returns the :class:`DiscreteSolution` with the assembled system and the
    spectral ladder attached.
    """
    from .assembly import FluxParameters, assemble_system
    from .basis import GlobalBasis
    from .spectral import auto_truncation, build_ladder

    if M is None:
        M = auto_truncation(config)
    basis = GlobalBasis(mesh, p, rotation)
    ladder = build_ladder(config, M)
    flux = flux or FluxParameters.from_config(config)
    system = assemble_system(mesh, basis, ladder, flux, config, convention)
    sol = solve(system, basis, mesh, config, dense=dense)
    return replace(sol, system=system, ladder=ladder)

