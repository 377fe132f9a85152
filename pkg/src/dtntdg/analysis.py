"""Error norms, diffraction efficiencies, convergence studies and the
extended-domain consistency check.

Output is numeric only (tables and CSV); figures live in ``plotting``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import trace_fourier_coeffs
from .errors import DegenerateIncidence, DomainError
from .geometry import FaceKind
from .solver import DiscreteSolution, solve_problem

CSV_HEADER = ("sweep", "l2_rel", "h1_rel", "cond", "seconds")


# ---------------------------------------------------------------- quadrature

def _gauss01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def duffy_quadrature(triangle, order=15):
    """Collapsed tensor Gauss rule on a triangle.

    The unit square is mapped by ``(u, t) -> (u (1 - t), u t)`` onto the
    reference triangle (Jacobian ``u``), then affinely onto ``triangle``.
    Returns ``(nodes, weights)`` with ``order**2`` points; weights are
    positive and sum to the area.
    """
    if order < 1:
        raise DomainError("quadrature order must be at least 1")
    T = np.asarray(triangle, dtype=float)
    g, w = _gauss01(order)
    U, Tt = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w) * U
    s, r = (U * (1 - Tt)).ravel(), (U * Tt).ravel()
    e1, e2 = T[1] - T[0], T[2] - T[0]
    jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
    nodes = T[0] + s[:, None] * e1 + r[:, None] * e2
    return nodes, W.ravel() * jac


def element_quadrature(mesh, order=15):
    """Nodes, weights and element ids covering the whole mesh.

    Non-triangular convex elements are fan-triangulated from the centroid.
    """
    nodes, weights, elems = [], [], []
    for e in range(mesh.n_elements):
        P = mesh.polygon(e)
        tris = [P] if len(P) == 3 else [np.array([P.mean(axis=0), P[i], P[(i + 1) % len(P)]]) for i in range(len(P))]
        for T in tris:
            x, w = duffy_quadrature(T, order)
            nodes.append(x)
            weights.append(w)
            elems.append(np.full(len(w), e))
    return np.vstack(nodes), np.concatenate(weights), np.concatenate(elems)


# -------------------------------------------------------------- error norms

@dataclass(frozen=True)
class ErrorReport:
    l2_abs: float
    l2_rel: float
    h1_abs: float
    h1_rel: float
    quad_order: int
    reference: str = "oracle"


def _evaluate(field_, x, elems, mesh):
    if isinstance(field_, DiscreteSolution) and field_.mesh is mesh:
        return field_.evaluate(x, elems)
    if isinstance(field_, DiscreteSolution):
        return field_.evaluate(x)
    return field_.value(x), field_.gradient(x)


def error_norms(sol, ref, mesh=None, quad_order=15, reference="oracle"):
    """Absolute and relative L2 and H1 errors of ``sol`` against ``ref``.

    Both arguments are fields (a :class:`DiscreteSolution` or an oracle with
    ``value``/``gradient``).  The H1 norm includes the L2 part; relative
    errors divide by the corresponding norm of ``ref``.
    """
    mesh = mesh if mesh is not None else sol.mesh
    x, w, elems = element_quadrature(mesh, quad_order)
    u, gu = _evaluate(sol, x, elems, mesh)
    r, gr = _evaluate(ref, x, elems, mesh)
    l2 = float(np.sum(w * np.abs(u - r) ** 2))
    semi = float(np.sum(w * np.sum(np.abs(gu - gr) ** 2, axis=1)))
    n2 = float(np.sum(w * np.abs(r) ** 2))
    nsemi = float(np.sum(w * np.sum(np.abs(gr) ** 2, axis=1)))
    l2_abs, h1_abs = math.sqrt(l2), math.sqrt(l2 + semi)
    l2_ref, h1_ref = math.sqrt(n2), math.sqrt(n2 + nsemi)
    return ErrorReport(
        l2_abs, l2_abs / l2_ref if l2_ref else math.inf,
        h1_abs, h1_abs / h1_ref if h1_ref else math.inf,
        quad_order, reference,
    )


# ------------------------------------------------------------ efficiencies

@dataclass(frozen=True, eq=False)
class Efficiencies:
    """Reflected and transmitted efficiencies per propagating order."""

    orders: np.ndarray
    reflected: np.ndarray
    transmitted: np.ndarray

    @property
    def total(self):
        return float(self.reflected.sum() + self.transmitted.sum())

    def as_dict(self):
        return {"refl": dict(zip(self.orders.tolist(), self.reflected)),
                "trans": dict(zip(self.orders.tolist(), self.transmitted)),
                "total": self.total}


def boundary_trace_coeffs(sol, ladder, boundary):
    """Fourier coefficients ``u_n`` of the discrete solution on ``x2 = +-H``."""
    kind = FaceKind.TOP if boundary == "top" else FaceKind.BOTTOM
    out = np.zeros(2 * ladder.M + 1, dtype=complex)
    for face in sol.mesh.faces_of_kind(kind):
        e = face.elements[0]
        out += trace_fourier_coeffs(sol.basis.spaces[e], face, ladder) @ sol.coeffs[sol.basis.slice(e)]
    return out


def diffraction_efficiencies(sol, ladder=None):
    """Energy carried by each propagating order, normalised by the incidence.

    ``e_n^refl = Re(beta_n+) / beta_0 |u_n^scat(H)|^2`` and
    ``e_n^trans = Re(beta_n-) / beta_0 |u_n(-H)|^2`` over the orders with
    ``Re beta_n > 0``.  Without loss the total is one.

    Raises
    ------
    DegenerateIncidence
        At grazing incidence (``beta_0 = 0``).
    """
    ladder = ladder or sol.ladder
    config = sol.config
    b0 = config.beta0
    if b0 == 0:
        raise DegenerateIncidence("grazing incidence carries no energy flux")
    top = boundary_trace_coeffs(sol, ladder, "top")
    top[ladder.M] -= np.exp(-1j * b0 * config.H)
    bottom = boundary_trace_coeffs(sol, ladder, "bottom")
    bp, bm = ladder.betas_plus, ladder.betas_minus
    refl = np.where(bp.real > 0, bp.real / b0 * np.abs(top) ** 2, 0.0)
    trans = np.where(bm.real > 0, bm.real / b0 * np.abs(bottom) ** 2, 0.0)
    return Efficiencies(ladder.orders, refl, trans)


# -------------------------------------------------------------- convergence

@dataclass(frozen=True)
class ConvergenceRow:
    value: float
    l2_rel: float
    h1_rel: float
    cond: float
    seconds: float

    def csv_fields(self):
        return [repr(self.value), f"{self.l2_rel:.10e}", f"{self.h1_rel:.10e}", f"{self.cond:.6e}", f"{self.seconds:.4f}"]


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    sweep: str
    rows: tuple
    plateau: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [r.value for r in self.rows]
        diffs = np.diff(vals)
        if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise DomainError("sweep values must be strictly monotone")

    @property
    def values(self):
        return np.array([r.value for r in self.rows])

    @property
    def l2(self):
        return np.array([r.l2_rel for r in self.rows])

    @property
    def h1(self):
        return np.array([r.h1_rel for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow(r.csv_fields())

    @classmethod
    def from_csv(cls, path, sweep="p"):
        with open(path) as fh:
            reader = csv.DictReader(fh)
            rows = tuple(ConvergenceRow(float(r["sweep"]), float(r["l2_rel"]), float(r["h1_rel"]),
                                        float(r["cond"]), float(r["seconds"])) for r in reader)
        return cls(sweep, rows)


def detect_plateau(values, errors, rtol=0.05):
    """Start of the terminal flat stretch of an error curve.

    Returns the first sweep value whose error improves by less than ``rtol``
    on the previous one and after which no step improves by ``rtol`` or
    more, so that a temporary stall before the asymptotic decay is not
    mistaken for the plateau.  None when the curve never flattens.
    """
    flat = [errors[i] > (1 - rtol) * errors[i - 1] for i in range(1, len(values))]
    start = None
    for i in range(len(flat) - 1, -1, -1):
        if not flat[i]:
            break
        start = values[i + 1]
    return start


@dataclass
class ConvergenceStudy:
    """Description of a sweep.

    Parameters
    ----------
    config : ProblemConfig
        Base configuration; for ``theta`` sweeps the angle is overridden.
    mesh_factory : callable
        ``mesh_factory(config, h) -> Mesh``.
    sweep : {"p", "M", "h", "theta"}
    values : sequence
        Sweep values, strictly monotone.
    p, M, h : fixed parameters for the non-swept variables (``M=None``
        selects ``ceil(M*) + 1``).
    oracle : callable, optional
        ``oracle(config) -> field``.  When absent a refined discrete solution
        with ``p_ref`` (and ``M_ref``) is used as reference.
    """

    config: object
    mesh_factory: object
    sweep: str
    values: tuple
    p: int = 10
    M: int | None = None
    h: float = 1.0
    oracle: object = None
    p_ref: int | None = None
    M_ref: int | None = None
    quad_order: int = 15
    reference_file: str | None = None


def _reference_solution(study, config, mesh):
    p_ref = study.p_ref or (max(study.values) + 1 if study.sweep == "p" else study.p + 1)
    M_ref = study.M_ref if study.M_ref is not None else study.M
    if study.sweep == "M" and study.M_ref is None:
        M_ref = 2 * max(study.values)
    if study.reference_file:
        try:
            return load_reference(study.reference_file, config, mesh)
        except FileNotFoundError:
            pass
    ref = solve_problem(config, mesh, p_ref, M_ref)
    if study.reference_file:
        save_reference(study.reference_file, ref)
    return ref


def save_reference(path, sol):
    """Store a refined solution so later sweeps reuse it."""
    np.savez(path, coeffs=sol.coeffs, p=sol.basis.p, rotation=sol.basis.rotation,
             M=sol.ladder.M if sol.ladder else -1, n_elements=sol.mesh.n_elements)


def load_reference(path, config, mesh):
    from .basis import GlobalBasis

    data = np.load(path if str(path).endswith(".npz") else f"{path}.npz")
    if int(data["n_elements"]) != mesh.n_elements:
        raise DomainError("stored reference belongs to a different mesh")
    basis = GlobalBasis(mesh, int(data["p"]), float(data["rotation"]))
    return DiscreteSolution(data["coeffs"], basis, mesh, config)


def run_convergence(study, progress=None):
    """Assemble, solve and measure for every sweep value."""
    rows = []
    fixed_mesh = None if study.sweep == "h" else study.mesh_factory(study.config, study.h)
    shared_ref = None
    for value in study.values:
        config = study.config
        if study.sweep == "theta":
            config = config.with_(theta=float(value))
        mesh = fixed_mesh if fixed_mesh is not None else study.mesh_factory(config, float(value))
        p = int(value) if study.sweep == "p" else study.p
        M = int(value) if study.sweep == "M" else study.M
        t0 = time.perf_counter()
        sol = solve_problem(config, mesh, p, M)
        seconds = time.perf_counter() - t0
        if study.oracle is not None:
            ref = study.oracle(config)
            kind = "oracle"
        else:
            if shared_ref is None or study.sweep in ("h", "theta"):
                shared_ref = _reference_solution(study, config, mesh)
            ref = shared_ref
            kind = "refined"
        err = error_norms(sol, ref, mesh, study.quad_order, kind)
        rows.append(ConvergenceRow(float(value), err.l2_rel, err.h1_rel, sol.condition_estimate, seconds))
        if progress:
            progress(rows[-1])
    table_rows = tuple(rows)
    plateau = None
    if study.sweep == "M":
        plateau = detect_plateau([r.value for r in rows], [r.l2_rel for r in rows])
    return ConvergenceTable(study.sweep, table_rows, plateau)


# ----------------------------------------------------------- extended check

@dataclass(frozen=True)
class ExtendedReport:
    factor: int
    l2_rel: float
    h1_rel: float
    n_base: int
    n_extended: int


class _QuasiPeriodicExtension:
    """Base solution continued by ``u(x1 + L, x2) = exp(i alpha0 L) u(x1, x2)``."""

    def __init__(self, sol, n_base):
        self.sol = sol
        self.n_base = n_base
        self.L = sol.mesh.L
        self.alpha0 = sol.config.alpha0

    def evaluate(self, x, elems):
        tile = elems // self.n_base
        base = elems % self.n_base
        shifted = x - np.column_stack([tile * self.L, np.zeros(len(x))])
        u, g = self.sol.evaluate(shifted, base)
        phase = np.exp(1j * self.alpha0 * self.L * tile)
        return u * phase, g * phase[:, None]


def extended_domain_check(config, mesh, factor, p, M=None, quad_order=15):
    """Compare the solution on a ``factor``-period cell with the quasi-periodic
    extension of the one-period solution.

    The wide cell uses the tiled mesh and ``factor * M`` Fourier modes, so
    that its ladder contains every order of the base ladder.  Its extra
    orders can hit a Rayleigh-Wood anomaly that the base cell avoids; for
    real permittivities this is reported with a ``RayleighWoodWarning``.
    """
    if factor < 2:
        raise DomainError("factor must be at least 2")
    from .spectral import auto_truncation, rayleigh_wood_distance

    M = auto_truncation(config) if M is None else M
    base = solve_problem(config, mesh, p, M)
    wide_cfg = config.tiled(factor)
    if config.is_lossless:
        rayleigh_wood_distance(wide_cfg)
    wide_mesh = mesh.tiled(factor, wide_cfg)
    wide = solve_problem(wide_cfg, wide_mesh, p, factor * M)
    ext = _QuasiPeriodicExtension(base, mesh.n_elements)
    x, w, elems = element_quadrature(wide_mesh, quad_order)
    u, gu = wide.evaluate(x, elems)
    r, gr = ext.evaluate(x, elems)
    l2 = np.sum(w * np.abs(u - r) ** 2)
    semi = np.sum(w * np.sum(np.abs(gu - gr) ** 2, axis=1))
    n2 = np.sum(w * np.abs(r) ** 2)
    nsemi = np.sum(w * np.sum(np.abs(gr) ** 2, axis=1))
    return ExtendedReport(factor, float(math.sqrt(l2 / n2)), float(math.sqrt((l2 + semi) / (n2 + nsemi))),
                          base.basis.N, wide.basis.N)
