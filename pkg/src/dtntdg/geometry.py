"""Periodic cell geometry, meshes of convex polygons and face classification.

The computational cell is ``(0, L) x (-H, H)`` minus the closure of the
Dirichlet obstacles.  Elements carry a constant permittivity; faces are
classified as interior, periodic (left/right identified), Dirichlet, top
(``x2 = H``) or bottom (``x2 = -H``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FilePath

import numpy as np
from matplotlib.path import Path

from .errors import GeometryError, MaterialStraddle, PeriodicityViolation

PAIRING_RTOL = 1e-9


def rectangle(x0, x1, y0, y1):
    """Counter-clockwise vertex array of an axis-aligned rectangle."""
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def polygon_area(poly):
    """Signed area (positive for counter-clockwise vertex order)."""
    x, y = np.asarray(poly, dtype=float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ccw(poly):
    poly = np.asarray(poly, dtype=float)
    return poly if polygon_area(poly) > 0 else poly[::-1].copy()


def _contains(poly, pts):
    return Path(poly).contains_points(np.atleast_2d(pts))


@dataclass(frozen=True, eq=False)
class Region:
    """Polygonal subregion with constant relative permittivity."""

    polygon: np.ndarray
    eps: complex

    def __post_init__(self):
        object.__setattr__(self, "polygon", _ccw(self.polygon))
        object.__setattr__(self, "eps", complex(self.eps))
        if self.eps.real <= 0 or self.eps.imag < 0:
            raise GeometryError(f"permittivity {self.eps} needs Re > 0 and Im >= 0")


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Physical setup of one grating problem.

    Parameters
    ----------
    L, H : float
        Period and half-height of the truncated cell.
    k : float
        Free-space wavenumber.
    theta : float
        Incidence angle in ``[-pi, 0]``.
    eps_plus, eps_minus : complex
        Permittivity above ``x2 = H`` (real, positive) and below ``x2 = -H``.
    regions : sequence of Region
        Material subregions inside the cell.  Later regions take precedence
        over earlier ones; points outside every region get ``eps_plus``.
    obstacles : sequence of polygons
        Impenetrable (Dirichlet) obstacles, strictly inside ``|x2| < H``.
    flux_params : (a, b, d)
        Numerical flux coefficients.
    """

    L: float
    H: float
    k: float
    theta: float
    eps_plus: float = 1.0
    eps_minus: complex = 1.0
    regions: tuple = ()
    obstacles: tuple = ()
    flux_params: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.L <= 0 or self.H <= 0 or self.k <= 0:
            raise GeometryError("L, H and k must be positive")
        if not -math.pi - 1e-14 <= self.theta <= 1e-14:
            raise GeometryError(f"theta={self.theta} outside [-pi, 0]")
        eps_plus = complex(self.eps_plus)
        if eps_plus.imag != 0 or eps_plus.real <= 0:
            raise GeometryError("eps_plus must be real and positive")
        object.__setattr__(self, "eps_plus", eps_plus.real)
        eps_minus = complex(self.eps_minus)
        if eps_minus.real <= 0 or eps_minus.imag < 0:
            raise GeometryError("eps_minus needs Re > 0 and Im >= 0")
        object.__setattr__(self, "eps_minus", eps_minus)
        regions = tuple(r if isinstance(r, Region) else Region(*r) for r in self.regions)
        object.__setattr__(self, "regions", regions)
        obstacles = tuple(_ccw(o) for o in self.obstacles)
        object.__setattr__(self, "obstacles", obstacles)
        for obs in obstacles:
            if np.any(np.abs(obs[:, 1]) >= self.H):
                raise GeometryError("obstacles must lie strictly inside |x2| < H")
        a, b, d = (float(v) for v in self.flux_params)
        if min(a, b, d) <= 0:
            raise GeometryError("flux parameters a, b, d must be positive")
        object.__setattr__(self, "flux_params", (a, b, d))

    @property
    def kappa_plus(self):
        return self.k * math.sqrt(self.eps_plus)

    @property
    def kappa_minus(self):
        return self.k * np.sqrt(self.eps_minus)

    @property
    def alpha0(self):
        return self.kappa_plus * math.cos(self.theta)

    @property
    def beta0(self):
        # exact zero at grazing incidence, where sin(-pi) rounds to 1e-16
        if self.theta in (0.0, -math.pi):
            return 0.0
        return -self.kappa_plus * math.sin(self.theta)

    @property
    def is_lossless(self):
        return self.eps_minus.imag == 0 and all(r.eps.imag == 0 for r in self.regions)

    def with_(self, **changes):
        return replace(self, **changes)

    def eps_at(self, points):
        """Permittivity at each point (obstacle interiors are not excluded)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), complex(self.eps_plus))
        for region in self.regions:
            out[_contains(region.polygon, pts)] = region.eps
        out[pts[:, 1] > self.H] = self.eps_plus
        out[pts[:, 1] < -self.H] = self.eps_minus
        return out

    def in_obstacle(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for obs in self.obstacles:
            inside |= _contains(obs, pts)
        return inside

    def tiled(self, factor):
        """The same physics on a cell ``factor`` periods wide."""
        shifts = [np.array([j * self.L, 0.0]) for j in range(factor)]
        regions = tuple(Region(r.polygon + s, r.eps) for s in shifts for r in self.regions)
        obstacles = tuple(o + s for s in shifts for o in self.obstacles)
        return replace(self, L=factor * self.L, regions=regions, obstacles=obstacles)


class FaceKind(enum.Enum):
    INTERIOR = "interior"
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"
    TOP = "top"
    BOTTOM = "bottom"


@dataclass(frozen=True, eq=False)
class FaceGeometry:
    """Segment endpoints and unit normal.

    Interior normals point from the first into the second element; boundary
    normals point out of the domain.
    """

    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray

    @property
    def length(self):
        return float(np.hypot(*(self.b - self.a)))

    @property
    def midpoint(self):
        return 0.5 * (self.a + self.b)


@dataclass(frozen=True, eq=False)
class Face:
    """A mesh face.

    For periodic faces ``elements = (left, right)``, ``vertices`` are the
    endpoints on ``x1 = L`` and ``partner`` the matching ones on ``x1 = 0``.
    The stored geometry lies on ``x1 = L`` with normal ``(-1, 0)``.
    """

    kind: FaceKind
    elements: tuple
    vertices: tuple
    geometry: FaceGeometry
    partner: tuple | None = None


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: tuple
    eps: np.ndarray
    kappa: np.ndarray
    faces: tuple
    L: float
    H: float
    element_faces: tuple = field(repr=False)

    @property
    def n_elements(self):
        return len(self.elements)

    def polygon(self, e):
        return self.vertices[self.elements[e]]

    def areas(self):
        return np.array([polygon_area(self.polygon(e)) for e in range(self.n_elements)])

    def centroids(self):
        return np.array([self.polygon(e).mean(axis=0) for e in range(self.n_elements)])

    def diameters(self):
        out = []
        for e in range(self.n_elements):
            P = self.polygon(e)
            out.append(np.max(np.hypot(*(P[:, None, :] - P[None, :, :]).transpose(2, 0, 1))))
        return np.array(out)

    def faces_of_kind(self, kind):
        return [f for f in self.faces if f.kind is kind]

    @property
    def periodic_pairs(self):
        return [(f.partner, f.vertices) for f in self.faces if f.kind is FaceKind.PERIODIC]

    def boundary_elements(self, kind):
        """Element ids owning a face of the given boundary kind, in face order."""
        return [f.elements[0] for f in self.faces if f.kind is kind]

    def tiled(self, factor, config):
        """Copy of the mesh repeated ``factor`` times along x1.

        ``config`` describes the widened cell (see ``ProblemConfig.tiled``).
        """
        nv = len(self.vertices)
        verts = np.vstack([self.vertices + [j * self.L, 0.0] for j in range(factor)])
        elems = [el + j * nv for j in range(factor) for el in self.elements]
        eps = np.tile(self.eps, factor)
        # merge duplicated vertices on the internal copies of x1 = L
        key = np.round(verts / (PAIRING_RTOL * self.L)).astype(np.int64)
        _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(first)
        remap = np.empty_like(order)
        remap[order] = np.arange(len(order))
        verts = verts[first[order]]
        elems = [remap[inverse[el]] for el in elems]
        return build_mesh(verts, elems, eps, config)


def _convex_ccw(poly_idx, vertices):
    P = vertices[poly_idx]
    if polygon_area(P) < 0:
        poly_idx = poly_idx[::-1]
        P = P[::-1]
    e1 = np.roll(P, -1, axis=0) - P
    e2 = np.roll(e1, -1, axis=0)
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.max(np.abs(e1)) ** 2
    if np.any(cross <= 1e-12 * scale):
        raise GeometryError(f"element {poly_idx.tolist()} is not strictly convex")
    return np.asarray(poly_idx, dtype=np.int64)


def _outward_normal(a, b):
    t = b - a
    n = np.array([t[1], -t[0]])
    return n / np.hypot(*n)


def _on_polygon_boundary(poly, point, tol):
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        t = b - a
        s = np.clip(np.dot(point - a, t) / np.dot(t, t), 0.0, 1.0)
        if np.hypot(*(a + s * t - point)) < tol:
            return True
    return False


def _assemble_mesh(vertices, elements, eps, L, H, k, obstacles):
    tol = PAIRING_RTOL * L
    vertices = np.array(vertices, dtype=float)
    for target, col in ((0.0, 0), (L, 0), (H, 1), (-H, 1)):
        vertices[np.abs(vertices[:, col] - target) < tol, col] = target
    if np.any(vertices[:, 0] < -tol) or np.any(vertices[:, 0] > L + tol) or np.any(np.abs(vertices[:, 1]) > H + tol):
        raise GeometryError("vertices outside the periodic cell")
    elements = tuple(_convex_ccw(np.asarray(el, dtype=np.int64), vertices) for el in elements)
    eps = np.asarray(eps, dtype=complex)
    if len(eps) != len(elements):
        raise GeometryError("one permittivity per element required")

    edge_map = {}
    for e, el in enumerate(elements):
        for i in range(len(el)):
            v0, v1 = int(el[i]), int(el[(i + 1) % len(el)])
            edge_map.setdefault((min(v0, v1), max(v0, v1)), []).append((e, v0, v1))

    faces, left, right = [], [], []
    for (u, w), owners in edge_map.items():
        if len(owners) > 2:
            raise GeometryError(f"edge {(u, w)} shared by more than two elements")
        e1, v0, v1 = owners[0]
        a, b = vertices[v0], vertices[v1]
        n = _outward_normal(a, b)
        if len(owners) == 2:
            faces.append(Face(FaceKind.INTERIOR, (e1, owners[1][0]), (v0, v1), FaceGeometry(a, b, n)))
        elif a[1] == H and b[1] == H:
            faces.append(Face(FaceKind.TOP, (e1,), (v0, v1), FaceGeometry(a, b, np.array([0.0, 1.0]))))
        elif a[1] == -H and b[1] == -H:
            faces.append(Face(FaceKind.BOTTOM, (e1,), (v0, v1), FaceGeometry(a, b, np.array([0.0, -1.0]))))
        elif a[0] == 0.0 and b[0] == 0.0:
            left.append((e1, v0, v1))
        elif a[0] == L and b[0] == L:
            right.append((e1, v0, v1))
        else:
            if obstacles is not None:
                mid = 0.5 * (a + b)
                if not any(_on_polygon_boundary(o, mid, 1e-7 * L) for o in obstacles):
                    raise GeometryError(f"unmatched face {(u, w)} is not on an obstacle boundary")
            faces.append(Face(FaceKind.DIRICHLET, (e1,), (v0, v1), FaceGeometry(a, b, n)))

    def span(item):
        _, v0, v1 = item
        y0, y1 = vertices[v0, 1], vertices[v1, 1]
        return (min(y0, y1), max(y0, y1))

    right_by_span = {}
    for item in right:
        lo, hi = span(item)
        right_by_span[(round(lo / tol), round(hi / tol))] = item
    if len(right_by_span) != len(right) or len(left) != len(right):
        raise PeriodicityViolation(f"{len(left)} left faces vs {len(right)} right faces")
    for item in sorted(left, key=span):
        lo, hi = span(item)
        match = right_by_span.pop((round(lo / tol), round(hi / tol)), None)
        if match is None:
            raise PeriodicityViolation(f"left face x2 in [{lo}, {hi}] has no partner on x1 = L")
        el, lv0, lv1 = item
        er, rv0, rv1 = match
        geom = FaceGeometry(vertices[rv0], vertices[rv1], np.array([-1.0, 0.0]))
        faces.append(Face(FaceKind.PERIODIC, (el, er), (rv0, rv1), geom, partner=(lv0, lv1)))

    order = {FaceKind.INTERIOR: 0, FaceKind.PERIODIC: 1, FaceKind.DIRICHLET: 2, FaceKind.TOP: 3, FaceKind.BOTTOM: 4}
    faces.sort(key=lambda f: (order[f.kind], f.elements, tuple(sorted(f.vertices))))
    element_faces = [[] for _ in elements]
    for i, f in enumerate(faces):
        for e in f.elements:
            element_faces[e].append(i)
    return Mesh(
        vertices=vertices,
        elements=elements,
        eps=eps,
        kappa=k * np.sqrt(eps),
        faces=tuple(faces),
        L=float(L),
        H=float(H),
        element_faces=tuple(tuple(x) for x in element_faces),
    )


def build_mesh(vertices, elements, eps, config):
    """Validate and classify a mesh against a problem configuration.

    Raises
    ------
    GeometryError
        Non-convex element, element inside an obstacle, material on the
        artificial boundaries inconsistent with ``eps_plus``/``eps_minus``.
    MaterialStraddle
        An element crosses a region interface.
    PeriodicityViolation
        Left and right boundary faces do not match.
    """
    mesh = _assemble_mesh(vertices, elements, eps, config.L, config.H, config.k, config.obstacles)
    cents = mesh.centroids()
    if config.obstacles and np.any(config.in_obstacle(cents)):
        raise GeometryError("mesh contains elements inside an obstacle")
    if config.regions:
        for e in range(mesh.n_elements):
            P = mesh.polygon(e)
            c = cents[e]
            mids = 0.5 * (P + np.roll(P, -1, axis=0))
            samples = np.vstack([c, c + (1 - 1e-6) * (P - c), c + (1 - 1e-6) * (mids - c)])
            vals = config.eps_at(samples)
            if np.any(np.abs(vals - vals[0]) > 1e-12 * abs(vals[0])):
                raise MaterialStraddle(f"element {e} straddles a material interface")
            if abs(vals[0] - mesh.eps[e]) > 1e-12 * abs(vals[0]):
                raise GeometryError(f"element {e}: permittivity {mesh.eps[e]} differs from configuration {vals[0]}")
    for kind, target in ((FaceKind.TOP, config.eps_plus), (FaceKind.BOTTOM, config.eps_minus)):
        for e in mesh.boundary_elements(kind):
            if abs(mesh.eps[e] - target) > 1e-12 * abs(target):
                raise GeometryError(f"element {e} on the {kind.value} boundary has eps {mesh.eps[e]}, expected {target}")
    return mesh


def _breakpoints(lo, hi, extra, h):
    pts = sorted({lo, hi, *[x for x in extra if lo < x < hi]})
    out = [pts[0]]
    for x0, x1 in zip(pts[:-1], pts[1:]):
        if x1 - x0 < 1e-12 * (hi - lo):
            continue
        n = max(1, math.ceil((x1 - x0) / h - 1e-9))
        out.extend(np.linspace(x0, x1, n + 1)[1:])
    return np.array(out)


def rectangle_mesh(config, h, x_breaks=(), y_breaks=()):
    """Structured triangulation of the cell for axis-aligned geometries.

    Grid lines pass through every region and obstacle vertex; each grid
    interval is split into ``ceil(length / h)`` equal parts and every
    rectangle into two triangles.  Rectangles inside an obstacle are dropped.
    """
    xs_extra = list(x_breaks) + [v for r in config.regions for v in r.polygon[:, 0]]
    ys_extra = list(y_breaks) + [v for r in config.regions for v in r.polygon[:, 1]]
    for o in config.obstacles:
        xs_extra += list(o[:, 0])
        ys_extra += list(o[:, 1])
    xs = _breakpoints(0.0, config.L, xs_extra, h)
    ys = _breakpoints(-config.H, config.H, ys_extra, h)
    nx = len(xs)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    elements = []
    for j in range(len(ys) - 1):
        for i in range(nx - 1):
            v00, v10 = j * nx + i, j * nx + i + 1
            v01, v11 = v00 + nx, v10 + nx
            centre = [[0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])]]
            if config.obstacles and config.in_obstacle(centre)[0]:
                continue
            elements += [[v00, v10, v11], [v00, v11, v01]]
    used = np.unique(np.concatenate(elements))
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    vertices = vertices[used]
    elements = [remap[np.array(el)] for el in elements]
    cents = np.array([vertices[el].mean(axis=0) for el in elements])
    mesh = build_mesh(vertices, elements, config.eps_at(cents), config)
    expected = 2 * config.H * config.L - sum(polygon_area(o) for o in config.obstacles)
    if abs(mesh.areas().sum() - expected) > 1e-10 * expected:
        raise GeometryError("obstacles must be axis-aligned rectangles for the structured generator")
    return mesh


# ---------------------------------------------------------------- mesh files

def read_mesh_file(path):
    """Parse a ``tdgmesh 1`` file.

    Returns ``(vertices, elements, region_ids, region_eps)``.
    """
    tokens = FilePath(path).read_text(encoding="utf-8").split()
    it = iter(tokens)

    def expect(word):
        got = next(it, None)
        if got != word:
            raise GeometryError(f"mesh file: expected '{word}', found '{got}'")

    try:
        expect("tdgmesh")
        expect("1")
        expect("vertices")
        nv = int(next(it))
        vertices = np.array([[float(next(it)), float(next(it))] for _ in range(nv)])
        expect("elements")
        ne = int(next(it))
        elements, region_ids = [], []
        for _ in range(ne):
            n = int(next(it))
            elements.append([int(next(it)) for _ in range(n)])
            region_ids.append(int(next(it)))
        expect("regions")
        nr = int(next(it))
        region_eps = {}
        for _ in range(nr):
            rid = int(next(it))
            region_eps[rid] = complex(float(next(it)), float(next(it)))
    except (StopIteration, ValueError) as exc:
        raise GeometryError(f"mesh file {path}: truncated or malformed ({exc})") from None
    for el in elements:
        if min(el) < 0 or max(el) >= nv:
            raise GeometryError(f"mesh file {path}: vertex index out of range in {el}")
    missing = set(region_ids) - set(region_eps)
    if missing:
        raise GeometryError(f"mesh file {path}: undefined regions {sorted(missing)}")
    return vertices, elements, region_ids, region_eps


def ingest_mesh(path, config):
    """Read a mesh file and classify it against ``config``."""
    vertices, elements, region_ids, region_eps = read_mesh_file(path)
    eps = [region_eps[r] for r in region_ids]
    return build_mesh(vertices, elements, eps, config)


def write_mesh(mesh, path):
    """Write ``mesh`` in the ``tdgmesh 1`` format (one region per distinct eps)."""
    values = []
    ids = []
    for e in mesh.eps:
        for i, v in enumerate(values):
            if v == e:
                ids.append(i)
                break
        else:
            values.append(e)
            ids.append(len(values) - 1)
    lines = ["tdgmesh 1", f"vertices {len(mesh.vertices)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"elements {mesh.n_elements}")
    for el, rid in zip(mesh.elements, ids):
        lines.append(" ".join(map(str, [len(el), *el.tolist(), rid])))
    lines.append(f"regions {len(values)}")
    lines += [f"{i} {float(v.real)!r} {float(v.imag)!r}" for i, v in enumerate(values)]
    FilePath(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------- non-trapping

@dataclass
class NonTrappingReport:
    satisfied: bool
    violations: list
    warnings: list
    monotonicity_applicable: bool = True


def check_non_trapping(config, n_lines=64):
    """Check the geometric/material non-trapping condition.

    Obstacle boundaries must satisfy ``x2 * n2 <= 0`` with ``n`` pointing
    into the obstacle, and ``eps(x1, .)`` must be non-decreasing along
    ``|x2|`` away from ``x2 = 0`` on every vertical line.  Lines are sampled
    at the midpoints between polygon vertex abscissae plus ``n_lines``
    uniform lines; along each line the permittivity is evaluated between
    consecutive interface crossings.
    """
    violations, warnings = [], []
    for i, obs in enumerate(config.obstacles):
        for a, b in zip(obs, np.roll(obs, -1, axis=0)):
            t = b - a
            n2 = t[0] / np.hypot(*t)  # inward normal of a ccw polygon is (-t2, t1)
            if max(a[1] * n2, b[1] * n2) > 1e-12 * config.H:
                violations.append(f"obstacle {i}: face {a.tolist()}-{b.tolist()} has x2*n2 > 0")

    eps_all = [config.eps_plus, config.eps_minus] + [r.eps for r in config.regions]
    applicable = all(complex(e).imag == 0 for e in eps_all)
    if not applicable:
        violations.append("complex permittivity: monotonicity condition not applicable")
    else:
        polys = [r.polygon for r in config.regions] + list(config.obstacles)
        xs = sorted({0.0, config.L, *[x for p in polys for x in p[:, 0] if 0 < x < config.L]})
        lines = [0.5 * (x0 + x1) for x0, x1 in zip(xs[:-1], xs[1:])]
        lines += list((np.arange(n_lines) + 0.5) * config.L / n_lines)
        for x1 in lines:
            cuts = {0.0, config.H, -config.H}
            for p in polys:
                for a, b in zip(p, np.roll(p, -1, axis=0)):
                    if (a[0] - x1) * (b[0] - x1) < 0:
                        cuts.add(a[1] + (x1 - a[0]) * (b[1] - a[1]) / (b[0] - a[0]))
            cuts = np.array(sorted(c for c in cuts if abs(c) <= config.H))
            cuts = np.concatenate([cuts, [config.H + 1.0, -config.H - 1.0]])
            cuts.sort()
            mids = 0.5 * (cuts[:-1] + cuts[1:])
            pts = np.column_stack([np.full_like(mids, x1), mids])
            keep = ~config.in_obstacle(pts)
            mids, eps = mids[keep], config.eps_at(pts[keep]).real
            up = eps[mids > 0]
            down = eps[mids < 0][::-1]
            for label, seq in (("upward", up), ("downward", down)):
                if np.any(np.diff(seq) < -1e-14 * np.max(seq)):
                    violations.append(f"x1={x1:.6g}: eps decreases {label} away from x2=0")
                    break
    if not config.obstacles and all(abs(complex(e) - eps_all[0]) == 0 for e in eps_all):
        warnings.append("trivial scattering: constant permittivity and no obstacle")
    return NonTrappingReport(not violations, violations, warnings, applicable)
