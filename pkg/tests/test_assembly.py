import math

import numpy as np
import pytest

import quadrature_reference as qr
from conftest import TWO_PI, exact_coefficients, jittered_mesh, two_layer_config
from dtntdg.assembly import (FluxParameters, assemble_dirichlet_face, assemble_interior_face, assemble_rhs,
                             assemble_system, boundary_local_block, trace_fourier_coeffs)
from dtntdg.basis import GlobalBasis, PlaneWaveSpace
from dtntdg.geometry import Face, FaceGeometry, FaceKind, ProblemConfig, rectangle, rectangle_mesh
from dtntdg.oracles import two_layer
from dtntdg.spectral import build_ladder

UWVF = FluxParameters()


def single_face(a, b, normal, kind=FaceKind.INTERIOR, elements=(0, 1)):
    return Face(kind, elements, (0, 1), FaceGeometry(np.asarray(a, float), np.asarray(b, float),
                                                       np.asarray(normal, float)))


# ------------------------------------------------------------ face blocks

def test_interior_same_direction_entry():
    d = np.array([[math.cos(0.7), math.sin(0.7)]])
    kappa = 3.0
    s = [PlaneWaveSpace(0, kappa, d), PlaneWaveSpace(1, kappa, d)]
    face = single_face([0.2, 0.1], [0.2, 1.6], [1.0, 0.0])
    blocks = assemble_interior_face(face, s, UWVF)
    dn = d[0] @ face.geometry.normal
    xi = kappa
    expected = (-1j * kappa * dn - 1j * UWVF.b / xi * kappa**2 * dn**2 - 1j * UWVF.a * xi) * 1.5
    assert blocks[(1, 1)][0, 0] == pytest.approx(expected, rel=1e-14)


def test_periodic_phase_integer_multiple():
    """With every translate phase equal to one the periodic block is an interior block."""
    L = TWO_PI
    dirs = np.array([[1.0, 0.0], [0.0, 1.0], [-0.5, math.sqrt(3) / 2]])
    kappa = 2.0  # kappa d1 L and alpha0 L are multiples of 2 pi
    s = [PlaneWaveSpace(0, kappa, dirs), PlaneWaveSpace(1, kappa, dirs)]
    periodic = single_face([L, 0.0], [L, 1.0], [-1.0, 0.0], kind=FaceKind.PERIODIC)
    interior = single_face([L, 0.0], [L, 1.0], [-1.0, 0.0])
    pb = assemble_interior_face(periodic, s, UWVF, alpha0=1.0, L=L)
    ib = assemble_interior_face(interior, s, UWVF)
    for key in pb:
        assert np.allclose(pb[key], ib[key], rtol=1e-13, atol=1e-13)


def test_dirichlet_entries():
    dirs = np.array([[0.0, 1.0], [0.0, -1.0]])
    kappa = 4.0
    space = PlaneWaveSpace(0, kappa, dirs)
    # outward normal (0, 1): d_1 . n = -1/2 would cancel a = 1/2; use a = 1 and d.n = -1
    face = single_face([0.0, 0.0], [0.8, 0.0], [0.0, 1.0], kind=FaceKind.DIRICHLET, elements=(0,))
    blk = assemble_dirichlet_face(face, space, FluxParameters(a=1.0))
    assert abs(blk[1, 1]) < 1e-15
    assert blk[0, 0] == pytest.approx(1j * kappa * (-1.0 - 1.0) * 0.8, rel=1e-14)


def test_boundary_local_with_d_zero_is_plain_trace_term():
    dirs = np.array([[0.6, 0.8], [0.0, -1.0]])
    space = PlaneWaveSpace(0, 3.0, dirs)
    face = single_face([1.0, 2.0], [1.7, 2.0], [0.0, 1.0], kind=FaceKind.TOP, elements=(0,))
    blk = boundary_local_block(face, space, FluxParameters(d=0.0))
    sh = qr.Shape(3.0, dirs)
    x, w = qr._gauss_segment(face.geometry.a, face.geometry.b)
    u, _ = sh.trial(x)
    v, gv = sh.test(x)
    ref = np.einsum("q,ql,qj->jl", w, u, np.conj(gv @ face.geometry.normal))
    assert np.allclose(blk, ref, rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------- trace Fourier

def test_trace_coeffs_degenerate_branch(lossless_config):
    lad = build_ladder(lossless_config, 4)
    H = lossless_config.H
    n = 1
    kappa = lad.alphas[lad.index(n)]  # horizontal direction with kappa d1 = alpha_n
    space = PlaneWaveSpace(0, kappa, np.array([[1.0, 0.0]]))
    face = single_face([0.4, H], [1.3, H], [0.0, 1.0], kind=FaceKind.TOP, elements=(0,))
    coeffs = trace_fourier_coeffs(space, face, lad)
    assert coeffs[lad.index(n), 0] == pytest.approx((1.3 - 0.4) / lad.L, rel=1e-14)


def test_trace_coeffs_full_period_orthogonality(lossless_config):
    lad = build_ladder(lossless_config, 5)
    H = lossless_config.H
    m = 2
    kappa = lad.alphas[lad.index(m)]
    space = PlaneWaveSpace(0, kappa, np.array([[1.0, 0.0]]))
    face = single_face([0.0, H], [lad.L, H], [0.0, 1.0], kind=FaceKind.TOP, elements=(0,))
    coeffs = trace_fourier_coeffs(space, face, lad)[:, 0]
    assert coeffs[lad.index(m)] == pytest.approx(1.0, rel=1e-14)
    assert np.all(np.abs(np.delete(coeffs, lad.index(m))) < 1e-15)


def test_trace_coeffs_vs_composite_quadrature(lossless_config, rng):
    lad = build_ladder(lossless_config, 3)
    H = lossless_config.H
    for _ in range(10):
        x0 = rng.uniform(0, 4)
        x1 = x0 + rng.uniform(0.3, 2)
        kappa = rng.uniform(2, 8) + 1j * rng.uniform(0, 0.3)
        ang = rng.uniform(0, TWO_PI)
        space = PlaneWaveSpace(0, kappa, np.array([[math.cos(ang), math.sin(ang)]]))
        face = single_face([x0, H], [x1, H], [0.0, 1.0], kind=FaceKind.TOP, elements=(0,))
        coeffs = trace_fourier_coeffs(space, face, lad)[:, 0]
        # composite midpoint rule with 1e4 panels, Richardson-corrected
        t = np.linspace(x0, x1, 10001)
        mid = 0.5 * (t[:-1] + t[1:])
        f = np.exp(1j * kappa * (math.cos(ang) * mid[:, None] + math.sin(ang) * H) - 1j * mid[:, None] * lad.alphas)
        t2 = np.linspace(x0, x1, 20001)
        mid2 = 0.5 * (t2[:-1] + t2[1:])
        f2 = np.exp(1j * kappa * (math.cos(ang) * mid2[:, None] + math.sin(ang) * H) - 1j * mid2[:, None] * lad.alphas)
        r1 = f.sum(axis=0) * (x1 - x0) / 10000 / lad.L
        r2 = f2.sum(axis=0) * (x1 - x0) / 20000 / lad.L
        ref = (4 * r2 - r1) / 3
        assert np.max(np.abs(coeffs - ref)) <= 1e-10 * np.max(np.abs(ref))


# ------------------------------------------------------ quadrature oracle

@pytest.mark.parametrize("case", ["lossless", "lossy", "obstacle", "slab"])
def test_system_matches_quadrature(case, rng):
    if case == "lossless":
        cfg = two_layer_config(H=2.0, theta=-1.1)
    elif case == "lossy":
        cfg = two_layer_config(eps_minus=(1.25 + 0.1j) ** 2, theta=-math.pi / 4, H=2.0)
    elif case == "obstacle":
        cfg = ProblemConfig(L=TWO_PI, H=2.5, k=3.0, theta=-0.6, obstacles=(rectangle(2.0, 4.0, -1, 1),))
    else:
        from dtntdg.geometry import Region

        cfg = ProblemConfig(L=TWO_PI, H=2.0, k=4.0, theta=-1.3, eps_minus=1.0,
                            regions=(Region(rectangle(0, TWO_PI, -1, 1), 2.0 + 0.05j),))
    mesh = jittered_mesh(cfg, 1.6, rng, y_fixed=(0.0, -1.0, 1.0))
    basis = GlobalBasis(mesh, 4, rotation=rng.uniform(0, 1))
    ladder = build_ladder(cfg, 3)
    flux = FluxParameters(*rng.uniform(0.2, 1.0, size=3))
    system = assemble_system(mesh, basis, ladder, flux, cfg)
    A_ref, rhs_ref, _ = qr.reference_system(mesh, basis, ladder, flux, cfg)
    A = system.to_dense()
    assert np.max(np.abs(A - A_ref)) <= 1e-10 * np.max(np.abs(A_ref))
    assert np.max(np.abs(system.rhs - rhs_ref)) <= 1e-10 * np.max(np.abs(rhs_ref))


def test_dtn_single_mode_rank_one():
    """M = 0, one boundary element, one direction: three rank-one terms over n = 0."""
    cfg = ProblemConfig(L=TWO_PI, H=1.0, k=2.0, theta=-1.0)
    mesh = rectangle_mesh(cfg, 10.0)
    top_elem = mesh.faces_of_kind(FaceKind.TOP)[0].elements[0]
    basis = GlobalBasis(mesh, 1, rotation=-2 * math.pi + math.pi / 2)  # d_1 = (0, 1)
    assert np.allclose(basis.spaces[0].directions[0], [0.0, 1.0])
    ladder = build_ladder(cfg, 0)
    system = assemble_system(mesh, basis, ladder, UWVF, cfg)
    A_ref, _, _ = qr.reference_system(mesh, basis, ladder, UWVF, cfg)
    i = basis.index(top_elem, 0)
    assert system.to_dense()[i, i] == pytest.approx(A_ref[i, i], rel=1e-10)


def test_rhs_zero_off_top_and_at_grazing(lossless_config):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 5)
    ladder = build_ladder(lossless_config, 9)
    rhs = assemble_rhs(mesh, basis, ladder, UWVF, lossless_config)
    top = set(mesh.boundary_elements(FaceKind.TOP))
    for e in range(mesh.n_elements):
        if e not in top:
            assert np.all(rhs[basis.slice(e)] == 0)
    grazing = lossless_config.with_(theta=-math.pi)
    assert np.all(assemble_rhs(mesh, basis, ladder, UWVF, grazing) == 0)


# ------------------------------------------------------------- structure

def test_sparsity_pattern(lossless_config):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 3)
    system = assemble_system(mesh, basis, build_ladder(lossless_config, 9), UWVF, lossless_config)
    neighbours = {e: {e} for e in range(mesh.n_elements)}
    for f in mesh.faces:
        if len(f.elements) == 2:
            a, b = f.elements
            neighbours[a].add(b)
            neighbours[b].add(a)
    A = system.sparse_part.tocoo()
    for r, c in zip(A.row, A.col):
        assert basis.locate(c)[0] in neighbours[basis.locate(r)[0]]
    top = set(mesh.boundary_elements(FaceKind.TOP))
    for idx in system.dtn_part_top.cols:
        assert basis.locate(idx)[0] in top


def test_doubling_m_keeps_sparse_part(lossless_config):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 4)
    s1 = assemble_system(mesh, basis, build_ladder(lossless_config, 9), UWVF, lossless_config)
    s2 = assemble_system(mesh, basis, build_ladder(lossless_config, 18), UWVF, lossless_config)
    d = s1.sparse_part - s2.sparse_part
    assert d.nnz == 0 or np.max(np.abs(d.data)) == 0
    assert s2.dtn_part_top.B.shape[0] == 37


def test_matvec_matches_dense(lossless_config, rng):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 4)
    system = assemble_system(mesh, basis, build_ladder(lossless_config, 9), UWVF, lossless_config)
    x = rng.normal(size=basis.N) + 1j * rng.normal(size=basis.N)
    assert np.allclose(system.matvec(x), system.to_dense() @ x, rtol=1e-13, atol=1e-12)


def test_assembly_deterministic(lossless_config):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 4)
    ladder = build_ladder(lossless_config, 9)
    a = assemble_system(mesh, basis, ladder, UWVF, lossless_config).to_sparse()
    b = assemble_system(mesh, basis, ladder, UWVF, lossless_config).to_sparse()
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.data, b.data)


def test_dump(tmp_path, coarse_mesh, lossless_config):
    basis = GlobalBasis(coarse_mesh, 2)
    system = assemble_system(coarse_mesh, basis, build_ladder(lossless_config, 2), UWVF, lossless_config)
    path = tmp_path / "A.txt"
    system.dump(path)
    lines = path.read_text().splitlines()
    N, nnz = map(int, lines[0].split())
    assert N == basis.N and nnz == len(lines) - 1
    r, c, re, im = lines[1].split()
    A = system.to_dense()
    assert A[int(r), int(c)] == pytest.approx(float(re) + 1j * float(im))


def test_penalty_terms_negative_imaginary(coarse_mesh, lossless_config):
    """The a- and b-penalties alone give -i times a positive semidefinite form."""
    basis = GlobalBasis(coarse_mesh, 4)
    ladder = build_ladder(lossless_config, 9)

    def part(a):
        return assemble_system(coarse_mesh, basis, ladder, FluxParameters(a, a, 0.5), lossless_config).sparse_part

    P = 2 * (part(1.0) - part(0.5)).toarray()  # linear in (a, b)
    herm = 1j * P
    scale = np.abs(herm).max()
    assert np.allclose(herm, herm.conj().T, atol=1e-12 * scale)
    assert np.linalg.eigvalsh(0.5 * (herm + herm.conj().T)).min() >= -1e-10 * scale


# ------------------------------------------------- coercivity, consistency

@pytest.mark.parametrize("M", [9, 12])
def test_coercivity(lossless_config, M, rng):
    mesh = rectangle_mesh(lossless_config, 1.5)
    basis = GlobalBasis(mesh, 6)
    A = assemble_system(mesh, basis, build_ladder(lossless_config, M), UWVF, lossless_config).to_dense()
    norm = np.linalg.norm(A, 1)
    im_part = (A - A.conj().T) / 2j
    assert np.linalg.eigvalsh(-im_part).min() >= -1e-10 * norm
    for _ in range(100):
        v = rng.normal(size=basis.N) + 1j * rng.normal(size=basis.N)
        assert -np.imag(np.vdot(v, A @ v)) >= -1e-10 * np.vdot(v, v).real * norm


def _residual(cfg, mesh, basis, c, M):
    system = assemble_system(mesh, basis, build_ladder(cfg, M), UWVF, cfg)
    return np.linalg.norm(system.matvec(c) - system.rhs) / np.linalg.norm(system.rhs)


@pytest.mark.parametrize("eps_minus", [1.5, (1.25 + 0.1j) ** 2])
def test_consistency_two_layer_normal_incidence(eps_minus):
    cfg = two_layer_config(eps_minus=eps_minus, theta=-math.pi / 2)
    mesh = rectangle_mesh(cfg, 1.5)
    basis = GlobalBasis(mesh, 8)
    sol = two_layer(cfg)
    cents = mesh.centroids()

    def terms(e):
        if cents[e, 1] > 0:
            return [((0.0, -1.0), 1.0), ((0.0, 1.0), sol.R)]
        return [((0.0, -1.0), sol.T)]

    c = exact_coefficients(mesh, basis, terms)
    assert _residual(cfg, mesh, basis, c, 3) < 1e-9


def test_consistency_oblique_free_space():
    cfg = ProblemConfig(L=TWO_PI, H=2.0, k=5.0, theta=-math.pi / 3)
    mesh = rectangle_mesh(cfg, 1.5)
    basis = GlobalBasis(mesh, 6)  # direction 5 pi / 3 is in the set
    c = exact_coefficients(mesh, basis, lambda e: [((0.5, -math.sqrt(3) / 2), 1.0)])
    assert _residual(cfg, mesh, basis, c, 9) < 1e-9


def test_convention_invariance(lossless_config):
    from dtntdg.solver import solve_problem

    mesh = rectangle_mesh(lossless_config, 1.5)
    left = solve_problem(lossless_config, mesh, 8, 9, convention="left")
    right = solve_problem(lossless_config, mesh, 8, 9, convention="right")
    assert np.linalg.norm(left.coeffs - right.coeffs) <= 1e-8 * np.linalg.norm(left.coeffs)


def test_flux_parameters_validation():
    from dtntdg.errors import GeometryError

    with pytest.raises(GeometryError):
        FluxParameters(a=0.0)
    FluxParameters(d=0.0)
    assert FluxParameters.xi(2.0 + 1j, 4.0) == 3.0
