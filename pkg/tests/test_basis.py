"""Coarse-space construction tests: nodal tents, edge restriction operators,
the per-edge spectral basis, and the binary cache."""

import numpy as np
import pytest
import scipy.linalg

from mshelm import basis, fem, local
from mshelm.mesh import BoundaryClassification, GridSpec, build_mesh


def make_solver(k=8.0, nH=4, refine=8, bc=None, a=None):
    grid = GridSpec(nH, refine)
    mesh = build_mesh(grid, bc or BoundaryClassification.all_robin())
    coeff = fem.CoefficientField.from_callables(grid.n_fine, k, a=a or 1.0)
    return mesh, coeff, local.LocalSolver(mesh, coeff)


def interior_edge(mesh):
    return next(e for e in mesh.edges if e.horizontal and (e.i, e.j) == (1, 2))


def rect_nodes(mesh, rect):
    n1 = mesh.n_fine + 1
    xs = np.arange(rect.x0, rect.x1 + 1)
    ys = np.arange(rect.y0, rect.y1 + 1)
    return (ys[:, None] * n1 + xs[None, :]).ravel()


def test_nodal_kronecker_at_coarse_nodes():
    mesh, coeff, solver = make_solver()
    nodal = basis.build_nodal_basis(solver)
    r = mesh.grid.refine
    n1 = mesh.n_fine + 1
    cols = nodal.columns.toarray()
    for c, (i, j) in enumerate(nodal.coarse_ids):
        for c2, (i2, j2) in enumerate(nodal.coarse_ids):
            val = cols[(j2 * r) * n1 + i2 * r, c]
            assert abs(val - (1.0 if c == c2 else 0.0)) <= 1e-12


def test_nodal_partition_of_unity_at_k0():
    # zero wavenumber: tents extend linear boundary data harmonically, so
    # the four tents of a fully interior element sum to one inside it
    mesh, coeff, solver = make_solver(
        k=0.0, nH=4, refine=4, bc=BoundaryClassification.all_dirichlet()
    )
    nodal = basis.build_nodal_basis(solver)
    total = np.asarray(nodal.columns.sum(axis=1)).ravel()
    fine = rect_nodes(mesh, mesh.element_rect(5))  # all four corners interior
    assert np.allclose(total[fine], 1.0, atol=1e-11)


def test_nodal_support_is_node_patch():
    mesh, coeff, solver = make_solver()
    nodal = basis.build_nodal_basis(solver)
    col = nodal.columns[:, 0].toarray().ravel()  # node (1, 1)
    elements, _ = mesh.node_patch((1, 1))
    inside = np.zeros(mesh.n_nodes, dtype=bool)
    for t in elements:
        inside[rect_nodes(mesh, mesh.element_rect(t))] = True
    assert np.allclose(col[~inside], 0.0, atol=1e-14)


def test_restriction_slot_counts():
    mesh, coeff, solver = make_solver()
    r = mesh.grid.refine
    rd_int = basis.build_restriction(solver, interior_edge(mesh))
    assert rd_int.R.shape[0] == r - 1
    e_bnd = next(e for e in mesh.edges if e.horizontal and (e.i, e.j) == (0, 2))
    rd_bnd = basis.build_restriction(solver, e_bnd)
    assert rd_bnd.R.shape[0] == r  # robin endpoint keeps its residue slot
    assert rd_int.A_gram.shape[0] == rd_int.trace_nodes.size
    assert np.all(np.linalg.eigvalsh(rd_int.A_gram) > 0.0)
    assert np.all(np.linalg.eigvalsh(rd_int.B_gram) > 0.0)


def test_restriction_matches_direct_extension():
    # R g must equal the patch extension's edge values minus the linear
    # interpolant of its endpoint values, sampled at the residue slots
    mesh, coeff, solver = make_solver()
    e = interior_edge(mesh)
    rd = basis.build_restriction(solver, e)
    dom = basis.oversampling_domain(mesh, e)
    lp = solver.oversampling_problem(dom)
    rng = np.random.default_rng(7)
    g = rng.standard_normal(lp.fixed.size) + 1j * rng.standard_normal(lp.fixed.size)
    u = local.extend_local(lp, g)
    vals = u[lp.local_index(mesh.edge_fine_nodes(e))]
    w = mesh.edge_interpolation_weights(e)
    expected = (vals - w[:, 0] * vals[0] - w[:, 1] * vals[-1])[rd.slots]
    assert np.allclose(rd.R @ g, expected, atol=1e-11 * np.abs(vals).max())


def test_edge_svd_descending_normalized_phase_fixed():
    mesh, coeff, solver = make_solver()
    rd = basis.build_restriction(solver, interior_edge(mesh))
    b = basis.edge_svd(rd, 5, mesh)
    assert b.lambdas.size == 5
    assert np.all(np.diff(b.lambdas) <= 1e-12 * b.lambdas[0])
    assert np.all(b.lambdas >= 0.0)
    gram = b.vectors.conj().T @ (rd.B_gram @ b.vectors)
    assert np.allclose(gram, np.eye(5), atol=1e-8)
    for j in range(5):
        p = int(np.argmax(np.abs(b.vectors[:, j])))
        top = b.vectors[p, j]
        assert abs(top.imag) <= 1e-10 * abs(top)
        assert top.real > 0.0


def test_edge_svd_matches_dense_oracle():
    mesh, coeff, solver = make_solver()
    rd = basis.build_restriction(solver, interior_edge(mesh))
    b = basis.edge_svd(rd, 4, mesh)
    M = rd.R.conj().T @ (rd.B_gram @ rd.R)
    M = 0.5 * (M + M.conj().T)
    vals = scipy.linalg.eigh(M, rd.A_gram, eigvals_only=True)[::-1]
    assert np.allclose(b.lambdas, np.sqrt(np.clip(vals[:4], 0.0, None)), rtol=1e-8)


def test_edge_columns_energy_orthonormal():
    # fine-grid columns of one edge basis are orthonormal in the global
    # energy inner product (their energy is the B_gram by construction)
    mesh, coeff, solver = make_solver()
    rd = basis.build_restriction(solver, interior_edge(mesh))
    b = basis.edge_svd(rd, 4, mesh)
    G = fem.assemble_energy_gram(mesh, coeff, mesh.whole_domain())
    C = b.columns.toarray()
    gram = C.conj().T @ (G @ C)
    assert np.allclose(gram, np.eye(4), atol=1e-8)


def test_best_approximation_bound():
    # n-width property: residues of unit-energy traces are approximated by
    # the first m vectors to within lambda_{m+1} in the B norm
    mesh, coeff, solver = make_solver()
    rd = basis.build_restriction(solver, interior_edge(mesh))
    n_res = rd.R.shape[0]
    b = basis.edge_svd(rd, n_res, mesh)
    m = 3
    lam_next = b.lambdas[m]
    V = b.vectors[:, :m]
    rng = np.random.default_rng(11)
    for _ in range(25):
        g = rng.standard_normal(rd.A_gram.shape[0])
        g = g + 1j * rng.standard_normal(g.size)
        a_norm = np.sqrt(np.vdot(g, rd.A_gram @ g).real)
        r = rd.R @ g
        r = r - V @ (V.conj().T @ (rd.B_gram @ r))
        b_norm = np.sqrt(abs(np.vdot(r, rd.B_gram @ r).real))
        assert b_norm <= lam_next * a_norm * (1.0 + 1e-6)


def test_truncation_flag():
    mesh, coeff, solver = make_solver(refine=4)
    rd = basis.build_restriction(solver, interior_edge(mesh))
    b = basis.edge_svd(rd, 50, mesh)
    assert b.truncated
    assert b.lambdas.size == rd.R.shape[0]
    ebs = basis.build_edge_basis_set(solver, 50)
    assert ebs.any_truncated


def test_trial_space_layout():
    mesh, coeff, solver = make_solver(refine=4)
    nodal = basis.build_nodal_basis(solver)
    ebs = basis.build_edge_basis_set(solver, 3)
    trial = basis.assemble_trial_space(mesh, nodal, ebs, 3)
    n_nodal = len(mesh.coarse_nodes)
    assert trial.n_nodal == n_nodal
    assert np.all(trial.kind[:n_nodal] == 0)
    assert np.all(trial.sv[:n_nodal] == -1)
    expected_edge_cols = sum(
        min(3, ebs.bases[e.id].lambdas.size) for e in mesh.edges
    )
    assert trial.Phi.shape == (mesh.n_nodes, n_nodal + expected_edge_cols)
    m1 = trial.mask(1)
    assert m1.sum() == n_nodal + len(mesh.edges)
    with pytest.raises(ValueError):
        basis.assemble_trial_space(mesh, nodal, ebs, 4)


def test_cache_roundtrip(tmp_path):
    mesh, coeff, solver = make_solver(refine=4)
    path = tmp_path / "edges.bin"
    ebs1 = basis.build_edge_basis_set(solver, 3, cache_path=path)
    assert path.exists()
    key = basis.content_key(mesh, coeff)
    raw = basis.load_edge_basis_set(path, key, 3)
    assert raw is not None
    ebs2 = basis.build_edge_basis_set(solver, 3, cache_path=path)
    for e in mesh.edges:
        b1, b2 = ebs1.bases[e.id], ebs2.bases[e.id]
        assert np.array_equal(b1.lambdas, b2.lambdas)
        assert np.array_equal(b1.vectors, b2.vectors)
        assert b1.truncated == b2.truncated


def test_cache_rejects_stale_key_and_m(tmp_path):
    mesh, coeff, solver = make_solver(refine=4)
    path = tmp_path / "edges.bin"
    basis.build_edge_basis_set(solver, 3, cache_path=path)
    key = basis.content_key(mesh, coeff)
    other = fem.CoefficientField.from_callables(mesh.grid.n_fine, 9.0)
    assert basis.load_edge_basis_set(path, basis.content_key(mesh, other), 3) is None
    assert basis.load_edge_basis_set(path, key, 4) is None
    assert basis.load_edge_basis_set(tmp_path / "missing.bin", key, 3) is None
    blob = path.read_bytes()
    path.write_bytes(b"XXXXXXXX" + blob[8:])
    assert basis.load_edge_basis_set(path, key, 3) is None


def test_content_key_tracks_coefficients():
    mesh, coeff, solver = make_solver(refine=4)
    k1 = basis.content_key(mesh, coeff)
    assert k1 == basis.content_key(mesh, coeff)
    bumped = fem.CoefficientField.from_callables(
        mesh.grid.n_fine, coeff.k, a=lambda x, y: 1.0 + 0.1 * (x > 0.5)
    )
    assert basis.content_key(mesh, bumped) != k1
