"""Q1 finite elements on the fine grid.

Sesquilinear convention: the assembled matrix K represents

    a(u, v) = (A grad u, grad v) - k^2 (V^2 u, v) - (T_k u, v)_{natural}

through a(u, v) = conj(v)^T K u, where T_k u = i k beta u on robin segments
and 0 on neumann segments.  With real coefficients K is complex symmetric
(K = K^T, unconjugated).  Volume terms use 2x2 Gauss quadrature per cell with
coefficients sampled once per fine cell (midpoint values); robin terms use
2-point Gauss per boundary fine segment with beta sampled per segment.

The energy (H-norm) Gram matrix is the positive counterpart
(A grad u, grad v) + k^2 (V^2 u, v).
"""

import numpy as np
import scipy.sparse as sp

from . import linalg
from .mesh import DIRICHLET, NEUMANN, ROBIN, SIDES

# 2x2 Gauss rule on the unit reference cell
_G1 = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)
_GPTS = np.array([(a, b) for b in _G1 for a in _G1])
_GW = np.full(4, 0.25)


def _shape(xi, eta):
    # counterclockwise local order (0,0), (1,0), (1,1), (0,1)
    return np.array(
        [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
    )


def _dshape(xi, eta):
    return np.array(
        [
            [-(1 - eta), -(1 - xi)],
            [(1 - eta), -xi],
            [eta, xi],
            [-eta, (1 - xi)],
        ]
    )


_PHI = np.stack([_shape(x, y) for x, y in _GPTS])          # (4 pts, 4 funcs)
_DPHI = np.stack([_dshape(x, y) for x, y in _GPTS])        # (4 pts, 4 funcs, 2)

# reference stiffness (scale invariant in 2d) and unit-cell mass
K_REF = np.einsum("g,gid,gjd->ij", _GW, _DPHI, _DPHI)
M_REF = np.einsum("g,gi,gj->ij", _GW, _PHI, _PHI)

# 2-point Gauss on a reference boundary segment
_E1 = np.array(_G1)
_EPHI = np.stack([1.0 - _E1, _E1])                          # (2 funcs, 2 pts)
EDGE_MASS_REF = (_EPHI * 0.5) @ _EPHI.T


class CoefficientField:
    """Piecewise-constant coefficients on the fine grid.

    A, V: (N, N) arrays indexed [cell_y, cell_x]; beta: per-side arrays of
    length N with one value per boundary fine segment; k: wavenumber.
    """

    def __init__(self, A, V, beta, k):
        self.A = np.asarray(A, dtype=float)
        self.V = np.asarray(V, dtype=float)
        self.beta = {side: np.asarray(beta[side], dtype=float) for side in SIDES}
        self.k = float(k)

    @classmethod
    def from_callables(cls, n, k, a=1.0, v=1.0, beta=1.0):
        """Sample a(x,y), v(x,y) at cell midpoints and beta at boundary
        segment midpoints; scalars are broadcast."""
        h = 1.0 / n
        mids = (np.arange(n) + 0.5) * h
        x, y = np.meshgrid(mids, mids)

        def sample2(f):
            if callable(f):
                return np.broadcast_to(np.asarray(f(x, y), dtype=float), (n, n)).copy()
            return np.full((n, n), float(f))

        def sample_beta(f):
            out = {}
            for side in SIDES:
                if side == "bottom":
                    bx, by = mids, np.zeros(n)
                elif side == "top":
                    bx, by = mids, np.ones(n)
                elif side == "left":
                    bx, by = np.zeros(n), mids
                else:
                    bx, by = np.ones(n), mids
                if callable(f):
                    out[side] = np.broadcast_to(
                        np.asarray(f(bx, by), dtype=float), (n,)
                    ).copy()
                else:
                    out[side] = np.full(n, float(f))
            return out

        return cls(sample2(a), sample2(v), sample_beta(beta), k)

    def validate(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.V.shape != (n, n):
            raise ValueError("coefficient arrays must be square and matching")
        if not (self.A > 0).all():
            raise ValueError("A must be strictly positive")
        if not (self.V > 0).all():
            raise ValueError("V must be strictly positive")
        for side in SIDES:
            if self.beta[side].shape != (n,):
                raise ValueError(f"beta[{side!r}] must have length {n}")
            if not (self.beta[side] > 0).all():
                raise ValueError("beta must be strictly positive")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        return self


class Load:
    """Right-hand side in one of three forms.

    - callable f(x, y), vectorised, integrated by 2x2 Gauss per cell;
    - per-fine-node samples, treated as the Q1 interpolant of f;
    - a raw assembled load vector (functional values per fine node).  The raw
      form restricts to subdomains by plain indexing, which is only meaningful
      at nodes whose test functions are supported in the subdomain; it exists
      for constructed consistency tests.
    """

    def __init__(self, fn=None, samples=None, vector=None):
        given = sum(x is not None for x in (fn, samples, vector))
        if given != 1:
            raise ValueError("exactly one of fn/samples/vector must be given")
        self.fn = fn
        self.samples = samples if samples is None else np.asarray(samples)
        self.vector = vector if vector is None else np.asarray(vector)

    @classmethod
    def from_callable(cls, fn):
        return cls(fn=fn)

    @classmethod
    def from_node_samples(cls, samples):
        return cls(samples=samples)

    @classmethod
    def from_vector(cls, vector):
        return cls(vector=vector)

    @classmethod
    def zero(cls):
        return cls(fn=lambda x, y: np.zeros_like(x))


def _cell_connectivity(rect):
    nx = rect.nx
    cx = np.tile(np.arange(nx), rect.ny)
    cy = np.repeat(np.arange(rect.ny), nx)
    l00 = cy * (nx + 1) + cx
    conn = np.stack([l00, l00 + 1, l00 + nx + 2, l00 + nx + 1], axis=1)
    return cx + rect.x0, cy + rect.y0, conn


def _scatter(conn, cell_mats, n_loc, dtype):
    rows = np.broadcast_to(conn[:, :, None], cell_mats.shape).ravel()
    cols = np.broadcast_to(conn[:, None, :], cell_mats.shape).ravel()
    K = sp.coo_matrix(
        (cell_mats.ravel().astype(dtype), (rows, cols)), shape=(n_loc, n_loc)
    )
    return K.tocsr()


def _local_index(mesh, rect, global_ids):
    """Map sorted-rect global node ids to local row-major indices."""
    nxn = rect.nx + 1
    ix = np.asarray(global_ids) % (mesh.n_fine + 1) - rect.x0
    iy = np.asarray(global_ids) // (mesh.n_fine + 1) - rect.y0
    return iy * nxn + ix


def assemble_sesquilinear(mesh, coeff, rect, adjoint=False):
    """Full (unreduced) system matrix over the rect's nodes.

    adjoint=True flips the sign of the robin contribution (+ i k beta), which
    realises the adjoint sesquilinear form for real A, V, beta.
    """
    h = mesh.grid.h
    k = coeff.k
    cx, cy, conn = _cell_connectivity(rect)
    Ac = coeff.A[cy, cx]
    Vc = coeff.V[cy, cx]
    cell_mats = (
        Ac[:, None, None] * K_REF
        - (k * k * h * h) * (Vc * Vc)[:, None, None] * M_REF
    )
    K = _scatter(conn, cell_mats, rect.n_nodes, np.complex128)

    sign = 1.0 if adjoint else -1.0
    rows, cols, vals = [], [], []
    for side, s, a, b, kind in mesh.rect_boundary_segments(rect):
        if kind != ROBIN:
            continue
        bval = coeff.beta[side][s]
        la, lb = _local_index(mesh, rect, np.array([a, b]))
        scale = sign * 1j * k * bval * h
        for p, q, m in ((la, la, 0), (la, lb, 1), (lb, la, 1), (lb, lb, 0)):
            rows.append(p)
            cols.append(q)
            vals.append(scale * EDGE_MASS_REF[0, m])
    if rows:
        K = K + sp.coo_matrix(
            (np.array(vals), (np.array(rows), np.array(cols))),
            shape=(rect.n_nodes, rect.n_nodes),
        ).tocsr()
    return K


def assemble_energy_gram(mesh, coeff, rect):
    """Gram matrix of the energy norm: A-stiffness + k^2 V^2 mass (real SPD)."""
    h = mesh.grid.h
    k = coeff.k
    cx, cy, conn = _cell_connectivity(rect)
    Ac = coeff.A[cy, cx]
    Vc = coeff.V[cy, cx]
    cell_mats = (
        Ac[:, None, None] * K_REF
        + (k * k * h * h) * (Vc * Vc)[:, None, None] * M_REF
    )
    return _scatter(conn, cell_mats, rect.n_nodes, np.float64)


def assemble_mass(mesh, rect):
    """Plain L2 mass matrix over the rect's nodes."""
    h = mesh.grid.h
    _, _, conn = _cell_connectivity(rect)
    cell_mats = np.broadcast_to(h * h * M_REF, (rect.n_cells, 4, 4))
    return _scatter(conn, cell_mats, rect.n_nodes, np.float64)


def assemble_load(mesh, load, rect):
    """Load vector over the rect's nodes (see Load for the three forms)."""
    nodes = mesh.rect_nodes(rect)
    if load.vector is not None:
        return load.vector[nodes].astype(np.complex128)
    if load.samples is not None:
        return assemble_mass(mesh, rect) @ load.samples[nodes].astype(np.complex128)
    h = mesh.grid.h
    cx, cy, conn = _cell_connectivity(rect)
    xg = (cx[:, None] + _GPTS[None, :, 0]) * h
    yg = (cy[:, None] + _GPTS[None, :, 1]) * h
    fv = np.asarray(load.fn(xg, yg), dtype=np.complex128)
    fv = np.broadcast_to(fv, xg.shape)
    cell_loads = (h * h) * np.einsum("cg,g,gi->ci", fv, _GW, _PHI)
    F = np.zeros(rect.n_nodes, dtype=np.complex128)
    np.add.at(F, conn, cell_loads)
    return F


def assemble_flux_load(mesh, rect, flux):
    """Boundary load (g, v) over the natural (neumann/robin) fine segments.

    flux(x, y, side) must be vectorised over coordinate arrays.
    """
    h = mesh.grid.h
    F = np.zeros(rect.n_nodes, dtype=np.complex128)
    segs = [
        seg for seg in mesh.rect_boundary_segments(rect) if seg[4] in (NEUMANN, ROBIN)
    ]
    for side, s, a, b, kind in segs:
        xa, ya = mesh.node_xy(np.array([a]))
        if side in ("bottom", "top"):
            xg, yg = xa + _E1 * h, np.full(2, ya[0])
        else:
            xg, yg = np.full(2, xa[0]), ya + _E1 * h
        g = np.asarray(flux(xg, yg, side), dtype=np.complex128)
        la, lb = _local_index(mesh, rect, np.array([a, b]))
        F[la] += h * 0.5 * np.sum(g * _EPHI[0])
        F[lb] += h * 0.5 * np.sum(g * _EPHI[1])
    return F


def reduce_system(K, free, fixed):
    """Split a full matrix into the free block and the free-fixed coupling."""
    Kc = K.tocsc()
    return Kc[free][:, free].tocsc(), Kc[free][:, fixed].tocsr()


def norm_from_gram(G, u):
    """Norm induced by a Hermitian PSD Gram matrix."""
    return float(np.sqrt(abs(np.vdot(u, G @ u).real)))


def _solve(mesh, coeff, load, flux, dirichlet, adjoint):
    rect = mesh.whole_domain()
    K = assemble_sesquilinear(mesh, coeff, rect, adjoint=adjoint)
    F = assemble_load(mesh, load, rect)
    if flux is not None:
        F = F + assemble_flux_load(mesh, rect, flux)
    free = np.flatnonzero(mesh.node_tag != DIRICHLET)
    fixed = np.flatnonzero(mesh.node_tag == DIRICHLET)
    u = np.zeros(mesh.n_nodes, dtype=np.complex128)
    if fixed.size and dirichlet is not None:
        x, y = mesh.node_xy(fixed)
        u[fixed] = dirichlet(x, y)
    K_ff, K_fd = reduce_system(K, free, fixed)
    rhs = F[free] - (K_fd @ u[fixed] if fixed.size else 0.0)
    u[free] = linalg.factorize(K_ff).solve(rhs)
    res = np.linalg.norm(K_ff @ u[free] - rhs)
    tol = 1e-10 * max(np.linalg.norm(rhs), 1e-300)
    if res > tol:
        raise linalg.SolverError(
            f"fine solve residual {res:.3e} exceeds 1e-10 * |rhs| = {tol:.3e}"
        )
    return u


def solve_reference(mesh, coeff, load, flux=None, dirichlet=None):
    """Fine-grid solution of the full problem (robin term with -i k beta)."""
    return _solve(mesh, coeff, load, flux, dirichlet, adjoint=False)


def solve_adjoint(mesh, coeff, load, flux=None, dirichlet=None):
    """Fine-grid adjoint solve (robin sign flipped to +i k beta)."""
    return _solve(mesh, coeff, load, flux, dirichlet, adjoint=True)
