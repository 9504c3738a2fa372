"""Coarse trial spaces: nodal tents plus spectral edge functions.

The nodal part extends classical tent data harmonically into the four
elements around each interior coarse node.  The edge part is computed per
coarse edge e from its oversampling patch: harmonic functions on the patch
are parametrised by their trace on the patch's dirichlet boundary, the
restriction operator takes such a trace to the interpolation residue of its
extension on e, and the top generalized singular vectors of that operator
(residue measured in the extension-energy norm of the edge, trace measured
in the patch energy norm) give the edge basis.  Their fine-grid
representatives are harmonic extensions supported on the two elements
sharing e.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem, linalg
from .local import extend_local_multi
from .mesh import oversampling_domain


@dataclass
class NodalBasis:
    columns: sp.csc_matrix
    coarse_ids: list


@dataclass
class EdgeRestriction:
    """Discretised restriction operator of one edge's oversampling patch."""

    edge_id: int
    trace_nodes: np.ndarray
    slots: np.ndarray
    R: np.ndarray        # (n_res, n_trace) residues of unit-trace extensions
    A_gram: np.ndarray   # (n_trace, n_trace) patch energy Gram
    B_gram: np.ndarray   # (n_res, n_res) edge extension-energy Gram
    elem_ext: list       # [(element_id, lp, E_T)] extensions of unit residues


@dataclass
class EdgeBasis:
    edge_id: int
    lambdas: np.ndarray           # singular values, descending
    vectors: np.ndarray           # (n_res, m) edge values, B-norm one
    slots: np.ndarray
    columns: sp.csc_matrix        # fine-grid functions, support = two elements
    truncated: bool = False


@dataclass
class EdgeBasisSet:
    bases: dict
    m: int

    @property
    def any_truncated(self):
        return any(b.truncated for b in self.bases.values())


@dataclass
class TrialSpace:
    """Stacked coarse space: nodal columns first, then per-edge columns."""

    Phi: sp.csc_matrix
    kind: np.ndarray   # 0 nodal, 1 edge
    edge: np.ndarray   # edge id or -1
    sv: np.ndarray     # singular index within the edge, or -1
    n_nodal: int

    def mask(self, m):
        """Columns kept when the edge basis is truncated to m per edge."""
        return (self.kind == 0) | (self.sv < m)


def _combine_patch(pieces):
    """Deduplicate (nodes, values) pieces whose overlaps agree."""
    nodes = np.concatenate([p[0] for p in pieces])
    vals = np.concatenate([p[1] for p in pieces])
    uniq, first = np.unique(nodes, return_index=True)
    return uniq, vals[first]


def build_nodal_basis(solver):
    """Harmonic tent functions at the interior coarse nodes."""
    mesh = solver.mesh
    r = mesh.grid.refine
    n1 = mesh.n_fine + 1
    rows, data, indptr = [], [], [0]
    for ij in mesh.coarse_nodes:
        elements, _ = mesh.node_patch(ij)
        xi, yi = ij[0] * r, ij[1] * r
        pieces = []
        for t in elements:
            lp = solver.element_problem(t)
            ids = lp.trace_nodes
            ix, iy = ids % n1, ids // n1
            on_cross = (ix == xi) | (iy == yi)
            dist = np.maximum(np.abs(ix - xi), np.abs(iy - yi))
            trace = np.where(on_cross, np.maximum(0.0, 1.0 - dist / r), 0.0)
            pieces.append((lp.nodes, extend_local_multi(lp, trace[:, None])[:, 0]))
        nodes, vals = _combine_patch(pieces)
        rows.append(nodes)
        data.append(vals)
        indptr.append(indptr[-1] + nodes.size)
    columns = sp.csc_matrix(
        (np.concatenate(data), np.concatenate(rows), np.array(indptr)),
        shape=(mesh.n_nodes, len(mesh.coarse_nodes)),
    )
    return NodalBasis(columns, list(mesh.coarse_nodes))


def build_restriction(solver, e):
    """Restriction operator and Gram matrices for one edge's patch."""
    mesh, coeff = solver.mesh, solver.coeff
    dom = oversampling_domain(mesh, e)
    lp = solver.oversampling_problem(dom)
    n_t = lp.fixed.size

    E = extend_local_multi(lp, np.eye(n_t, dtype=np.complex128))
    G_loc = fem.assemble_energy_gram(mesh, coeff, dom.rect)
    A_gram = E.conj().T @ (G_loc @ E)
    A_gram = 0.5 * (A_gram + A_gram.conj().T)

    enodes = mesh.edge_fine_nodes(e)
    vals = E[lp.local_index(enodes), :]
    w = mesh.edge_interpolation_weights(e)
    interp = w[:, [0]] * vals[[0], :] + w[:, [1]] * vals[[-1], :]
    slots = mesh.edge_residue_slots(e)
    R = (vals - interp)[slots, :]
    n_res = slots.size

    B = np.zeros((n_res, n_res), dtype=np.complex128)
    elem_ext = []
    slot_nodes = enodes[slots]
    for t in mesh.edge_elements(e):
        lpT = solver.element_problem(t)
        pos = lpT.trace_pos[lpT.local_index(slot_nodes)]
        traces = np.zeros((lpT.fixed.size, n_res), dtype=np.complex128)
        traces[pos, np.arange(n_res)] = 1.0
        E_T = extend_local_multi(lpT, traces)
        B += E_T.conj().T @ (solver.element_gram(t) @ E_T)
        elem_ext.append((t, lpT, E_T))
    B = 0.5 * (B + B.conj().T)

    return EdgeRestriction(e.id, lp.trace_nodes, slots, R, A_gram, B, elem_ext)


def _fine_columns(mesh, rd, vectors):
    """Fine-grid functions of edge-value vectors: per-element harmonic
    extension of the values zero-extended to the rest of the skeleton."""
    (t1, lp1, E1), (t2, lp2, E2) = rd.elem_ext
    V1 = E1 @ vectors
    V2 = E2 @ vectors
    mask2 = ~np.isin(lp2.nodes, lp1.nodes)
    rows = np.concatenate([lp1.nodes, lp2.nodes[mask2]])
    combined = np.vstack([V1, V2[mask2]])
    m = vectors.shape[1]
    indptr = np.arange(m + 1) * rows.size
    cols = sp.csc_matrix(
        (combined.T.ravel(), np.tile(rows, m), indptr), shape=(mesh.n_nodes, m)
    )
    cols.sort_indices()
    return cols


def edge_svd(rd, m, mesh=None):
    """Top-m generalized singular triplets of one edge's restriction.

    Requesting more pairs than the residue dimension returns all available
    pairs with truncated=True.  Edge vectors are scaled to unit B-norm and
    rotated so their largest-magnitude entry is real positive.
    """
    n_res = rd.R.shape[0]
    m_eff = min(m, n_res)
    truncated = m > n_res
    M = rd.R.conj().T @ (rd.B_gram @ rd.R)
    vals, g = linalg.top_eigenpairs(M, rd.A_gram, m_eff)
    lambdas = np.sqrt(vals)
    vectors = rd.R @ g
    for j in range(m_eff):
        v = vectors[:, j]
        bn = np.sqrt(abs(np.vdot(v, rd.B_gram @ v).real))
        if bn > 0.0:
            v /= bn
        p = int(np.argmax(np.abs(v)))
        if abs(v[p]) > 0.0:
            v *= np.conj(v[p]) / abs(v[p])
    columns = _fine_columns(mesh, rd, vectors) if mesh is not None else None
    return EdgeBasis(rd.edge_id, lambdas, vectors, rd.slots, columns, truncated)


def build_edge_basis_set(solver, m, cache_path=None):
    """Edge bases for every coarse edge, optionally via the binary cache."""
    mesh = solver.mesh
    if cache_path is not None:
        cached = load_edge_basis_set(cache_path, content_key(mesh, solver.coeff), m)
        if cached is not None:
            bases = {}
            for e in mesh.edges:
                lambdas, vectors, truncated = cached[e.id]
                rd = build_restriction(solver, e)  # for extension operators
                bases[e.id] = EdgeBasis(
                    e.id, lambdas, vectors, rd.slots,
                    _fine_columns(mesh, rd, vectors), truncated,
                )
            return EdgeBasisSet(bases, m)
    bases = {}
    for e in mesh.edges:
        rd = build_restriction(solver, e)
        bases[e.id] = edge_svd(rd, m, mesh)
    ebs = EdgeBasisSet(bases, m)
    if cache_path is not None:
        save_edge_basis_set(cache_path, ebs, content_key(mesh, solver.coeff))
    return ebs


def assemble_trial_space(mesh, nodal, ebs, m):
    """Stack nodal and per-edge columns (each edge truncated to its first
    min(m, available) vectors)."""
    if m > ebs.m:
        raise ValueError(f"requested m={m} exceeds the computed basis m={ebs.m}")
    blocks = [nodal.columns]
    kind = [np.zeros(nodal.columns.shape[1], dtype=np.int8)]
    edge = [np.full(nodal.columns.shape[1], -1, dtype=np.int32)]
    sv = [np.full(nodal.columns.shape[1], -1, dtype=np.int32)]
    for e in mesh.edges:
        b = ebs.bases[e.id]
        me = min(m, b.lambdas.size)
        if me == 0:
            continue
        blocks.append(b.columns[:, :me])
        kind.append(np.ones(me, dtype=np.int8))
        edge.append(np.full(me, e.id, dtype=np.int32))
        sv.append(np.arange(me, dtype=np.int32))
    Phi = sp.hstack(blocks, format="csc")
    return TrialSpace(
        Phi,
        np.concatenate(kind),
        np.concatenate(edge),
        np.concatenate(sv),
        nodal.columns.shape[1],
    )


# -- binary cache ----------------------------------------------------------

_MAGIC = b"MSHELMEB"
_VERSION = 1


def content_key(mesh, coeff):
    """Digest of everything the edge basis depends on."""
    hsh = hashlib.sha256()
    hsh.update(
        struct.pack("<iid", mesh.grid.nH, mesh.grid.refine, coeff.k)
    )
    hsh.update(np.ascontiguousarray(coeff.A).tobytes())
    hsh.update(np.ascontiguousarray(coeff.V).tobytes())
    for side in sorted(coeff.beta):
        hsh.update(np.ascontiguousarray(coeff.beta[side]).tobytes())
    hsh.update(repr(sorted(mesh.bc.segments.items())).encode())
    return hsh.digest()


def save_edge_basis_set(path, ebs, key):
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(key)
        f.write(struct.pack("<II", len(ebs.bases), ebs.m))
        for edge_id in sorted(ebs.bases):
            b = ebs.bases[edge_id]
            n_res, m_e = b.vectors.shape
            f.write(struct.pack("<IIIB3x", edge_id, n_res, m_e, int(b.truncated)))
            f.write(np.asarray(b.lambdas, dtype=np.float64).tobytes())
            inter = np.empty((n_res * m_e, 2))
            flat = np.asarray(b.vectors, dtype=np.complex128).ravel(order="F")
            inter[:, 0], inter[:, 1] = flat.real, flat.imag
            f.write(inter.tobytes())


def load_edge_basis_set(path, key, m):
    """Read a cache file; None when missing or stale (key/m mismatch)."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError:
        return None
    if raw[:8] != _MAGIC:
        return None
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != _VERSION or raw[12:44] != key:
        return None
    n_edges, m_stored = struct.unpack_from("<II", raw, 44)
    if m_stored != m:
        return None
    out = {}
    off = 52
    for _ in range(n_edges):
        edge_id, n_res, m_e, trunc = struct.unpack_from("<IIIB3x", raw, off)
        off += 16
        lambdas = np.frombuffer(raw, dtype=np.float64, count=m_e, offset=off).copy()
        off += 8 * m_e
        inter = np.frombuffer(raw, dtype=np.float64, count=2 * n_res * m_e, offset=off)
        off += 16 * n_res * m_e
        flat = inter[0::2] + 1j * inter[1::2]
        out[edge_id] = (lambdas, flat.reshape((n_res, m_e), order="F"), bool(trunc))
    return out
