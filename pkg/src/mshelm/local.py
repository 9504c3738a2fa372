"""Local Helmholtz problems on coarse elements and oversampling patches.

Every local problem lives on a rectangle of fine cells.  Its dirichlet part
is the portion of the rectangle boundary not contained in the natural
(neumann/robin) outer boundary; there traces are prescribed.  The remaining
boundary carries the same natural condition as the global problem, so local
solves are conforming restrictions of the global operator.

The two workhorses are harmonic extensions (prescribed trace, zero load) and
bubbles (zero trace, prescribed load, optionally with a natural boundary
flux).  On a single element the two are energy-orthogonal and sum to the
restriction of the global solution, which is the decomposition the coarse
space is built on.  The edge correction glues, per coarse edge, the
interpolation residue of the oversampling-patch bubble back into a
Helmholtz-harmonic function; subtracting it from the solution leaves a part
that the spectral edge basis approximates well.
"""

import numpy as np

from . import fem, linalg
from .mesh import oversampling_domain


class LocalProblem:
    """Factorised local system on a rectangle of fine cells."""

    def __init__(self, mesh, rect):
        self.mesh = mesh
        self.rect = rect
        nodes, interior, dirichlet, natural = mesh.classify_rect_nodes(rect)
        self.nodes = nodes
        self.fixed = dirichlet
        self.natural = natural
        self.free = np.sort(np.concatenate([interior, natural]))
        self.n_loc = nodes.size
        # local index -> position in the trace vector (-1 off the dirichlet part)
        self.trace_pos = np.full(self.n_loc, -1, dtype=np.intp)
        self.trace_pos[self.fixed] = np.arange(self.fixed.size)
        self.K = None
        self.K_fd = None
        self.lu = None

    @property
    def trace_nodes(self):
        """Global fine-node ids of the dirichlet part, trace-vector order."""
        return self.nodes[self.fixed]

    def local_index(self, global_ids):
        """Local indices of global fine-node ids inside the rectangle."""
        return fem._local_index(self.mesh, self.rect, global_ids)


def build_local_problem(mesh, coeff, rect):
    lp = LocalProblem(mesh, rect)
    lp.K = fem.assemble_sesquilinear(mesh, coeff, rect)
    K_ff, lp.K_fd = fem.reduce_system(lp.K, lp.free, lp.fixed)
    lp.lu = linalg.factorize(K_ff)
    return lp


def extend_local(lp, trace):
    """Harmonic extension as a local vector over the rectangle's nodes."""
    trace = np.asarray(trace, dtype=np.complex128)
    u = np.zeros(lp.n_loc, dtype=np.complex128)
    u[lp.fixed] = trace
    u[lp.free] = lp.lu.solve(-(lp.K_fd @ trace))
    return u


def extend_local_multi(lp, traces):
    """Extensions of many trace vectors at once; traces has shape (n_t, m)."""
    traces = np.asarray(traces, dtype=np.complex128)
    U = np.zeros((lp.n_loc, traces.shape[1]), dtype=np.complex128)
    U[lp.fixed] = traces
    U[lp.free] = lp.lu.solve(-(lp.K_fd @ traces))
    return U


def bubble_local(lp, load, flux=None):
    """Zero-trace solve with the load (plus natural boundary flux), local."""
    mesh = lp.mesh
    F = fem.assemble_load(mesh, load, lp.rect)
    if flux is not None:
        F = F + fem.assemble_flux_load(mesh, lp.rect, flux)
    u = np.zeros(lp.n_loc, dtype=np.complex128)
    u[lp.free] = lp.lu.solve(F[lp.free])
    return u


def to_global(lp, local_vec, out=None, accumulate=False):
    if out is None:
        out = np.zeros(lp.mesh.n_nodes, dtype=np.complex128)
    if accumulate:
        out[lp.nodes] += local_vec
    else:
        out[lp.nodes] = local_vec
    return out


def harmonic_extension(lp, trace):
    """Extension of a trace vector, returned on the global fine grid."""
    return to_global(lp, extend_local(lp, trace))


def bubble_solve(lp, load):
    """Zero-trace local solve, extended by zero outside the rectangle."""
    return to_global(lp, bubble_local(lp, load))


def particular_solve(lp, load, flux):
    """Bubble solve including the natural boundary flux load (g, v)."""
    return to_global(lp, bubble_local(lp, load, flux))


def oversampling_bubble(lp, load, flux=None):
    """Bubble on an oversampling patch (factored out only for readability)."""
    return to_global(lp, bubble_local(lp, load, flux))


class LocalSolver:
    """Per-element factorisation and Gram cache shared by basis and solves."""

    def __init__(self, mesh, coeff):
        self.mesh = mesh
        self.coeff = coeff
        self._problems = {}
        self._grams = {}

    def element_problem(self, t):
        if t not in self._problems:
            self._problems[t] = build_local_problem(
                self.mesh, self.coeff, self.mesh.element_rect(t)
            )
        return self._problems[t]

    def element_gram(self, t):
        if t not in self._grams:
            self._grams[t] = fem.assemble_energy_gram(
                self.mesh, self.coeff, self.mesh.element_rect(t)
            )
        return self._grams[t]

    def oversampling_problem(self, dom):
        # patches are visited once per stage; no cache, factorisations are cheap
        return build_local_problem(self.mesh, self.coeff, dom.rect)


def assemble_bubble_part(solver, load, flux=None):
    """Sum of all element bubbles (with flux where elements touch the
    natural boundary); vanishes on every coarse edge."""
    mesh = solver.mesh
    u = np.zeros(mesh.n_nodes, dtype=np.complex128)
    for t in range(mesh.n_elements):
        lp = solver.element_problem(t)
        u[lp.nodes] += bubble_local(lp, load, flux)
    return u


def edge_residues(solver, load, flux=None):
    """Interpolation residues of the oversampling bubbles, per edge.

    Returns {edge_id: values on the edge's residue slots}.  The residue is
    the bubble's edge trace minus its linear interpolant between the edge
    endpoints (endpoints without a tent contribute zero to the interpolant).
    """
    mesh = solver.mesh
    out = {}
    for e in mesh.edges:
        dom = oversampling_domain(mesh, e)
        lp = solver.oversampling_problem(dom)
        ub = bubble_local(lp, load, flux)
        vals = ub[lp.local_index(mesh.edge_fine_nodes(e))]
        w = mesh.edge_interpolation_weights(e)
        interp = w[:, 0] * vals[0] + w[:, 1] * vals[-1]
        out[e.id] = (vals - interp)[mesh.edge_residue_slots(e)]
    return out


def extend_edge_data(solver, edge_values):
    """Helmholtz-harmonic function with prescribed coarse-edge values.

    edge_values: {edge_id: values on the edge's residue slots}; all other
    dirichlet trace values (interior coarse nodes, dirichlet boundary) are
    zero.  Extended element by element.
    """
    mesh = solver.mesh
    u = np.zeros(mesh.n_nodes, dtype=np.complex128)
    for t in range(mesh.n_elements):
        lp = solver.element_problem(t)
        trace = np.zeros(lp.fixed.size, dtype=np.complex128)
        for edge_id in mesh.element_edges(t):
            if edge_id < 0 or edge_id not in edge_values:
                continue
            e = mesh.edges[edge_id]
            slots = mesh.edge_residue_slots(e)
            enodes = mesh.edge_fine_nodes(e)[slots]
            pos = lp.trace_pos[lp.local_index(enodes)]
            trace[pos] = edge_values[edge_id]
        u[lp.nodes] = extend_local(lp, trace)
    return u


def build_edge_correction(solver, load, flux=None):
    """The edge-residue field: harmonic in each element, with edge traces
    equal to the interpolation residues of the oversampling bubbles."""
    residues = edge_residues(solver, load, flux)
    return extend_edge_data(solver, residues), residues


def element_decomposition(solver, u_ref, load, flux=None):
    """Split a fine solution per element into harmonic + bubble parts.

    Returns (u_h, u_b) on the global grid; u_h + u_b should reproduce u_ref
    up to solver tolerance.
    """
    mesh = solver.mesh
    uh = np.zeros(mesh.n_nodes, dtype=np.complex128)
    ub = np.zeros(mesh.n_nodes, dtype=np.complex128)
    for t in range(mesh.n_elements):
        lp = solver.element_problem(t)
        uh[lp.nodes] = extend_local(lp, u_ref[lp.trace_nodes])
        ub[lp.nodes] = bubble_local(lp, load, flux)
    return uh, ub


def orthogonality_defects(solver, u_ref, load, flux=None):
    """Per-element sesquilinear pairing of the harmonic and bubble parts.

    Returns arrays (pairing, norm_h, norm_b): |a_T(u_h, u_b)| together with
    the element energy norms.  The pairing vanishes because bubbles are
    admissible test functions for the harmonic part's local equation.
    """
    mesh = solver.mesh
    pairing = np.zeros(mesh.n_elements)
    norm_h = np.zeros(mesh.n_elements)
    norm_b = np.zeros(mesh.n_elements)
    for t in range(mesh.n_elements):
        lp = solver.element_problem(t)
        hl = extend_local(lp, u_ref[lp.trace_nodes])
        bl = bubble_local(lp, load, flux)
        pairing[t] = abs(np.vdot(bl, lp.K @ hl))
        G = solver.element_gram(t)
        norm_h[t] = fem.norm_from_gram(G, hl)
        norm_b[t] = fem.norm_from_gram(G, bl)
    return pairing, norm_h, norm_b
