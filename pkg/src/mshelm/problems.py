"""Benchmark problems, sweep orchestration, and reporting.

Four problem recipes are built in: a constant-coefficient sanity case, a
high-frequency planar wave with inhomogeneous Robin data, a high-contrast
periodic-inclusion medium excited near resonance, and a mixed-boundary
problem with rough random coefficients.  Recipes are resolution free: they
carry callables that can be sampled on any fine grid.

The random fields use the Philox 4x64-10 counter-based generator keyed by
the seed (substreams 0, 1, 2 for the three coefficient fields via the
generator's jump function) and turn its raw 64-bit words into Gaussians by
the Box-Muller transform on 53-bit uniforms, so realizations are
bit-reproducible.

Run configs are single JSON documents; see the README for the schema.  CSV
columns, in order: problem, method, k, nH, refine, m, coarse_dim, e_L2,
e_H, offline_sec, online_sec, flags.  The two timing columns are excluded
from determinism comparisons.  Per-row failures are recorded in the flags
column as error:<ExceptionName> and the sweep continues.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import basis, fem, galerkin
from .fem import CoefficientField, Load
from .galerkin import CoarseSystemError
from .linalg import GramConditioningError, SolverError
from .local import (
    LocalSolver,
    assemble_bubble_part,
    build_edge_correction,
)
from .mesh import BoundaryClassification, GridSpec, KIND_BY_NAME, build_mesh

_LATTICE = 2 ** 7

_NORMALS = {
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class ProblemSpec:
    """Resolution-free description of one benchmark problem."""

    name: str
    k: float
    bc: BoundaryClassification
    a: object = 1.0          # scalar or callable (x, y) -> A
    v: object = 1.0
    beta: object = 1.0
    rhs: object = None       # callable (x, y) -> f, or None for zero
    flux: object = None      # callable (x, y, side) -> g on natural sides
    exact: object = None     # callable (x, y) -> u, when known
    params: dict = field(default_factory=dict)

    def build(self, grid):
        """Sample the recipe on a concrete two-level grid."""
        mesh = build_mesh(grid, self.bc)
        coeff = CoefficientField.from_callables(
            grid.n_fine, self.k, a=self.a, v=self.v, beta=self.beta
        ).validate()
        load = Load.from_callable(self.rhs) if self.rhs is not None else Load.zero()
        return mesh, coeff, load


# -- coefficient and load recipes --------------------------------------------


def gaussian_lattice(seed, stream, n=_LATTICE + 1):
    """(n, n) i.i.d. unit Gaussians, indexed [i, j] with i the x index.

    Philox 4x64-10 keyed by the seed; stream picks an independent substream
    via the generator's jump function.  Uniforms take the top 53 bits of
    each output word, offset by half an ulp so they lie in (0, 1).
    """
    bg = np.random.Philox(key=seed)
    if stream:
        bg = bg.jumped(stream)
    pairs = (n * n + 1) // 2
    words = np.frombuffer(np.random.Generator(bg).bytes(16 * pairs), dtype=np.uint64)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    g = np.empty(2 * pairs)
    g[0::2] = r * np.cos(2.0 * np.pi * u2)
    g[1::2] = r * np.sin(2.0 * np.pi * u2)
    return g[: n * n].reshape(n, n)


def field_from_lattice(lattice):
    """|bilinear interpolant| + 0.5 on the unit square, vectorised."""

    def f(x, y):
        tx = np.asarray(x, dtype=float) * _LATTICE
        ty = np.asarray(y, dtype=float) * _LATTICE
        i = np.clip(np.floor(tx).astype(int), 0, _LATTICE - 1)
        j = np.clip(np.floor(ty).astype(int), 0, _LATTICE - 1)
        fx, fy = tx - i, ty - j
        xi = (
            (1 - fx) * (1 - fy) * lattice[i, j]
            + fx * (1 - fy) * lattice[i + 1, j]
            + (1 - fx) * fy * lattice[i, j + 1]
            + fx * fy * lattice[i + 1, j + 1]
        )
        return np.abs(xi) + 0.5

    return f


def coeff_mie(eps):
    """1 outside, eps^2 inside the periodic inclusion set scaled by eps,
    clipped to the centered half-square."""
    eps = float(eps)

    def a(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        in_box = (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75)
        fx = x / eps - np.floor(x / eps)
        fy = y / eps - np.floor(y / eps)
        in_cell = (fx > 0.25) & (fx < 0.75) & (fy > 0.25) & (fy < 0.75)
        return np.where(in_box & in_cell, eps * eps, 1.0)

    return a


def rhs_bump(z=(0.125, 0.5), scale=1e4, radius2=1.0 / 400.0):
    """Smooth compact bump centered at z, zero outside dist^2 >= radius2."""
    zx, zy = z

    def f(x, y):
        d2 = (np.asarray(x, dtype=float) - zx) ** 2 + (
            np.asarray(y, dtype=float) - zy
        ) ** 2
        arg = 1.0 - d2 / radius2
        out = np.zeros_like(d2)
        inside = arg > 0.0
        out[inside] = scale * np.exp(-1.0 / arg[inside])
        return out

    return f


# -- problem recipes ----------------------------------------------------------


def planar_wave_problem(k=32.0):
    """Constant coefficients, all-Robin, exact solution a planar wave
    traveling along (0.6, 0.8); boundary data derived from the solution."""
    kf = float(k)

    def u_exact(x, y):
        return np.exp(-1j * kf * (0.6 * x + 0.8 * y))

    def flux(x, y, side):
        nx, ny = _NORMALS[side]
        return -1j * kf * (0.6 * nx + 0.8 * ny + 1.0) * u_exact(x, y)

    return ProblemSpec(
        name="planar_wave",
        k=kf,
        bc=BoundaryClassification.all_robin(),
        flux=flux,
        exact=u_exact,
        params={"k": kf},
    )


def mie_problem(k=9.0, eps=2.0 ** -4):
    """High-contrast inclusions (contrast 1/eps^2) driven by a compact bump
    left of the contrast region; all-Robin, homogeneous boundary data."""
    return ProblemSpec(
        name="mie",
        k=float(k),
        bc=BoundaryClassification.all_robin(),
        a=coeff_mie(eps),
        rhs=rhs_bump(),
        params={"k": float(k), "eps": float(eps)},
    )


def random_field_problem(k=16.0, seed=0):
    """Rough random coefficients with mixed boundary conditions: Dirichlet
    bottom, Neumann top, Robin left and right."""
    seed = int(seed)
    a = field_from_lattice(gaussian_lattice(seed, 0))
    v = field_from_lattice(gaussian_lattice(seed, 1))
    beta = field_from_lattice(gaussian_lattice(seed, 2))
    bc = BoundaryClassification.from_dict(
        {"bottom": "dirichlet", "top": "neumann", "left": "robin", "right": "robin"}
    )

    def rhs(x, y):
        return x ** 4 - y ** 3 + 1.0

    return ProblemSpec(
        name="random_field",
        k=float(k),
        bc=bc,
        a=a,
        v=v,
        beta=beta,
        rhs=rhs,
        params={"k": float(k), "seed": seed},
    )


def constant_problem(k, bc="robin", rhs="one", name="constant"):
    """Unit coefficients; bc is a side->kind dict or a uniform kind name;
    rhs is "one", "zero", or a callable."""
    if isinstance(bc, str):
        if bc not in KIND_BY_NAME:
            raise ConfigError(f"unknown boundary kind {bc!r}")
        bc = BoundaryClassification.uniform(bc)
    elif isinstance(bc, dict):
        bc = BoundaryClassification.from_dict(bc)
    if rhs == "one":
        rhs_fn = lambda x, y: np.ones_like(np.asarray(x, dtype=float))
    elif rhs == "zero":
        rhs_fn = None
    elif callable(rhs):
        rhs_fn = rhs
    else:
        raise ConfigError(f"unsupported rhs recipe {rhs!r}")
    return ProblemSpec(
        name=name, k=float(k), bc=bc, rhs=rhs_fn, params={"k": float(k)}
    )


# -- run configuration --------------------------------------------------------

_METHODS = ("ritz", "petrov")


@dataclass
class RunConfig:
    problem: ProblemSpec
    nH: int
    refine: int
    m_list: list
    methods: list
    out_dir: str = "."
    reference: str = "compute"   # compute | cached | verify-halving
    c_p: float = 1.0

    @property
    def grid(self):
        return GridSpec(self.nH, self.refine)


def _problem_from_dict(d):
    d = dict(d)
    recipe = d.pop("recipe", None)
    if recipe == "planar_wave":
        allowed = {"k"}
        builder = lambda: planar_wave_problem(k=d["k"])
    elif recipe == "mie":
        allowed = {"k", "eps"}
        builder = lambda: mie_problem(k=d["k"], eps=d.get("eps", 2.0 ** -4))
    elif recipe == "random_field":
        allowed = {"k", "seed"}
        builder = lambda: random_field_problem(k=d["k"], seed=d["seed"])
    elif recipe == "constant":
        allowed = {"k", "bc", "rhs"}
        builder = lambda: constant_problem(
            k=d["k"], bc=d.get("bc", "robin"), rhs=d.get("rhs", "one")
        )
    else:
        raise ConfigError(f"unknown problem recipe {recipe!r}")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown problem keys {sorted(unknown)}")
    if "k" not in d:
        raise ConfigError("problem.k is required")
    try:
        return builder()
    except KeyError as e:
        raise ConfigError(f"problem.{e.args[0]} is required for {recipe}") from e


def config_from_dict(d):
    d = dict(d)
    try:
        problem = _problem_from_dict(d.pop("problem"))
        nH = int(d.pop("nH"))
        refine = int(d.pop("refine"))
        m_list = [int(m) for m in d.pop("m_list")]
        methods = [str(s).lower() for s in d.pop("methods")]
    except KeyError as e:
        raise ConfigError(f"config key {e.args[0]!r} is required") from e
    out_dir = str(d.pop("out", "."))
    reference = str(d.pop("reference", "compute"))
    c_p = float(d.pop("c_p", 1.0))
    if d:
        raise ConfigError(f"unknown config keys {sorted(d)}")
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ConfigError("m_list must be nonempty and strictly ascending")
    if min(m_list) < 0:
        raise ConfigError("m_list entries must be nonnegative")
    if not methods or any(s not in _METHODS for s in methods):
        raise ConfigError(f"methods must be a nonempty subset of {_METHODS}")
    if reference not in ("compute", "cached", "verify-halving"):
        raise ConfigError(f"unknown reference policy {reference!r}")
    try:
        grid = GridSpec(nH, refine)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    problem.bc.check_aligned(grid.h)
    return RunConfig(problem, nH, refine, m_list, methods, out_dir, reference, c_p)


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(raw)


# -- sweep driver -------------------------------------------------------------


@dataclass
class SolveReport:
    problem: str
    method: str
    k: float
    nH: int
    refine: int
    m: int
    coarse_dim: int
    e_L2: float
    e_H: float
    offline_sec: float
    online_sec: float
    flags: list

    def csv_row(self):
        return [
            self.problem,
            self.method,
            f"{self.k:.12g}",
            str(self.nH),
            str(self.refine),
            str(self.m),
            str(self.coarse_dim),
            f"{self.e_L2:.12e}",
            f"{self.e_H:.12e}",
            f"{self.offline_sec:.3f}",
            f"{self.online_sec:.3f}",
            ";".join(self.flags),
        ]


CSV_COLUMNS = (
    "problem,method,k,nH,refine,m,coarse_dim,e_L2,e_H,offline_sec,online_sec,flags"
)


@dataclass
class SweepResult:
    rows: list
    csv_path: object
    counters: dict
    reference_report: object = None

    def csv_text(self):
        lines = [CSV_COLUMNS]
        lines.extend(",".join(r.csv_row()) for r in self.rows)
        return "\n".join(lines) + "\n"


def _reference_path(cfg):
    import pathlib

    return pathlib.Path(cfg.out_dir) / (
        f"{cfg.problem.name}_nH{cfg.nH}_r{cfg.refine}_ref.npz"
    )


def _get_reference(cfg, mesh, coeff, load):
    if cfg.reference == "cached":
        path = _reference_path(cfg)
        if path.exists():
            with np.load(path) as data:
                return data["u"], None
        u = fem.solve_reference(mesh, coeff, load, flux=cfg.problem.flux)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, u=u)
        return u, None
    if cfg.reference == "verify-halving":
        report = verify_reference(cfg)
        return fem.solve_reference(mesh, coeff, load, flux=cfg.problem.flux), report
    return fem.solve_reference(mesh, coeff, load, flux=cfg.problem.flux), None


def run_sweep(cfg, write_csv=True):
    """Run the full offline/online study of one config.

    Offline work (local factorizations, edge spectra, trial space) happens
    once at max(m_list); each (method, m) pair then reuses it.  Per-row
    numerical failures are recorded in flags and the sweep continues.
    """
    import pathlib

    spec = cfg.problem
    mesh, coeff, load = spec.build(cfg.grid)
    m_max = max(cfg.m_list)

    u_ref, ref_report = _get_reference(cfg, mesh, coeff, load)
    ref_flags = []
    if ref_report is not None and not ref_report["passed"]:
        ref_flags.append("ref-unverified")

    counters = {"offline_builds": 0, "coarse_assemblies": 0, "particular_builds": 0}

    t0 = time.perf_counter()
    solver = LocalSolver(mesh, coeff)
    nodal = basis.build_nodal_basis(solver)
    ebs = basis.build_edge_basis_set(solver, m_max)
    trial = basis.assemble_trial_space(mesh, nodal, ebs, m_max)
    counters["offline_builds"] += 1
    offline_sec = time.perf_counter() - t0

    rect = mesh.whole_domain()
    K = fem.assemble_sesquilinear(mesh, coeff, rect)
    F = fem.assemble_load(mesh, load, rect)
    if spec.flux is not None:
        F = F + fem.assemble_flux_load(mesh, rect, spec.flux)
    M = fem.assemble_mass(mesh, rect)
    G = fem.assemble_energy_gram(mesh, coeff, rect)

    t1 = time.perf_counter()
    u_b = assemble_bubble_part(solver, load, flux=spec.flux)
    u_s, _ = build_edge_correction(solver, load, flux=spec.flux)
    u_bs = u_b + u_s
    rhs_res = F - K @ u_bs
    counters["particular_builds"] += 1
    particular_sec = time.perf_counter() - t1

    rows = []
    for method in cfg.methods:
        t2 = time.perf_counter()
        cs = galerkin.assemble_coarse(K, trial, method, gram=G)
        counters["coarse_assemblies"] += 1
        counters[f"project_sec_{method}"] = time.perf_counter() - t2
        for m in cfg.m_list:
            t3 = time.perf_counter()
            flags = list(ref_flags)
            if any(b.lambdas.size < m for b in ebs.bases.values()):
                flags.append("truncated-basis")
            try:
                u_c, info = galerkin.solve_coarse(cs, m, rhs_res)
                e_l2, e_en, eflags = galerkin.compute_errors(u_c + u_bs, u_ref, M, G)
                flags.extend(eflags)
                dim = info.dim
            except (CoarseSystemError, SolverError, GramConditioningError) as e:
                flags.append(f"error:{type(e).__name__}")
                e_l2 = e_en = float("nan")
                dim = cs.dim(m)
            rows.append(
                SolveReport(
                    spec.name, method, spec.k, cfg.nH, cfg.refine, m, dim,
                    e_l2, e_en, offline_sec, time.perf_counter() - t3, flags,
                )
            )
    counters["particular_sec"] = particular_sec

    result = SweepResult(rows, None, counters, ref_report)
    if write_csv:
        out = pathlib.Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{spec.name}_sweep.csv"
        path.write_text(result.csv_text())
        result.csv_path = path
    return result


def prolong_uniform(u, n):
    """Bilinear interpolation of node values from an (n+1)^2 grid onto the
    once-halved (2n+1)^2 grid: even nodes copy, odd nodes average."""
    U = np.asarray(u).reshape(n + 1, n + 1)
    P = np.zeros((2 * n + 1, 2 * n + 1), dtype=U.dtype)
    P[::2, ::2] = U
    P[::2, 1::2] = 0.5 * (U[:, :-1] + U[:, 1:])
    P[1::2, ::2] = 0.5 * (U[:-1, :] + U[1:, :])
    P[1::2, 1::2] = 0.25 * (
        U[:-1, :-1] + U[:-1, 1:] + U[1:, :-1] + U[1:, 1:]
    )
    return P.ravel()


def verify_reference(cfg, e_l2_tol=5e-4, e_h_tol=5e-2):
    """Mesh-halving check of the fine reference.

    Solves at the configured refinement and at twice that refinement,
    interpolates the coarser solution up, and reports relative differences
    in the L2 and energy norms.  Failure is flagged, not fatal.
    """
    spec = cfg.problem
    mesh1, coeff1, load1 = spec.build(GridSpec(cfg.nH, cfg.refine))
    mesh2, coeff2, load2 = spec.build(GridSpec(cfg.nH, 2 * cfg.refine))
    u1 = fem.solve_reference(mesh1, coeff1, load1, flux=spec.flux)
    u2 = fem.solve_reference(mesh2, coeff2, load2, flux=spec.flux)
    d = u2 - prolong_uniform(u1, mesh1.n_fine)
    rect2 = mesh2.whole_domain()
    M2 = fem.assemble_mass(mesh2, rect2)
    G2 = fem.assemble_energy_gram(mesh2, coeff2, rect2)
    e_l2 = fem.norm_from_gram(M2, d) / fem.norm_from_gram(M2, u2)
    e_h = fem.norm_from_gram(G2, d) / fem.norm_from_gram(G2, u2)
    return {
        "problem": spec.name,
        "h": mesh1.grid.h,
        "e_L2": e_l2,
        "e_H": e_h,
        "e_L2_tol": e_l2_tol,
        "e_H_tol": e_h_tol,
        "passed": bool(e_l2 <= e_l2_tol and e_h <= e_h_tol),
    }


def spectrum(cfg, edge_id):
    """Full singular-value sequence of one edge's restriction operator."""
    spec = cfg.problem
    mesh, coeff, _ = spec.build(cfg.grid)
    if not 0 <= edge_id < len(mesh.edges):
        raise ConfigError(
            f"edge id {edge_id} out of range (mesh has {len(mesh.edges)} edges)"
        )
    solver = LocalSolver(mesh, coeff)
    rd = basis.build_restriction(solver, mesh.edges[edge_id])
    eb = basis.edge_svd(rd, rd.slots.size)
    return eb.lambdas


def admissible_mesh_size(coeff, c_p=1.0):
    """Largest coarse H for which the local decomposition theory applies."""
    return float(
        np.sqrt(coeff.A.min()) / (np.sqrt(2.0) * c_p * coeff.V.max() * coeff.k)
    ) if coeff.k > 0 else float("inf")


def describe(cfg):
    """Mesh, coefficient, and assumption summary for one config."""
    spec = cfg.problem
    mesh, coeff, _ = spec.build(cfg.grid)
    bound = admissible_mesh_size(coeff, cfg.c_p)
    beta_all = np.concatenate([coeff.beta[s] for s in sorted(coeff.beta)])
    return {
        "problem": spec.name,
        "params": dict(spec.params),
        "k": spec.k,
        "nH": cfg.nH,
        "refine": cfg.refine,
        "H": mesh.grid.H,
        "h": mesh.grid.h,
        "kH": spec.k * mesh.grid.H,
        "n_fine_nodes": mesh.n_nodes,
        "n_coarse_nodes": len(mesh.coarse_nodes),
        "n_edges": len(mesh.edges),
        "bc": {side: segs for side, segs in sorted(mesh.bc.segments.items())},
        "A_min": float(coeff.A.min()),
        "A_max": float(coeff.A.max()),
        "V_min": float(coeff.V.min()),
        "V_max": float(coeff.V.max()),
        "beta_min": float(beta_all.min()),
        "beta_max": float(beta_all.max()),
        "C_P": cfg.c_p,
        "H_admissible": bound,
        "mesh_size_ok": bool(mesh.grid.H <= bound),
    }
