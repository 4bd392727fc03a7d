"""Built-in desk-scale fixed-point problems.

Four residual maps that exercise the solver in different regimes: a dense
SPD linear system (plain Richardson converges, mixing accelerates), a
finite-difference Stokes-like saddle-point system under a block-diagonal
preconditioner (Richardson alone diverges), a regularized p-Laplacian with
a Laplace-stabilized quasi-Newton residual, and an implicit-Euler step of a
two-field bidomain toy with a cubic ionic current.

Grid operators are finite differences on the unit interval or square.
Construction precomputes any direct factorizations; the resulting problem
objects are immutable and cheap to evaluate repeatedly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fixed_point import FixedPointProblem

SPECTRUM_LO = 0.1
SPECTRUM_HI = 2.0
MAX_SADDLE_POINTS = 65


class ResourceLimit(RuntimeError):
    """Requested problem size exceeds what cached direct solves handle."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the unit interval (1D) or unit square (2D).

    ``points`` counts nodes per side including both boundaries, so the
    spacing is h = 1/(points - 1).
    """

    dimensions: int
    points: int

    def __post_init__(self):
        if self.dimensions not in (1, 2):
            raise ValueError("dimensions must be 1 or 2")
        if self.points < 3:
            raise ValueError("points per side must be >= 3")

    @property
    def h(self) -> float:
        return 1.0 / (self.points - 1)


def make_linear(n: int, seed: int = 0) -> FixedPointProblem:
    """Dense SPD system T(x) = Ax - b with spectrum in [0.1, 2].

    A is a random symmetric matrix rescaled and diagonally shifted so its
    eigenvalues span exactly [SPECTRUM_LO, SPECTRUM_HI]; b is seeded
    Gaussian. The recommended relaxation is 1/lambda_max, which keeps
    plain Richardson contractive.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((n, n))
    sym = 0.5 * (s + s.T)
    ev = np.linalg.eigvalsh(sym)
    scale = (SPECTRUM_HI - SPECTRUM_LO) / (ev[-1] - ev[0])
    a = scale * (sym - ev[0] * np.eye(n)) + SPECTRUM_LO * np.eye(n)
    b = rng.standard_normal(n)

    def residual(x):
        return a @ x - b

    return FixedPointProblem(
        residual=residual,
        dimension=n,
        fields=(("state", (0, n)),),
        recommended_omega=1.0 / SPECTRUM_HI,
        name="linear",
        data={"matrix": a, "rhs": b},
    )


def _path_laplacian(k: int) -> sp.csr_matrix:
    """Tridiagonal (-1, 2, -1) matrix of order k (Dirichlet drop at ends)."""
    main = 2.0 * np.ones(k)
    off = -np.ones(k - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _component_stiffness(nx: int, ny: int) -> sp.csr_matrix:
    """5-point stencil {4, -1} on an nx-by-ny lattice, C-order raveled.

    Stiffness scaling: entries are h-free, so this equals h^2 times the
    finite-difference Laplacian. Neighbors beyond the lattice edge are
    dropped while the diagonal stays at 4, the zero-ghost-value Dirichlet
    closure. Symmetric positive definite for any lattice shape.
    """
    ix = sp.identity(nx, format="csr")
    iy = sp.identity(ny, format="csr")
    lap = sp.kron(_path_laplacian(nx), iy) + sp.kron(ix, _path_laplacian(ny))
    return lap.tocsr()


def make_saddle_point(grid: GridSpec) -> FixedPointProblem:
    """Stokes-like block system on a staggered grid, preconditioned.

    Unknowns are face velocities (u on vertical faces, v on horizontal
    faces, no-slip walls) and cell pressures. The block system

        [[K, B^T], [B, 0]] [u; p] = [F; 0]

    uses the vector Laplacian K per velocity component and the discrete
    divergence B, both assembled in stiffness scaling (K entries {4, -1},
    B entries of size h, forcing scaled by h^2): the whole system is h^2
    times its plain finite-difference form, so (u, p) keep their physical
    values while the pressure Schur complement becomes h^2-equivalent and
    the lumped-mass surrogate h^2 I preconditions it with O(1) spectrum.
    Pressure is grounded by replacing the last continuity row with
    h^2 * p_last = 0, which preconditions to unit eigenvalue. The residual

        T([u; p]) = P^{-1} (M [u; p] - [F; 0])

    applies P = blockdiag(K, h^2 I) through a cached factorization of K.
    The preconditioned operator is indefinite, so plain Richardson diverges
    here and the mixing steps carry the iteration.
    """
    if grid.dimensions != 2:
        raise ValueError("saddle-point problem needs a 2D grid")
    npts = grid.points
    if npts > MAX_SADDLE_POINTS:
        raise ResourceLimit(
            f"saddle grid limited to {MAX_SADDLE_POINTS} points per side, got {npts}"
        )
    h = grid.h
    nc = npts - 1            # cells per side
    nxu, nyu = npts - 2, nc  # u faces: interior x lines, all cell rows
    nxv, nyv = nc, npts - 2  # v faces: all cell columns, interior y lines
    n_u = nxu * nyu
    n_v = nxv * nyv
    n_p = nc * nc
    n = n_u + n_v + n_p

    k_u = _component_stiffness(nxu, nyu)
    k_v = _component_stiffness(nxv, nyv)
    k_block = sp.block_diag([k_u, k_v], format="csr")

    # Divergence in stiffness scaling: h^2 times the per-cell face balance
    # (u_right - u_left + v_top - v_bottom)/h, so entries are +-h. Boundary
    # faces carry zero velocity. u index (iu, j) is the face at x = (iu+1) h,
    # so the face between cells ci-1 and ci has iu = ci - 1.
    rows, cols, vals = [], [], []
    for ci in range(nc):
        for cj in range(nc):
            cell = ci * nc + cj
            if ci <= nxu - 1:
                rows.append(cell); cols.append(ci * nyu + cj); vals.append(h)
            if ci >= 1:
                rows.append(cell); cols.append((ci - 1) * nyu + cj); vals.append(-h)
            if cj <= nyv - 1:
                rows.append(cell); cols.append(n_u + ci * nyv + cj); vals.append(h)
            if cj >= 1:
                rows.append(cell); cols.append(n_u + ci * nyv + cj - 1); vals.append(-h)
    b_div = sp.csr_matrix((vals, (rows, cols)), shape=(n_p, n_u + n_v))

    system = sp.bmat(
        [[k_block, b_div.T], [b_div, None]], format="lil"
    )
    system[n - 1, :] = 0.0
    system[n - 1, n - 1] = h * h
    system = system.tocsr()

    xs_u = (np.arange(nxu) + 1.0) * h
    ys_u = (np.arange(nyu) + 0.5) * h
    f_u = np.sin(np.pi * xs_u)[:, None] * np.sin(np.pi * ys_u)[None, :]
    rhs = np.zeros(n)
    rhs[:n_u] = (h * h) * f_u.ravel()

    lu = splu(k_block.tocsc())
    inv_h2 = 1.0 / (h * h)

    def residual(x):
        raw = system @ x - rhs
        out = np.empty_like(raw)
        out[: n_u + n_v] = lu.solve(raw[: n_u + n_v])
        out[n_u + n_v :] = raw[n_u + n_v :] * inv_h2
        return out

    return FixedPointProblem(
        residual=residual,
        dimension=n,
        fields=(("velocity", (0, n_u + n_v)), ("pressure", (n_u + n_v, n))),
        recommended_omega=1.0,
        recommended_window=10,
        name="saddle",
        data={
            "grid": grid,
            "system": system,
            "rhs": rhs,
            "divergence": b_div,
            "stiffness": k_block,
        },
    )


def _dirichlet_laplacian(grid: GridSpec) -> sp.csr_matrix:
    """Standard 5-point (or 3-point in 1D) -Laplacian on interior nodes."""
    k = grid.points - 2
    h2 = grid.h * grid.h
    if grid.dimensions == 1:
        return (_path_laplacian(k) / h2).tocsr()
    return (_component_stiffness(k, k) / h2).tocsr()


def q_laplacian_residual(grid: GridSpec, q: float, reg: float = 1e-10):
    """Raw face-flux q-Laplacian operator F(u) = -div(gamma grad u) - 1.

    gamma = (|grad u|^2 + reg)^((q-2)/2) is evaluated on faces, with the
    tangential derivative at a face averaged from the four surrounding
    faces. Interior unknowns only, zero Dirichlet boundary. Returns a
    callable on raveled interior vectors. At q = 2 the power is exactly
    zero so gamma is identically one and F reduces to the 5-point stencil.
    """
    npts = grid.points
    h = grid.h
    expo = 0.5 * (q - 2.0)

    if grid.dimensions == 1:
        k = npts - 2

        def apply_1d(uvec):
            full = np.zeros(npts)
            full[1:-1] = uvec
            du = np.diff(full) / h
            gamma = (du * du + reg) ** expo
            flux = gamma * du
            return -np.diff(flux) / h - 1.0

        return apply_1d

    k = npts - 2

    def apply_2d(uvec):
        full = np.zeros((npts, npts))
        full[1:-1, 1:-1] = uvec.reshape(k, k)
        dux = np.diff(full, axis=0) / h
        duy = np.diff(full, axis=1) / h
        # tangential averages: four neighbor faces of the other orientation
        ty = 0.25 * (duy[:-1, :-1] + duy[:-1, 1:] + duy[1:, :-1] + duy[1:, 1:])
        tx = 0.25 * (dux[:-1, :-1] + dux[1:, :-1] + dux[:-1, 1:] + dux[1:, 1:])
        gx = dux[:, 1:-1]
        gy = duy[1:-1, :]
        gamma_x = (gx * gx + ty * ty + reg) ** expo
        gamma_y = (gy * gy + tx * tx + reg) ** expo
        flux_x = gamma_x * gx
        flux_y = gamma_y * gy
        div = np.diff(flux_x, axis=0) / h + np.diff(flux_y, axis=1) / h
        return (-div - 1.0).ravel()

    return apply_2d


def make_p_laplacian(
    grid: GridSpec,
    q: float = 1.5,
    beta: float = 10.0,
    init: str = "zero",
) -> FixedPointProblem:
    """Laplace-stabilized quasi-Newton residual for the q-Laplacian.

    T(u) = (1/beta) (-Lap)^{-1} F(u), where F is the raw face-flux
    operator from `q_laplacian_residual` with unit forcing and the inverse
    Laplacian is a cached direct factorization. The fixed point of
    u <- u - omega T(u) is the discrete q-Laplacian solution; at q = 2 it
    is the plain Poisson solution and T is affine with Jacobian I/beta.

    init = "zero" starts from the zero function (the harmonic extension of
    the boundary data); init = "poisson" starts from the linear solution
    (-Lap)^{-1} 1, which avoids the uniformly flat initial gradient.
    """
    if q < 1.0:
        raise ValueError("q must be >= 1")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if init not in ("zero", "poisson"):
        raise ValueError("init must be 'zero' or 'poisson'")
    lap = _dirichlet_laplacian(grid)
    lu = splu(lap.tocsc())
    raw = q_laplacian_residual(grid, q)
    n = lap.shape[0]
    inv_beta = 1.0 / beta

    def residual(u):
        return inv_beta * lu.solve(raw(u))

    poisson = lu.solve(np.ones(n))
    x0 = poisson.copy() if init == "poisson" else None
    return FixedPointProblem(
        residual=residual,
        dimension=n,
        fields=(("interior", (0, n)),),
        recommended_omega=1.0,
        recommended_window=10,
        name="plaplace",
        initial_state=x0,
        data={
            "grid": grid,
            "q": q,
            "beta": beta,
            "apply_q_laplacian": raw,
            "poisson_solution": poisson,
        },
    )


def neumann_laplacian_apply(field: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian with zero-flux walls via edge replication."""
    padded = np.pad(field, 1, mode="edge")
    return (
        padded[:-2, 1:-1]
        + padded[2:, 1:-1]
        + padded[1:-1, :-2]
        + padded[1:-1, 2:]
        - 4.0 * field
    ) / (h * h)


def make_bidomain_toy(
    grid: GridSpec,
    dt: float = 0.5,
    conductivity_e: float = 0.1,
    conductivity_i: float = 0.1,
    cubic_c: float = 1.0,
    cubic_a: float = 0.1,
    amplitude: float = 1.0,
) -> FixedPointProblem:
    """One implicit-Euler step of a two-field bidomain toy.

    State is [u_e; u_i] on a collocated grid with zero-flux walls, with the
    transmembrane potential v = u_e - u_i starting from rest (v0 = 0). The
    residual stacks

        F_e = (v - v0)/dt - D_e Lap u_e + I_ion(v) - I_app
        F_i = -(v - v0)/dt - D_i Lap u_i - I_ion(v) + I_app

    with the gating-free cubic current I_ion(v) = c v (v - a)(v - 1) and a
    box stimulus I_app = amplitude on [0, 0.25]^2. Both equations are
    invariant under a common constant shift of (u_e, u_i) and the stacked
    residual sums to zero, so the iteration stays on the slice where the
    shift component of the initial guess is preserved.

    Defaults (dt = 0.5, D = 0.1, c = 1, a = 0.1) keep the step stiffness
    moderate at desk-scale grids. With amplitude = 0 the rest state is an
    exact fixed point.
    """
    if grid.dimensions != 2:
        raise ValueError("bidomain problem needs a 2D grid")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    npts = grid.points
    h = grid.h
    n_field = npts * npts
    coords = np.arange(npts) * h
    in_box = (coords[:, None] <= 0.25) & (coords[None, :] <= 0.25)
    i_app = amplitude * in_box.astype(float)
    v0 = np.zeros((npts, npts))
    inv_dt = 1.0 / dt

    def ionic(v):
        return cubic_c * v * (v - cubic_a) * (v - 1.0)

    def residual(x):
        ue = x[:n_field].reshape(npts, npts)
        ui = x[n_field:].reshape(npts, npts)
        v = ue - ui
        rate = (v - v0) * inv_dt
        ion = ionic(v)
        fe = rate - conductivity_e * neumann_laplacian_apply(ue, h) + ion - i_app
        fi = -rate - conductivity_i * neumann_laplacian_apply(ui, h) - ion + i_app
        return np.concatenate([fe.ravel(), fi.ravel()])

    return FixedPointProblem(
        residual=residual,
        dimension=2 * n_field,
        fields=(
            ("extracellular", (0, n_field)),
            ("intracellular", (n_field, 2 * n_field)),
        ),
        recommended_omega=0.01,
        recommended_window=50,
        name="bidomain",
        data={
            "grid": grid,
            "dt": dt,
            "conductivity_e": conductivity_e,
            "conductivity_i": conductivity_i,
            "cubic_c": cubic_c,
            "cubic_a": cubic_a,
            "applied_current": i_app,
            "ionic": ionic,
            "v0": v0,
        },
    )


def build_problem(
    name: str, size: int, seed: int = 0, init: str = "zero"
) -> FixedPointProblem:
    """Construct a registered problem by CLI name.

    ``size`` is the system dimension for `linear` and points per side for
    the grid problems. ``init`` selects the starting guess and is only
    meaningful for `plaplace` (it alone offers a non-default one).
    """
    if name == "plaplace":
        return make_p_laplacian(GridSpec(2, size), init=init)
    if init != "zero":
        raise ValueError(f"problem {name!r} has no {init!r} initial guess")
    if name == "linear":
        return make_linear(size, seed=seed)
    if name == "saddle":
        return make_saddle_point(GridSpec(2, size))
    if name == "bidomain":
        return make_bidomain_toy(GridSpec(2, size))
    raise KeyError(f"unknown problem {name!r}, expected one of {PROBLEM_NAMES}")


PROBLEM_NAMES = ("linear", "saddle", "plaplace", "bidomain")
