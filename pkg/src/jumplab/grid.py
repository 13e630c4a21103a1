"""Deterministic discretization of the operator on uniform tensor grids.

The Laplacian uses second-order central differences; the jump part uses
midpoint quadrature over grid-cell offsets, with offsets inside radius 2h
absorbed into an effective diffusion coefficient (their compensated
contribution is a pure second-order term for isotropic kernels) and the
tail beyond R_max summarized by its total mass acting against a configured
far-field constant.  Exterior nodes within reach of an interior stencil
form the collar and carry exterior data exactly.

The grid is centered on the domain centroid, so symmetric domains produce
discretely symmetric operators.  Boundary handling is node classification
only (no cut cells), giving first-order boundary error; tolerances in the
verification suite account for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import linalg as spla

from .errors import NumericsError
from .geometry import Ball, Box, Domain
from .kernels import JumpKernel

_EIGEN_TOL = 1e-10
_SOLVE_TOL = 1e-10
_NEWTON_TOL = 1e-8


@dataclass
class GridOperator:
    """Sparse discretization of the operator plus a zeroth-order term.

    A maps interior values; collar maps exterior values referenced by
    interior stencils.  Off-diagonal entries of the pure-operator part are
    nonnegative and diagonals negative (discrete maximum-principle
    structure); full row sums over interior plus collar columns equal
    -tail_mass for symmetric kernels.
    """

    domain: Domain
    kernel: JumpKernel
    h: float
    r_max: float
    far_field_value: float
    axes: tuple                 # per-dimension coordinate arrays
    interior_flat: np.ndarray   # flat grid ids of interior nodes
    exterior_flat: np.ndarray   # flat grid ids of referenced exterior nodes
    coords_interior: np.ndarray
    coords_exterior: np.ndarray
    A: sparse.csr_matrix
    collar: sparse.csr_matrix
    tail_mass: float
    c: np.ndarray

    @property
    def n_interior(self) -> int:
        return self.interior_flat.size

    @property
    def dimension(self) -> int:
        return len(self.axes)

    def operator_with_c(self) -> sparse.csr_matrix:
        if np.any(self.c != 0.0):
            return (self.A + sparse.diags(self.c)).tocsr()
        return self.A

    def apply_to_function(self, fn) -> np.ndarray:
        """Apply the discrete operator to a globally defined function.

        Evaluates fn on interior and collar nodes; the far tail contributes
        tail_mass * (far_field_value - u(x)), the u(x) part being already on
        the diagonal of A.  Used by the Fourier-symbol consistency check.
        """
        u_int = np.asarray(fn(self.coords_interior), dtype=float)
        u_ext = np.asarray(fn(self.coords_exterior), dtype=float)
        return self.A @ u_int + self.collar @ u_ext \
            + self.tail_mass * self.far_field_value

    def row_sums_pure(self) -> np.ndarray:
        """Row sums of the pure operator over interior plus collar columns."""
        return np.asarray(self.A.sum(axis=1)).ravel() + \
            np.asarray(self.collar.sum(axis=1)).ravel()


@dataclass
class GridFunction:
    """Values on the interior nodes of a GridOperator, zero outside."""

    op: GridOperator
    values: np.ndarray

    def interpolate(self, pts) -> np.ndarray:
        """Multilinear interpolation; nodes outside the interior read as 0."""
        op = self.op
        d = op.dimension
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        full = np.zeros(tuple(len(a) for a in op.axes))
        full.ravel()[op.interior_flat] = self.values
        idx = []
        frac = []
        for k in range(d):
            ax = op.axes[k]
            i = np.clip(np.searchsorted(ax, pts[:, k]) - 1, 0, len(ax) - 2)
            idx.append(i)
            frac.append(np.clip((pts[:, k] - ax[i]) / (ax[i + 1] - ax[i]), 0.0, 1.0))
        out = np.zeros(pts.shape[0])
        for corner in range(2 ** d):
            w = np.ones(pts.shape[0])
            loc = []
            for k in range(d):
                bit = (corner >> k) & 1
                w = w * (frac[k] if bit else (1.0 - frac[k]))
                loc.append(idx[k] + bit)
            out += w * full[tuple(loc)]
        return out

    def max(self) -> float:
        return float(self.values.max())

    def value_near(self, point) -> float:
        i = int(np.argmin(np.linalg.norm(self.coords - np.asarray(point), axis=1)))
        return float(self.values[i])

    @property
    def coords(self) -> np.ndarray:
        return self.op.coords_interior


def default_r_max(domain: Domain, kernel: JumpKernel, h: float) -> float:
    """Smallest radius >= max(1, diam D) whose truncated tail is negligible.

    Taking R_max past the diameter makes the tail treatment exact for
    problems whose exterior data equals the far-field constant beyond the
    collar, since no shorter offset can stay inside the domain.
    """
    r = max(1.0, domain.diameter())
    if kernel.family == "zero":
        return r
    budget = 1e-3 / h ** 2
    while kernel.radial_moment(0.0, r, math.inf) > budget and r < 64.0:
        r *= 1.5
    return r


def assemble(domain: Domain, kernel: JumpKernel, c=None, h: float = 0.02,
             r_max: float | None = None, far_field_value: float = 0.0) -> GridOperator:
    """Build the sparse operator on a centroid-centered uniform grid.

    c may be None, a scalar, or a callable over (n, d) points.  Offsets
    with zero kernel weight are skipped, so compactly supported kernels
    assemble small stencils regardless of r_max.
    """
    if h <= 0:
        raise ValueError("grid spacing h must be positive")
    d = domain.dimension
    if r_max is None:
        r_max = default_r_max(domain, kernel, h)
    if r_max < 1.0:
        raise ValueError("r_max must be at least 1 so the compensated band is covered")

    lo, hi = domain.bounding_box()
    centroid = np.asarray(domain.centroid(), dtype=float)
    if kernel.family != "zero":
        pad = min(r_max, kernel.support_radius) + 2.0 * h
    else:
        pad = 2.0 * h
    axes = []
    for k in range(d):
        half = max(hi[k] - centroid[k], centroid[k] - lo[k]) + pad
        m = int(math.ceil(half / h))
        axes.append(centroid[k] + h * np.arange(-m, m + 1))
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([mm.ravel() for mm in mesh], axis=1)
    inside = domain.contains_many(pts)
    interior_flat = np.nonzero(inside)[0]
    n_int = interior_flat.size
    if n_int == 0:
        raise ValueError("grid resolves no interior nodes; reduce h")
    pos_of_flat = -np.ones(pts.shape[0], dtype=np.int64)
    pos_of_flat[interior_flat] = np.arange(n_int)
    strides = np.empty(d, dtype=np.int64)
    strides[-1] = 1
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * shape[k + 1]

    # near-field absorption: compensated mass inside 2h is a diffusion term
    c_near = 0.0
    if kernel.family != "zero":
        mass_near = kernel.radial_moment(2.0, 0.0, 2.0 * h)
        if mass_near > 0.0 and not kernel.isotropic:
            raise NumericsError("near-field absorption requires an isotropic kernel")
        c_near = mass_near / (2.0 * d)
    lap_coeff = (1.0 + c_near) / h ** 2
    tail_mass = kernel.radial_moment(0.0, r_max, math.inf) \
        if kernel.family != "zero" else 0.0

    # stencil offsets: Laplacian neighbours plus kernel cells in [2h, r_max]
    offsets = []
    for k in range(d):
        for sgn in (1, -1):
            q = [0] * d
            q[k] = sgn
            offsets.append((tuple(q), lap_coeff))
    if kernel.family != "zero":
        kmax = int(math.floor(min(r_max, kernel.support_radius + h) / h))
        rng_1d = np.arange(-kmax, kmax + 1)
        grids = np.meshgrid(*([rng_1d] * d), indexing="ij")
        offs = np.stack([g.ravel() for g in grids], axis=1)
        norms = np.linalg.norm(offs, axis=1) * h
        keep = (norms >= 2.0 * h - 1e-12) & (norms <= r_max)
        offs = offs[keep]
        weights = np.asarray(kernel.profile(norms[keep])) * h ** d
        nz = weights > 0.0
        for q, w in zip(offs[nz], weights[nz]):
            offsets.append((tuple(int(v) for v in q), float(w)))
        # symmetric kernels: compensated gradient terms over (2h, 1] cancel
        # pairwise across opposite offsets and are omitted

    diag = np.full(n_int, -tail_mass)
    rows_a, cols_a, vals_a = [], [], []
    rows_c, cols_c_flat, vals_c = [], [], []
    row_idx = np.arange(n_int)
    for q, w in offsets:
        shift = int(np.dot(np.asarray(q, dtype=np.int64), strides))
        nbr = interior_flat + shift
        nbr_pos = pos_of_flat[nbr]
        is_int = nbr_pos >= 0
        if is_int.any():
            rows_a.append(row_idx[is_int])
            cols_a.append(nbr_pos[is_int])
            vals_a.append(np.full(int(is_int.sum()), w))
        if (~is_int).any():
            rows_c.append(row_idx[~is_int])
            cols_c_flat.append(nbr[~is_int])
            vals_c.append(np.full(int((~is_int).sum()), w))
        diag -= w

    A = sparse.coo_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(n_int, n_int)).tocsr()
    A = (A + sparse.diags(diag)).tocsr()

    if cols_c_flat:
        ext_flat_all = np.concatenate(cols_c_flat)
        exterior_flat, inv = np.unique(ext_flat_all, return_inverse=True)
        collar = sparse.coo_matrix(
            (np.concatenate(vals_c), (np.concatenate(rows_c), inv)),
            shape=(n_int, exterior_flat.size)).tocsr()
    else:
        exterior_flat = np.array([], dtype=np.int64)
        collar = sparse.csr_matrix((n_int, 0))

    coords_int = pts[interior_flat]
    coords_ext = pts[exterior_flat] if exterior_flat.size else np.zeros((0, d))

    if c is None:
        c_vec = np.zeros(n_int)
    elif np.isscalar(c):
        c_vec = np.full(n_int, float(c))
    else:
        c_vec = np.asarray(c(coords_int), dtype=float)

    return GridOperator(domain=domain, kernel=kernel, h=h, r_max=r_max,
                        far_field_value=far_field_value, axes=tuple(axes),
                        interior_flat=interior_flat, exterior_flat=exterior_flat,
                        coords_interior=coords_int, coords_exterior=coords_ext,
                        A=A, collar=collar, tail_mass=tail_mass, c=c_vec)


def _linear_solve(M: sparse.csr_matrix, rhs: np.ndarray, spd: bool) -> np.ndarray:
    """Solve M x = rhs to relative residual 1e-10.

    SPD systems (c <= 0) go through conjugate gradients with an
    incomplete-LU preconditioner; indefinite systems (positive c in the
    narrow-domain experiments) and small or dense ones use a direct factor.
    The residual is verified either way.
    """
    n = M.shape[0]
    density = M.nnz / max(n * n, 1)
    x = None
    if spd and n >= 600 and density <= 0.05:
        try:
            ilu = spla.spilu(M.tocsc(), drop_tol=1e-5, fill_factor=12)
            pre = spla.LinearOperator(M.shape, ilu.solve)
            x, info = spla.cg(M, rhs, rtol=1e-12, atol=0.0, maxiter=20_000, M=pre)
            if info != 0:
                x = None
        except RuntimeError:
            x = None
    if x is None:
        if density > 0.15:
            x = np.linalg.solve(M.toarray(), rhs)
        else:
            x = spla.splu(M.tocsc()).solve(rhs)
    resid = np.linalg.norm(M @ x - rhs)
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    if resid > _SOLVE_TOL * scale * 10.0:
        raise NumericsError(
            f"linear solve stalled at relative residual {resid / scale:.3e}")
    return x


def _as_node_values(obj, coords):
    if obj is None:
        return np.zeros(coords.shape[0])
    if np.isscalar(obj):
        return np.full(coords.shape[0], float(obj))
    if callable(obj):
        return np.asarray(obj(coords), dtype=float)
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (coords.shape[0],):
        raise ValueError("node-value array has the wrong length")
    return arr


def solve_dirichlet(op: GridOperator, f, g) -> GridFunction:
    """Solve the interior problem with running cost f and exterior data g.

    f and g may be callables over points, arrays of node values, or
    scalars; g is evaluated on the collar nodes and the far field
    contributes tail_mass times the configured constant.
    """
    f_vec = _as_node_values(f, op.coords_interior)
    g_ext = _as_node_values(g, op.coords_exterior)
    rhs = f_vec + op.collar @ g_ext + op.tail_mass * op.far_field_value
    M = (-op.operator_with_c()).tocsr()
    spd = bool(np.all(op.c <= 0.0))
    u = _linear_solve(M, rhs, spd)
    return GridFunction(op=op, values=u)


@dataclass
class EigenpairResult:
    lambda_h: float
    psi: GridFunction
    psi_at_centroid: float
    iterations: int


def principal_eigenpair(op: GridOperator, max_iter: int = 400) -> EigenpairResult:
    """Smallest eigenvalue of the negated operator with its positive mode.

    Inverse power iteration with a shift just below the Gershgorin lower
    bound of the spectrum, factored once.  The converged eigenvector must
    be positive at every interior node; a sign change indicates the
    discretization lost the maximum-principle structure (reduce h).
    """
    M = (-op.operator_with_c()).tocsc()
    n = M.shape[0]
    diag = M.diagonal()
    offdiag_abs = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
    gersh = float((diag - offdiag_abs).min())
    sigma = 0.9 * gersh if gersh > 0.0 else 1.1 * gersh - 1e-6
    shifted = (M - sigma * sparse.identity(n, format="csc")).tocsc()
    density = shifted.nnz / max(n * n, 1)
    if density > 0.15:
        fac = lu_factor(shifted.toarray())
        solve = lambda b: lu_solve(fac, b)  # noqa: E731
    else:
        solve = spla.splu(shifted).solve
    v = np.ones(n)
    v /= np.linalg.norm(v)
    lam = math.nan
    resid = math.inf
    for it in range(1, max_iter + 1):
        w = solve(v)
        w /= np.linalg.norm(w)
        Mw = M @ w
        lam = float(w @ Mw)
        resid = float(np.linalg.norm(Mw - lam * w))
        v = w
        if resid <= _EIGEN_TOL * max(1.0, abs(lam)):
            break
    else:
        raise NumericsError(f"inverse iteration stagnated (residual {resid:.2e})")
    if v[int(np.argmax(np.abs(v)))] < 0:
        v = -v
    if v.min() <= 0.0:
        raise NumericsError("converged eigenvector changes sign; the grid broke "
                            "the maximum-principle structure, reduce h")
    v = v / v.max()
    psi = GridFunction(op=op, values=v)
    centroid_val = psi.value_near(op.domain.centroid())
    return EigenpairResult(lambda_h=lam, psi=psi, psi_at_centroid=centroid_val,
                           iterations=it)


@dataclass
class SemilinearResult:
    u: GridFunction
    iterations: int
    residual: float


def solve_semilinear(op: GridOperator, f, f_prime, u_init,
                     max_iter: int = 60) -> SemilinearResult:
    """Damped Newton for (operator) u = f(u) with zero exterior data.

    f and f_prime act elementwise on node values.  Any zeroth-order term
    should be folded into f; an assembled c is applied if present.
    """
    L = op.operator_with_c().tocsr()
    u = np.asarray(u_init, dtype=float).copy()
    if u.shape != (op.n_interior,):
        raise ValueError("u_init must provide one value per interior node")

    def residual(vec):
        return L @ vec - np.asarray(f(vec), dtype=float)

    r = residual(u)
    rn = float(np.linalg.norm(r, np.inf))
    for it in range(1, max_iter + 1):
        if rn <= _NEWTON_TOL:
            return SemilinearResult(u=GridFunction(op=op, values=u),
                                    iterations=it - 1, residual=rn)
        J = (L - sparse.diags(np.asarray(f_prime(u), dtype=float))).tocsc()
        density = J.nnz / max(J.shape[0] ** 2, 1)
        if density > 0.15:
            delta = np.linalg.solve(J.toarray(), -r)
        else:
            delta = spla.splu(J).solve(-r)
        alpha = 1.0
        while alpha >= 1.0 / 256.0:
            trial = u + alpha * delta
            rt = residual(trial)
            rtn = float(np.linalg.norm(rt, np.inf))
            if rtn < (1.0 - 1e-4 * alpha) * rn:
                u, r, rn = trial, rt, rtn
                break
            alpha *= 0.5
        else:
            raise NumericsError("Newton damping exhausted; try a different "
                                "initial guess or stronger damping")
    raise NumericsError(f"Newton did not converge in {max_iter} iterations "
                        f"(residual {rn:.2e})")


@dataclass
class DecayReport:
    eta_lower: float
    c_upper: float
    passed: bool
    deltas: np.ndarray
    ratios: np.ndarray


def boundary_decay_check(op: GridOperator, u: GridFunction) -> DecayReport:
    """Linear boundary behaviour of a positive solution on a ball.

    Over nodes with boundary distance in [2h, radius/4] the ratio u/delta
    must stay between a positive floor and a finite ceiling, with no
    superlinear blow-up toward the boundary (inner-half maximum at most
    twice the outer-half maximum).
    """
    dom = op.domain
    if not isinstance(dom, Ball):
        raise ValueError("boundary decay check is defined on ball domains")
    delta = dom.boundary_distance_many(op.coords_interior)
    band = (delta >= 2.0 * op.h) & (delta <= 0.25 * dom.radius)
    if band.sum() < 4:
        raise ValueError("too few nodes in the boundary band; reduce h")
    dd = delta[band]
    ratios = u.values[band] / dd
    eta = float(ratios.min())
    c_up = float(ratios.max())
    mid = 0.5 * (2.0 * op.h + 0.25 * dom.radius)
    inner = ratios[dd <= mid]
    outer = ratios[dd > mid]
    no_blowup = inner.size == 0 or outer.size == 0 or \
        float(inner.max()) <= 2.0 * float(outer.max())
    return DecayReport(eta_lower=eta, c_upper=c_up,
                       passed=bool(eta > 0.0 and math.isfinite(c_up) and no_blowup),
                       deltas=dd, ratios=ratios)


@dataclass
class SymmetryReport:
    passed: bool
    max_deviation: float     # relative to the maximum of |u|
    monotone: bool
    bin_radii: np.ndarray
    bin_means: np.ndarray


def symmetry_check(op: GridOperator, u: GridFunction, tolerance: float) -> SymmetryReport:
    """Radial symmetry and monotonicity of a grid function on a centered ball.

    Nodes are binned by radius (width h; the band closer than 2h to the
    boundary is excluded as pure staircase noise).  Deviation is measured
    against the piecewise-linear radial profile through the bin means,
    relative to max |u|; bin means must decrease, strictly across the full
    range and within a quarter-tolerance slack between neighbours.
    """
    dom = op.domain
    if not isinstance(dom, Ball) or np.linalg.norm(np.asarray(dom.center)) > 1e-9:
        raise ValueError("symmetry check is defined on balls centered at the origin")
    r = np.linalg.norm(op.coords_interior, axis=1)
    delta = dom.radius - r
    keep = delta >= 2.0 * op.h
    r = r[keep]
    vals = u.values[keep]
    scale = float(np.abs(u.values).max())
    if scale == 0.0:
        raise ValueError("cannot check symmetry of the zero function")
    width = op.h
    bins = np.floor(r / width).astype(int)
    order = np.argsort(bins, kind="stable")
    bins_sorted = bins[order]
    uniq, starts = np.unique(bins_sorted, return_index=True)
    ends = np.append(starts[1:], len(r))
    means = np.empty(uniq.size)
    centers = np.empty(uniq.size)
    max_dev = 0.0
    # detrend each bin linearly in radius so the radial slope itself does
    # not register as asymmetry; the residual is the within-bin deviation
    for i, (s, e) in enumerate(zip(starts, ends)):
        rb = r[order][s:e]
        vb = vals[order][s:e]
        means[i] = vb.mean()
        centers[i] = rb.mean()
        if rb.size >= 3 and np.ptp(rb) > 1e-12:
            slope = np.polyfit(rb - centers[i], vb, 1)[0]
        else:
            slope = 0.0
        resid = vb - (means[i] + slope * (rb - centers[i]))
        max_dev = max(max_dev, float(np.abs(resid).max() / scale))
    slack = 0.25 * tolerance * scale
    adjacent_ok = bool(np.all(np.diff(means) < slack))
    global_strict = bool(means[-1] < means[0])
    monotone = adjacent_ok and global_strict
    return SymmetryReport(passed=bool(max_dev <= tolerance and monotone),
                          max_deviation=max_dev, monotone=monotone,
                          bin_radii=centers, bin_means=means)


@dataclass
class NarrowDomainResult:
    widths: np.ndarray
    max_u: np.ndarray
    threshold: float       # largest tested width with u <= 0 throughout


def narrow_domain_threshold(c_value: float, widths, h: float,
                            kernel: JumpKernel | None = None,
                            dimension: int = 2,
                            g_value: float = -1.0) -> NarrowDomainResult:
    """Locate the slab width below which a positive zeroth-order term still
    forces nonpositive solutions (maximum principle for narrow domains).

    Solves on slabs (-1, 1)^(d-1) x (0, w) with constant c > 0 and constant
    nonpositive exterior data; above the critical width the discrete
    resolvent loses positivity and the solution develops a positive part.
    """
    if c_value <= 0.0:
        raise ValueError("the narrow-domain experiment needs c > 0")
    if g_value > 0.0:
        raise ValueError("exterior data must be nonpositive")
    if kernel is None:
        kernel = JumpKernel.zero(dimension)
    widths = np.asarray(sorted(widths), dtype=float)
    max_u = np.empty(widths.size)
    for i, w in enumerate(widths):
        lo = [-1.0] * (dimension - 1) + [0.0]
        hi = [1.0] * (dimension - 1) + [float(w)]
        slab = Box(lo, hi)
        op = assemble(slab, kernel, c=c_value, h=h, far_field_value=g_value)
        u = solve_dirichlet(op, 0.0, g_value)
        max_u[i] = float(u.values.max())
    nonpos = max_u <= 1e-8
    threshold = 0.0
    for i in range(widths.size):
        if nonpos[i]:
            threshold = float(widths[i])
        else:
            break
    return NarrowDomainResult(widths=widths, max_u=max_u, threshold=threshold)
