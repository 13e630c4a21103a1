"""Monte Carlo solution of the Dirichlet problem via exit-time averages.

The solution of (Laplacian + jump part) u = -f in D with exterior data g is
estimated by the mean of the accumulated running cost plus g at the exit
location.  Estimates over several starts share the same per-path streams,
so runs with different (f, g) on the same start are coupled and linearity
holds exactly at the estimator level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .geometry import Domain, interior_lattice
from .kernels import JumpKernel
from .paths import PathBatch, PathConfig, run_paths

Z95 = 1.959963984540054


@dataclass
class EstimatorResult:
    """Point estimate with confidence interval and censoring bookkeeping."""

    mean: float
    std_error: float
    n_effective: int
    censored_count: int
    ci95: tuple
    censor_bias_bound: float = 0.0

    def __post_init__(self):
        assert self.ci95[0] <= self.mean <= self.ci95[1]


def _estimate_from_values(values: np.ndarray, censored_count: int,
                          bias_bound: float = 0.0) -> EstimatorResult:
    n = values.size
    if n == 0:
        raise EstimationError(
            "all paths were censored; increase t_max to observe exits")
    mean = math.fsum(values) / n
    if n > 1:
        var = math.fsum((values - mean) ** 2) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = math.inf
    return EstimatorResult(mean=mean, std_error=se, n_effective=n,
                           censored_count=censored_count,
                           ci95=(mean - Z95 * se, mean + Z95 * se),
                           censor_bias_bound=bias_bound)


def solve_at(domain: Domain, f, g, x0, kernel: JumpKernel, n_paths: int,
             config: PathConfig, workers: int = 1, start_index: int = 0,
             batch: PathBatch | None = None) -> EstimatorResult:
    """Estimate the solution value at x0.

    f is the interior running cost (or None for zero), g the exterior data
    evaluated at exit locations; both take (n, d) arrays.  Censored paths
    are excluded from the average and reported, with a crude bias bound
    (censored fraction times the observed payoff scale over the horizon).
    """
    if batch is None:
        batch = run_paths(domain, x0, kernel, config, n_paths, f=f,
                          workers=workers, start_index=start_index)
    keep = ~batch.censored
    censored = int(batch.censored.sum())
    payoff = batch.occupation[keep]
    if g is not None and payoff.size:
        gv = np.asarray(g(batch.exit_loc[keep]), dtype=float)
        if not np.all(np.isfinite(gv)):
            raise ValueError("exterior data produced a non-finite value")
        payoff = payoff + gv
    bias = 0.0
    if censored:
        g_scale = 0.0
        if g is not None:
            g_scale = float(np.max(np.abs(g(batch.exit_loc)))) if batch.n else 0.0
        occ_scale = float(np.max(np.abs(batch.occupation))) if batch.n else 0.0
        bias = (censored / batch.n) * (g_scale + occ_scale)
    return _estimate_from_values(payoff, censored, bias)


@dataclass
class MomentReport:
    """Exit-time moments at one start with Wilson-free normal CIs."""

    x0: np.ndarray
    moments: np.ndarray       # index k-1 holds the k-th moment estimate
    std_errors: np.ndarray
    censored_count: int
    lower_bound_only: bool    # censored paths truncate the moments from below


@dataclass
class MomentVerdict:
    reports: list
    factorial_bound_ok: bool  # k-th moment <= k! (sup first moment)^k


def exit_moments(domain: Domain, x0s, kernel: JumpKernel, k_max: int,
                 n_paths: int, config: PathConfig, workers: int = 1) -> MomentVerdict:
    """Empirical exit-time moments and the factorial-moment inequality check.

    Accepts one start or a list; the verdict compares each k-th moment with
    k! (sup over starts of the first moment)^k within statistical tolerance.
    Censored paths enter truncated at the horizon, so reported moments are
    lower bounds whenever censoring occurred.
    """
    if k_max < 1 or k_max > 4:
        raise ValueError("k_max must be between 1 and 4 (higher moments are too noisy)")
    starts = np.atleast_2d(np.asarray(x0s, dtype=float))
    reports = []
    for i, x0 in enumerate(starts):
        batch = run_paths(domain, x0, kernel, config, n_paths, workers=workers,
                          start_index=i * n_paths)
        tau = batch.tau
        moments = np.empty(k_max)
        ses = np.empty(k_max)
        for k in range(1, k_max + 1):
            vals = tau ** k
            moments[k - 1] = math.fsum(vals) / vals.size
            ses[k - 1] = vals.std(ddof=1) / math.sqrt(vals.size)
        reports.append(MomentReport(x0=x0, moments=moments, std_errors=ses,
                                    censored_count=int(batch.censored.sum()),
                                    lower_bound_only=bool(batch.censored.any())))
    sup_m1 = max(r.moments[0] for r in reports)
    sup_m1_hi = max(r.moments[0] + 2 * r.std_errors[0] for r in reports)
    ok = True
    for r in reports:
        for k in range(2, k_max + 1):
            bound = math.factorial(k) * sup_m1_hi ** k
            if r.moments[k - 1] - 2 * r.std_errors[k - 1] > bound:
                ok = False
    return MomentVerdict(reports=reports, factorial_bound_ok=ok)


@dataclass
class AbpReport:
    sup_u_estimate: float
    lp_norm_f: float
    ratio: float
    starts: np.ndarray
    estimates: list


def abp_ratio(domain: Domain, f, p: float, kernel: JumpKernel, n_starts: int,
              n_paths: int, config: PathConfig, workers: int = 1) -> AbpReport:
    """Empirical constant in sup u <= C ||f||_p for f >= 0, zero exterior data.

    Start points form a regular lattice kept clear of the boundary by the
    one-step diffusion scale; the L^p norm uses midpoint quadrature on the
    same lattice so numerator and denominator share the sampling.
    """
    d = domain.dimension
    if p <= d / 2.0:
        raise ValueError(f"p must exceed d/2 = {d / 2}; got {p}")
    margin = 2.0 * math.sqrt(config.dt * 2.0)
    spacing = (domain.volume() / n_starts) ** (1.0 / d)
    starts = interior_lattice(domain, spacing=spacing, margin=margin)
    fv = np.asarray(f(starts), dtype=float)
    if np.any(fv < 0):
        raise ValueError("abp_ratio requires a nonnegative running cost")
    lp = float((np.sum(fv ** p) * spacing ** d) ** (1.0 / p))
    estimates = []
    for i, x0 in enumerate(starts):
        estimates.append(solve_at(domain, f, None, x0, kernel, n_paths, config,
                                  workers=workers, start_index=i * n_paths))
    sup_u = max(e.mean for e in estimates)
    return AbpReport(sup_u_estimate=sup_u, lp_norm_f=lp,
                     ratio=sup_u / lp if lp > 0 else math.inf,
                     starts=starts, estimates=estimates)


@dataclass
class ComparisonReport:
    passed: bool
    max_interior: float
    max_interior_se: float
    sup_exterior_g: float
    starts: np.ndarray


def comparison_check(domain: Domain, g, kernel: JumpKernel, n_starts: int,
                     n_paths: int, config: PathConfig, workers: int = 1,
                     exterior_halo: float = 2.0) -> ComparisonReport:
    """Verify max over interior starts of the f=0 solve against sup of g
    outside, within a three-sigma statistical allowance.

    The exterior supremum is sampled on a lattice over an inflated bounding
    box with the domain removed; g must be bounded there.
    """
    d = domain.dimension
    margin = 2.0 * math.sqrt(config.dt * 2.0)
    spacing = (domain.volume() / n_starts) ** (1.0 / d)
    starts = interior_lattice(domain, spacing=spacing, margin=margin)
    estimates = [solve_at(domain, None, g, x0, kernel, n_paths, config,
                          workers=workers, start_index=i * n_paths)
                 for i, x0 in enumerate(starts)]
    means = np.array([e.mean for e in estimates])
    i_max = int(np.argmax(means))
    max_interior = float(means[i_max])
    se = estimates[i_max].std_error
    lo, hi = domain.bounding_box()
    halo = exterior_halo * np.ones(d)
    axes = [np.linspace(lo[k] - halo[k], hi[k] + halo[k], 41) for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    ext = pts[~domain.contains_many(pts)]
    sup_g = float(np.max(np.asarray(g(ext), dtype=float)))
    passed = max_interior <= sup_g + 3.0 * se
    return ComparisonReport(passed=passed, max_interior=max_interior,
                            max_interior_se=se, sup_exterior_g=sup_g, starts=starts)
