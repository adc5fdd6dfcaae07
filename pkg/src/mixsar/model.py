"""Spatial autoregressive regression with mixed covariate blocks.

The response follows ``y = rho W y + Z delta + eps`` where Z stacks an
intercept, functional principal component scores, ilr coordinates of
compositional covariates, and scalar covariates. Estimation is concentrated
maximum likelihood: for fixed rho the coefficient vector and error variance
have closed forms, leaving a one-dimensional profile objective

    -(n/2) ln(sigma2_hat(rho)) + ln|I - rho W|

maximized by a coarse grid scan followed by golden-section refinement. The
functional coefficient curve is rebuilt from the score coefficients on the
retained eigenfunctions; the compositional coefficient is the inverse ilr of
its coordinate block.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .errors import NumericalError
from .functional import (
    CurveSample,
    RawCurveObservations,
    default_bandwidth,
    derivative_curves,
    fpca,
    pve_truncate,
    scores,
    smooth_curves,
)
from .spatial import MoranReport, log_det_system, morans_i, validate_weights

RHO_BOUND = 0.999
_RHO_GRID_POINTS = 201
_GOLDEN_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MixedDesign:
    """Response, stacked regressor matrix, and spatial weights for one fit.

    ``blocks`` maps block names ("intercept", "fpc", "ilr", "scalar") to
    column slices of Z; absent covariate types simply have no block.
    """

    y: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    column_labels: tuple[str, ...]
    blocks: dict[str, slice]

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def n_params(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimates, reconstructed coefficients, and fit diagnostics."""

    rho_hat: float
    alpha_hat: float
    b_hat: np.ndarray            # FPC score coefficients (may be empty)
    theta_hat: np.ndarray        # ilr-coordinate coefficients (may be empty)
    beta_scalar_hat: np.ndarray  # scalar-covariate coefficients (may be empty)
    sigma2_hat: float
    beta_t_hat: np.ndarray | None    # coefficient curve on `grid`
    beta_comp_hat: np.ndarray | None  # composition, inverse-ilr of theta_hat
    grid: np.ndarray | None
    n_components: int
    loglik: float
    fitted: np.ndarray
    residuals: np.ndarray
    r_squared: float
    mse_fitted: float
    residual_moran: MoranReport
    column_labels: tuple[str, ...]
    std_errors: np.ndarray | None = None  # Wald, ordered [rho, *delta, sigma2]
    p_values: np.ndarray | None = None

    @property
    def delta_hat(self) -> np.ndarray:
        return np.concatenate(
            [[self.alpha_hat], self.b_hat, self.theta_hat, self.beta_scalar_hat]
        )


def assemble_design(y, scores_block=None, ilr_block=None, scalars=None, *, weights,
                    scalar_labels=None) -> MixedDesign:
    """Stack [intercept | FPC scores | ilr coordinates | scalars] into Z.

    Verifies consistent row counts and that every block adds full column
    rank; a deficient block is named in the error.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    w = validate_weights(weights, allow_isolated=False)
    if w.shape[0] != n:
        raise ValueError(f"weights are {w.shape[0]}x{w.shape[0]} but response has {n} rows")

    parts = [np.ones((n, 1))]
    labels = ["intercept"]
    blocks = {"intercept": slice(0, 1)}

    def add_block(name, raw, names=None):
        mat = np.asarray(raw, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        if mat.ndim != 2 or mat.shape[0] != n:
            raise ValueError(f"{name} block has shape {mat.shape}, expected ({n}, k)")
        if not np.all(np.isfinite(mat)):
            raise ValueError(f"{name} block contains non-finite values")
        names = list(names) if names else [f"{name}_{j + 1}" for j in range(mat.shape[1])]
        if len(names) != mat.shape[1]:
            raise ValueError(f"{name} labels do not match the block width")
        start = sum(p.shape[1] for p in parts)
        parts.append(mat)
        labels.extend(names)
        blocks[name] = slice(start, start + mat.shape[1])

    if scores_block is not None and np.size(scores_block):
        add_block("fpc", scores_block)
    if ilr_block is not None and np.size(ilr_block):
        add_block("ilr", ilr_block)
    if scalars is not None and np.size(scalars):
        mat = np.asarray(scalars, dtype=float)
        width = 1 if mat.ndim == 1 else mat.shape[1]
        names = list(scalar_labels) if scalar_labels else [f"x_{j + 1}" for j in range(width)]
        add_block("scalar", scalars, names)

    z = np.hstack(parts)
    if z.shape[1] > n:
        raise ValueError(f"{z.shape[1]} regressors for only {n} observations")
    cols = 0
    for name in blocks:
        cols = blocks[name].stop
        if np.linalg.matrix_rank(z[:, :cols]) < cols:
            raise ValueError(f"design is rank deficient at block '{name}'")
    return MixedDesign(y=y, Z=z, W=w, column_labels=tuple(labels), blocks=blocks)


class _ProfileCache:
    """Precomputed least-squares pieces making the profile objective O(1) in rho.

    delta_hat(rho) = d_y - rho d_w and the residual quadratic
    ||e_y - rho e_w||^2 give sigma2_hat(rho) without refactorizing Z.
    """

    def __init__(self, design: MixedDesign):
        self.design = design
        self.wy = design.W @ design.y
        self.d_y = _solve_ls(design.Z, design.y)
        self.d_w = _solve_ls(design.Z, self.wy)
        e_y = design.y - design.Z @ self.d_y
        e_w = self.wy - design.Z @ self.d_w
        self.eyy = float(e_y @ e_y)
        self.eyw = float(e_y @ e_w)
        self.eww = float(e_w @ e_w)

    def sigma2(self, rho: float) -> float:
        return (self.eyy - 2.0 * rho * self.eyw + rho * rho * self.eww) / self.design.n

    def loglik(self, rho: float) -> float:
        s2 = self.sigma2(rho)
        if s2 <= 0.0 or not np.isfinite(s2):
            raise NumericalError(f"residual variance degenerate at rho={rho}")
        return -0.5 * self.design.n * np.log(s2) + log_det_system(rho, self.design.W)


def _solve_ls(z: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(z, target, rcond=None)
    if rank < z.shape[1]:
        raise ValueError("design matrix is rank deficient")
    return coef


def delta_hat(rho: float, design: MixedDesign) -> np.ndarray:
    """Closed-form coefficients at fixed rho: least squares of (I - rho W) y on Z."""
    if abs(rho) >= 1.0:
        raise ValueError(f"rho must satisfy |rho| < 1, got {rho}")
    return _solve_ls(design.Z, design.y - rho * (design.W @ design.y))


def sigma2_hat(rho: float, design: MixedDesign) -> float:
    """Mean squared residual (1/n divisor) at the closed-form coefficients."""
    e = design.y - rho * (design.W @ design.y) - design.Z @ delta_hat(rho, design)
    return float(e @ e) / design.n


def full_loglik(rho: float, delta, sigma2: float, design: MixedDesign) -> float:
    """Gaussian log-likelihood of the spatial-lag system at given parameters."""
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    if abs(rho) >= 1.0:
        raise ValueError(f"rho must satisfy |rho| < 1, got {rho}")
    delta = np.asarray(delta, dtype=float)
    e = design.y - rho * (design.W @ design.y) - design.Z @ delta
    n = design.n
    return float(
        -0.5 * n * np.log(2.0 * np.pi * sigma2)
        + log_det_system(rho, design.W)
        - (e @ e) / (2.0 * sigma2)
    )


def concentrated_loglik(rho: float, design: MixedDesign) -> float:
    """Profile objective: -(n/2) ln(sigma2_hat(rho)) + ln|I - rho W|."""
    s2 = sigma2_hat(rho, design)
    if s2 <= 0.0:
        raise NumericalError(f"residual variance degenerate at rho={rho}")
    return -0.5 * design.n * np.log(s2) + log_det_system(rho, design.W)


def _golden_section_max(f, lo: float, hi: float, tol: float = _GOLDEN_TOL) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_rho(design: MixedDesign) -> float:
    """Maximize the concentrated log-likelihood over [-0.999, 0.999].

    A 201-point grid locates the basin (guarding against local maxima), then
    golden-section search shrinks the bracketing interval to width 1e-8.
    """
    cache = _ProfileCache(design)

    def objective(rho: float) -> float:
        try:
            val = cache.loglik(rho)
        except NumericalError:
            return -np.inf
        return val if np.isfinite(val) else -np.inf

    grid = np.linspace(-RHO_BOUND, RHO_BOUND, _RHO_GRID_POINTS)
    vals = np.array([objective(r) for r in grid])
    if not np.any(np.isfinite(vals)):
        raise NumericalError("concentrated log-likelihood is non-finite on the whole rho grid")
    best = int(np.argmax(vals))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    return float(_golden_section_max(objective, lo, hi))


def fit(y, curves=None, compositions=None, scalars=None, *, weights, pve: float = 0.7,
        bandwidth: float | None = None, grid_size: int = 100, derivative: bool = False,
        rho: float | None = None, std_errors: bool = False,
        scalar_labels=None) -> FitResult:
    """End-to-end estimation on mixed covariates.

    Curves (raw observations or an evaluated sample) are reduced to FPC
    scores with truncation level chosen by the cumulative-eigenvalue share
    ``pve``; compositions enter through their ilr coordinates; any covariate
    block may be omitted. ``rho=None`` estimates the spatial lag by profile
    likelihood, otherwise the given value is held fixed.

    Parameters
    ----------
    y : array_like, shape (n,)
        Response.
    curves : RawCurveObservations | CurveSample | None
        Functional covariate. Raw observations are smoothed first
        (Epanechnikov kernel; ``bandwidth`` defaults to twice the median
        observation spacing).
    compositions : array_like, shape (n, d) | None
        Compositional covariate rows (validated against the simplex).
    scalars : array_like, shape (n,) or (n, q) | None
        Numerical covariates.
    weights : array_like, shape (n, n)
        Row-stochastic spatial weights, no isolated units.
    derivative : bool
        Differentiate the (smoothed) curves before FPCA.
    std_errors : bool
        Attach Wald standard errors / p-values from the numerical Hessian.
    """
    if not 0.0 < pve <= 1.0:
        raise ValueError("pve must be in (0, 1]")

    basis = None
    n_components = 0
    score_block = None
    if curves is not None:
        if isinstance(curves, RawCurveObservations):
            h = bandwidth if bandwidth is not None else default_bandwidth(curves.times)
            sample = smooth_curves(curves, h, grid_size)
        elif isinstance(curves, CurveSample):
            sample = curves
        else:
            raise ValueError("curves must be RawCurveObservations or CurveSample")
        if derivative:
            sample = derivative_curves(sample)
        basis = fpca(sample)
        n_components = pve_truncate(basis.eigenvalues, pve)
        score_block = scores(sample, basis, n_components)

    ilr_block = geometry.ilr(compositions) if compositions is not None else None

    design = assemble_design(
        y, score_block, ilr_block, scalars, weights=weights, scalar_labels=scalar_labels
    )

    if rho is not None:
        if abs(rho) >= 1.0:
            raise ValueError(f"pinned rho must satisfy |rho| < 1, got {rho}")
        rho_hat = float(rho)
    else:
        rho_hat = optimize_rho(design)

    delta = delta_hat(rho_hat, design)
    resid = design.y - rho_hat * (design.W @ design.y) - design.Z @ delta
    sigma2 = float(resid @ resid) / design.n
    if sigma2 <= 0.0:
        raise NumericalError("exact fit: residual variance is zero")
    loglik = full_loglik(rho_hat, delta, sigma2, design)

    def block(name):
        return delta[design.blocks[name]] if name in design.blocks else np.empty(0)

    alpha = float(delta[0])
    b_hat = block("fpc")
    theta = block("ilr")
    beta_scalar = block("scalar")

    beta_t = b_hat @ basis.eigenfunctions[:n_components] if basis is not None else None
    beta_comp = geometry.ilr_inv(theta) if theta.size else None

    a_mat = -rho_hat * design.W
    np.fill_diagonal(a_mat, a_mat.diagonal() + 1.0)
    try:
        fitted = np.linalg.solve(a_mat, design.Z @ delta)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - rho W singular at rho={rho_hat}") from exc

    sse = float(np.sum((design.y - fitted) ** 2))
    sst = float(np.sum((design.y - design.y.mean()) ** 2))
    r_squared = 1.0 - sse / sst if sst > 0 else float("nan")
    result = FitResult(
        rho_hat=rho_hat,
        alpha_hat=alpha,
        b_hat=b_hat,
        theta_hat=theta,
        beta_scalar_hat=beta_scalar,
        sigma2_hat=sigma2,
        beta_t_hat=beta_t,
        beta_comp_hat=beta_comp,
        grid=basis.grid if basis is not None else None,
        n_components=n_components,
        loglik=loglik,
        fitted=fitted,
        residuals=resid,
        r_squared=r_squared,
        mse_fitted=sse / design.n,
        residual_moran=morans_i(resid, design.W),
        column_labels=design.column_labels,
    )
    if std_errors:
        wald = wald_std_errors(design, result)
        if wald is not None:
            result = replace(result, std_errors=wald[0], p_values=wald[1])
    return result


def wald_std_errors(design: MixedDesign, result: FitResult):
    """Wald standard errors from the inverse negative numerical Hessian.

    The Hessian of the full log-likelihood is taken at (rho, delta, sigma2)
    by central differences with per-parameter steps 1e-5 * max(1, |value|).
    Returns (std_errors, p_values) ordered [rho, *delta, sigma2], or None
    with a warning when the Hessian is not negative definite there.
    """
    params = np.concatenate([[result.rho_hat], result.delta_hat, [result.sigma2_hat]])
    k = params.size

    def f(x):
        return full_loglik(x[0], x[1:-1], x[-1], design)

    steps = 1e-5 * np.maximum(1.0, np.abs(params))
    # keep rho inside (-1, 1) and sigma2 positive under +/- step
    steps[0] = min(steps[0], (1.0 - abs(params[0])) / 2.0)
    steps[-1] = min(steps[-1], params[-1] / 2.0)

    hess = np.empty((k, k))
    f0 = f(params)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = steps[i]
        hess[i, i] = (f(params + ei) - 2.0 * f0 + f(params - ei)) / steps[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                f(params + ei + ej) - f(params + ei - ej) - f(params - ei + ej) + f(params - ei - ej)
            ) / (4.0 * steps[i] * steps[j])

    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        warnings.warn("Wald Hessian is singular; standard errors unavailable")
        return None
    diag = np.diag(cov)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        warnings.warn("Wald Hessian is not negative definite; standard errors unavailable")
        return None
    se = np.sqrt(diag)
    z = params / se
    pvals = np.array([math.erfc(abs(v) / math.sqrt(2.0)) for v in z])
    return se, pvals
