"""CUGMM and two-stage control-function estimation, studentized
covariances, Wald tests, the overidentification J-test, and average
partial effects."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import NearSingularError, NotConvergedError, SeparationError
from .model import Dataset, ParamTheta, Standardization
from .moments import MomentSystem, cu_value_and_grad, evaluate
from .numerics import (
    INDEX_CLAMP,
    RngStream,
    chi2_cdf,
    chi2_quantile,
    normal_cdf,
    normal_pdf,
    solve_spd,
)
from .reports import FAIL_TO_REJECT, REJECT, TestReport

METHOD_CUGMM = "cugmm"
METHOD_2SCML = "2scml"


@dataclass
class CuOptions:
    """Optimizer policy for the continuously-updated objective.

    The search is confined to a box of half-width box_halfwidth around the
    initial point (the parameter space is compact; unbounded quasi-Newton
    runs can drift arbitrarily far along the flat direction under weak
    identification). Set box_halfwidth=None for an unconstrained search.
    """

    gtol: float = 1e-6
    ftol: float = 1e-10
    maxiter: int = 2000
    n_restarts: int = 5
    restart_scale: float = 0.25
    box_halfwidth: float | None = 10.0
    box_center: str = "init"
    seed: int = 0


@dataclass
class FitResult:
    theta: ParamTheta
    vcov: np.ndarray
    method: str
    n: int
    converged: bool
    iterations: int
    J_at_min: float | None = None
    H: int | None = None
    objective_history: list = field(default_factory=list)
    sigma_v: float | None = None
    standardization: Standardization | None = None

    @property
    def p(self) -> int:
        return self.theta.dim

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.vcov), 0.0))

    @property
    def rho(self) -> float:
        """Correlation of the structural and reduced-form errors implied by
        rho_tilde and the reduced-form residual scale."""
        t = self.theta.rho_tilde * self.sigma_v
        return float(t / np.sqrt(1.0 + t * t))

    @property
    def rho_se(self) -> float:
        t = self.theta.rho_tilde * self.sigma_v
        deriv = self.sigma_v / (1.0 + t * t) ** 1.5
        return float(abs(deriv) * self.se[0])

    def theta_raw(self) -> ParamTheta:
        if self.standardization is None:
            return self.theta
        return self.standardization.theta_to_raw(self.theta)

    def vcov_raw(self) -> np.ndarray:
        if self.standardization is None:
            return self.vcov
        return self.standardization.vcov_to_raw(
            self.vcov, self.theta.k_x, self.theta.k_z
        )


def _residual_sigma(theta: ParamTheta, dataset: Dataset) -> float:
    v = dataset.y2 - dataset.X @ theta.pi - dataset.Z @ theta.xi
    dof = dataset.n - dataset.k_x - dataset.k_z
    return float(np.sqrt(v @ v / dof))


# ---------------------------------------------------------------------------
# two-stage conditional ML


# tighter clamp than the moment evaluation uses: the score terms divide by
# (Phi * Phi(-t))^2, which underflows past |t| ~ 26
_SCORE_CLAMP = 26.0


def _probit_score_terms(t: np.ndarray, y: np.ndarray):
    t = np.clip(t, -_SCORE_CLAMP, _SCORE_CLAMP)
    P = normal_cdf(t)
    Pm = normal_cdf(-t)
    phi = normal_pdf(t)
    denom = P * Pm
    lam = phi * (y - P) / denom
    # d lam / d t
    dlam = (-t * phi * (y - P) - phi * phi) / denom - phi * (y - P) * phi * (
        Pm - P
    ) / denom**2
    w = phi * phi / denom
    return P, phi, lam, dlam, w


def _probit_mle(W: np.ndarray, y: np.ndarray, tol: float = 1e-8, maxiter: int = 100):
    """Probit coefficients by Fisher scoring with step halving."""
    n, k = W.shape
    c = np.zeros(k)

    def loglik(cv):
        t = np.clip(W @ cv, -INDEX_CLAMP, INDEX_CLAMP)
        P = normal_cdf(t)
        Pm = normal_cdf(-t)
        return float(y @ np.log(P) + (1.0 - y) @ np.log(Pm))

    def check_separation(cv):
        idx = W @ cv
        if np.max(np.abs(idx)) > 20.0 and np.all((2.0 * y - 1.0) * idx > 0):
            raise SeparationError("perfect separation: likelihood unbounded")

    ll = loglik(c)
    it = 0
    for it in range(1, maxiter + 1):
        t = np.clip(W @ c, -INDEX_CLAMP, INDEX_CLAMP)
        _, _, lam, _, w = _probit_score_terms(t, y)
        score = W.T @ lam
        if np.max(np.abs(score)) < tol:
            check_separation(c)
            return c, it, score
        H = (W * w[:, None]).T @ W
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError as exc:
            raise NearSingularError("probit information matrix singular") from exc
        scale = 1.0
        for _ in range(30):
            cand = c + scale * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        c = c + scale * step
        ll = loglik(c)
        if np.max(np.abs(c)) > 1e4:
            raise SeparationError("probit coefficients diverging")
    t = np.clip(W @ c, -INDEX_CLAMP, INDEX_CLAMP)
    _, _, lam, _, _ = _probit_score_terms(t, y)
    score = W.T @ lam
    check_separation(c)
    if np.max(np.abs(score)) < tol:
        return c, it, score
    raise NotConvergedError(
        f"probit score {np.max(np.abs(score)):.2e} after {maxiter} iterations"
    )


def _stacked_sandwich(
    dataset: Dataset, coef: np.ndarray, theta2: np.ndarray
) -> np.ndarray:
    """Heteroskedasticity-robust covariance of the two-step estimator from
    the stacked just-identified system {probit score, OLS normal equations};
    the cross block carries the first-stage correction.

    coef is in regressor order (y2, X, v_hat); returns the covariance in
    that stacked order followed by (pi, xi).
    """
    n, k_x, k_z = dataset.n, dataset.k_x, dataset.k_z
    XZ = np.column_stack([dataset.X, dataset.Z])
    vhat = dataset.y2 - XZ @ theta2
    W = np.column_stack([dataset.y2, dataset.X, vhat])
    t = np.clip(W @ coef, -INDEX_CLAMP, INDEX_CLAMP)
    _, _, lam, dlam, _ = _probit_score_terms(t, dataset.y1)
    rho_t = coef[-1]

    m1 = W * lam[:, None]
    m2 = XZ * vhat[:, None]
    M = np.column_stack([m1, m2])
    B = M.T @ M / n

    kc = W.shape[1]
    p = kc + k_x + k_z
    A = np.zeros((p, p))
    A[:kc, :kc] = (W * dlam[:, None]).T @ W / n
    # index and the v_hat regressor both move with theta2
    A12 = (W * dlam[:, None]).T @ (-rho_t * XZ) / n
    A12 += np.outer(np.eye(kc)[-1], (-(XZ.T @ lam) / n))
    A[:kc, kc:] = A12
    A[kc:, kc:] = -(XZ.T @ XZ) / n
    Ainv = np.linalg.inv(A)
    return Ainv @ B @ Ainv.T / n


def fit_2scml(dataset: Dataset) -> FitResult:
    """OLS first stage, probit MLE with residual inclusion second stage.

    The covariance is the stacked-moment sandwich, so second-stage
    standard errors account for first-stage estimation and are
    heteroskedasticity robust.
    """
    XZ = np.column_stack([dataset.X, dataset.Z])
    theta2, *_ = np.linalg.lstsq(XZ, dataset.y2, rcond=None)
    vhat = dataset.y2 - XZ @ theta2
    W = np.column_stack([dataset.y2, dataset.X, vhat])
    coef, iters, _ = _probit_mle(W, dataset.y1)

    k_x, k_z = dataset.k_x, dataset.k_z
    theta = ParamTheta(
        rho_tilde=float(coef[-1]),
        alpha=float(coef[0]),
        beta=coef[1 : 1 + k_x].copy(),
        pi=theta2[:k_x].copy(),
        xi=theta2[k_x:].copy(),
    )
    V_stack = _stacked_sandwich(dataset, coef, theta2)
    # reorder (alpha, beta, rho | pi, xi) -> (rho, alpha, beta, pi, xi)
    kc = 2 + k_x
    perm = np.concatenate([[kc - 1, 0], np.arange(1, 1 + k_x), np.arange(kc, kc + k_x + k_z)])
    vcov = V_stack[np.ix_(perm, perm)]
    return FitResult(
        theta=theta,
        vcov=vcov,
        method=METHOD_2SCML,
        n=dataset.n,
        converged=True,
        iterations=iters,
        sigma_v=_residual_sigma(theta, dataset),
    )


# ---------------------------------------------------------------------------
# continuously-updated GMM


def fit_cugmm(
    system: MomentSystem,
    dataset: Dataset,
    init: ParamTheta | None = None,
    opts: CuOptions | None = None,
) -> FitResult:
    """Minimize the continuously-updated objective by BFGS with the
    analytic gradient (weighting-derivative term included), with a
    simplex polish when the line search stalls and randomized restarts
    around the initial point; the best objective wins.
    """
    opts = opts or CuOptions()
    if init is None:
        init = fit_2scml(dataset).theta
    x_init = init.as_array()
    p = x_init.shape[0]
    if system.h < p:
        raise ValueError(f"H={system.h} < p={p}: underidentified")

    def fg(th):
        try:
            return cu_value_and_grad(system, dataset, th)
        except (NearSingularError, np.linalg.LinAlgError):
            return 1e50, np.zeros(p)

    if opts.box_halfwidth is not None:
        center = np.zeros(p) if opts.box_center == "zero" else x_init
        lo = center - opts.box_halfwidth
        hi = center + opts.box_halfwidth
        bounds = list(zip(lo, hi))
        x_init = np.clip(x_init, lo, hi)
    else:
        bounds = None

    def in_box(x):
        return bounds is None or bool(np.all((x >= lo) & (x <= hi)))

    rng = RngStream(seed=opts.seed, stream=0x5EED).generator()
    best_x = None
    best_f = np.inf
    best_grad_ok = False
    total_iters = 0
    history = []
    for attempt in range(1 + opts.n_restarts):
        x0 = x_init if attempt == 0 else x_init + rng.normal(
            0.0, opts.restart_scale, p
        )
        if bounds is not None:
            x0 = np.clip(x0, lo, hi)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = minimize(
                fg,
                x0,
                jac=True,
                method="L-BFGS-B" if bounds is not None else "BFGS",
                bounds=bounds,
                options={"gtol": opts.gtol, "maxiter": opts.maxiter}
                if bounds is None
                else {"gtol": opts.gtol, "maxiter": opts.maxiter, "ftol": opts.ftol},
            )
        total_iters += res.nit
        x, f = res.x, res.fun
        grad_ok = bool(res.success) or np.max(np.abs(res.jac)) < opts.gtol
        if not grad_ok:
            # line search stalled; derivative-free polish
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                nm = minimize(
                    lambda th: fg(th)[0],
                    x,
                    method="Nelder-Mead",
                    options={
                        "maxiter": 400 * p,
                        "fatol": opts.ftol * max(1.0, abs(f)),
                        "xatol": 1e-8,
                    },
                )
            total_iters += nm.nit
            if nm.fun < f and in_box(nm.x):
                x, f = nm.x, nm.fun
                grad_ok = np.max(np.abs(fg(x)[1])) < opts.gtol or nm.success
        history.append(float(f))
        if f < best_f:
            best_f, best_x, best_grad_ok = f, x, grad_ok

    if best_x is None or not np.all(np.isfinite(best_x)) or best_f >= 1e50:
        raise NotConvergedError("all CUGMM starts failed")

    # final unconstrained polish from the winner; bounded runs stop at the
    # solver's own tolerance, one more quasi-Newton pass reaches gtol
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(
            fg, best_x, jac=True, method="BFGS",
            options={"gtol": opts.gtol, "maxiter": 200},
        )
    total_iters += res.nit
    if res.fun <= best_f and np.all(np.isfinite(res.x)) and in_box(res.x):
        best_x, best_f = res.x, float(res.fun)

    # converged means the projected gradient criterion holds at the winner
    g_final = fg(best_x)[1]
    if bounds is not None:
        at_lo = (best_x <= lo + 1e-12) & (g_final > 0)
        at_hi = (best_x >= hi - 1e-12) & (g_final < 0)
        g_final = np.where(at_lo | at_hi, 0.0, g_final)
    best_grad_ok = bool(np.max(np.abs(g_final)) < opts.gtol)

    theta_hat = ParamTheta.from_array(best_x, dataset.k_x, dataset.k_z)
    ev = evaluate(system, dataset, theta_hat)
    K = ev.G.T @ ev.solve_weight(ev.G)
    K = 0.5 * (K + K.T)
    try:
        vcov = solve_spd(K, np.eye(p)) / dataset.n
    except NearSingularError:
        vcov = np.linalg.pinv(K) / dataset.n
    return FitResult(
        theta=theta_hat,
        vcov=vcov,
        method=METHOD_CUGMM,
        n=dataset.n,
        converged=bool(best_grad_ok),
        iterations=total_iters,
        J_at_min=float(best_f),
        H=system.h,
        objective_history=history,
        sigma_v=_residual_sigma(theta_hat, dataset),
    )


# ---------------------------------------------------------------------------
# inference


def j_statistic(fit: FitResult) -> tuple[float, int, float]:
    """Overidentification J-statistic, its degrees of freedom, and p-value."""
    if fit.J_at_min is None or fit.H is None:
        raise ValueError("J-test requires a CUGMM fit")
    df = fit.H - fit.p
    if df <= 0:
        raise ValueError("overidentification test undefined when H = p")
    J = fit.J_at_min
    return J, df, float(1.0 - chi2_cdf(J, df))


def wald_test(
    fit: FitResult,
    coordinate: int,
    null_value: float,
    level: float = 0.05,
) -> TestReport:
    """Squared-t Wald test of theta[coordinate] = null_value."""
    vjj = float(fit.vcov[coordinate, coordinate])
    if vjj <= 0:
        raise ValueError(f"non-positive variance for coordinate {coordinate}")
    est = float(fit.theta.as_array()[coordinate])
    stat = (est - null_value) ** 2 / vjj
    cv = chi2_quantile(1.0 - level, 1)
    half = np.sqrt(cv * vjj)
    return TestReport(
        name="wald",
        statistic=stat,
        critical_value=cv,
        decision=REJECT if stat > cv else FAIL_TO_REJECT,
        level=level,
        confidence_interval=(est - half, est + half),
        details={"coordinate": coordinate, "null_value": null_value, "estimate": est},
    )


def marginal_effect(fit: FitResult, dataset: Dataset) -> np.ndarray:
    """Average partial effects at the sample mean of the regressors.

    Returns effects for (y2, x_2, ..., x_kx) on the original scale; the
    control term is evaluated at its mean of zero.
    """
    theta = fit.theta_raw()
    y2bar = float(dataset.y2.mean())
    xbar = dataset.X.mean(axis=0)
    idx = theta.alpha * y2bar + xbar @ theta.beta
    dens = normal_pdf(idx)
    coefs = np.concatenate([[theta.alpha], theta.beta[1:]])
    return dens * coefs
