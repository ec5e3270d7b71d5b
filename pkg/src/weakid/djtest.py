"""The distorted J-test: perturbation construction, candidate grids from
the confidence interval of rho_tilde, the pinned-weighting statistic, and
the Bonferroni max decision rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .estimators import FitResult
from .model import Dataset, ParamTheta
from .moments import MomentSystem, moment_matrices, _centered_blocks
from .numerics import chi2_quantile, solve_spd

GRID = "grid"
SINGLE = "single"
REJECT_WEAK = "RejectWeak"
FAIL_TO_REJECT = "FailToReject"


@dataclass(frozen=True)
class DJConfig:
    """Knobs for the distorted J-test.

    grid_radius selects how far the candidate grid reaches from
    rho_tilde_hat: "wald" spans +/- sqrt(cv) standard errors, where cv is
    the Bonferroni-corrected chi-square critical value the max rule uses,
    so a candidate exceeds cv exactly when the objective curvature along
    the distortion beats the curvature its own standard error implies.
    "normal" spans the textbook two-sided interval at ci_level. shrink
    optionally divides every candidate by log(log(n)).
    """

    m: int = 20
    level: float = 0.05
    mode: str = GRID
    single_delta_rule: str = "rho_hat_over_loglogn"
    grid_radius: str = "wald"
    ci_level: float = 0.95
    shrink: str = "none"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")
        if self.mode not in (GRID, SINGLE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.grid_radius not in ("wald", "normal"):
            raise ValueError(f"unknown grid_radius {self.grid_radius!r}")
        if self.shrink not in ("none", "loglog"):
            raise ValueError(f"unknown shrink {self.shrink!r}")


@dataclass(frozen=True)
class DJReport:
    statistics: np.ndarray
    critical_value: float
    decision: str
    deltas_used: np.ndarray
    df: int
    mode: str
    level: float
    j_at_min: float
    fallback_reason: str | None = None
    details: dict = field(default_factory=dict)

    @property
    def max_statistic(self) -> float:
        return float(np.max(self.statistics))

    @property
    def min_statistic(self) -> float:
        return float(np.min(self.statistics))

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "level": self.level,
            "df": self.df,
            "critical_value": self.critical_value,
            "decision": self.decision,
            "j_at_min": self.j_at_min,
            "deltas": list(map(float, self.deltas_used)),
            "statistics": list(map(float, self.statistics)),
            "min_statistic": self.min_statistic,
            "max_statistic": self.max_statistic,
        }
        if self.fallback_reason:
            out["fallback_reason"] = self.fallback_reason
        out.update(self.details)
        return out


def distort(theta_hat: ParamTheta, delta_n: float) -> ParamTheta:
    """Shift theta along the weakly identified rotated direction only:
    rho_tilde by +delta, alpha by -delta, beta by delta * pi_hat; the
    reduced-form block is untouched, so in the rotated basis only eta1
    moves."""
    return ParamTheta(
        rho_tilde=theta_hat.rho_tilde + delta_n,
        alpha=theta_hat.alpha - delta_n,
        beta=theta_hat.beta + delta_n * theta_hat.pi,
        pi=theta_hat.pi.copy(),
        xi=theta_hat.xi.copy(),
    )


def _midpoints(center: float, half_width: float, m: int) -> np.ndarray:
    edges = np.linspace(center - half_width, center + half_width, m + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def _patch_zeros(mids: np.ndarray, half_width: float, m: int) -> np.ndarray:
    # delta = 0 degenerates to the plain J statistic; replace with the
    # average magnitude of the neighbouring candidates
    out = mids.copy()
    for i, d in enumerate(out):
        if d == 0.0:
            neigh = [abs(out[j]) for j in (i - 1, i + 1) if 0 <= j < m]
            out[i] = np.mean(neigh) if neigh else half_width / 2.0
    return out


def delta_grid(fit: FitResult, m: int, r_n: float, ci_level: float = 0.95) -> np.ndarray:
    """Candidate perturbations: the two-sided ci_level interval of
    rho_tilde_hat is split into m equal segments and each segment midpoint
    is divided by r_n."""
    se = float(np.sqrt(fit.vcov[0, 0]))
    if not np.isfinite(se) or se <= 0:
        raise ValueError("non-positive standard error for rho_tilde")
    if r_n <= 0:
        raise ValueError("r_n must be positive")
    z = float(ndtri(0.5 + ci_level / 2.0))
    half = z * se
    mids = _midpoints(fit.theta.rho_tilde, half, m)
    return _patch_zeros(mids, half, m) / r_n


class _PinnedWeight:
    """Factors the weighting blocks at theta_hat once for a delta sweep."""

    def __init__(self, system: MomentSystem, dataset: Dataset, theta_hat: ParamTheta):
        w1, w2 = moment_matrices(system, dataset, theta_hat)
        _, _, _, _, self.S1, self.S2 = _centered_blocks(w1, w2)
        self.system = system
        self.dataset = dataset

    def statistic(self, theta: ParamTheta) -> float:
        g1, g2 = moment_matrices(self.system, self.dataset, theta)
        gb1 = g1.mean(axis=0)
        gb2 = g2.mean(axis=0)
        n = self.dataset.n
        return float(
            n * (gb1 @ solve_spd(self.S1, gb1) + gb2 @ solve_spd(self.S2, gb2))
        )


def dj_statistic(
    system: MomentSystem, dataset: Dataset, fit: FitResult, delta_n: float
) -> float:
    """n * gbar(theta^delta)' S(theta_hat)^-1 gbar(theta^delta); the
    weighting matrix stays at the undistorted estimate."""
    pinned = _PinnedWeight(system, dataset, fit.theta)
    return pinned.statistic(distort(fit.theta, delta_n))


def _loglog(n: int) -> float:
    return float(np.log(np.log(n)))


def dj_test(
    system: MomentSystem,
    dataset: Dataset,
    fit: FitResult,
    config: DJConfig | None = None,
) -> DJReport:
    """Run the distorted J-test and return the full report.

    Grid mode evaluates the statistic over m candidate perturbations and
    rejects when the maximum exceeds the chi-square critical value at
    level/m with H + 1 - p degrees of freedom; single mode uses
    delta = rho_tilde_hat / log(log(n)) against the uncorrected quantile.
    """
    config = config or DJConfig()
    if fit.H is None:
        raise ValueError("distorted J-test requires a CUGMM fit")
    df = fit.H + 1 - fit.p
    if df < 1:
        raise ValueError(f"H + 1 - p = {df} < 1")

    mode = config.mode
    fallback = None
    se = float(np.sqrt(max(fit.vcov[0, 0], 0.0)))
    if mode == GRID and (not np.isfinite(se) or se <= 0):
        mode = SINGLE
        fallback = "degenerate vcov for rho_tilde; fell back to single mode"

    pinned = _PinnedWeight(system, dataset, fit.theta)
    if mode == SINGLE:
        cv = chi2_quantile(1.0 - config.level, df)
        deltas = np.array([fit.theta.rho_tilde / _loglog(dataset.n)])
    else:
        cv = chi2_quantile(1.0 - config.level / config.m, df)
        if config.grid_radius == "wald":
            half = float(np.sqrt(cv)) * se
        else:
            half = float(ndtri(0.5 + config.ci_level / 2.0)) * se
        mids = _midpoints(fit.theta.rho_tilde, half, config.m)
        deltas = _patch_zeros(mids, half, config.m)
        if config.shrink == "loglog":
            deltas = deltas / _loglog(dataset.n)

    stats = np.array([pinned.statistic(distort(fit.theta, d)) for d in deltas])
    decision = REJECT_WEAK if stats.max() > cv else FAIL_TO_REJECT
    return DJReport(
        statistics=stats,
        critical_value=cv,
        decision=decision,
        deltas_used=deltas,
        df=df,
        mode=mode,
        level=config.level,
        j_at_min=fit.J_at_min if fit.J_at_min is not None else float("nan"),
        fallback_reason=fallback,
        details={"m": len(deltas), "H": fit.H, "p": fit.p},
    )
