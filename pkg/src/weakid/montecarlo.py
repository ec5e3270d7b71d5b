"""Drifting-DGP simulation designs, the replicated experiment runner, and
the aggregate metrics (bias, s.d., relative RMSE, Wald size distortion,
per-test rejection rates)."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .conventional import effective_f_test, first_stage, rule_of_thumb, stock_yogo
from .djtest import DJConfig, SINGLE, dj_test
from .errors import NotConvergedError, SeparationError, UnsupportedDesignError, WeakidError
from .estimators import CuOptions, fit_2scml, fit_cugmm, wald_test
from .model import Dataset
from .moments import default_instruments
from .numerics import RngStream, draw_bivariate_normal
from .reports import REJECT

TEST_KEYS = ("dj", "ss", "sy5", "sy10", "eff5", "eff10")


@dataclass(frozen=True)
class McDesign:
    """One simulation cell of the drifting-instrument design.

    The instrument coefficient is set so corr(y2, z) = gamma / n**lam;
    lam = 0.5 is the weak-identification boundary. The structural error
    scale is fixed at 1/sqrt(1 - rho^2) so the latent-variance
    normalization holds.
    """

    n: int
    rho: float
    lam: float
    sigma_z: float = 1.0
    sigma_v: float = 1.0
    gamma: float = 1.5
    beta0: float = 0.5
    alpha0: float = 1.0
    pi0: float = 0.3
    replications: int = 500
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam <= 0.5:
            raise ValueError("lam must be in (0, 0.5]")
        if not abs(self.rho) < 1.0:
            raise ValueError("|rho| must be < 1")
        if min(self.sigma_z, self.sigma_v) <= 0:
            raise ValueError("scales must be positive")


@dataclass
class McSummary:
    bias: float
    sd: float
    rrmse: float
    bias_2scml: float
    sd_2scml: float
    rrmse_2scml: float
    wald_distortion_2scml: float
    wald_distortion_cugmm: float
    reject_rates: dict
    failed_replications: int
    replications: int
    design: McDesign


def implied_xi(design: McDesign) -> float:
    """Instrument coefficient delivering corr(y2, z) = gamma / n**lam."""
    c = design.gamma / design.n**design.lam
    if not abs(c) < 1.0:
        raise ValueError(f"target correlation {c} outside (-1, 1)")
    return float(c * design.sigma_v / (design.sigma_z * np.sqrt(1.0 - c * c)))


def generate(design: McDesign, stream: RngStream) -> Dataset:
    """Simulate one dataset: z normal, (u, v) jointly normal with
    correlation rho, y2 linear in z, y1 a probit outcome with an
    intercept-only exogenous block."""
    xi = implied_xi(design)
    rng = stream.generator()
    z = rng.normal(0.0, design.sigma_z, design.n)
    sigma_u = 1.0 / np.sqrt(1.0 - design.rho**2)
    sub = RngStream(seed=stream.seed, stream=stream.stream + (1 << 32))
    u, v = draw_bivariate_normal(sub, design.rho, sigma_u, design.sigma_v, design.n)
    y2 = design.pi0 + xi * z + v
    y1 = (design.beta0 + design.alpha0 * y2 + u > 0.0).astype(float)
    return Dataset(y1=y1, y2=y2, X=np.ones((design.n, 1)), Z=z[:, None])


@dataclass
class ReplicationResult:
    index: int
    failed: bool = False
    alpha_cugmm: float = np.nan
    alpha_2scml: float = np.nan
    dj_stat: float = np.nan
    rejects: dict = field(default_factory=dict)
    wald_reject_cugmm: bool | None = None
    wald_reject_2scml: bool | None = None


_DJ_SINGLE = DJConfig(mode=SINGLE)


def run_replication(design: McDesign, index: int, level: float = 0.05) -> ReplicationResult:
    """Simulate, fit both estimators, and apply every test once."""
    out = ReplicationResult(index=index)
    data = generate(design, RngStream(seed=design.seed, stream=index))

    summ = first_stage(data)
    out.rejects["ss"] = rule_of_thumb(summ).decision == REJECT
    try:
        out.rejects["sy5"] = stock_yogo(summ, distortion="five").decision == REJECT
        out.rejects["sy10"] = stock_yogo(summ, distortion="ten").decision == REJECT
        out.rejects["eff5"] = effective_f_test(summ, "five", 1.0).decision == REJECT
        out.rejects["eff10"] = effective_f_test(summ, "ten", 1.0).decision == REJECT
    except UnsupportedDesignError:
        pass

    try:
        fit2 = fit_2scml(data)
        out.alpha_2scml = fit2.theta.alpha
        out.wald_reject_2scml = (
            wald_test(fit2, 1, design.alpha0, level).decision == REJECT
        )
        init = fit2.theta
    except (SeparationError, NotConvergedError, WeakidError):
        # neutral start: OLS reduced form, zero structural block
        import numpy as _np
        from .model import ParamTheta

        XZ = _np.column_stack([data.X, data.Z])
        th2 = _np.linalg.lstsq(XZ, data.y2, rcond=None)[0]
        init = ParamTheta(
            rho_tilde=0.0,
            alpha=0.0,
            beta=_np.zeros(data.k_x),
            pi=th2[: data.k_x],
            xi=th2[data.k_x :],
        )

    system = default_instruments(data, "mc")
    # design true values are all within a few units of zero, so the compact
    # search box is anchored there rather than at the (possibly wild) init
    opts = CuOptions(seed=design.seed + 7919 * index, box_center="zero")
    try:
        fit = fit_cugmm(system, data, init=init, opts=opts)
    except (NotConvergedError, WeakidError):
        out.failed = True
        return out
    if not np.all(np.isfinite(fit.theta.as_array())):
        out.failed = True
        return out
    out.alpha_cugmm = fit.theta.alpha
    try:
        out.wald_reject_cugmm = (
            wald_test(fit, 1, design.alpha0, level).decision == REJECT
        )
    except ValueError:
        out.wald_reject_cugmm = None
    rep = dj_test(system, data, fit, _DJ_SINGLE)
    out.dj_stat = rep.max_statistic
    out.rejects["dj"] = rep.decision == "RejectWeak"
    return out


def _worker(args):
    design, index = args
    return run_replication(design, index)


def _rate(flags) -> float:
    vals = [f for f in flags if f is not None]
    return float(np.mean(vals)) if vals else float("nan")


def estimate_moments(draws: np.ndarray, truth: float) -> tuple[float, float, float]:
    """(bias, s.d., relative RMSE) of an estimate sequence around truth."""
    a = np.asarray(draws, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan"), float("nan")
    bias = float(a.mean() - truth)
    sd = float(a.std(ddof=0))
    rrmse = float(np.sqrt(np.mean(((a - truth) / truth) ** 2)))
    return bias, sd, rrmse


def default_workers() -> int:
    env = os.environ.get("WEAKID_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def run_design_detailed(
    design: McDesign, workers: int | None = None, level: float = 0.05
) -> tuple[McSummary, list[ReplicationResult]]:
    """Like :func:`run_design`, but also returns the per-replication
    records (raw estimates and statistics, e.g. for density plots of the
    standardized estimates)."""
    workers = workers or default_workers()
    tasks = [(design, i) for i in range(design.replications)]
    if workers <= 1 or design.replications < 4:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    results.sort(key=lambda r: r.index)
    return _aggregate(design, results, level), results


def run_design(design: McDesign, workers: int | None = None, level: float = 0.05) -> McSummary:
    """Run every replication of a design and aggregate.

    Replications are independent and own their random stream, so results
    are identical for any worker count; aggregation happens in replication
    order. Replications whose CUGMM fit fails every restart are counted
    and excluded from the moment statistics, never silently dropped.
    """
    summary, _ = run_design_detailed(design, workers=workers, level=level)
    return summary


def _aggregate(design: McDesign, results: list, level: float) -> McSummary:

    ok = [r for r in results if not r.failed]
    failed = len(results) - len(ok)
    a_cu = np.array([r.alpha_cugmm for r in ok if np.isfinite(r.alpha_cugmm)])
    a_2s = np.array([r.alpha_2scml for r in results if np.isfinite(r.alpha_2scml)])

    bias, sd, rrmse = estimate_moments(a_cu, design.alpha0)
    bias2, sd2, rrmse2 = estimate_moments(a_2s, design.alpha0)
    rates = {k: _rate([r.rejects.get(k) for r in (ok if k == "dj" else results)]) for k in TEST_KEYS}
    return McSummary(
        bias=bias,
        sd=sd,
        rrmse=rrmse,
        bias_2scml=bias2,
        sd_2scml=sd2,
        rrmse_2scml=rrmse2,
        wald_distortion_2scml=_rate([r.wald_reject_2scml for r in results]) - level,
        wald_distortion_cugmm=_rate([r.wald_reject_cugmm for r in ok]) - level,
        reject_rates=rates,
        failed_replications=failed,
        replications=design.replications,
        design=design,
    )


def size_adjusted_power(null_stats, alt_stats) -> float:
    """Reject rate of alt_stats against the empirical 95th percentile of
    the null-design statistics."""
    null_stats = np.asarray(null_stats, dtype=float)
    alt_stats = np.asarray(alt_stats, dtype=float)
    if null_stats.size == 0:
        raise ValueError("null_stats must be nonempty")
    cv = float(np.quantile(null_stats, 0.95))
    return float(np.mean(alt_stats > cv))


SUMMARY_COLUMNS = (
    "n",
    "rho",
    "lambda",
    "sigma_z",
    "sigma_v",
    "replications",
    "seed",
    "bias",
    "sd",
    "rrmse",
    "bias_2scml",
    "sd_2scml",
    "rrmse_2scml",
    "wald_distortion_2scml",
    "wald_distortion_cugmm",
    "reject_dj",
    "reject_ss",
    "reject_sy5",
    "reject_sy10",
    "reject_eff5",
    "reject_eff10",
    "failed_replications",
)


def summary_row(summary: McSummary) -> list:
    d = summary.design
    return [
        d.n,
        d.rho,
        d.lam,
        d.sigma_z,
        d.sigma_v,
        d.replications,
        d.seed,
        summary.bias,
        summary.sd,
        summary.rrmse,
        summary.bias_2scml,
        summary.sd_2scml,
        summary.rrmse_2scml,
        summary.wald_distortion_2scml,
        summary.wald_distortion_cugmm,
        *[summary.reject_rates.get(k, float("nan")) for k in TEST_KEYS],
        summary.failed_replications,
    ]


REPLICATION_COLUMNS = (
    "index",
    "failed",
    "alpha_cugmm",
    "alpha_cugmm_std",
    "alpha_2scml",
    "dj_stat",
    "reject_dj",
    "reject_ss",
    "reject_sy5",
    "reject_sy10",
    "reject_eff5",
    "reject_eff10",
)


def replication_rows(results: list) -> list[list]:
    """Per-replication rows; alpha_cugmm_std is the within-design
    standardized estimate (a - mean)/sd used for sampling-density plots."""
    a = np.array([r.alpha_cugmm for r in results], dtype=float)
    good = np.isfinite(a) & np.array([not r.failed for r in results])
    mu = float(a[good].mean()) if good.any() else float("nan")
    sd = float(a[good].std(ddof=0)) if good.any() else float("nan")
    rows = []
    for r, ai, g in zip(results, a, good):
        std = (ai - mu) / sd if (g and sd > 0) else float("nan")
        rows.append(
            [
                r.index,
                int(r.failed),
                ai,
                std,
                r.alpha_2scml,
                r.dj_stat,
                *[_flag(r.rejects.get(k)) for k in TEST_KEYS],
            ]
        )
    return rows


def _flag(v):
    return float("nan") if v is None else int(v)


def with_replications(design: McDesign, replications: int) -> McDesign:
    return replace(design, replications=replications)
