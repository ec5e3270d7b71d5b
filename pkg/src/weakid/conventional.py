"""First-stage weak-instrument tests from the linear-model toolbox and
the density-pruning diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedDesignError
from .model import Dataset
from .numerics import gh_expectation, normal_pdf
from .reports import FAIL_TO_REJECT, REJECT, TestReport


@dataclass(frozen=True)
class FirstStageSummary:
    xi_hat: np.ndarray
    resid_var: float
    F_homoskedastic: float
    F_robust: float
    cragg_donald: float
    effective_F: float
    n: int
    k_z: int


def first_stage(dataset: Dataset) -> FirstStageSummary:
    """OLS of y2 on (X, Z) and the associated instrument-strength statistics.

    X is partialled out of Z by QR projection before forming the quadratic
    forms. The homoskedastic F uses the classical residual-dof variance
    estimate and equals the Cragg-Donald statistic for one endogenous
    regressor; the robust variants use an HC1 covariance, and the
    effective F applies the trace normalization, collapsing to the robust
    F when k_z = 1.
    """
    n, k_x, k_z = dataset.n, dataset.k_x, dataset.k_z
    XZ = np.column_stack([dataset.X, dataset.Z])
    coef, _, rank, _ = np.linalg.lstsq(XZ, dataset.y2, rcond=None)
    if rank < XZ.shape[1]:
        raise np.linalg.LinAlgError("singular first-stage design")
    resid = dataset.y2 - XZ @ coef
    xi_hat = coef[k_x:]
    dof = n - k_x - k_z
    s2 = float(resid @ resid / dof)

    Q, _ = np.linalg.qr(dataset.X)
    Zt = dataset.Z - Q @ (Q.T @ dataset.Z)
    Qzz = Zt.T @ Zt
    F_homo = float(xi_hat @ Qzz @ xi_hat / k_z / s2)

    XtX_inv = np.linalg.inv(XZ.T @ XZ)
    meat = (XZ * (resid**2)[:, None]).T @ XZ
    V = XtX_inv @ meat @ XtX_inv * (n / dof)
    V_xi = V[k_x:, k_x:]
    F_rob = float(xi_hat @ np.linalg.solve(V_xi, xi_hat) / k_z)
    F_eff = float(xi_hat @ Qzz @ xi_hat / np.trace(V_xi @ Qzz))

    return FirstStageSummary(
        xi_hat=xi_hat,
        resid_var=s2,
        F_homoskedastic=F_homo,
        F_robust=F_rob,
        cragg_donald=F_homo,
        effective_F=F_eff,
        n=n,
        k_z=k_z,
    )


def rule_of_thumb(
    summary: FirstStageSummary, threshold: float = 10.0, robust: bool = False
) -> TestReport:
    """Declare instruments strong when the first-stage F exceeds the
    threshold."""
    stat = summary.F_robust if robust else summary.F_homoskedastic
    return TestReport(
        name="rule_of_thumb",
        statistic=stat,
        critical_value=threshold,
        decision=REJECT if stat > threshold else FAIL_TO_REJECT,
        details={"robust": robust},
    )


# size-distortion-calibrated critical values for one endogenous regressor,
# keyed by (k_z, maximal distortion)
_SY_TABLE = {
    (1, "five"): 16.38,
    (1, "ten"): 8.96,
    (2, "five"): 19.93,
    (2, "ten"): 11.59,
}


def stock_yogo(
    summary: FirstStageSummary,
    k_z: int | None = None,
    distortion: str = "five",
    robust: bool = False,
) -> TestReport:
    kz = summary.k_z if k_z is None else k_z
    key = (kz, distortion)
    if key not in _SY_TABLE:
        raise UnsupportedDesignError(
            f"no embedded Stock-Yogo critical value for k_z={kz}, "
            f"distortion={distortion!r}"
        )
    cv = _SY_TABLE[key]
    stat = summary.F_robust if robust else summary.cragg_donald
    return TestReport(
        name="stock_yogo",
        statistic=stat,
        critical_value=cv,
        decision=REJECT if stat > cv else FAIL_TO_REJECT,
        details={"distortion": distortion, "k_z": kz, "source": "table-sourced"},
    )


# Nagar-bias-calibrated critical values keyed by (effective dof bucket,
# tolerance); only the tabulated buckets are supported
_EFF_TABLE = {
    (1.0, "five"): 37.42,
    (1.0, "ten"): 23.11,
    (1.8, "five"): 8.58,
    (1.8, "ten"): 6.17,
}


def _dof_bucket(hint: float) -> float:
    for bucket, lo, hi in ((1.0, 0.8, 1.3), (1.8, 1.6, 2.0)):
        if lo <= hint <= hi:
            return bucket
    raise UnsupportedDesignError(
        f"no embedded effective-F critical value for effective dof {hint}"
    )


def effective_f_test(
    summary: FirstStageSummary, tolerance: str = "five", eff_dof_hint: float = 1.0
) -> TestReport:
    key = (_dof_bucket(eff_dof_hint), tolerance)
    if key not in _EFF_TABLE:
        raise UnsupportedDesignError(
            f"no embedded effective-F critical value for {key}"
        )
    cv = _EFF_TABLE[key]
    return TestReport(
        name="effective_f",
        statistic=summary.effective_F,
        critical_value=cv,
        decision=REJECT if summary.effective_F > cv else FAIL_TO_REJECT,
        details={
            "tolerance": tolerance,
            "eff_dof": key[0],
            "source": "table-sourced",
        },
    )


def _gaussian_product(tau: float, sigma: float, c: float):
    """Collapse phi_tau(c + z) * density_sigma(z) into mass * N(m, s^2)."""
    a = 1.0 / tau**2 + 1.0 / sigma**2
    m = -(c / tau**2) / a
    s = np.sqrt(1.0 / a)
    mass = normal_pdf(c / np.sqrt(tau**2 + sigma**2)) / np.sqrt(tau**2 + sigma**2)
    return mass, m, s


def pruned_signal_variance(sigma_z_sq: float, c: float = 1.0, nodes: int = 64) -> float:
    """Var(Z * phi(c + Z)) for Z ~ N(0, sigma_z^2).

    The Gaussian factors are merged analytically, leaving polynomial
    expectations that Gauss-Hermite evaluates exactly, so the result is
    accurate for arbitrarily large sigma_z.
    """
    if sigma_z_sq <= 0:
        raise ValueError("sigma_z_sq must be positive")
    sig = np.sqrt(sigma_z_sq)
    mass1, m1, s1 = _gaussian_product(1.0, sig, c)
    ew = mass1 * gh_expectation(lambda z: z + m1, s1, nodes)
    # phi(c+z)^2 = phi_{1/sqrt2}(c+z) / (2 sqrt(pi))
    mass2, m2, s2 = _gaussian_product(1.0 / np.sqrt(2.0), sig, c)
    ew2 = mass2 / (2.0 * np.sqrt(np.pi)) * gh_expectation(
        lambda z: (z + m2) ** 2, s2, nodes
    )
    return float(ew2 - ew * ew)


def pruning_ratio(sigma_z_sq: float, c: float = 1.0) -> float:
    """Variance retained by the density-pruned signal, as a percentage of
    the sigma_z^2 = 1 case.

    The signal z'xi enters the structural moments multiplied by the normal
    density of the index, which erases its large realizations; the ratio
    quantifies how much identifying variation survives as the instrument
    scale grows. Normalization uses Var(W)/sigma_z.
    """
    base = pruned_signal_variance(1.0, c) / 1.0
    val = pruned_signal_variance(sigma_z_sq, c) / np.sqrt(sigma_z_sq)
    return float(100.0 * val / base)
