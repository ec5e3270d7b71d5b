"""Reproduce the labor-force-participation analysis on the bundled data:
coefficient tables for both estimators, the overidentification J-test,
the four weak-instrument tests, and the distorted J-test grid."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from weakid import (
    DJConfig,
    default_instruments,
    dj_test,
    effective_f_test,
    first_stage,
    fit_2scml,
    fit_cugmm,
    j_statistic,
    marginal_effect,
    rule_of_thumb,
    standardize,
    stock_yogo,
)
from weakid.data import LFP_COLUMNS, load_lfp


def main():
    data, _ = load_lfp()
    names = ["educ", *LFP_COLUMNS["x"]]

    fit2 = fit_2scml(data)
    ds, info = standardize(data)
    system = default_instruments(ds, "empirical")
    fit = fit_cugmm(system, ds, init=fit_2scml(ds).theta)
    fit.standardization = info

    print(f"n = {data.n}, H = {system.h}, p = {2 + 2*data.k_x + data.k_z}")
    print("\ncoefficient (se) | margin")
    raw = fit.theta_raw()
    se2 = fit2.se
    se_cu = np.sqrt(np.diag(fit.vcov_raw()))
    me2 = marginal_effect(fit2, data)
    mecu = marginal_effect(fit, data)
    coef2 = [fit2.theta.alpha, *fit2.theta.beta[1:]]
    coefc = [raw.alpha, *raw.beta[1:]]
    s2 = [se2[1], *se2[3 : 2 + data.k_x]]
    sc = [se_cu[1], *se_cu[3 : 2 + data.k_x]]
    print(f"{'':>10} {'2SCML':>24} {'CUGMM':>24}")
    for i, nm in enumerate(names):
        print(
            f"{nm:>10} {coef2[i]:>9.4f} ({s2[i]:.4f}) {me2[i]:>7.4f}"
            f" {coefc[i]:>9.4f} ({sc[i]:.4f}) {mecu[i]:>7.4f}"
        )
    print(f"{'rho':>10} {fit2.rho:>9.4f} ({fit2.rho_se:.4f})"
          f" {'':>8}{fit.rho:>10.4f} ({fit.rho_se:.4f})")

    J, df, p = j_statistic(fit)
    print(f"\nJ-statistic {J:.3f} (df {df}, p {p:.3f})")

    summ = first_stage(data)
    print("\nweak-instrument tests")
    for label, rep in [
        ("SS rule of thumb", rule_of_thumb(summ)),
        ("SY 5% distortion", stock_yogo(summ, distortion="five")),
        ("SY 10% distortion", stock_yogo(summ, distortion="ten")),
        ("effective F 5%", effective_f_test(summ, "five", 1.8)),
        ("effective F 10%", effective_f_test(summ, "ten", 1.8)),
    ]:
        print(
            f"  {label:>18}: stat {rep.statistic:8.2f} vs {rep.critical_value:6.2f}"
            f" -> {rep.decision}"
        )
    dj = dj_test(system, ds, fit, DJConfig(m=20))
    print(
        f"  {'DJ (m=20)':>18}: min {dj.min_statistic:.2f} max {dj.max_statistic:.2f}"
        f" vs {dj.critical_value:.2f} -> {dj.decision}"
    )


if __name__ == "__main__":
    main()
