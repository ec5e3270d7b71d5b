"""Numeric kernels: normal and chi-square distributions, SPD solves,
Gauss-Hermite expectations, and reproducible random streams."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammainc, gammaincinv, ndtr

from .errors import NearSingularError

SQRT_2PI = np.sqrt(2.0 * np.pi)

# probit index clamp; phi underflows past |x| ~ 38 and downstream weights
# divide by Phi(x)Phi(-x)
INDEX_CLAMP = 37.0


def normal_cdf(x):
    """Standard normal CDF, accurate in both tails.

    Below -37 the erfc-based routine underflows to exactly zero, so the
    deep tail switches to the asymptotic series phi(x)/|x| (1 - 1/x^2 +
    3/x^4), which stays positive into the subnormal range.
    """
    x = np.asarray(x, dtype=float)
    out = np.asarray(ndtr(x))
    deep = x < -37.0
    if np.any(deep):
        xd = x[deep] if out.ndim else x
        tail = (
            np.exp(-0.5 * xd * xd)
            / SQRT_2PI
            / (-xd)
            * (1.0 - 1.0 / xd**2 + 3.0 / xd**4)
        )
        if out.ndim:
            out[deep] = tail
        else:
            out = np.asarray(tail)
    return out if out.ndim else float(out)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return out if out.ndim else float(out)


def chi2_cdf(x, df: int):
    """Chi-square CDF via the regularized lower incomplete gamma."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
    return out if out.ndim else float(out)


def chi2_quantile(p: float, df: int) -> float:
    """Chi-square quantile; inverse of :func:`chi2_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    return float(2.0 * gammaincinv(df / 2.0, p))


_RIDGE_SCALE = 1e-10
_PIVOT_RTOL = 1e-12


def solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A by Cholesky.

    If the factorization fails, a single ridge of 1e-10 * trace(A)/dim is
    added and the solve retried; raises :class:`NearSingularError` if that
    also fails or the factor is effectively rank deficient.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    scale = np.max(np.abs(A))
    if scale > 0 and np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("A must be symmetric")

    def attempt(M):
        c, low = cho_factor(M, lower=True, check_finite=False)
        d = np.abs(np.diag(c))
        if d.min() < _PIVOT_RTOL * d.max():
            raise np.linalg.LinAlgError("effective pivot underflow")
        return cho_solve((c, low), B, check_finite=False)

    try:
        return attempt(A)
    except np.linalg.LinAlgError:
        pass
    ridge = _RIDGE_SCALE * np.trace(A) / A.shape[0]
    try:
        return attempt(A + ridge * np.eye(A.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NearSingularError(
            f"matrix not SPD within ridge policy (dim {A.shape[0]})"
        ) from exc


@lru_cache(maxsize=32)
def _hermgauss(nodes: int):
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return x, w / np.sqrt(np.pi)


def gh_expectation(f, sigma: float, nodes: int = 64) -> float:
    """E[f(Z)] for Z ~ N(0, sigma^2) by Gauss-Hermite quadrature.

    Exact for polynomials of degree up to 2*nodes - 1.
    """
    if nodes < 16:
        raise ValueError("nodes must be >= 16")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x, w = _hermgauss(nodes)
    return float(w @ f(np.sqrt(2.0) * sigma * x))


@dataclass(frozen=True)
class RngStream:
    """Value-type handle for a counter-based random stream.

    Identical (seed, stream) pairs reproduce the same draw sequence;
    distinct stream ids give statistically independent streams, so each
    Monte Carlo replication can own stream = replication index.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))


def draw_bivariate_normal(
    stream: RngStream,
    rho: float,
    sigma_u: float,
    sigma_v: float,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n pairs (u, v), mean zero, correlation rho, given scales."""
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if sigma_u <= 0 or sigma_v <= 0:
        raise ValueError("scales must be positive")
    rng = stream.generator()
    e1 = rng.standard_normal(n)
    e2 = rng.standard_normal(n)
    u = sigma_u * e1
    v = sigma_v * (rho * e1 + np.sqrt(1.0 - rho * rho) * e2)
    return u, v
