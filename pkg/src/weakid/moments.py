"""Instrument functions, stacked moment evaluation, block-diagonal
weighting, and analytic Jacobians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Dataset, ParamTheta
from .numerics import INDEX_CLAMP, normal_cdf, normal_pdf, solve_spd


@dataclass(frozen=True)
class MomentSystem:
    """Per-observation instrument blocks.

    a_mat (n x H1) multiplies the structural residual, b_mat (n x H2) the
    reduced-form residual. Stacked moments put the structural rows first,
    so the full instrument vectors a_i = (a_mat[i], 0) and b_i =
    (0, b_mat[i]) have disjoint nonzero supports by construction.
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        b = np.atleast_2d(np.asarray(self.b_mat, dtype=float))
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "b_mat", b)
        if a.shape[0] != b.shape[0]:
            raise ValueError("instrument blocks must share the row count")

    @property
    def h1(self) -> int:
        return self.a_mat.shape[1]

    @property
    def h2(self) -> int:
        return self.b_mat.shape[1]

    @property
    def h(self) -> int:
        return self.h1 + self.h2

    def a_full(self, i: int) -> np.ndarray:
        out = np.zeros(self.h)
        out[: self.h1] = self.a_mat[i]
        return out

    def b_full(self, i: int) -> np.ndarray:
        out = np.zeros(self.h)
        out[self.h1 :] = self.b_mat[i]
        return out


@dataclass(frozen=True)
class MomentEval:
    """Sample moment mean, block-diagonal weighting, and Jacobian."""

    gbar: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    G: np.ndarray
    n: int

    @property
    def S(self) -> np.ndarray:
        h1 = self.S1.shape[0]
        h2 = self.S2.shape[0]
        out = np.zeros((h1 + h2, h1 + h2))
        out[:h1, :h1] = self.S1
        out[h1:, h1:] = self.S2
        return out

    def solve_weight(self, vec: np.ndarray) -> np.ndarray:
        """S^{-1} vec using the block structure."""
        h1 = self.S1.shape[0]
        out = np.empty_like(vec, dtype=float)
        out[:h1] = solve_spd(self.S1, vec[:h1])
        out[h1:] = solve_spd(self.S2, vec[h1:])
        return out


def structural_index(theta: ParamTheta, dataset: Dataset) -> np.ndarray:
    v = reduced_residuals(theta, dataset)
    idx = theta.alpha * dataset.y2 + dataset.X @ theta.beta + theta.rho_tilde * v
    return np.clip(idx, -INDEX_CLAMP, INDEX_CLAMP)


_P_HI = float(np.nextafter(1.0, 0.0))
_P_LO = 1.0 - _P_HI


def residual_structural(theta: ParamTheta, dataset: Dataset) -> np.ndarray:
    """y1 - Phi(alpha*y2 + x'beta + rho_tilde * v(theta2)), elementwise.

    The probability is kept strictly inside (0, 1) so the residual stays in
    the open interval (-1, 1) even at clamped indexes.
    """
    P = np.clip(normal_cdf(structural_index(theta, dataset)), _P_LO, _P_HI)
    return dataset.y1 - P


def reduced_residuals(theta: ParamTheta, dataset: Dataset) -> np.ndarray:
    return dataset.y2 - dataset.X @ theta.pi - dataset.Z @ theta.xi


# alias matching the operation naming convention
residual_reduced = reduced_residuals


def default_instruments(dataset: Dataset, spec: str = "empirical") -> MomentSystem:
    """Build the stock instrument sets.

    "mc": a = (1, y2, z, z^2), b = (1, z); requires an intercept-only X
    and a single instrument, giving H = 6 and one overidentifying
    restriction.

    "empirical": a = (1, y2, x, z), b = (1, x, z) with x the non-constant
    exogenous columns, giving H = 2(k_x + k_z) + 1 and H - p = k_z - 1.
    Columns are used as stored; standardize the dataset first when the
    pipeline calls for it.
    """
    n = dataset.n
    if spec == "mc":
        if dataset.k_x != 1 or dataset.k_z != 1:
            raise ConfigError(
                "mc instruments require intercept-only X and one instrument; "
                f"got k_x={dataset.k_x}, k_z={dataset.k_z}"
            )
        z = dataset.Z[:, 0]
        a = np.column_stack([np.ones(n), dataset.y2, z, z * z])
        b = np.column_stack([np.ones(n), z])
        return MomentSystem(a_mat=a, b_mat=b, label="mc")
    if spec == "empirical":
        xn = dataset.X[:, 1:]
        a = np.column_stack([np.ones(n), dataset.y2, xn, dataset.Z])
        b = np.column_stack([np.ones(n), xn, dataset.Z])
        sys = MomentSystem(a_mat=a, b_mat=b, label="empirical")
        p = 2 + 2 * dataset.k_x + dataset.k_z
        if sys.h < p:
            raise ConfigError(f"H={sys.h} < p={p}: underidentified design")
        return sys
    raise ConfigError(f"unknown instrument spec {spec!r}")


def moment_matrices(
    system: MomentSystem, dataset: Dataset, theta: ParamTheta
) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation moment contributions (g1, g2)."""
    r1 = residual_structural(theta, dataset)
    r2 = reduced_residuals(theta, dataset)
    return system.a_mat * r1[:, None], system.b_mat * r2[:, None]


def _centered_blocks(g1: np.ndarray, g2: np.ndarray):
    n = g1.shape[0]
    gb1 = g1.mean(axis=0)
    gb2 = g2.mean(axis=0)
    c1 = g1 - gb1
    c2 = g2 - gb2
    return gb1, gb2, c1, c2, c1.T @ c1 / n, c2.T @ c2 / n


def index_derivative(theta: ParamTheta, dataset: Dataset) -> np.ndarray:
    """d(index)/d(theta), n x p; columns ordered (rho, alpha, beta, pi, xi)."""
    v = reduced_residuals(theta, dataset)
    n = dataset.n
    return np.column_stack(
        [
            v,
            dataset.y2,
            dataset.X,
            -theta.rho_tilde * dataset.X,
            -theta.rho_tilde * dataset.Z,
        ]
    ).reshape(n, theta.dim)


def evaluate(
    system: MomentSystem,
    dataset: Dataset,
    theta: ParamTheta,
    theta_for_weight: ParamTheta | None = None,
) -> MomentEval:
    """Moment mean and Jacobian at theta, weighting blocks at theta_for_weight.

    S blocks are the centered per-block covariances; the cross block is
    structurally zero and never formed.
    """
    g1, g2 = moment_matrices(system, dataset, theta)
    gbar = np.concatenate([g1.mean(axis=0), g2.mean(axis=0)])
    if theta_for_weight is None or theta_for_weight is theta:
        _, _, _, _, S1, S2 = _centered_blocks(g1, g2)
    else:
        w1, w2 = moment_matrices(system, dataset, theta_for_weight)
        _, _, _, _, S1, S2 = _centered_blocks(w1, w2)

    n = dataset.n
    phi = normal_pdf(structural_index(theta, dataset))
    D1 = -phi[:, None] * index_derivative(theta, dataset)
    G1 = system.a_mat.T @ D1 / n
    k_x, k_z = dataset.k_x, dataset.k_z
    D2 = np.zeros((n, theta.dim))
    D2[:, 2 + k_x : 2 + 2 * k_x] = -dataset.X
    D2[:, 2 + 2 * k_x :] = -dataset.Z
    G2 = system.b_mat.T @ D2 / n
    return MomentEval(gbar=gbar, S1=S1, S2=S2, G=np.vstack([G1, G2]), n=n)


def cu_objective(
    system: MomentSystem, dataset: Dataset, theta: ParamTheta
) -> float:
    """Continuously-updated objective n * gbar(theta)' S(theta)^-1 gbar(theta)."""
    g1, g2 = moment_matrices(system, dataset, theta)
    gb1, gb2, _, _, S1, S2 = _centered_blocks(g1, g2)
    n = dataset.n
    return float(n * (gb1 @ solve_spd(S1, gb1) + gb2 @ solve_spd(S2, gb2)))


def cu_value_and_grad(
    system: MomentSystem, dataset: Dataset, th: np.ndarray
) -> tuple[float, np.ndarray]:
    """Value and analytic gradient of the CU objective at a packed theta.

    The gradient includes the weighting-derivative term
    -u' dS/dtheta_k u with u = S^-1 gbar; centering makes the mean
    correction vanish, so each component reduces to
    (2/n) sum_i (a_i'u)(dg_i/dtheta_k)'... accumulated blockwise.
    """
    theta = ParamTheta.from_array(th, dataset.k_x, dataset.k_z)
    g1, g2 = moment_matrices(system, dataset, theta)
    gb1, gb2, c1, c2, S1, S2 = _centered_blocks(g1, g2)
    n = dataset.n
    u1 = solve_spd(S1, gb1)
    u2 = solve_spd(S2, gb2)
    f = float(n * (gb1 @ u1 + gb2 @ u2))

    phi = normal_pdf(structural_index(theta, dataset))
    D1 = -phi[:, None] * index_derivative(theta, dataset)
    k_x = dataset.k_x
    D2 = np.zeros((n, theta.dim))
    D2[:, 2 + k_x : 2 + 2 * k_x] = -dataset.X
    D2[:, 2 + 2 * k_x :] = -dataset.Z

    G1 = system.a_mat.T @ D1 / n
    G2 = system.b_mat.T @ D2 / n
    grad = 2.0 * (G1.T @ u1 + G2.T @ u2)

    s1 = system.a_mat @ u1
    s2 = system.b_mat @ u2
    proj1 = c1 @ u1
    proj2 = c2 @ u2
    grad -= (2.0 / n) * (D1.T @ (s1 * proj1) + D2.T @ (s2 * proj2))
    return f, n * grad
