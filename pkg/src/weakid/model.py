"""Data containers, the structural/reduced-form parameter vector, the
eta rotation that isolates the weakly identified direction, and column
standardization for empirical pipelines."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Observations for the binary-outcome IV model.

    y1 is binary, y2 the scalar endogenous regressor, X the exogenous
    block whose first column is the intercept, Z the instrument block.
    """

    y1: np.ndarray
    y2: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y2 = np.asarray(self.y2, dtype=float)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if Z.shape[0] == 1 and y1.shape[0] > 1:
            Z = Z.T
        if X.shape[0] == 1 and y1.shape[0] > 1:
            X = X.T
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        n = y1.shape[0]
        if y2.shape[0] != n or X.shape[0] != n or Z.shape[0] != n:
            raise ValueError("all blocks must share the observation count")
        for name, arr in (("y1", y1), ("y2", y2), ("X", X), ("Z", Z)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if not np.all((y1 == 0.0) | (y1 == 1.0)):
            raise ValueError("y1 must contain only 0/1")
        if not np.allclose(X[:, 0], 1.0):
            raise ValueError("X must carry the intercept in column 1")
        if n <= X.shape[1] + Z.shape[1] + 2:
            raise ValueError("too few observations for the design size")

    @property
    def n(self) -> int:
        return self.y1.shape[0]

    @property
    def k_x(self) -> int:
        return self.X.shape[1]

    @property
    def k_z(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class ParamTheta:
    """Parameter vector theta = (rho_tilde, alpha, beta, pi, xi).

    beta and pi have length k_x (intercept included), xi length k_z;
    total dimension p = 2 + 2 k_x + k_z.
    """

    rho_tilde: float
    alpha: float
    beta: np.ndarray
    pi: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "xi", xi)
        if beta.shape != pi.shape:
            raise ValueError("beta and pi must have equal length k_x")
        vals = np.concatenate([[self.rho_tilde, self.alpha], beta, pi, xi])
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameters must be finite")

    @property
    def k_x(self) -> int:
        return self.beta.shape[0]

    @property
    def k_z(self) -> int:
        return self.xi.shape[0]

    @property
    def dim(self) -> int:
        return 2 + 2 * self.k_x + self.k_z

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [[self.rho_tilde, self.alpha], self.beta, self.pi, self.xi]
        )

    @staticmethod
    def from_array(th: np.ndarray, k_x: int, k_z: int) -> "ParamTheta":
        th = np.asarray(th, dtype=float)
        if th.shape[0] != 2 + 2 * k_x + k_z:
            raise ValueError("array length does not match (k_x, k_z)")
        return ParamTheta(
            rho_tilde=float(th[0]),
            alpha=float(th[1]),
            beta=th[2 : 2 + k_x].copy(),
            pi=th[2 + k_x : 2 + 2 * k_x].copy(),
            xi=th[2 + 2 * k_x :].copy(),
        )


@dataclass(frozen=True)
class ParamEta:
    """Rotated parameters eta = (rho_tilde, rho_tilde + alpha, beta - rho_tilde*pi).

    The rotation confines identification weakness to eta1; theta2 = (pi, xi)
    is carried unchanged.
    """

    eta1: float
    eta2: float
    eta3: np.ndarray
    pi: np.ndarray
    xi: np.ndarray


def rotate_to_eta(theta: ParamTheta) -> ParamEta:
    return ParamEta(
        eta1=theta.rho_tilde,
        eta2=theta.rho_tilde + theta.alpha,
        eta3=theta.beta - theta.rho_tilde * theta.pi,
        pi=theta.pi.copy(),
        xi=theta.xi.copy(),
    )


def unrotate_to_theta(eta: ParamEta) -> ParamTheta:
    return ParamTheta(
        rho_tilde=eta.eta1,
        alpha=eta.eta2 - eta.eta1,
        beta=np.asarray(eta.eta3) + eta.eta1 * np.asarray(eta.pi),
        pi=np.asarray(eta.pi).copy(),
        xi=np.asarray(eta.xi).copy(),
    )


@dataclass(frozen=True)
class Standardization:
    """Column means/scales used to map a fit back to original units.

    Scales are ddof=1 standard deviations of y2, the non-constant X
    columns, and Z.
    """

    y2_mean: float
    y2_scale: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    z_mean: np.ndarray
    z_scale: np.ndarray

    def theta_to_raw(self, theta: ParamTheta) -> ParamTheta:
        sy = self.y2_scale
        sx = self.x_scale
        sz = self.z_scale
        beta_raw = np.empty_like(theta.beta)
        beta_raw[1:] = theta.beta[1:] / sx
        beta_raw[0] = (
            theta.beta[0]
            - theta.alpha * self.y2_mean / sy
            - np.sum(theta.beta[1:] * self.x_mean / sx)
        )
        pi_raw = np.empty_like(theta.pi)
        pi_raw[1:] = sy * theta.pi[1:] / sx
        xi_raw = sy * theta.xi / sz
        pi_raw[0] = (
            self.y2_mean
            + sy * theta.pi[0]
            - np.sum(pi_raw[1:] * self.x_mean)
            - np.sum(xi_raw * self.z_mean)
        )
        return ParamTheta(
            rho_tilde=theta.rho_tilde / sy,
            alpha=theta.alpha / sy,
            beta=beta_raw,
            pi=pi_raw,
            xi=xi_raw,
        )

    def jacobian_to_raw(self, k_x: int, k_z: int) -> np.ndarray:
        """Linear part of theta_to_raw, for delta-method covariances."""
        p = 2 + 2 * k_x + k_z
        sy, sx, sz = self.y2_scale, self.x_scale, self.z_scale
        T = np.zeros((p, p))
        T[0, 0] = 1.0 / sy
        T[1, 1] = 1.0 / sy
        b0 = 2
        T[b0, b0] = 1.0
        T[b0, 1] = -self.y2_mean / sy
        for j in range(1, k_x):
            T[b0, b0 + j] = -self.x_mean[j - 1] / sx[j - 1]
            T[b0 + j, b0 + j] = 1.0 / sx[j - 1]
        p0 = 2 + k_x
        T[p0, p0] = sy
        for j in range(1, k_x):
            T[p0 + j, p0 + j] = sy / sx[j - 1]
            T[p0, p0 + j] = -sy * self.x_mean[j - 1] / sx[j - 1]
        x0 = 2 + 2 * k_x
        for k in range(k_z):
            T[x0 + k, x0 + k] = sy / sz[k]
            T[p0, x0 + k] = -sy * self.z_mean[k] / sz[k]
        return T

    def vcov_to_raw(self, vcov: np.ndarray, k_x: int, k_z: int) -> np.ndarray:
        T = self.jacobian_to_raw(k_x, k_z)
        return T @ vcov @ T.T


def standardize(dataset: Dataset) -> tuple[Dataset, Standardization]:
    """Center and scale y2, non-constant X columns, and Z to unit variance."""
    Xn = dataset.X[:, 1:]
    info = Standardization(
        y2_mean=float(dataset.y2.mean()),
        y2_scale=float(dataset.y2.std(ddof=1)),
        x_mean=Xn.mean(axis=0),
        x_scale=Xn.std(axis=0, ddof=1),
        z_mean=dataset.Z.mean(axis=0),
        z_scale=dataset.Z.std(axis=0, ddof=1),
    )
    if info.y2_scale <= 0 or np.any(info.x_scale <= 0) or np.any(info.z_scale <= 0):
        raise ValueError("cannot standardize a constant column")
    Xs = np.column_stack(
        [np.ones(dataset.n), (Xn - info.x_mean) / info.x_scale]
    )
    ds = Dataset(
        y1=dataset.y1,
        y2=(dataset.y2 - info.y2_mean) / info.y2_scale,
        X=Xs,
        Z=(dataset.Z - info.z_mean) / info.z_scale,
    )
    return ds, info


def replace_columns(dataset: Dataset, **kwargs) -> Dataset:
    return replace(dataset, **kwargs)
