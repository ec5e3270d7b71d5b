import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakid import (
    Dataset,
    ParamEta,
    ParamTheta,
    rotate_to_eta,
    standardize,
    unrotate_to_theta,
)

finite = st.floats(-5, 5, allow_nan=False)


class TestRotation:
    def test_no_endogeneity(self):
        th = ParamTheta(rho_tilde=0.0, alpha=0.7, beta=[0.2, -0.1], pi=[0.3, 0.4], xi=[1.0])
        eta = rotate_to_eta(th)
        assert eta.eta1 == 0.0
        assert eta.eta2 == pytest.approx(0.7)
        assert np.allclose(eta.eta3, th.beta)

    def test_direct_substitution(self):
        th = ParamTheta(rho_tilde=1.0, alpha=1.0, beta=[0.5], pi=[0.3], xi=[0.1])
        eta = rotate_to_eta(th)
        assert eta.eta1 == pytest.approx(1.0)
        assert eta.eta2 == pytest.approx(2.0)
        assert np.allclose(eta.eta3, [0.2])

    def test_unrotate_direct(self):
        eta = ParamEta(eta1=1.0, eta2=2.0, eta3=np.array([0.2]), pi=np.array([0.3]), xi=np.array([0.1]))
        th = unrotate_to_theta(eta)
        assert th.rho_tilde == pytest.approx(1.0)
        assert th.alpha == pytest.approx(1.0)
        assert np.allclose(th.beta, [0.5])

    def test_zero_rho_unrotate(self):
        eta = ParamEta(eta1=0.0, eta2=0.9, eta3=np.array([0.4, 0.1]), pi=np.zeros(2), xi=np.array([1.0]))
        th = unrotate_to_theta(eta)
        assert th.alpha == pytest.approx(0.9)
        assert np.allclose(th.beta, [0.4, 0.1])

    @given(finite, finite, finite, finite, finite)
    @settings(max_examples=300, deadline=None)
    def test_round_trip(self, r, a, b, p, x):
        th = ParamTheta(rho_tilde=r, alpha=a, beta=[b], pi=[p], xi=[x])
        back = unrotate_to_theta(rotate_to_eta(th))
        assert np.max(np.abs(back.as_array() - th.as_array())) < 1e-12

    def test_rotation_jacobian_unit_triangular(self):
        # the map theta -> eta is affine with unit-determinant Jacobian
        rng = np.random.default_rng(3)
        for _ in range(5):
            th0 = rng.normal(0, 1, 7)

            def fwd(v):
                t = ParamTheta.from_array(v, 2, 1)
                e = rotate_to_eta(t)
                return np.concatenate([[e.eta1, e.eta2], e.eta3, e.pi, e.xi])

            J = np.zeros((7, 7))
            for k in range(7):
                e = np.zeros(7)
                e[k] = 1e-6
                J[:, k] = (fwd(th0 + e) - fwd(th0 - e)) / 2e-6
            assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-6)


class TestDatasetValidation:
    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            Dataset(
                y1=np.array([0.0, 1.0, 2.0] * 5),
                y2=np.zeros(15),
                X=np.ones((15, 1)),
                Z=np.arange(15.0)[:, None],
            )

    def test_rejects_missing_intercept(self):
        n = 20
        with pytest.raises(ValueError):
            Dataset(
                y1=np.zeros(n),
                y2=np.zeros(n),
                X=np.arange(n, dtype=float)[:, None],
                Z=np.ones((n, 1)),
            )

    def test_rejects_nan(self):
        n = 20
        y2 = np.zeros(n)
        y2[3] = np.nan
        with pytest.raises(ValueError):
            Dataset(y1=np.zeros(n), y2=y2, X=np.ones((n, 1)), Z=np.ones((n, 1)) * 2)


class TestStandardization:
    def test_columns_are_standardized(self):
        rng = np.random.default_rng(0)
        n = 400
        X = np.column_stack([np.ones(n), rng.normal(3, 2, n)])
        Z = rng.normal(-1, 4, (n, 2))
        y2 = rng.normal(10, 5, n)
        y1 = (rng.normal(size=n) > 0).astype(float)
        ds, info = standardize(Dataset(y1=y1, y2=y2, X=X, Z=Z))
        assert np.allclose(ds.y2.mean(), 0, atol=1e-12)
        assert np.allclose(ds.y2.std(ddof=1), 1, atol=1e-12)
        assert np.allclose(ds.X[:, 0], 1.0)
        assert np.allclose(ds.X[:, 1:].mean(axis=0), 0, atol=1e-12)
        assert np.allclose(ds.Z.std(axis=0, ddof=1), 1, atol=1e-12)

    def test_theta_round_trip_on_linear_part(self):
        # OLS on standardized columns mapped back must equal raw OLS
        rng = np.random.default_rng(1)
        n = 500
        X = np.column_stack([np.ones(n), rng.normal(2, 3, n)])
        Z = rng.normal(0, 2, (n, 1))
        y2 = 1.0 + 0.5 * X[:, 1] + 0.8 * Z[:, 0] + rng.normal(0, 1, n)
        y1 = (rng.normal(size=n) > 0).astype(float)
        raw = Dataset(y1=y1, y2=y2, X=X, Z=Z)
        ds, info = standardize(raw)

        XZs = np.column_stack([ds.X, ds.Z])
        coef_s = np.linalg.lstsq(XZs, ds.y2, rcond=None)[0]
        th_s = ParamTheta(rho_tilde=0.3, alpha=0.1, beta=np.zeros(2), pi=coef_s[:2], xi=coef_s[2:])
        th_raw = info.theta_to_raw(th_s)

        XZ = np.column_stack([raw.X, raw.Z])
        coef_raw = np.linalg.lstsq(XZ, raw.y2, rcond=None)[0]
        assert np.allclose(th_raw.pi, coef_raw[:2], atol=1e-6)
        assert np.allclose(th_raw.xi, coef_raw[2:], atol=1e-6)

    def test_vcov_transform_matches_jacobian(self):
        rng = np.random.default_rng(2)
        n = 300
        X = np.column_stack([np.ones(n), rng.normal(1, 2, n), rng.normal(-2, 0.5, n)])
        Z = rng.normal(4, 3, (n, 1))
        y2 = rng.normal(0, 2, n)
        y1 = (rng.normal(size=n) > 0).astype(float)
        _, info = standardize(Dataset(y1=y1, y2=y2, X=X, Z=Z))
        k_x, k_z = 3, 1
        p = 2 + 2 * k_x + k_z
        T = info.jacobian_to_raw(k_x, k_z)
        # numerical Jacobian of theta_to_raw
        th0 = rng.normal(0, 1, p)
        J = np.zeros((p, p))
        for k in range(p):
            e = np.zeros(p)
            e[k] = 1e-6
            hi = info.theta_to_raw(ParamTheta.from_array(th0 + e, k_x, k_z)).as_array()
            lo = info.theta_to_raw(ParamTheta.from_array(th0 - e, k_x, k_z)).as_array()
            J[:, k] = (hi - lo) / 2e-6
        assert np.allclose(J, T, atol=1e-6)
