"""SVR tests against a dense QP reference solver (cvxopt)."""

import numpy as np
import pytest

from emobench.regressor import (
    MinMaxScaler, RegressorError, SvrConfig, fit_scaler, load_model, rbf_kernel,
    save_model, train_svr,
)

cvxopt = pytest.importorskip("cvxopt")


def qp_reference(z, y, c, epsilon, gamma):
    """Dense epsilon-SVR dual via cvxopt on pre-scaled inputs.

    Variables u in R^{2n} with signs s = (+1..., -1...); returns
    (beta, minimized dual objective, qp bias estimate).
    """
    from cvxopt import matrix, solvers
    n = len(y)
    kmat = rbf_kernel(z, z, gamma)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.outer(s, s) * np.tile(kmat, (2, 2))
    q = np.concatenate([epsilon - y, epsilon + y])
    g = np.vstack([-np.eye(2 * n), np.eye(2 * n)])
    h = np.concatenate([np.zeros(2 * n), np.full(2 * n, c)])
    a = s[None, :]
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-11
    solvers.options["reltol"] = 1e-11
    sol = solvers.qp(matrix(p), matrix(q), matrix(g), matrix(h),
                     matrix(a), matrix(0.0))
    u = np.array(sol["x"]).ravel()
    beta = u[:n] - u[n:]
    obj = 0.5 * u @ p @ u + q @ u
    return beta, obj, float(sol["y"][0])


def test_smo_matches_qp_on_random_instances():
    rng = np.random.default_rng(0)
    cfg = SvrConfig(c=2.0, epsilon=0.1, gamma=0.7, tol=1e-8)
    compared = 0
    for trial in range(25):
        n, d = int(rng.integers(4, 18)), int(rng.integers(1, 6))
        z = rng.random((n, d))
        y = rng.normal(0, 0.5, n)
        model = train_svr(z, y, cfg)
        zs = model.scaler.transform(z)
        beta_ref, obj_ref, bias_ref = qp_reference(zs, y, cfg.c, cfg.epsilon, 0.7)
        assert model.dual_objective == pytest.approx(obj_ref, abs=1e-5)
        # the bias is only unique when free (strictly-in-box) SVs exist;
        # otherwise any value in the KKT interval is optimal and the two
        # solvers may legitimately pick different points
        free = np.any((np.abs(model.coef) > 1e-7)
                      & (np.abs(model.coef) < cfg.c * (1 - 1e-7)))
        if free:
            pred_ref = rbf_kernel(zs, zs, 0.7) @ beta_ref + bias_ref
            np.testing.assert_allclose(model.predict(z), pred_ref, atol=1e-4)
            compared += 1
    assert compared >= 15  # degenerate-bias instances must stay the exception


def test_kkt_conditions_hold():
    rng = np.random.default_rng(1)
    cfg = SvrConfig(c=1.0, epsilon=0.05, gamma=1.5, tol=1e-6)
    for _ in range(10):
        n = int(rng.integers(5, 25))
        z = rng.random((n, 3))
        y = np.sin(3 * z[:, 0]) + 0.1 * rng.normal(size=n)
        model = train_svr(z, y, cfg)
        pred = model.predict(z)
        resid = y - pred
        # reconstruct beta per training point
        zs = model.scaler.transform(z)
        beta = np.zeros(n)
        for sv, b in zip(model.support_vectors, model.coef):
            idx = int(np.argmin(np.sum((zs - sv) ** 2, axis=1)))
            beta[idx] += b
        for i in range(n):
            if abs(beta[i]) < 1e-9:                      # inside the tube
                assert abs(resid[i]) <= cfg.epsilon + 1e-4
            elif abs(beta[i]) < cfg.c * (1 - 1e-6):      # free: on the tube edge
                assert abs(abs(resid[i]) - cfg.epsilon) <= 1e-4
            else:                                        # at the box: outside or on
                assert abs(resid[i]) >= cfg.epsilon - 1e-4


def test_constant_target():
    z = np.random.default_rng(2).random((10, 4))
    model = train_svr(z, np.full(10, 0.3), SvrConfig())
    assert len(model.coef) == 0
    assert model.predict(z[0]) == pytest.approx(0.3, abs=1e-9)


def test_wide_epsilon_gives_empty_model():
    rng = np.random.default_rng(3)
    z, y = rng.random((12, 2)), rng.uniform(-0.1, 0.1, 12)
    model = train_svr(z, y, SvrConfig(epsilon=10.0))
    assert len(model.coef) == 0


def test_gamma_default_is_one_over_d():
    rng = np.random.default_rng(4)
    z, y = rng.random((15, 5)), rng.normal(size=15)
    model = train_svr(z, y, SvrConfig(gamma="1/d"))
    assert model.gamma == pytest.approx(1 / 5)


def test_scaler():
    x = np.array([[0.0, 5.0, 7.0], [2.0, 5.0, 3.0], [1.0, 5.0, 5.0]])
    scaler = fit_scaler(x)
    z = scaler.transform(x)
    assert z.min() >= 0.0 and z.max() <= 1.0
    assert np.all(z[:, 1] == 0.0)  # constant feature pinned to zero
    np.testing.assert_allclose(z[:, 0], [0.0, 1.0, 0.5])


def test_predict_dimension_mismatch():
    rng = np.random.default_rng(5)
    model = train_svr(rng.random((8, 3)), rng.normal(size=8), SvrConfig())
    with pytest.raises(RegressorError):
        model.predict(np.zeros(4))


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    z, y = rng.random((20, 4)), rng.normal(size=20)
    model = train_svr(z, y, SvrConfig(c=3.0, epsilon=0.05))
    p = tmp_path / "model.json"
    save_model(model, p)
    back = load_model(p)
    q = rng.random((7, 4))
    np.testing.assert_array_equal(model.predict(q), back.predict(q))  # bit-exact
