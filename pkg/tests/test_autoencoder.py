import itertools

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from contactmsm import autoencoder as ae
from contactmsm.projectors import pca_fit


def fd_gradient(p, x, h, activation=ae.SIGMOID, tied=False, step=1e-5):
    theta = p.flat(tied)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        jp = ae.ae_cost_grad(ae.AeParams.from_flat(theta + e, p.n_visible, p.n_hidden, tied), x, h,
                             activation, tied)[0]
        jm = ae.ae_cost_grad(ae.AeParams.from_flat(theta - e, p.n_visible, p.n_hidden, tied), x, h,
                             activation, tied)[0]
        grad[i] = (jp - jm) / (2 * step)
    return grad


def rel_error(g, fd):
    return np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), np.max(np.abs(fd)), 1e-12)


def zero_params(nv, nh, b1=0.0):
    return ae.AeParams(np.zeros((nh, nv)), np.full(nh, b1), np.zeros((nv, nh)), np.zeros(nv))


def test_init_contract():
    p = ae.ae_init(6, 3, seed=4)
    r = np.sqrt(6 / 9)
    assert np.all(p.b1 == 0) and np.all(p.b2 == 0)
    assert np.all(np.abs(p.W1) <= r) and np.all(np.abs(p.W2) <= r)
    q = ae.ae_init(6, 3, seed=4)
    assert p.flat().tobytes() == q.flat().tobytes()
    with pytest.raises(ValueError):
        ae.ae_init(0, 3)


def test_forward_zero_params(rng):
    hidden, recon = ae.ae_forward(zero_params(4, 2), rng.standard_normal((5, 4)))
    assert np.all(hidden == 0.5) and np.all(recon == 0.5)


def test_forward_sigmoid_ln3():
    hidden, _ = ae.ae_forward(zero_params(1, 1, b1=np.log(3.0)), [[0.7]])
    assert abs(hidden[0, 0] - 0.75) < 1e-15


def test_forward_range_and_encode(rng):
    p = ae.ae_init(5, 3, seed=1)
    x = rng.random((20, 5))
    hidden, recon = ae.ae_forward(p, x)
    assert np.all((hidden > 0) & (hidden < 1)) and np.all((recon > 0) & (recon < 1))
    np.testing.assert_array_equal(ae.ae_encode(p, x), hidden)
    np.testing.assert_array_equal(p.transform(x, 2), hidden[:, :2])
    with pytest.raises(ValueError):
        ae.ae_forward(p, np.zeros((1, 4)))


def test_kl_values():
    assert abs(ae.kl_bernoulli(0.0, 0.5) - np.log(2)) < 1e-15
    assert ae.kl_bernoulli(0.3, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert ae.kl_bernoulli(0.0, 0.0) >= 0.0
    assert ae.kl_bernoulli(0.0, 0.0) < 1e-7
    for p, q in itertools.product([0.0, 0.05, 0.5], [0.0, 1e-9, 0.2, 0.9, 1.0]):
        assert ae.kl_bernoulli(p, q) >= 0.0


def test_perfect_reconstruction_zero_cost():
    x = np.full((3, 2), 0.5)
    J, _ = ae.ae_cost_grad(zero_params(2, 1), x, ae.AeHyper(lam=0.0, beta=0.0))
    assert J == 0.0


@pytest.mark.parametrize("lam,beta,rho", list(itertools.product([0.0, 0.003], [0.0, 3.0], [0.0, 0.05])))
def test_gradient_matches_finite_differences(lam, beta, rho):
    rng = np.random.default_rng(99)
    x = rng.random((20, 6))
    p = ae.ae_init(6, 3, seed=2)
    h = ae.AeHyper(lam=lam, beta=beta, rho=rho)
    _, g = ae.ae_cost_grad(p, x, h)
    assert rel_error(g, fd_gradient(p, x, h)) < 1e-6


def test_gradient_tied_linear(rng):
    x = rng.standard_normal((15, 5))
    p = ae.ae_init(5, 2, seed=3, tied=True)
    h = ae.AeHyper(lam=0.003, beta=0.0)
    _, g = ae.ae_cost_grad(p, x, h, ae.LINEAR, tied=True)
    assert rel_error(g, fd_gradient(p, x, h, ae.LINEAR, tied=True)) < 1e-6


def test_linear_with_sparsity_rejected(rng):
    with pytest.raises(ValueError):
        ae.ae_cost_grad(ae.ae_init(3, 2), rng.random((4, 3)), ae.AeHyper(beta=3.0), ae.LINEAR)


def test_cost_decomposition(rng):
    x = rng.random((25, 6))
    p = ae.ae_init(6, 3, seed=8)
    base = ae.ae_cost_grad(p, x, ae.AeHyper(lam=0.0, beta=0.0))[0]
    decay = 0.5 * 0.003 * (np.sum(p.W1 ** 2) + np.sum(p.W2 ** 2))
    assert abs(ae.ae_cost_grad(p, x, ae.AeHyper(lam=0.003, beta=0.0))[0] - base - decay) < 1e-12
    rho_hat = ae.ae_encode(p, x).mean(axis=0)
    sparsity = 3.0 * sum(-np.log(1 - r) for r in rho_hat)
    full = ae.ae_cost_grad(p, x, ae.AeHyper(lam=0.003, beta=3.0, rho=0.0))[0]
    assert abs(full - base - decay - sparsity) < 1e-12
    terms = ae.ae_cost_terms(p, x, ae.AeHyper(lam=0.003, beta=3.0))
    assert abs(terms["reconstruction"] - base) < 1e-12
    assert abs(terms["weight_decay"] - decay) < 1e-12
    assert abs(terms["sparsity"] - sparsity) < 1e-12


def test_empty_data_rejected():
    with pytest.raises(ValueError):
        ae.ae_cost_grad(ae.ae_init(3, 2), np.zeros((0, 3)), ae.AeHyper())


def test_hyper_validation():
    for kw in ({"lam": -1}, {"beta": -1}, {"rho": 1.0}, {"epochs": 0}):
        with pytest.raises(ValueError):
            ae.AeHyper(**kw)


def test_params_validation():
    with pytest.raises(ValueError):
        ae.AeParams(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        ae.AeParams(np.full((1, 1), np.nan), np.zeros(1), np.zeros((1, 1)), np.zeros(1))


def test_training_descends_monotonically(rng):
    x = (rng.random((60, 8)) < 0.3).astype(float)
    h = ae.AeHyper(epochs=50, seed=5)
    p0 = ae.ae_init(8, 3, seed=5)
    p, res = ae.ae_train(x, 3, h, return_info=True)
    j0 = ae.ae_cost_grad(p0, x, h)[0]
    assert ae.ae_cost_grad(p, x, h)[0] <= j0
    assert np.all(np.diff(res.history) <= 0)
    assert res.history[0] == j0


def test_training_deterministic(rng):
    x = rng.random((30, 5))
    h = ae.AeHyper(epochs=20, seed=1)
    assert ae.ae_train(x, 2, h).flat().tobytes() == ae.ae_train(x, 2, h).flat().tobytes()


def test_constant_data_reconstructed():
    x = np.full((10, 1), 0.5)
    p = ae.ae_train(x, 1, ae.AeHyper(epochs=400, seed=0))
    _, recon = ae.ae_forward(p, x)
    assert np.all(np.abs(recon - 0.5) < 1e-3)


def test_linear_tied_recovers_pca_subspace(rng):
    basis, _ = np.linalg.qr(rng.standard_normal((10, 2)))
    x = rng.standard_normal((2000, 2)) * [5.0, 3.0] @ basis.T + 0.1 * rng.standard_normal((2000, 10))
    x -= x.mean(axis=0)
    p = ae.ae_train(x, 2, ae.AeHyper(lam=0.0, beta=0.0, epochs=400, seed=0), ae.LINEAR, tied=True)
    pcs = pca_fit(x).components[:, :2]
    assert np.degrees(subspace_angles(p.W1.T, pcs)).max() < 5.0
