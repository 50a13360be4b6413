"""Shallow sparse autoencoder trained with full-batch L-BFGS.

Cost for m examples::

    J = 1/m sum_i 1/2 ||x_hat_i - x_i||^2
        + lam/2 (||W1||^2 + ||W2||^2)
        + beta sum_j KL(rho || rho_hat_j)

where rho_hat_j is the mean activation of hidden unit j. Biases are not
decayed. A linear-activation, tied-weight variant exists for checking the
classic equivalence between linear autoencoders and PCA; it is not exposed
on the command line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from . import lbfgs
from .matrixio import as_matrix

log = logging.getLogger(__name__)

SIGMOID = "sigmoid"
LINEAR = "linear"
RHO_HAT_CLAMP = 1e-8


@dataclass(frozen=True)
class AeHyper:
    lam: float = 0.003
    rho: float = 0.0
    beta: float = 3.0
    epochs: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lam and beta must be nonnegative")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


@dataclass(frozen=True)
class AeParams:
    W1: np.ndarray  # n_hidden x n_visible
    b1: np.ndarray
    W2: np.ndarray  # n_visible x n_hidden
    b2: np.ndarray

    method = "ae"

    def __post_init__(self):
        h, v = np.shape(self.W1)
        if np.shape(self.W2) != (v, h) or np.shape(self.b1) != (h,) or np.shape(self.b2) != (v,):
            raise ValueError("inconsistent autoencoder parameter shapes")
        for a in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("autoencoder parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.W1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]

    def flat(self, tied: bool = False) -> np.ndarray:
        parts = [self.W1, self.b1] + ([] if tied else [self.W2]) + [self.b2]
        return np.concatenate([np.ravel(p) for p in parts])

    @classmethod
    def from_flat(cls, theta: np.ndarray, n_visible: int, n_hidden: int, tied: bool = False) -> "AeParams":
        h, v = n_hidden, n_visible
        W1 = theta[:h * v].reshape(h, v)
        b1 = theta[h * v:h * v + h]
        off = h * v + h
        if tied:
            W2 = W1.T.copy()
        else:
            W2 = theta[off:off + v * h].reshape(v, h)
            off += v * h
        b2 = theta[off:off + v]
        return cls(W1.copy(), b1.copy(), W2, b2.copy())

    def transform(self, data, d: int | None = None) -> np.ndarray:
        out = ae_encode(self, data)
        return out if d is None else out[:, :d]


def ae_init(n_visible: int, n_hidden: int, seed: int = 0, tied: bool = False) -> AeParams:
    """Uniform weights on [-r, r], r = sqrt(6 / (n_visible + n_hidden)); zero biases."""
    if n_visible < 1 or n_hidden < 1:
        raise ValueError("layer sizes must be at least 1")
    r = np.sqrt(6.0 / (n_visible + n_hidden))
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-r, r, size=(n_hidden, n_visible))
    W2 = W1.T.copy() if tied else rng.uniform(-r, r, size=(n_visible, n_hidden))
    return AeParams(W1, np.zeros(n_hidden), W2, np.zeros(n_visible))


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == SIGMOID:
        return expit(z)
    if activation == LINEAR:
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _check_width(x: np.ndarray, p: AeParams) -> None:
    if x.shape[1] != p.n_visible:
        raise ValueError(f"data has {x.shape[1]} features, autoencoder expects {p.n_visible}")


def ae_forward(p: AeParams, batch, activation: str = SIGMOID) -> tuple[np.ndarray, np.ndarray]:
    x = as_matrix(batch)
    _check_width(x, p)
    hidden = _activate(x @ p.W1.T + p.b1, activation)
    recon = _activate(hidden @ p.W2.T + p.b2, activation)
    return hidden, recon


def ae_encode(p: AeParams, data, activation: str = SIGMOID) -> np.ndarray:
    return ae_forward(p, data, activation)[0]


def kl_bernoulli(p, p_hat):
    """KL divergence between Bernoulli(p) and Bernoulli(p_hat), with 0 ln 0 = 0."""
    q = np.clip(p_hat, RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)
    return xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q))


def ae_cost_terms(p: AeParams, data, h: AeHyper, activation: str = SIGMOID) -> dict:
    """The three cost contributions separately: reconstruction, weight decay, sparsity."""
    x = as_matrix(data)
    hidden, recon = ae_forward(p, x, activation)
    m = x.shape[0]
    out = {
        "reconstruction": 0.5 * np.sum((recon - x) ** 2) / m,
        "weight_decay": 0.5 * h.lam * (np.sum(p.W1 ** 2) + np.sum(p.W2 ** 2)),
        "sparsity": 0.0,
    }
    if h.beta:
        out["sparsity"] = h.beta * float(np.sum(kl_bernoulli(h.rho, hidden.mean(axis=0))))
    return out


def ae_cost_grad(p: AeParams, data, h: AeHyper, activation: str = SIGMOID,
                 tied: bool = False) -> tuple[float, np.ndarray]:
    """Cost and its gradient, laid out like ``p.flat(tied)``."""
    x = as_matrix(data)
    m = x.shape[0]
    if m == 0:
        raise ValueError("cost needs at least one example")
    _check_width(x, p)
    if activation == LINEAR and h.beta:
        raise ValueError("the sparsity penalty requires sigmoid hidden units")

    hidden = _activate(x @ p.W1.T + p.b1, activation)
    recon = _activate(hidden @ p.W2.T + p.b2, activation)
    err = recon - x
    J = 0.5 * np.sum(err ** 2) / m + 0.5 * h.lam * (np.sum(p.W1 ** 2) + np.sum(p.W2 ** 2))

    delta2 = err / m
    if activation == SIGMOID:
        delta2 = delta2 * recon * (1.0 - recon)
    gW2 = delta2.T @ hidden + h.lam * p.W2
    gb2 = delta2.sum(axis=0)

    back = delta2 @ p.W2
    if h.beta:
        rho_hat = hidden.mean(axis=0)
        J += h.beta * float(np.sum(kl_bernoulli(h.rho, rho_hat)))
        q = np.clip(rho_hat, RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)
        dkl = -h.rho / q + (1.0 - h.rho) / (1.0 - q)
        dkl[(rho_hat != q)] = 0.0  # clamped units carry no gradient
        back = back + h.beta * dkl / m
    delta1 = back * hidden * (1.0 - hidden) if activation == SIGMOID else back
    gW1 = delta1.T @ x + h.lam * p.W1
    gb1 = delta1.sum(axis=0)

    if tied:
        grad = np.concatenate([(gW1 + gW2.T).ravel(), gb1, gb2])
    else:
        grad = np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])
    return float(J), grad


def ae_train(data, n_hidden: int, h: AeHyper = AeHyper(), activation: str = SIGMOID,
             tied: bool = False, init: AeParams | None = None, return_info: bool = False):
    """Train for ``h.epochs`` full-batch L-BFGS iterations (memory 10, c1=1e-4, c2=0.9).

    Returns the trained ``AeParams``; with ``return_info`` also the
    optimizer result, whose ``line_search_failed`` flag marks an early stop.
    """
    x = as_matrix(data)
    if x.shape[0] < 1:
        raise ValueError("training needs at least one frame")
    p0 = init if init is not None else ae_init(x.shape[1], n_hidden, h.seed, tied)
    nv, nh = p0.n_visible, p0.n_hidden

    def fun(theta):
        return ae_cost_grad(AeParams.from_flat(theta, nv, nh, tied), x, h, activation, tied)

    res = lbfgs.minimize(fun, p0.flat(tied), max_iter=h.epochs, memory=10, gtol=1e-8,
                         c1=1e-4, c2=0.9, max_bisect=20)
    if res.line_search_failed:
        log.warning("autoencoder training stopped early after %d iterations (line search)", res.n_iter)
    params = AeParams.from_flat(res.x, nv, nh, tied)
    return (params, res) if return_info else params
