"""Independent slow references used to check the GP learner.

Everything here is written from the definitions, not from the library code:
posterior means by tensor-product Gauss-Hermite quadrature, and kernels as
plain formula translations.
"""

import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import norm


def quadrature_posterior_mean(mu, K, winner_loser_pairs, nodes=60):
    """Exact posterior mean E[f | D] by dense numerical integration.

    Feasible only for len(mu) <= 4. Each pair (w, l) contributes a factor
    Phi(f_w - f_l) to the likelihood.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    assert n <= 4, "quadrature oracle is exponential in n"
    L = np.linalg.cholesky(K)
    x, w = hermegauss(nodes)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    XI = np.stack([g.ravel() for g in grids])
    W = np.ones(XI.shape[1])
    for g in np.meshgrid(*([w] * n), indexing="ij"):
        W = W * g.ravel()
    F = mu[:, None] + L @ XI
    lik = np.ones(XI.shape[1])
    for a, b in winner_loser_pairs:
        lik *= norm.cdf(F[a] - F[b])
    Wl = W * lik
    return (F * Wl).sum(axis=1) / Wl.sum()


def matern52_value(r, length_scale, signal_variance):
    """Scalar Matern-5/2 from the textbook formula."""
    s = math.sqrt(5.0) * r / length_scale
    return signal_variance * (1.0 + s + s * s / 3.0) * math.exp(-s)


def squared_exponential_value(r, length_scale, signal_variance):
    return signal_variance * math.exp(-0.5 * (r / length_scale) ** 2)
