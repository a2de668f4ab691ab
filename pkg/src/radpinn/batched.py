"""Vectorized network evaluation with derivative channels and a hand-written adjoint.

This is the training-speed counterpart of the scalar tape in
:mod:`radpinn.autodiff`: the same second-order forward propagation, laid out
as stacked channel matrices ``[u, u_s..., u_ss...]`` (one block of rows per
channel), followed by an explicit reverse sweep through the tanh chain rule.
jax is used only as an array compiler; no jax transformations compute
derivatives.
"""

from __future__ import annotations

from functools import partial

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402

Layout = tuple[tuple[int, int, int], ...]


def unpack(theta, layout: Layout):
    return [
        (theta[off : off + r * c].reshape(r, c), theta[off + r * c : off + r * c + r]) for r, c, off in layout
    ]


def _forward(layers, X, slots: tuple[int, ...], second: bool):
    """Propagate value, first and (optionally) pure second derivatives.

    Returns the output channels, shape (n_channels, N), and the cache needed
    by :func:`_adjoint`.
    """
    N = X.shape[0]
    n = len(slots)
    zeros = jnp.zeros_like(X)
    chans = [X] + [zeros.at[:, s].set(1.0) for s in slots] + ([zeros] * n if second else [])
    A = jnp.concatenate(chans, axis=0)
    cache = []
    for W, b in layers[:-1]:
        Z = A @ W.T
        z = Z[:N] + b
        zd = [Z[(1 + i) * N : (2 + i) * N] for i in range(n)]
        zdd = [Z[(1 + n + i) * N : (2 + n + i) * N] for i in range(n)] if second else []
        t = jnp.tanh(z)
        s = 1.0 - t * t
        parts = [t] + [s * d for d in zd]
        if second:
            ts = t * s
            parts += [s * dd - 2.0 * ts * d * d for d, dd in zip(zd, zdd)]
        cache.append((A, zd, zdd, t, s))
        A = jnp.concatenate(parts, axis=0)
    W, b = layers[-1]
    out = (A @ W.T)[:, 0]
    out = out.at[:N].add(b[0])
    cache.append(A)
    return out.reshape(-1, N), cache


def _adjoint(layers, cache, G, n: int, second: bool):
    """Parameter gradient of sum(G * channels), flattened in layout order."""
    N = G.shape[1]
    A = cache[-1]
    W, _ = layers[-1]
    g = G.reshape(-1)
    grads = [((g @ A)[None, :], jnp.sum(G[0])[None])]
    gA = g[:, None] * W
    for li in range(len(layers) - 2, -1, -1):
        W, _ = layers[li]
        A_prev, zd, zdd, t, s = cache[li]
        ga = [gA[j * N : (j + 1) * N] for j in range(gA.shape[0] // N)]
        ts = t * s
        gz = ga[0] * s
        gzd, gzdd = [], []
        for i in range(n):
            gd = ga[1 + i]
            gz = gz - 2.0 * ts * zd[i] * gd
            gzd_i = gd * s
            if second:
                gdd = ga[1 + n + i]
                gz = gz + gdd * (-2.0 * ts * zdd[i] - 2.0 * s * (1.0 - 3.0 * t * t) * zd[i] * zd[i])
                gzd_i = gzd_i - 4.0 * ts * zd[i] * gdd
                gzdd.append(gdd * s)
            gzd.append(gzd_i)
        GZ = jnp.concatenate([gz] + gzd + gzdd, axis=0)
        grads.append((GZ.T @ A_prev, jnp.sum(gz, axis=0)))
        if li:
            gA = GZ @ W
    grads.reverse()
    return jnp.concatenate([jnp.concatenate([gW.reshape(-1), gb]) for gW, gb in grads])


def _mean(x):
    # accumulate in float64 whatever the working precision
    return jnp.sum(x.astype(jnp.float64)) / x.shape[0]


def _terms(theta, layout, batch, coef, with_grad: bool):
    Xd, Xn, ny, Xr, kr = batch
    c1, c2, c3, sigma, a, f = coef
    layers = unpack(theta, layout)

    Ud, cache_d = _forward(layers, Xd, (), False)
    u = Ud[0]
    Un, cache_n = _forward(layers, Xn, (1,), False)
    q = Un[1] * ny
    Ur, cache_r = _forward(layers, Xr, (0, 1), True)
    r = -kr * (Ur[3] + Ur[4]) + a * Ur[1] + sigma * Ur[0] - f

    phis = jnp.stack([_mean(u * u), _mean(q * q), _mean(r * r)])
    if not with_grad:
        return phis, r
    gd = (2.0 * c1 / u.shape[0]) * u
    gn = (2.0 * c2 / q.shape[0]) * q * ny
    gr = (2.0 * c3 / r.shape[0]) * r
    grad = (
        _adjoint(layers, cache_d, gd[None, :], 0, False)
        + _adjoint(layers, cache_n, jnp.stack([jnp.zeros_like(gn), gn]), 1, False)
        + _adjoint(layers, cache_r, jnp.stack([sigma * gr, a * gr, jnp.zeros_like(gr), -kr * gr, -kr * gr]), 2, True)
    )
    return phis, grad


@partial(jax.jit, static_argnums=(1,))
def loss_terms(theta, layout: Layout, batch, coef):
    """(phi_bd, phi_bn, phi_r) as float64."""
    return _terms(theta, layout, batch, coef, False)[0]


@partial(jax.jit, static_argnums=(1,))
def loss_terms_and_grad(theta, layout: Layout, batch, coef):
    return _terms(theta, layout, batch, coef, True)


@partial(jax.jit, static_argnums=(1,))
def residuals(theta, layout: Layout, batch, coef):
    return _terms(theta, layout, batch, coef, False)[1]


@partial(jax.jit, static_argnums=(1,))
def predict(theta, layout: Layout, X):
    return _forward(unpack(theta, layout), X, (), False)[0][0]


@partial(jax.jit, static_argnums=(1,))
def derivatives(theta, layout: Layout, X):
    """Rows u, u_x, u_y, u_xx, u_yy."""
    return _forward(unpack(theta, layout), X, (0, 1), True)[0]


@partial(jax.jit, static_argnums=(1,))
def adam_train_step(theta, layout: Layout, m, v, step, lr, hyper, batch, coef):
    """One full Adam update; returns new state, the loss terms and a finiteness flag."""
    beta1, beta2, eps = hyper
    phis, grad = _terms(theta, layout, batch, coef, True)
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    new = theta - lr * mhat / (jnp.sqrt(vhat) + eps)
    ok = jnp.all(jnp.isfinite(grad)) & jnp.all(jnp.isfinite(phis))
    return new, m, v, phis, ok


def as_batch(Xd, Xn, ny, Xr, kr, dtype) -> tuple:
    return tuple(jnp.asarray(np.asarray(a), dtype=dtype) for a in (Xd, Xn, ny, Xr, kr))


def as_coef(weights, spec, dtype):
    vals = (weights.c1, weights.c2, weights.c3, spec.sigma, spec.a, spec.forcing)
    return jnp.asarray(np.array(vals), dtype=dtype)
