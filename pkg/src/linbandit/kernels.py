"""Compiled inner loops for long simulations.

Each ``*_chunk`` function plays a block of consecutive rounds against a
pre-drawn block of environment noise, mutating the state arrays in place and
writing the chosen arm of every round into ``out``.  They mirror the
one-round-at-a-time policies in :mod:`linbandit.policies` exactly (same
arithmetic, same tie-breaking: lowest index wins).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PIVOT_RTOL = 1e-12


@njit(cache=True)
def cholesky_into(G, L):
    """Lower Cholesky factor of G into L; False if a pivot is not clearly positive."""
    d = G.shape[0]
    top = 0.0
    for i in range(d):
        if G[i, i] > top:
            top = G[i, i]
    if top <= 0.0:
        return False
    for j in range(d):
        s = G[j, j]
        for p in range(j):
            s -= L[j, p] * L[j, p]
        if s <= PIVOT_RTOL * top:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, d):
            s = G[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / L[j, j]
        for i in range(j):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def forward_solve(L, b, out):
    d = L.shape[0]
    for i in range(d):
        s = b[i]
        for p in range(i):
            s -= L[i, p] * out[p]
        out[i] = s / L[i, i]


@njit(cache=True)
def backward_solve(L, b, out):
    """Solve L^T out = b."""
    d = L.shape[0]
    for i in range(d - 1, -1, -1):
        s = b[i]
        for p in range(i + 1, d):
            s -= L[p, i] * out[p]
        out[i] = s / L[i, i]


@njit(cache=True)
def estimate(G, b, arms, L, theta, mu, q, work):
    """theta = G^{-1} b, mu = arms @ theta, q_x = ||x||^2_{G^{-1}}; False if G is singular."""
    if not cholesky_into(G, L):
        return False
    forward_solve(L, b, work)
    backward_solve(L, work, theta)
    k, d = arms.shape
    for x in range(k):
        m = 0.0
        for i in range(d):
            m += arms[x, i] * theta[i]
        mu[x] = m
        forward_solve(L, arms[x], work)
        s = 0.0
        for i in range(d):
            s += work[i] * work[i]
        q[x] = s
    return True


@njit(cache=True)
def ucb_pick(t, counts, sums):
    k = counts.shape[0]
    for x in range(k):
        if counts[x] == 0:
            return x
    best = 0
    best_val = -np.inf
    lt = 2.0 * math.log(t)
    for x in range(k):
        v = sums[x] / counts[x] + math.sqrt(lt / counts[x])
        if v > best_val:
            best_val = v
            best = x
    return best


@njit(cache=True)
def ucb_chunk(t0, noise, means, counts, sums, out):
    """Structure-free UCB; ``t0`` is the number of rounds already played."""
    for i in range(noise.shape[0]):
        a = ucb_pick(t0 + i + 1, counts, sums)
        counts[a] += 1
        sums[a] += means[a] + noise[i]
        out[i] = a


@njit(cache=True)
def linear_chunk(kind, noise, z, arms, means, beta, G, b, counts, state, out):
    """Ellipsoid optimism (kind 0) or linear Thompson sampling (kind 1).

    ``state[0]`` counts warm-start rounds, ``state[1]`` is 1 once G is
    invertible.  Warm start plays arms round-robin until then.  ``beta`` is
    alpha*log(n) for optimism and alpha for Thompson.  ``z`` holds d standard
    normals per round (consumed every round by Thompson).
    """
    k, d = arms.shape
    L = np.zeros((d, d))
    theta = np.zeros(d)
    mu = np.zeros(k)
    q = np.zeros(k)
    work = np.zeros(d)
    w = np.zeros(d)
    sb = math.sqrt(beta)
    for i in range(noise.shape[0]):
        ready = state[1] == 1
        if ready:
            ready = estimate(G, b, arms, L, theta, mu, q, work)
        if not ready:
            a = state[0] % k
            state[0] += 1
        elif kind == 0:
            a = 0
            best_val = -np.inf
            for x in range(k):
                v = mu[x] + sb * math.sqrt(q[x])
                if v > best_val:
                    best_val = v
                    a = x
        else:
            backward_solve(L, z[i], w)
            a = 0
            best_val = -np.inf
            for x in range(k):
                v = 0.0
                for j in range(d):
                    v += arms[x, j] * (theta[j] + sb * w[j])
                if v > best_val:
                    best_val = v
                    a = x
        y = means[a] + noise[i]
        for r in range(d):
            b[r] += arms[a, r] * y
            for c in range(d):
                G[r, c] += arms[a, r] * arms[a, c]
        counts[a] += 1
        if state[1] == 0 and cholesky_into(G, L):
            state[1] = 1
        out[i] = a


@njit(cache=True)
def success_chunk(noise, arms, means, G, b, counts, quotas, best, snapshot, threshold, out):
    """Quota phase of the three-phase policy.

    Before every round the anomaly test compares current mean estimates with
    the warm-up snapshot; returns the number of rounds played before it fired
    (``noise.shape[0]`` if it never did).
    """
    k, d = arms.shape
    L = np.zeros((d, d))
    theta = np.zeros(d)
    mu = np.zeros(k)
    q = np.zeros(k)
    work = np.zeros(d)
    for i in range(noise.shape[0]):
        estimate(G, b, arms, L, theta, mu, q, work)
        dev = 0.0
        for x in range(k):
            e = abs(mu[x] - snapshot[x])
            if e > dev:
                dev = e
        if dev > threshold:
            return i
        a = best
        deficit = 0
        for x in range(k):
            if x != best and quotas[x] - counts[x] > deficit:
                deficit = quotas[x] - counts[x]
                a = x
        y = means[a] + noise[i]
        for r in range(d):
            b[r] += arms[a, r] * y
            for c in range(d):
                G[r, c] += arms[a, r] * arms[a, c]
        counts[a] += 1
        out[i] = a
    return noise.shape[0]
