"""Compiled explicit-Euler sweeps shared by the solver and its diagnostics.

Arrays are laid out population-major: ``arr[i, n]`` is population ``i`` at
grid node ``n``.  ``xi[i]`` is ``eta_i**2 / (2 gamma_i)`` and ``rs[i]`` the
row sum of the connection matrix.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def coupling(X, G, rs, n, i):
    s = rs[i] * X[i, n]
    for j in range(X.shape[0]):
        s -= G[i, j] * X[j, n]
    return s


@njit(cache=True)
def forward_xbar(A, B, G, xi, rs, x0, dt):
    M, N1 = A.shape
    X = np.empty((M, N1))
    X[:, 0] = x0
    for n in range(N1 - 1):
        for i in range(M):
            drift = -xi[i] * (A[i, n] + B[i, n] * coupling(X, G, rs, n, i))
            X[i, n + 1] = X[i, n] + dt * drift
    return X


@njit(cache=True)
def backward_a(X, B, G, xi, rs, a_T, dt):
    M, N1 = X.shape
    A = np.empty((M, N1))
    A[:, N1 - 1] = a_T
    ybar = np.empty(M)
    for n in range(N1 - 1, 0, -1):
        for j in range(M):
            ybar[j] = xi[j] * (A[j, n] + B[j, n] * coupling(X, G, rs, n, j))
        for i in range(M):
            s = 0.0
            for j in range(M):
                s += G[i, j] * ybar[j]
            drift = B[i, n] * (rs[i] * xi[i] * A[i, n] - s)
            A[i, n - 1] = A[i, n] - dt * drift
    return A


@njit(cache=True)
def backward_riccati(c, b_T, n_steps, dt):
    """Explicit Euler for dB/dt = c B**2 run backward from B_T."""
    B = np.empty(n_steps + 1)
    B[n_steps] = b_T
    for n in range(n_steps, 0, -1):
        B[n - 1] = B[n] - dt * c * B[n] * B[n]
    return B


@njit(cache=True)
def forward_variance(B, xi, rs, sigma2, v0, dt):
    M, N1 = B.shape
    V = np.empty((M, N1))
    V[:, 0] = v0
    clipped = 0
    for n in range(N1 - 1):
        for i in range(M):
            v = V[i, n] + dt * (-2.0 * xi[i] * B[i, n] * rs[i] * V[i, n] + sigma2[i])
            if v < 0.0:
                v = 0.0
                clipped += 1
            V[i, n + 1] = v
    return V, clipped
