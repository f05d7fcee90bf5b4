"""Exact reference solution for the centered single-hole configuration.

A spherical hole of radius eps at the center of a ball of radius R0, with
synchronous switching at rates (alpha, beta), admits a closed-form constant
mean concentration. This module evaluates that constant, its two-term Taylor
coefficients in eps, and an independent 1-D collocation solve of the radial
two-point boundary value problem (the closed form is transcription-prone, so
both routes are kept).
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ShellParams:
    alpha: float
    beta: float
    eps: float
    R0: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("rates must be positive")
        if not 0 < self.eps < self.R0:
            raise ValueError("need 0 < eps < R0")


def _h(a, b):
    """[1 + 1/a - 2(1+b)/(1+b+e^{2(b-a)}(b-1))]^{-1}, overflow-guarded."""
    s = math.exp(-2 * (b - a))  # b > a, so s <= 1
    frac = 2 * (1 + b) * s / ((1 + b) * s + (b - 1))
    return 1.0 / (1.0 + 1.0 / a - frac)


def exact_shell_mean(p: ShellParams) -> float:
    """Constant value of the mean concentration, all eps in (0, R0)."""
    s = math.sqrt(p.alpha + p.beta)
    return (p.beta / p.alpha) / s * _h(p.eps * s, p.R0 * s)


def shell_taylor(p: ShellParams):
    """Coefficients (c1, c2) of eps and eps^2 in the small-hole expansion."""
    c1 = p.beta / p.alpha
    w = p.R0 * math.sqrt(p.alpha + p.beta)
    t = math.tanh(w)
    c2 = (p.beta / (p.alpha * p.R0)) * (1 - w * t) / (1 - t / w)
    return c1, c2


def _cheb(n):
    """Chebyshev differentiation matrix and nodes on [-1, 1] (n+1 points)."""
    if n == 0:
        return np.zeros((1, 1)), np.ones(1)
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x

def collocation_shell_mean(p: ShellParams, n=128) -> float:
    """Independent oracle: Chebyshev collocation of the radial two-point BVP.

    Unknowns are the diagonalized fields (u0, u1) on [eps, R0]; the mean
    concentration is the (spatially constant) u0.
    """
    a, b = p.alpha, p.beta
    lam = a + b
    D, x = _cheb(n)
    # map [-1, 1] -> [eps, R0]; x runs from 1 down to -1
    r = 0.5 * (p.R0 - p.eps) * (x + 1) + p.eps
    D = D * (2.0 / (p.R0 - p.eps))
    D2 = D @ D
    m = n + 1
    L0 = D2 + np.diag(2.0 / r) @ D
    L1 = L0 - lam * np.eye(m)
    A = np.zeros((2 * m, 2 * m))
    rhs = np.zeros(2 * m)
    A[:m, :m] = L0
    A[m : 2 * m, m : 2 * m] = L1
    i_out, i_in = 0, m - 1  # x=+1 -> r=R0, x=-1 -> r=eps
    # outer wall: u0' = 0, u1' = 0
    A[i_out, :] = 0.0
    A[i_out, :m] = D[i_out]
    A[m + i_out, :] = 0.0
    A[m + i_out, m:] = D[i_out]
    # hole wall: (a/lam) u0 + u1 = 0 and (b/lam) u0' - u1' = -b/lam
    A[i_in, :] = 0.0
    A[i_in, i_in] = a / lam
    A[i_in, m + i_in] = 1.0
    A[m + i_in, :] = 0.0
    A[m + i_in, :m] = (b / lam) * D[i_in]
    A[m + i_in, m:] -= D[i_in]
    rhs[m + i_in] = -b / lam
    sol = np.linalg.solve(A, rhs)
    u0 = sol[:m]
    if np.ptp(u0) > 1e-8 * max(abs(u0).max(), 1e-30):
        raise RuntimeError("collocation u0 not constant; resolution too low")
    return float(u0.mean())
