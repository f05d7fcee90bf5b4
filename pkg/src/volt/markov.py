"""Firing-state Markov chains: state space, generator, invariant measure, spectra.

Each neuron is either quiescent (0) or firing (1), so the joint state space
is a subset of {0,1}^N. Three families are constructible: synchronous
(two states), independent (full hypercube, product form), and partitioned
groups (synchronous within a group, independent across groups). A raw
generator over an explicit state list is also accepted.

States are ordered lexicographically reading the bit-vector from component N
down to component 1 (component 1 varies fastest), matching the printed
reference matrices for two independent neurons. Every matrix here is keyed
to that order.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

MAX_STATES = 2**14


class CapacityError(ValueError):
    """State space too large to enumerate."""


class NotReversibleError(ValueError):
    """Generator has complex spectrum beyond tolerance (non-reversible chain)."""


@dataclass(frozen=True)
class FiringModel:
    """Parameters of one of the three constructible firing families.

    variant is one of "synchronous", "independent", "partitioned".
    """

    variant: str
    alpha: float | None = None          # synchronous
    beta: float | None = None
    rates: tuple | None = None          # independent: ((alpha_n, beta_n), ...)
    groups: tuple | None = None         # partitioned: ((indices, alpha, beta), ...)

    @staticmethod
    def synchronous(alpha, beta):
        _check_rate(alpha)
        _check_rate(beta)
        return FiringModel("synchronous", alpha=float(alpha), beta=float(beta))

    @staticmethod
    def independent(rates):
        rates = tuple((float(a), float(b)) for a, b in rates)
        for a, b in rates:
            _check_rate(a)
            _check_rate(b)
        return FiringModel("independent", rates=rates)

    @staticmethod
    def partitioned(groups):
        """groups: iterable of (index_set, alpha, beta) with 1-based indices."""
        norm = []
        for idx, a, b in groups:
            _check_rate(a)
            _check_rate(b)
            norm.append((tuple(sorted(int(i) for i in idx)), float(a), float(b)))
        return FiringModel("partitioned", groups=tuple(norm))


def _check_rate(r):
    if not r > 0:
        raise ValueError(f"firing rate must be strictly positive, got {r}")


@dataclass(frozen=True)
class JumpSpec:
    """State space, generator and invariant distribution of the firing chain."""

    N: int
    states: tuple            # tuple of bit-tuples, lexicographic
    Q: np.ndarray            # |J| x |J| generator, zero row sums
    rho: np.ndarray          # invariant distribution, Q^T rho = 0

    @property
    def n_states(self):
        return len(self.states)

    @staticmethod
    def from_generator(states, Q, N=None):
        """Wrap a raw generator. Validated only as a generator (zero row sums,
        nonnegative off-diagonals, irreducible); reversibility is checked later
        by the spectral decomposition."""
        states = tuple(tuple(int(b) for b in s) for s in states)
        Q = np.asarray(Q, dtype=float)
        if N is None:
            N = len(states[0])
        _validate_generator(Q)
        rho = invariant_distribution_of(Q)
        return JumpSpec(N=N, states=states, Q=Q, rho=rho)


@dataclass(frozen=True)
class SpectralData:
    """Diagonalization Q^T = -P Lambda P^{-1} with the pinned normalization:
    first column of P is rho, first row of Pinv is all ones, lambdas ascending
    with lambdas[0] = 0 exactly."""

    P: np.ndarray
    Pinv: np.ndarray
    lambdas: np.ndarray


@dataclass(frozen=True)
class FiringMatrix:
    """Diagonal 0/1 matrix B_n: entry for state j is j_n."""

    n: int
    diag: np.ndarray

    def as_matrix(self):
        return np.diag(self.diag.astype(float))


def _validate_generator(Q, tol_scale=1e-10):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("generator must be square")
    scale = max(np.abs(Q).max(), 1.0)
    row_sums = Q.sum(axis=1)
    if np.abs(row_sums).max() > tol_scale * scale:
        raise ValueError("generator rows must sum to zero")
    off = Q - np.diag(np.diag(Q))
    if off.min() < -tol_scale * scale:
        raise ValueError("off-diagonal generator entries must be nonnegative")


def build_jump_spec(model: FiringModel, N: int) -> JumpSpec:
    """Build states (lexicographic), Q and rho for the given firing family."""
    if N < 1:
        raise ValueError("need at least one varicosity")

    if model.variant == "synchronous":
        a, b = model.alpha, model.beta
        states = (tuple([0] * N), tuple([1] * N))
        Q = np.array([[-b, b], [a, -a]])
        rho = np.array([a, b]) / (a + b)
        return JumpSpec(N=N, states=states, Q=Q, rho=rho)

    if model.variant == "independent":
        rates = model.rates
        if len(rates) != N:
            raise ValueError(f"need {N} rate pairs, got {len(rates)}")
        if 2**N > MAX_STATES:
            raise CapacityError(f"2^{N} states exceeds cap {MAX_STATES}")
        # Component 1 varies fastest, matching the printed 4x4 matrices.
        states = tuple(t[::-1] for t in product((0, 1), repeat=N))
        index = {s: k for k, s in enumerate(states)}
        m = len(states)
        Q = np.zeros((m, m))
        rho = np.ones(m)
        for k, s in enumerate(states):
            for n, (a, b) in enumerate(rates):
                flipped = list(s)
                flipped[n] = 1 - s[n]
                rate = b if s[n] == 0 else a      # 0 -> 1 at beta, 1 -> 0 at alpha
                Q[k, index[tuple(flipped)]] = rate
                rho[k] *= (s[n] * b + (1 - s[n]) * a) / (a + b)
            Q[k, k] = -Q[k].sum()
        return JumpSpec(N=N, states=states, Q=Q, rho=rho)

    if model.variant == "partitioned":
        groups = model.groups
        covered = sorted(i for idx, _, _ in groups for i in idx)
        if covered != list(range(1, N + 1)):
            raise ValueError("groups must partition {1..N}")
        if 2 ** len(groups) > MAX_STATES:
            raise CapacityError(f"2^{len(groups)} states exceeds cap {MAX_STATES}")
        # One synchronous bit per group; group bit g sets all components in g.
        gstates = list(product((0, 1), repeat=len(groups)))
        def embed(gs):
            bits = [0] * N
            for g, (idx, _, _) in zip(gs, groups):
                for i in idx:
                    bits[i - 1] = g
            return tuple(bits)
        order = sorted(range(len(gstates)), key=lambda k: embed(gstates[k])[::-1])
        gstates = [gstates[k] for k in order]
        states = tuple(embed(gs) for gs in gstates)
        index = {gs: k for k, gs in enumerate(gstates)}
        m = len(gstates)
        Q = np.zeros((m, m))
        rho = np.ones(m)
        for k, gs in enumerate(gstates):
            for g, (idx, a, b) in enumerate(groups):
                flipped = list(gs)
                flipped[g] = 1 - gs[g]
                rate = b if gs[g] == 0 else a
                Q[k, index[tuple(flipped)]] = rate
                rho[k] *= (gs[g] * b + (1 - gs[g]) * a) / (a + b)
            Q[k, k] = -Q[k].sum()
        return JumpSpec(N=N, states=states, Q=Q, rho=rho)

    raise ValueError(f"unknown firing model variant {model.variant!r}")


def invariant_distribution_of(Q):
    """Invariant distribution of a generator: Q^T rho = 0, sum rho = 1, rho > 0.

    Rejects generators whose nullspace dimension is not one (not irreducible).
    """
    Q = np.asarray(Q, dtype=float)
    scale = max(np.abs(Q).max(), 1.0)
    u, s, vt = np.linalg.svd(Q.T)
    null_dim = int(np.sum(s <= 1e-10 * scale))
    if null_dim != 1:
        raise ValueError(
            f"generator nullspace has dimension {null_dim}; chain not irreducible"
        )
    rho = vt[-1, :]
    rho = rho / rho.sum()
    if rho.min() <= 0:
        raise ValueError("invariant distribution not strictly positive")
    resid = np.abs(Q.T @ rho).max()
    if resid > 1e-12 * scale:
        raise ValueError(f"invariant distribution residual {resid:.3e} too large")
    return rho


def invariant_distribution(spec: JumpSpec):
    return invariant_distribution_of(spec.Q)


def spectral_decomposition(spec: JumpSpec) -> SpectralData:
    """Diagonalize Q^T via a symmetrized solve in the rho-weighted inner product.

    For a reversible chain, S Q S^{-1} with S = diag(sqrt(rho)) is symmetric,
    so Q^T = (S V) D (S V)^{-1} for an orthogonal eigenbasis V. Non-reversible
    generators (complex spectrum) are rejected.
    """
    Q, rho = spec.Q, spec.rho
    scale = max(np.abs(Q).max(), 1.0)
    sq = np.sqrt(rho)
    M = (sq[:, None] * Q) / sq[None, :]
    if np.abs(M - M.T).max() <= 1e-8 * scale:
        evals, V = np.linalg.eigh(0.5 * (M + M.T))
        order = np.argsort(-evals)  # lambdas = -evals, sorted ascending
        evals = evals[order]
        V = V[:, order]
        lambdas = -evals
        P = sq[:, None] * V
        Pinv = V.T / sq[None, :]
    else:
        # Not reversible; a genuinely real spectrum is still acceptable.
        evals, V = np.linalg.eig(Q.T)
        if np.abs(evals.imag).max() > 1e-8 * scale:
            raise NotReversibleError(
                "generator has complex eigenvalues; only reversible chains supported"
            )
        evals, V = evals.real, V.real
        order = np.argsort(-evals)
        evals = evals[order]
        lambdas = -evals
        P = V[:, order]
        Pinv = np.linalg.inv(P)
    lambdas[0] = 0.0
    # Rescale: first column of P equals rho <=> P[:,0] = c*rho with c absorbed.
    c = P[:, 0] / rho
    s0 = float(np.mean(c))
    P[:, 0] /= s0
    Pinv[0, :] *= s0
    # Guard signs/round-off: force exact all-ones first row of Pinv.
    Pinv[0, :] = 1.0
    recon = Q.T + P @ np.diag(lambdas) @ Pinv
    if np.abs(recon).max() > 1e-10 * scale:
        raise NotReversibleError(
            f"spectral reconstruction residual {np.abs(recon).max():.3e} too large"
        )
    return SpectralData(P=P, Pinv=Pinv, lambdas=lambdas)


def firing_matrix(spec: JumpSpec, n: int) -> FiringMatrix:
    """B_n, the diagonal indicator of 'varicosity n is firing'. n is 1-based."""
    if not 1 <= n <= spec.N:
        raise IndexError(f"varicosity index {n} out of range 1..{spec.N}")
    diag = np.array([s[n - 1] for s in spec.states], dtype=float)
    return FiringMatrix(n=n, diag=diag)


def firing_marginals(spec: JumpSpec):
    """Per-varicosity (pi1, pi0): stationary probability of firing/quiescent."""
    pi1 = np.array(
        [float(np.dot([s[n] for s in spec.states], spec.rho)) for n in range(spec.N)]
    )
    return pi1, 1.0 - pi1
