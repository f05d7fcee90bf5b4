"""Two-term small-hole expansion of the mean concentration.

For well-separated holes of common scale ε the spatial mean admits the
outer-region expansion  ε·θ⁽¹⁾ + ε²·(θ⁽²⁾ + Σ(x)),  where θ⁽¹⁾ depends only
on the holes' capacitances, flux coefficients and firing marginals, θ⁽²⁾
collects interaction terms through the ball's Green's functions, and Σ is a
spatial correction that vanishes for identical holes.  Closed forms for
synchronous and independent firing of spherical holes are provided along
with the synchronous-vs-independent comparison identity.
"""

import math
from dataclasses import dataclass

import numpy as np

from .greens import HelmholtzGreens, NeumannGreens
from .markov import FiringModel, build_jump_spec, firing_marginals, firing_matrix, spectral_decomposition

_LAMBDA_ZERO_TOL = 1e-12


class ExpansionError(ValueError):
    """Invalid varicosity configuration or evaluation point."""


@dataclass(frozen=True)
class VaricosityConfig:
    """Per-hole data entering the expansion: positions, shape, marginals."""

    positions: np.ndarray   # (N, 3) hole centers
    Cn: np.ndarray          # capacitances (magnified scale)
    Dn: np.ndarray          # flux coefficients (magnified scale)
    pi1: np.ndarray         # firing marginals P(hole n fires)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        for name in ("Cn", "Dn", "pi1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(pos)
        if not (len(self.Cn) == len(self.Dn) == len(self.pi1) == n):
            raise ExpansionError("per-hole arrays must all have length N")
        if (self.Cn <= 0).any() or (self.Dn <= 0).any():
            raise ExpansionError("shape coefficients must be positive")
        if (self.pi1 <= 0).any() or (self.pi1 >= 1).any():
            raise ExpansionError("firing marginals must lie in (0, 1)")

    @property
    def n_holes(self):
        return len(self.positions)

    @property
    def pi0(self):
        return 1.0 - self.pi1

    @classmethod
    def from_spec(cls, positions, spec, Cn=None, Dn=None):
        """Spherical unit holes driven by a jump process (overridable shape)."""
        n = len(np.atleast_2d(positions))
        c = np.ones(n) if Cn is None else np.asarray(Cn, dtype=float)
        d = c**2 if Dn is None else np.asarray(Dn, dtype=float)
        return cls(positions, c, d, firing_marginals(spec)[0])


def theta1(config):
    """First-order coefficient Σ Dₙπ₁⁽ⁿ⁾ / Σ Cₙπ₀⁽ⁿ⁾."""
    den = float(np.dot(config.Cn, config.pi0))
    if den == 0.0:
        raise ExpansionError("theta1 denominator vanishes (no quiescent mass)")
    return float(np.dot(config.Dn, config.pi1)) / den


def chi2_vectors(config, spec, spectral):
    """Per-hole vectors χₙ⁽²⁾ = DₙP⁻¹Bₙρ − CₙθP⁻¹(I−Bₙ)ρ with θ = θ⁽¹⁾.

    The second term uses PΘ⁽¹⁾ = θ⁽¹⁾ρ (the lead eigencolumn of P is ρ).
    The first component reduces to Dₙπ₁⁽ⁿ⁾ − Cₙπ₀⁽ⁿ⁾θ⁽¹⁾ and sums to zero
    over the holes (solvability).
    """
    if config.n_holes != spec.N:
        raise ExpansionError("config and jump process disagree on hole count")
    th1 = theta1(config)
    chi = np.empty((spec.N, len(spec.states)))
    for n in range(spec.N):
        bn = firing_matrix(spec, n + 1).diag
        chi[n] = config.Dn[n] * (spectral.Pinv @ (bn * spec.rho)) - config.Cn[
            n
        ] * th1 * (spectral.Pinv @ ((1.0 - bn) * spec.rho))
    return chi


class GreensBundle:
    """Eigenvalue-indexed Green's functions of the ball.

    Component k uses the reflecting-Laplacian Green's function when
    λₖ = 0 and the modified-Helmholtz one for λₖ > 0; equal eigenvalues
    share one series evaluator.
    """

    def __init__(self, lambdas, R0):
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.R0 = float(R0)
        self.neumann = NeumannGreens(R0)
        self._cache = {}
        for lam in self.lambdas:
            if lam > _LAMBDA_ZERO_TOL:
                key = self._key(lam)
                if key not in self._cache:
                    self._cache[key] = HelmholtzGreens(lam, R0)

    @staticmethod
    def _key(lam):
        return float(np.round(lam, 12))

    def pair(self, k, x, y):
        """Gₖ(x, y) for distinct points."""
        lam = self.lambdas[k]
        if lam <= _LAMBDA_ZERO_TOL:
            return self.neumann(x, y)
        return self._cache[self._key(lam)](x, y)

    def regular(self, k, x):
        """Regular part Rₖ(x, x) at coincidence."""
        lam = self.lambdas[k]
        if lam <= _LAMBDA_ZERO_TOL:
            return self.neumann.regular_coincident(x)
        return self._cache[self._key(lam)].regular_part(x, x)


def gamma_vectors(config, spectral, greens, chi):
    """Γₙ = −√Λ χₙ⁽²⁾ + 4π(𝐑(xₙ,xₙ)χₙ⁽²⁾ + Σ_{m≠n}𝐆(xₙ,xₘ)χₘ⁽²⁾)."""
    n_holes, n_states = chi.shape
    pos = config.positions
    for n in range(n_holes):
        for m in range(n + 1, n_holes):
            if np.array_equal(pos[n], pos[m]):
                raise ExpansionError("coincident hole centers")
    sqrt_lam = np.sqrt(np.maximum(spectral.lambdas, 0.0))
    gamma = np.empty_like(chi)
    for n in range(n_holes):
        acc = -sqrt_lam * chi[n]
        for k in range(n_states):
            reg = greens.regular(k, pos[n])
            cross = sum(
                greens.pair(k, pos[n], pos[m]) * chi[m, k]
                for m in range(n_holes)
                if m != n
            )
            acc[k] += 4.0 * math.pi * (reg * chi[n, k] + cross)
        gamma[n] = acc
    return gamma


def theta2(config, spec, spectral, gamma):
    """Second-order coefficient from the per-hole Γₙ vectors.

    θ⁽²⁾ = −[Σₙ Cₙ Σ_{i,j} (1−iₙ) P_{ij} (Γₙ)_j] / [Σₙ Cₙπ₀⁽ⁿ⁾],
    where iₙ is the n-th bit of state i.
    """
    den = float(np.dot(config.Cn, config.pi0))
    if den == 0.0:
        raise ExpansionError("theta2 denominator vanishes")
    num = 0.0
    for n in range(spec.N):
        quiescent = 1.0 - firing_matrix(spec, n + 1).diag
        num += config.Cn[n] * float(quiescent @ spectral.P @ gamma[n])
    return -num / den


def sigma_field(config, chi, neumann):
    """Spatial correction Σ(x) = 4π Σₙ (χₙ⁽²⁾)₁ G(x, xₙ)."""
    first = chi[:, 0]
    pos = config.positions

    def sigma(x):
        x = np.asarray(x, dtype=float)
        total = 0.0
        for n in range(len(pos)):
            d = np.linalg.norm(x - pos[n])
            if d == 0.0:
                raise ExpansionError("sigma is singular at a hole center")
            total += first[n] * neumann(x, pos[n])
        return 4.0 * math.pi * total

    return sigma


@dataclass(frozen=True)
class ExpansionResult:
    """Two-term expansion data: coefficients, per-hole vectors, Σ evaluator."""

    theta1: float
    theta2: float
    chi2: np.ndarray
    gamma: np.ndarray
    sigma: object
    config: VaricosityConfig
    R0: float

    def eval(self, x, eps, guard=5.0, dimensional=None):
        """εθ⁽¹⁾ + ε²(θ⁽²⁾ + Σ(x)); only valid in the outer region.

        Points closer than ``guard``·ε to any hole center are rejected.
        ``dimensional`` is an optional (phi, l1, D) triple applying the
        physical prefactor φ·l₁/D.
        """
        if eps < 0:
            raise ExpansionError("eps must be nonnegative")
        x = np.asarray(x, dtype=float)
        if eps > 0:
            d = np.linalg.norm(self.config.positions - x, axis=1)
            if (d < guard * eps).any():
                raise ExpansionError(
                    "evaluation point is inside the inner region of a hole"
                )
        value = eps * self.theta1 + eps**2 * (self.theta2 + self.sigma(x))
        if dimensional is not None:
            phi, l1, diff = dimensional
            value *= phi * l1 / diff
        return float(value)


def expansion_eval(result, x, eps, dimensional=None, guard=5.0):
    """Evaluate a computed expansion at an outer-region point."""
    return result.eval(x, eps, guard=guard, dimensional=dimensional)


def expansion(config, spec, R0):
    """Compute the full two-term expansion for a configuration."""
    spectral = spectral_decomposition(spec)
    greens = GreensBundle(spectral.lambdas, R0)
    chi = chi2_vectors(config, spec, spectral)
    gamma = gamma_vectors(config, spectral, greens, chi)
    th2 = theta2(config, spec, spectral, gamma)
    sigma = sigma_field(config, chi, greens.neumann)
    return ExpansionResult(theta1(config), th2, chi, gamma, sigma, config, R0)


# ---------------------------------------------------------------------------
# Closed forms for spherical unit holes.

def theta2_synchronous_spheres(positions, alpha, beta, R0):
    """Closed-form θ⁽²⁾ for N identical unit spheres firing synchronously."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(positions)
    lam = alpha + beta
    gh = HelmholtzGreens(lam, R0)
    acc = 0.0
    for i in range(n):
        acc += gh.regular_part(positions[i], positions[i])
        for j in range(n):
            if j != i:
                acc += gh(positions[i], positions[j])
    return -(beta / alpha) * (math.sqrt(lam) - (4.0 * math.pi / n) * acc)


def theta2_independent_pair(x1, x2, alpha, beta, R0):
    """Closed-form θ⁽²⁾ for two unit spheres firing independently, equal rates."""
    lam = alpha + beta
    gh = HelmholtzGreens(lam, R0)
    reg = gh.regular_part(x1, x1) + gh.regular_part(x2, x2)
    return (beta / alpha) * (2.0 * math.pi * reg - math.sqrt(lam))


def theta2_single_centered(alpha, beta, R0):
    """Closed-form θ⁽²⁾ for one unit sphere at the center."""
    lam = alpha + beta
    gh = HelmholtzGreens(lam, R0)
    origin = np.zeros(3)
    return -(beta / alpha) * (math.sqrt(lam) - 4.0 * math.pi * gh.regular_part(origin, origin))


def sync_indep_gap(x1, x2, alpha, beta, R0):
    """θ⁽²⁾ for synchronous vs independent firing of two unit spheres.

    Returns (theta2_sync, theta2_indep, gap) where the gap equals
    (β/α)·4π·G_H(x₁, x₂; α+β) and is strictly positive: synchronized
    varicosities transmit more than independent ones at equal marginals.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    t_sync = theta2_synchronous_spheres([x1, x2], alpha, beta, R0)
    t_ind = theta2_independent_pair(x1, x2, alpha, beta, R0)
    lam = alpha + beta
    gap = (beta / alpha) * 4.0 * math.pi * HelmholtzGreens(lam, R0)(x1, x2)
    return t_sync, t_ind, gap


def synchronous_expansion(positions, alpha, beta, R0):
    """Expansion for identical unit spheres with synchronous firing."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    spec = build_jump_spec(FiringModel.synchronous(alpha, beta), N=len(positions))
    config = VaricosityConfig.from_spec(positions, spec)
    return expansion(config, spec, R0)
