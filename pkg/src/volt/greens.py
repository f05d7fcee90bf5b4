"""Special functions and Green's functions on the ball.

Half-integer modified Bessel functions are evaluated through closed forms of
the spherical Bessel functions plus three-term order recurrences; everything
is carried internally as log-magnitudes so that the modified-Helmholtz series
stays finite at large sqrt(lambda)*R0 and high truncation order.

The two Green's functions supplied here are the reflecting (Neumann)
Green's function of the Laplacian on a ball, in closed form, and the
reflecting Green's function of Delta - lambda, as a Legendre-Bessel series.
"""

import math

import numpy as np

SERIES_CAP = 600
SERIES_RTOL = 1e-12


class SeriesDivergenceError(RuntimeError):
    """Series truncation cap hit before reaching the requested tolerance."""


# ---------------------------------------------------------------------------
# half-integer modified Bessel functions
# ---------------------------------------------------------------------------

def _log_scaled_i_half(n_max, z):
    """log of I_{n+1/2}(z) * exp(-z) for n = 0..n_max.

    Downward ratio recurrence (stable for all orders): with
    rho_n = I_{n+3/2}/I_{n+1/2}, the order recurrence gives
    rho_{n-1} = 1 / (rho_n + (2n+1)/z).
    """
    if z <= 0:
        raise ValueError("argument must be positive")
    n_top = n_max + 30 + int(z)
    rho = z / (2 * n_top + 3)  # asymptotic ratio seed
    ratios = np.empty(n_max + 1)
    for n in range(n_top, 0, -1):
        rho = 1.0 / (rho + (2 * n + 1) / z)  # rho_{n-1} from rho_n
        if n - 1 <= n_max:
            ratios[n - 1] = rho
    # ratios[n] = I_{n+3/2}/I_{n+1/2}; anchor at the closed form for n=0.
    # I_{1/2}(z) e^{-z} = sqrt(2/(pi z)) * (1 - e^{-2z}) / 2
    log_i = np.empty(n_max + 1)
    log_i[0] = 0.5 * math.log(2.0 / (math.pi * z)) + math.log1p(-math.exp(-2 * z)) - math.log(2.0)
    for n in range(1, n_max + 1):
        log_i[n] = log_i[n - 1] + math.log(ratios[n - 1])
    return log_i


def _log_scaled_k_half(n_max, z):
    """log of K_{n+1/2}(z) * exp(z) for n = 0..n_max (upward recurrence)."""
    if z <= 0:
        raise ValueError("argument must be positive")
    log_k = np.empty(max(n_max + 1, 2))
    # K_{1/2}(z) e^{z} = sqrt(pi/(2z)); K_{3/2} = K_{1/2} (1 + 1/z)
    log_k[0] = 0.5 * math.log(math.pi / (2 * z))
    log_k[1] = log_k[0] + math.log1p(1.0 / z)
    for n in range(2, n_max + 1):
        # K_{n+1/2} = K_{n-3/2} + (2n-1)/z * K_{n-1/2}
        log_k[n] = np.logaddexp(log_k[n - 2], math.log((2 * n - 1) / z) + log_k[n - 1])
    return log_k[: n_max + 1]


def bessel_half(kind, n, z):
    """I_{n+1/2}(z) or K_{n+1/2}(z) for integer n >= 0, z > 0."""
    if z <= 0:
        raise ValueError("argument must be positive")
    if n < 0:
        raise ValueError("order index must be nonnegative")
    if kind == "I":
        return math.exp(_log_scaled_i_half(n, z)[n] + z)
    if kind == "K":
        return math.exp(_log_scaled_k_half(n, z)[n] - z)
    raise ValueError("kind must be 'I' or 'K'")


def legendre(n, t):
    """Legendre polynomial p_n(t) by the Bonnet recurrence, |t| <= 1."""
    return legendre_all(n, t)[n]


def legendre_all(n_max, t):
    """p_0(t)..p_{n_max}(t)."""
    if abs(t) > 1 + 1e-14:
        raise ValueError(f"Legendre argument {t} outside [-1, 1]")
    t = min(1.0, max(-1.0, t))
    p = np.empty(n_max + 1)
    p[0] = 1.0
    if n_max >= 1:
        p[1] = t
    for n in range(1, n_max):
        p[n + 1] = ((2 * n + 1) * t * p[n] - n * p[n - 1]) / (n + 1)
    return p


# ---------------------------------------------------------------------------
# modified Helmholtz Green's function of the ball (series)
# ---------------------------------------------------------------------------

class HelmholtzGreens:
    """Reflecting Green's function of Delta - lambda on the ball |x| < R0.

    The regular part is a Legendre-Bessel series; its coefficients a_n are
    cached in log form together with the exponent shift that keeps each term
    inside double range.
    """

    def __init__(self, lam, R0, n_max=SERIES_CAP, rtol=SERIES_RTOL):
        if lam <= 0 or R0 <= 0:
            raise ValueError("decay rate and radius must be positive")
        self.lam = float(lam)
        self.R0 = float(R0)
        self.n_max = int(n_max)
        self.rtol = float(rtol)
        b = math.sqrt(lam) * R0
        self._b = b
        log_i = _log_scaled_i_half(self.n_max + 1, b)
        log_k = _log_scaled_k_half(self.n_max + 1, b)
        ns = np.arange(self.n_max + 1)
        # a_n = (2n+1) (b K_{n+3/2} - n K_{n+1/2}) / (b I_{n+3/2} + n I_{n+1/2});
        # stored as log(a_n e^{2b}), the e^{-2b} re-enters via the exponent shift.
        # numerator is b*K_{n+3/2} - n*K_{n+1/2}: K grows fast enough with
        # order that the first term always dominates, so log1p is safe.
        lead = math.log(b) + log_k[1:]
        rest = np.where(ns > 0, np.log(np.maximum(ns, 1.0)) + log_k[:-1], -np.inf)
        num = lead + np.log1p(-np.exp(rest - lead))
        den = np.logaddexp(math.log(b) + log_i[1:],
                           np.where(ns > 0, np.log(np.maximum(ns, 1.0)) + log_i[:-1], -np.inf))
        self._log_a_scaled = np.log(2 * ns + 1.0) + num - den

    def _check_inside(self, x):
        r = float(np.linalg.norm(x))
        if r >= self.R0:
            raise ValueError(f"point at radius {r} not inside ball of radius {self.R0}")
        return r

    def regular_part(self, x, x0):
        """R_H(x, x0): the cos(gamma) Legendre-Bessel series."""
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        r = self._check_inside(x)
        r0 = self._check_inside(x0)
        sl = math.sqrt(self.lam)
        if r == 0.0 or r0 == 0.0:
            # n = 0 term only survives; take the analytic small-r behavior of
            # the n = 0 product, which is finite as r -> 0.
            return regular_part_center(self.lam, self.R0) if (r == 0.0 and r0 == 0.0) \
                else self._regular_axis(max(r, r0))
        cosg = float(np.dot(x, x0) / (r * r0))
        cosg = min(1.0, max(-1.0, cosg))
        log_ir = _log_scaled_i_half(self.n_max + 1, sl * r)
        log_ir0 = _log_scaled_i_half(self.n_max + 1, sl * r0)
        pn = legendre_all(self.n_max, cosg)
        shift = sl * (r + r0) - 2 * self._b - 0.5 * math.log(r * r0)
        total = 0.0
        small_run = 0
        for n in range(self.n_max + 1):
            mag = math.exp(self._log_a_scaled[n] + log_ir[n] + log_ir0[n] + shift)
            term = pn[n] * mag
            total += term
            if mag <= self.rtol * abs(total) + 1e-300:
                small_run += 1
                if small_run >= 3:
                    return total / (4 * math.pi)
            else:
                small_run = 0
        raise SeriesDivergenceError(
            f"regular-part series did not converge within {self.n_max} terms"
        )

    def _regular_axis(self, r):
        """R_H(x, 0) for |x| = r: only the n = 0 term is nonzero."""
        sl = math.sqrt(self.lam)
        # lim_{r0->0} I_{1/2}(sl*r0)/sqrt(r0) = sqrt(2 sl/pi) * sqrt(...)
        # I_{1/2}(z) ~ sqrt(2/(pi z)) z for z -> 0, so I_{1/2}(sl r0)/sqrt(r0)
        # -> sl sqrt(2/(pi sl)) sqrt(r0)... the n=0 product over sqrt(r r0) is
        # a0/(4 pi) * I_{1/2}(sl r)/sqrt(r) * sqrt(2 sl / pi).
        log_ir = _log_scaled_i_half(0, sl * r)[0]
        mag = math.exp(self._log_a_scaled[0] - 2 * self._b + sl * r + log_ir) / math.sqrt(r)
        return mag * math.sqrt(2 * sl / math.pi) / (4 * math.pi)

    def __call__(self, x, x0):
        """G_H(x, x0) = free-space part + regular part."""
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        d = float(np.linalg.norm(x - x0))
        if d == 0.0:
            raise ValueError("G_H is singular at x = x0; use regular_part")
        sl = math.sqrt(self.lam)
        return math.exp(-sl * d) / (4 * math.pi * d) + self.regular_part(x, x0)


def helmholtz_greens(g: HelmholtzGreens, x, x0):
    return g(x, x0)


def regular_part(g: HelmholtzGreens, x, x0):
    return g.regular_part(x, x0)


def regular_part_center(lam, R0):
    """R_H(0, 0; lambda), closed form of the n = 0 series limit.

    Overflow-guarded by multiplying through with exp(-2 sqrt(lam) R0).
    """
    if lam <= 0 or R0 <= 0:
        raise ValueError("decay rate and radius must be positive")
    sl = math.sqrt(lam)
    b = sl * R0
    num = sl * (1.0 + b) * math.exp(-2 * b)
    den = 2 * math.pi * ((b + 1.0) * math.exp(-2 * b) + b - 1.0)
    return num / den


# ---------------------------------------------------------------------------
# Neumann Green's function of the Laplacian on the ball
# ---------------------------------------------------------------------------

class NeumannGreens:
    """Zero-mean reflecting Green's function of the Laplacian on |x| < R0.

    Closed form on the unit ball (image charge, line-of-charges log term,
    quadratic compensation for the 1/|U| source, zero-mean constant), scaled
    to radius R0 by G_R(x, xi) = G_1(x/R, xi/R) / R.
    """

    def __init__(self, R0):
        if R0 <= 0:
            raise ValueError("radius must be positive")
        self.R0 = float(R0)

    @staticmethod
    def _unit(x, xi):
        d = float(np.linalg.norm(x - xi))
        if d == 0.0:
            raise ValueError("Neumann Green's function is singular at x = xi")
        dot = float(np.dot(x, xi))
        rp = math.sqrt(max(np.dot(x, x) * np.dot(xi, xi) - 2 * dot + 1.0, 1e-300))
        return (
            1.0 / (4 * math.pi * d)
            + 1.0 / (4 * math.pi * rp)
            + math.log(2.0 / (1.0 - dot + rp)) / (4 * math.pi)
            + (float(np.dot(x, x)) + float(np.dot(xi, xi))) / (8 * math.pi)
            - 7.0 / (10 * math.pi)
        )

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float) / self.R0
        xi = np.asarray(xi, dtype=float) / self.R0
        return self._unit(x, xi) / self.R0

    def regular_coincident(self, x):
        """R(x, x): the regular part at coincidence."""
        x = np.asarray(x, dtype=float) / self.R0
        r2 = float(np.dot(x, x))
        if r2 >= 1.0:
            raise ValueError("point must be strictly inside the ball")
        one_m = 1.0 - r2
        val = (
            1.0 / (4 * math.pi * one_m)
            - math.log(one_m) / (4 * math.pi)
            + r2 / (4 * math.pi)
            - 7.0 / (10 * math.pi)
        )
        return val / self.R0


def neumann_greens(R0):
    return NeumannGreens(R0)
