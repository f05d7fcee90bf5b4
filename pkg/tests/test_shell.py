import math

import numpy as np
import pytest

from volt.shell import (
    ShellParams,
    collocation_shell_mean,
    exact_shell_mean,
    shell_taylor,
)


class TestExactShellMean:
    def test_matches_collocation_oracle(self):
        p = ShellParams(alpha=1.0, beta=1.0, eps=0.1, R0=1.0)
        assert exact_shell_mean(p) == pytest.approx(
            collocation_shell_mean(p), rel=1e-9
        )

    def test_collocation_grid(self):
        # 5x5 grid over (eps, alpha+beta) at fixed beta/alpha ratio
        for eps in [0.02, 0.05, 0.1, 0.2, 0.4]:
            for lam in [0.3, 1.0, 2.5, 6.0, 12.0]:
                p = ShellParams(alpha=lam / 3, beta=2 * lam / 3, eps=eps, R0=1.0)
                assert exact_shell_mean(p) == pytest.approx(
                    collocation_shell_mean(p), rel=5e-9
                )

    def test_divergence_rate_near_full_hole(self):
        # As the hole fills the domain the mean blows up like 1/(R0 - eps);
        # the rescaled values should settle toward a finite limit.
        epses = [0.95, 0.99, 0.999]
        vals = [exact_shell_mean(ShellParams(1.0, 1.0, e, 1.0)) for e in epses]
        assert all(math.isfinite(v) and v > 0 for v in vals)
        scaled = [v * (1.0 - e) for v, e in zip(vals, epses)]
        assert abs(scaled[2] - scaled[1]) < abs(scaled[1] - scaled[0])

    def test_leading_scale_in_beta(self):
        # small-hole leading behavior is (beta/alpha) * eps
        base = exact_shell_mean(ShellParams(1.0, 1.0, 1e-4, 1.0))
        doubled = exact_shell_mean(ShellParams(1.0, 2.0, 1e-4, 1.0))
        assert doubled / base == pytest.approx(2.0, rel=1e-3)

    def test_large_decay_rate_no_overflow(self):
        p = ShellParams(alpha=500.0, beta=500.0, eps=0.05, R0=2.0)
        assert math.isfinite(exact_shell_mean(p))

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            ShellParams(1.0, 1.0, 1.2, 1.0)
        with pytest.raises(ValueError):
            ShellParams(-1.0, 1.0, 0.1, 1.0)


class TestShellTaylor:
    def test_first_coefficient(self):
        p = ShellParams(alpha=0.7, beta=1.9, eps=0.1, R0=1.3)
        c1, _ = shell_taylor(p)
        assert c1 == pytest.approx(1.9 / 0.7, rel=1e-15)

    def test_residual_is_third_order(self):
        p0 = dict(alpha=1.0, beta=1.0, R0=1.0)
        eps = np.array([0.02, 0.04, 0.08, 0.16])
        resid = []
        for e in eps:
            p = ShellParams(eps=e, **p0)
            c1, c2 = shell_taylor(p)
            resid.append(abs(exact_shell_mean(p) - (c1 * e + c2 * e * e)))
        slope = np.polyfit(np.log(eps), np.log(resid), 1)[0]
        assert slope >= 2.9

    def test_second_coefficient_sign(self):
        # tanh term dominates at R0 sqrt(alpha+beta) > 1
        _, c2 = shell_taylor(ShellParams(1.0, 1.0, 0.1, 1.0))
        assert c2 < 0
