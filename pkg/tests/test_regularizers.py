import numpy as np
import pytest

from localdeform import errors
from localdeform.regularizers import (l21_prox, l21_prox_batch, l21_value,
                                      scl1_prox, scl1_prox_batch, scl1_value)


def scl1_scalar(t, s):
    return t - t * t / (2 * s) if t < s else 0.5 * s


def scan_prox_objective(r, lam, rho, s, n=2001, loss="scl1"):
    """Independent oracle: dense scan of the radial shrinkage objective.

    Returns (best t, best objective) over t in [0, max(r, s) * 1.05].
    """
    ts = np.linspace(0.0, max(r, s) * 1.05, n)
    if loss == "scl1":
        loss_vals = np.where(ts < s, ts - ts * ts / (2 * s), 0.5 * s)
    else:
        loss_vals = ts
    obj = lam * loss_vals + 0.5 * rho * (ts - r) ** 2
    k = int(np.argmin(obj))
    return ts[k], obj[k]


class TestScl1Value:
    def test_zero(self):
        assert scl1_value(np.zeros(3), 1.0) == 0.0

    def test_at_clamp(self):
        assert scl1_value(np.array([1.0, 0.0]), 1.0) == pytest.approx(0.5)

    def test_below_clamp(self):
        assert scl1_value(np.array([0.5]), 1.0) == pytest.approx(0.375)

    def test_clamped_branch(self):
        assert scl1_value(np.array([3.0]), 1.0) == pytest.approx(0.5)

    def test_monotone_and_bounded(self):
        s = 0.7
        rs = np.linspace(0, 3 * s, 400)
        vals = [scl1_scalar(r, s) for r in rs]
        assert np.all(np.diff(vals) >= -1e-15)
        assert max(vals) <= 0.5 * s + 1e-15

    def test_continuity_at_clamp(self):
        s = 1.3
        below = scl1_scalar(s - 1e-9, s)
        assert abs(below - 0.5 * s) < 1e-8

    def test_nonpositive_threshold(self):
        with pytest.raises(errors.NonpositiveThresholdError):
            scl1_value(np.ones(2), 0.0)


class TestScl1Prox:
    def test_full_shrink(self):
        # DERIVED: scan oracle puts the minimum at t = 0
        x = np.array([0.4, 0.0])
        t_star, _ = scan_prox_objective(0.4, 1.0, 2.0, 1.0)
        assert t_star == pytest.approx(0.0, abs=1e-3)
        assert np.allclose(scl1_prox(x, 1.0, 2.0, 1.0), 0.0)

    def test_partial_shrink(self):
        # DERIVED: scan oracle confirms t* = 0.8 for r = 0.9
        x = np.array([0.9, 0.0])
        out = scl1_prox(x, 1.0, 2.0, 1.0)
        t_star, obj_star = scan_prox_objective(0.9, 1.0, 2.0, 1.0)
        assert t_star == pytest.approx(0.8, abs=1e-3)
        assert np.allclose(out, (0.8 / 0.9) * x, atol=1e-12)

    def test_identity_branch(self):
        x = np.array([1.5, 0.0])
        out = scl1_prox(x, 1.0, 2.0, 1.0)
        t_star, _ = scan_prox_objective(1.5, 1.0, 2.0, 1.0)
        assert t_star == pytest.approx(1.5, abs=1e-3)
        assert np.array_equal(out, x)

    def test_zero_input(self):
        assert np.all(scl1_prox(np.zeros(2), 1.0, 2.0, 1.0) == 0.0)

    def test_safeguard(self):
        with pytest.raises(errors.SafeguardViolatedError):
            scl1_prox(np.ones(2), 1.0, 0.9, 1.0)

    def test_zero_lambda_is_identity(self):
        x = np.array([0.3, -0.2])
        assert np.allclose(scl1_prox(x, 0.0, 1.0, 1.0), x)

    def test_prox_beats_scan_random(self):
        # objective at the prox output is never worse than the dense scan
        rng = np.random.default_rng(17)
        for _ in range(300):
            d = rng.integers(1, 4)
            x = rng.standard_normal(d) * rng.uniform(0.1, 3.0)
            s = rng.uniform(0.05, 2.0)
            lam = rng.uniform(0.0, 2.0)
            rho = lam / s * rng.uniform(1.05, 4.0) + 1e-6
            out = scl1_prox(x, lam, rho, s)
            r = np.linalg.norm(x)
            t_out = np.linalg.norm(out)
            _, best = scan_prox_objective(r, lam, rho, s)
            mine = lam * scl1_scalar(t_out, s) + 0.5 * rho * (t_out - r) ** 2
            assert mine <= best + 1e-9

    def test_radial_monotonicity(self):
        lam, rho, s = 1.0, 2.0, 1.0
        rs = np.linspace(0, 2.5, 500)
        outs = [np.linalg.norm(scl1_prox(np.array([r, 0.0]), lam, rho, s)) for r in rs]
        assert np.all(np.diff(outs) >= -1e-12)

    def test_limit_to_l21(self):
        # clamp radius to infinity recovers block soft thresholding
        rng = np.random.default_rng(23)
        for _ in range(50):
            x = rng.standard_normal(3)
            lam, rho = rng.uniform(0.1, 2.0), rng.uniform(0.5, 3.0)
            a = scl1_prox(x, lam, rho, 1e6)
            b = l21_prox(x, lam, rho)
            assert np.abs(a - b).max() < 1e-4

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(29)
        x = rng.standard_normal((40, 2))
        lam = rng.uniform(0, 0.5, 40)
        rho, s = 2.0, 0.4
        batch = scl1_prox_batch(x, lam, rho, s)
        for i in range(40):
            single = scl1_prox(x[i], lam[i], rho, s)
            assert np.allclose(batch[i], single, atol=1e-14)


class TestL21:
    def test_value(self):
        assert l21_value(np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_below_threshold(self):
        assert np.all(l21_prox(np.array([0.4, 0.0]), 1.0, 2.0) == 0.0)

    def test_scale(self):
        # DERIVED: scan oracle confirms t* = 0.5 at r = 1 for lam=1, rho=2
        x = np.array([1.0, 0.0])
        t_star, _ = scan_prox_objective(1.0, 1.0, 2.0, 1.0, loss="l21")
        assert t_star == pytest.approx(0.5, abs=1e-3)
        assert np.allclose(l21_prox(x, 1.0, 2.0), 0.5 * x)

    def test_zero(self):
        assert np.all(l21_prox(np.zeros(3), 1.0, 2.0) == 0.0)

    def test_prox_beats_scan_random(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            x = rng.standard_normal(2) * rng.uniform(0.1, 3.0)
            lam, rho = rng.uniform(0, 2.0), rng.uniform(0.2, 4.0)
            out = l21_prox(x, lam, rho)
            r, t_out = np.linalg.norm(x), np.linalg.norm(out)
            _, best = scan_prox_objective(r, lam, rho, max(r, 1.0), loss="l21")
            mine = lam * t_out + 0.5 * rho * (t_out - r) ** 2
            assert mine <= best + 1e-9

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(37)
        x = rng.standard_normal((30, 3))
        lam = rng.uniform(0, 1.0, 30)
        batch = l21_prox_batch(x, lam, 1.7)
        for i in range(30):
            assert np.allclose(batch[i], l21_prox(x[i], lam[i], 1.7), atol=1e-14)
