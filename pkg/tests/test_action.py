import numpy as np
import pytest

from echolab import (CAT_SAWTOOTH, SAWTOOTH_POLY, MapSpec, action_difference,
                     action_slope, action_slope_at_center,
                     find_stationary_points)
from echolab.action import (action_profile, potential, potential_slope,
                            trajectory_sums)
from echolab.maps import TWO_PI, step_many
from echolab.quantum import PacketSpec

CAT = MapSpec(family=CAT_SAWTOOTH, K=1.0, eta=0.987, epsilon=0.01)
POLY2 = MapSpec(family=SAWTOOTH_POLY, poly_i=2, K=1.0, epsilon=0.05)
POLY3 = MapSpec(family=SAWTOOTH_POLY, poly_i=3, K=1.0, epsilon=0.05)
LAM = np.log((3 + np.sqrt(5)) / 2)


def test_zero_time_and_single_kick():
    assert action_difference(CAT, 1.0, 2.0, 0) == 0.0
    for spec in (CAT, POLY2, POLY3):
        r0, p0 = 2.31, 5.17
        assert action_difference(spec, r0, p0, 1) == pytest.approx(
            spec.epsilon * float(potential(spec, r0)), rel=1e-14)


def test_potential_force_consistency():
    # -eps*V'(r) must equal the first-order extra kick force of the
    # perturbed branch at every r
    r = np.linspace(0.01, TWO_PI - 0.01, 257)
    for spec in (CAT, POLY2, POLY3):
        extra = spec.kick_force(r, True) - spec.kick_force(r, False)
        assert np.allclose(extra, -spec.epsilon * potential_slope(spec, r),
                           rtol=1e-11, atol=1e-13)


def test_slope_trivial_times():
    assert action_slope(CAT, 1.0, 2.0, 0) == 0.0
    assert action_slope(CAT, 1.0, 2.0, 1) == 0.0


def test_slope_two_steps_is_potential_slope_at_r1():
    # dr_1/dp_0 = 1, so the t = 2 slope is V'(r_1)
    for spec in (CAT, POLY2, POLY3):
        r0, p0 = 0.83, 4.2
        r1, _ = step_many(np.array([r0]), np.array([p0]), spec, False)
        expect = float(potential_slope(spec, r1[0]))
        assert action_slope(spec, r0, p0, 2) == pytest.approx(expect, rel=1e-12)


def test_slope_matches_finite_difference():
    # centered difference of dS/eps with h = 1e-7, relative error < 1e-4
    rng = np.random.default_rng(11)
    h = 1e-7
    for spec in (CAT, POLY2, POLY3):
        checked = 0
        while checked < 12:
            r0 = rng.uniform(0, TWO_PI)
            p0 = rng.uniform(0, TWO_PI)
            t = int(rng.integers(2, 11))
            # stay away from the sawtooth kick discontinuity preimages
            rs = np.array([r0])
            ps = np.array([p0])
            clean = True
            for _ in range(t):
                rs, ps = step_many(rs, ps, spec, False)
                if min(rs[0], TWO_PI - rs[0]) < 1e-4:
                    clean = False
                    break
            if not clean:
                continue
            ds_p = action_difference(spec, r0, p0 + h, t) / spec.epsilon
            ds_m = action_difference(spec, r0, p0 - h, t) / spec.epsilon
            fd = (ds_p - ds_m) / (2 * h)
            k = action_slope(spec, r0, p0, t)
            if abs(k) > 1e-6:
                assert fd == pytest.approx(k, rel=1e-4)
                checked += 1


def test_action_variance_grows_linearly():
    # sampled variance of dS over uniform initial conditions vs t
    rng = np.random.default_rng(5)
    n = 20_000
    r0 = rng.uniform(0, TWO_PI, n)
    p0 = rng.uniform(0, TWO_PI, n)
    spec = CAT
    ts = np.arange(5, 51, 5)
    var = []
    for t in ts:
        ds, _ = trajectory_sums(spec, r0, p0, int(t))
        var.append(np.var(spec.epsilon * ds))
    coef = np.polyfit(ts, var, 1)
    fit = np.polyval(coef, ts)
    ss_res = np.sum((np.array(var) - fit) ** 2)
    ss_tot = np.sum((np.array(var) - np.mean(var)) ** 2)
    assert 1.0 - ss_res / ss_tot > 0.95


def test_mean_abs_slope_grows_at_lyapunov_rate():
    rng = np.random.default_rng(7)
    n = 40_000
    r0 = rng.uniform(0, TWO_PI, n)
    p0 = rng.uniform(0, TWO_PI, n)
    ts = np.arange(3, 13)
    means = []
    for t in ts:
        _, kp = trajectory_sums(POLY2, r0, p0, int(t))
        means.append(np.mean(np.abs(kp)))
    slope = np.polyfit(ts, np.log(means), 1)[0]
    assert slope == pytest.approx(LAM, rel=0.05)


def test_slope_at_center_matches_finite_difference():
    packet = PacketSpec(r_center=np.pi, p_center=0.0, xi=0.05)
    assert action_slope_at_center(POLY2, packet, 1) == 0.0
    packet = PacketSpec(r_center=2.13, p_center=1.71, xi=0.05)
    t, h = 5, 1e-6
    fd = (action_difference(POLY2, 2.13, 1.71 + h, t)
          - action_difference(POLY2, 2.13, 1.71 - h, t)) / (2 * h * POLY2.epsilon)
    assert action_slope_at_center(POLY2, packet, t) == pytest.approx(fd, rel=1e-6)


def test_slope_at_center_exponential_growth():
    packet = PacketSpec(r_center=1.9, p_center=4.3, xi=0.05)
    vals = [abs(action_slope_at_center(POLY2, packet, t)) for t in range(4, 12)]
    slope = np.polyfit(np.arange(4, 12), np.log(vals), 1)[0]
    assert slope == pytest.approx(LAM, rel=0.05)


# ---------------------------------------------------------------------------
# stationary points
# ---------------------------------------------------------------------------

def test_no_stationary_points_for_cubic_family():
    rng = np.random.default_rng(3)
    for _ in range(25):
        r0 = rng.uniform(0, TWO_PI)
        t = int(rng.integers(2, 13))
        assert find_stationary_points(POLY3, r0, t) == []


def test_degenerate_time_gives_empty():
    assert find_stationary_points(POLY2, 1.0, 0) == []
    assert find_stationary_points(POLY2, 1.0, 1) == []


def _roots_with_escalation(spec, r0, t, grid0=2048):
    from echolab.action import UnresolvedOscillations
    n = grid0
    while True:
        try:
            return find_stationary_points(spec, r0, t, grid_size=n)
        except UnresolvedOscillations:
            n *= 2
            if n > 1 << 20:
                raise


def test_root_quality_and_curvature_consistency():
    for spec, r0, t in ((POLY2, 2.7, 5), (CAT, 1.2, 5)):
        roots = _roots_with_escalation(spec, r0, t)
        assert roots
        grid = TWO_PI * np.arange(8192) / 8192
        _, kp = action_profile(spec, r0, grid, t)
        kp_max = np.max(np.abs(kp))
        spacing = TWO_PI / max(len(roots), 1)
        for sp in roots:
            assert abs(action_slope(spec, r0, sp.p0_alpha, t)) < 1e-8 * kp_max
            if sp.flat:
                continue
            # Richardson check: three-point second difference of dS at two
            # step sizes, both against the stored curvature
            for h in (2e-5 * spacing, 1e-5 * spacing):
                d2 = (action_difference(spec, r0, sp.p0_alpha + h, t)
                      - 2 * action_difference(spec, r0, sp.p0_alpha, t)
                      + action_difference(spec, r0, sp.p0_alpha - h, t)) / h ** 2
                assert d2 == pytest.approx(sp.d2s, rel=0.01)


def test_root_count_grows_exponentially_for_quadratic_family():
    counts = []
    ts = np.arange(4, 9)
    for t in ts:
        n = [len(_roots_with_escalation(POLY2, r0, int(t), grid0=4096))
             for r0 in (0.9, 2.6, 4.8)]
        counts.append(np.mean(n))
    slope = np.polyfit(ts, np.log(counts), 1)[0]
    assert slope == pytest.approx(LAM, rel=0.20)


def test_zero_epsilon_kills_action():
    spec = POLY2.with_epsilon(0.0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        r0, p0 = rng.uniform(0, TWO_PI, 2)
        t = int(rng.integers(1, 9))
        assert action_difference(spec, r0, p0, t) == 0.0
        # the dimensionful slope d(dS)/dp0 = eps * action_slope vanishes too
        assert spec.epsilon * action_slope(spec, r0, p0, t) == 0.0
