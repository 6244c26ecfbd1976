import numpy as np
import pytest

from echolab import (CAT_SAWTOOTH, SAWTOOTH_POLY, DecaySeries,
                     ExperimentConfig, InsufficientWindow, NonpositiveValues,
                     fit_rate, run_experiment, two_segment_fit)
from echolab.experiments import auto_window, best_single_packet_window


def _synthetic(rate=0.5, t_max=12, n_dim=0):
    t = np.arange(t_max + 1)
    m = np.exp(-rate * t)
    meta = {"N": n_dim} if n_dim else {}
    return DecaySeries(t=t, columns={"M_mean": m}, meta=meta)


def test_fit_rate_synthetic_exact():
    fit = fit_rate(_synthetic(0.5), "M_mean", (1, 10))
    assert fit.rate == pytest.approx(0.5, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_insufficient_window():
    with pytest.raises(InsufficientWindow):
        fit_rate(_synthetic(0.5), "M_mean", (3, 4))


def test_fit_rate_nonpositive_values():
    s = _synthetic(0.5)
    s.columns["M_mean"] = s.columns["M_mean"] - 0.5
    with pytest.raises(NonpositiveValues):
        fit_rate(s, "M_mean", (1, 10))


def test_fit_rate_respects_saturation_guard():
    # plateau at 1e-3 from t = 8 with N chosen so 3/N = 2e-3
    t = np.arange(13)
    m = np.maximum(np.exp(-0.9 * t), 1e-3)
    s = DecaySeries(t=t, columns={"M_mean": m}, meta={"N": 1500})
    fit = fit_rate(s, "M_mean", (2, 12))
    assert fit.t_hi <= 7
    assert fit.rate == pytest.approx(0.9, abs=1e-6)
    lo, hi = auto_window(s)
    assert hi <= 6


def test_two_segment_fit_recovers_break():
    t = np.arange(15)
    ln = np.where(t <= 6, -1.9 * t, -1.9 * 6 - 0.95 * (t - 6))
    s = DecaySeries(t=t, columns={"M_mean": np.exp(ln)}, meta={})
    seg = two_segment_fit(s, onset_level=1.1)
    assert seg.pre.rate == pytest.approx(1.9, abs=1e-6)
    assert seg.post.rate == pytest.approx(0.95, abs=1e-6)
    assert seg.crossover == pytest.approx(6.0, abs=1e-6)


def test_best_single_packet_window():
    t = np.arange(13)
    ln = np.where(t <= 4, -0.3 * t, -0.3 * 4 - 1.9 * (t - 4))
    s = DecaySeries(t=t, columns={"M_single": np.exp(ln)}, meta={})
    win = best_single_packet_window(s, lam=0.9624)
    assert win is not None
    assert win.t_lo >= 4
    assert win.rate == pytest.approx(1.9, abs=1e-6)


def test_run_experiment_zero_perturbation_all_ones():
    cfg = ExperimentConfig(family=CAT_SAWTOOTH, K=1.0, eta=0.987, N=1024,
                           sigma=0.0, n_packets=5, t_max=10, curves=("M",),
                           seed=3)
    with pytest.warns(UserWarning):  # sigma < 10 advisory
        series = run_experiment(cfg)
    assert np.all(np.abs(series.columns["M_mean"] - 1.0) < 1e-10)


def test_csv_format_and_determinism(tmp_path):
    cfg = ExperimentConfig(family=SAWTOOTH_POLY, poly_i=2, N=1024, sigma=15.0,
                           n_packets=8, t_max=6, mc_samples=20_000,
                           lambda1_ensemble=5000, cl_centers=4,
                           cl_samples=400, seed=11,
                           curves=("M", "I_s", "I_Lambda", "M_cl"))
    a = run_experiment(cfg).to_csv(str(tmp_path / "a.csv"))
    b = run_experiment(cfg).to_csv(str(tmp_path / "b.csv"))
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = a.splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header == "t,M_mean,M_stderr,I_s,I_Lambda,M_cl"
    assert any(ln.startswith("# epsilon =") for ln in lines)
    assert any(ln.startswith("# N = 1024") for ln in lines)
    # full-precision scientific notation
    row0 = [ln for ln in lines if not ln.startswith("#")][1]
    assert "e+00" in row0 or "e-" in row0


def test_csv_round_trip(tmp_path):
    cfg = ExperimentConfig(family=SAWTOOTH_POLY, poly_i=2, N=1024, sigma=15.0,
                           n_packets=4, t_max=5, curves=("M",), seed=1,
                           out=str(tmp_path / "run.csv"))
    series = run_experiment(cfg)
    back = DecaySeries.from_csv(str(tmp_path / "run.csv"))
    assert np.array_equal(back.t, series.t)
    assert np.allclose(back.columns["M_mean"], series.columns["M_mean"],
                       rtol=0, atol=0)
    assert np.isnan(back.columns["I_s"]).all()  # not computed -> nan


def test_csv_anchoring_of_predictors(tmp_path):
    t = np.arange(8)
    m = np.exp(-0.5 * t)
    i_s = 7.0 * np.exp(-0.5 * t)  # raw predictor off by a constant
    s = DecaySeries(t=t, columns={"M_mean": m, "I_s": i_s},
                    meta={"anchor_t": 3})
    text = s.to_csv()
    data = [ln for ln in text.splitlines() if not ln.startswith("#")]
    row3 = data[1 + 3].split(",")
    assert float(row3[3]) == pytest.approx(float(row3[1]), rel=1e-12)


def test_run_experiment_flushes_partial_on_failure(tmp_path):
    # t_max too small for the I_Lambda window is fine; force failure via a
    # packet width below the grid resolution instead
    cfg = ExperimentConfig(family=SAWTOOTH_POLY, poly_i=2, N=256, sigma=12.0,
                           xi_rule=1e-5, n_packets=3, t_max=4,
                           curves=("M",), seed=2,
                           out=str(tmp_path / "part.csv"))
    with pytest.raises(Exception):
        run_experiment(cfg)
    text = (tmp_path / "part.csv").read_text()
    assert "status_M = failed" in text


def test_stderr_consistent_with_bootstrap():
    from echolab.quantum import HilbertSpec, average_fidelity
    from echolab.maps import MapSpec
    hs = HilbertSpec(1024)
    spec = MapSpec(family=CAT_SAWTOOTH, K=1.0, eta=0.85,
                   epsilon=12.0 * hs.hbar)
    mean, stderr, allm = average_fidelity(hs, spec, float(np.sqrt(hs.hbar)),
                                          100, 8, rng_seed=5)
    rng = np.random.default_rng(0)
    boots = np.stack([allm[:, rng.integers(0, 100, 100)].mean(axis=1)
                      for _ in range(200)])
    bstd = boots.std(axis=0, ddof=1)
    for t in range(1, 9):
        if mean[t] < 10 / hs.N:
            continue
        assert 0.5 * bstd[t] <= stderr[t] <= 2.0 * bstd[t]
