"""Experiment driver: configuration, curve orchestration, fits, CSV output.

The decay-series CSV is the external exchange format: a ``#``-prefixed
preamble with the fully resolved configuration (no timestamps, so reruns
are byte-identical), a header row ``t,M_mean,M_stderr,I_s,I_Lambda,M_cl``
(plus ``M_single`` when present), and full-double-precision scientific
notation.  The I_s and I_Lambda columns are written anchored to M_mean at
the reference time given in the preamble; the in-memory series keeps the
raw values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .maps import (CAT_SAWTOOTH, SAWTOOTH_POLY, TWO_PI, ClassicalState,
                   MapSpec, classical_fidelity)
from .quantum import HilbertSpec, PacketSpec, average_fidelity, fidelity_series, resolve_xi
from . import semiclassics
from .semiclassics import SemiclassicalConfig


class InsufficientWindow(ValueError):
    """Fewer than 3 usable points in the fit window."""


class NonpositiveValues(ValueError):
    """Log-linear fit requested over non-positive values."""


BASE_COLUMNS = ("M_mean", "M_stderr", "I_s", "I_Lambda", "M_cl")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved description of one decay-curve run.

    The perturbation strength is derived as eps = sigma * hbar with
    hbar = 2 pi / N; all derived quantities end up in the CSV preamble.
    """

    family: str = CAT_SAWTOOTH
    K: float = 1.0
    eta: float = 0.0
    poly_i: int = 2
    N: int = 4096
    sigma: float = 100.0
    xi_rule: str | float = "sqrt-hbar"
    n_packets: int = 200
    t_max: int = 14
    mc_samples: int = 100_000
    drop_q: float = 0.02
    seed: int = 0
    out: str | None = None
    workers: int = 1
    curves: tuple[str, ...] = ("M", "I_s", "I_Lambda", "M_cl")
    cl_centers: int = 32
    cl_samples: int = 2000
    lambda1_ensemble: int = 200_000
    anchor_t: int = 3

    def hilbert(self) -> HilbertSpec:
        return HilbertSpec(self.N)

    def map_spec(self) -> MapSpec:
        return MapSpec(family=self.family, K=self.K, eta=self.eta,
                       epsilon=self.sigma * self.hilbert().hbar,
                       poly_i=self.poly_i)

    def xi(self) -> float:
        return resolve_xi(self.xi_rule, self.hilbert())

    def scl_config(self) -> SemiclassicalConfig:
        return SemiclassicalConfig(sigma=self.sigma, mc_samples=self.mc_samples,
                                   drop_fraction=self.drop_q)

    def resolved(self) -> dict:
        hs = self.hilbert()
        d = {
            "family": self.family, "K": self.K, "eta": self.eta,
            "poly_i": self.poly_i if self.family == SAWTOOTH_POLY else "",
            "N": self.N, "hbar": hs.hbar, "sigma": self.sigma,
            "epsilon": self.sigma * hs.hbar, "xi": self.xi(),
            "xi_rule": self.xi_rule, "n_packets": self.n_packets,
            "t_max": self.t_max, "mc_samples": self.mc_samples,
            "drop_q": self.drop_q, "seed": self.seed,
            "workers": self.workers, "curves": "+".join(self.curves),
            "cl_centers": self.cl_centers, "cl_samples": self.cl_samples,
            "lambda1_ensemble": self.lambda1_ensemble,
            "anchor_t": self.anchor_t,
        }
        return d


@dataclass
class DecaySeries:
    """Time-indexed decay curves; missing entries are nan.

    ``columns`` holds raw (unanchored) values; ``meta`` records the resolved
    configuration and any per-curve status notes.
    """

    t: np.ndarray
    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def anchored(self, name: str, t_ref: int | None = None) -> np.ndarray:
        """Column rescaled to match M_mean at the reference time.

        The predictors are defined only up to an overall constant; anchoring
        makes them overlayable with the exact fidelity.  Falls back to the
        raw column when M_mean or the reference value is unusable.
        """
        y = self.columns[name]
        if name in ("M_mean", "M_stderr", "M_cl", "M_single"):
            return y
        if t_ref is None:
            t_ref = int(self.meta.get("anchor_t", 3))
        m = self.columns.get("M_mean")
        if m is None or t_ref >= len(y) or not np.isfinite(y[t_ref]) \
                or not np.isfinite(m[t_ref]) or y[t_ref] <= 0:
            return y
        return y * (m[t_ref] / y[t_ref])

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path: str | None = None) -> str:
        cols = list(BASE_COLUMNS)
        if "M_single" in self.columns:
            cols.append("M_single")
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key} = {self.meta[key]}\n")
        buf.write("t," + ",".join(cols) + "\n")
        data = {c: self.columns.get(c, np.full(len(self.t), np.nan)) for c in cols}
        for c in ("I_s", "I_Lambda"):
            data[c] = self.anchored(c) if c in self.columns else data[c]
        for i, t in enumerate(self.t):
            row = ",".join(f"{data[c][i]:.17e}" for c in cols)
            buf.write(f"{int(t)},{row}\n")
        text = buf.getvalue()
        if path:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @staticmethod
    def from_csv(path: str) -> "DecaySeries":
        meta = {}
        rows = []
        header = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        k, v = line[1:].split("=", 1)
                        meta[k.strip()] = v.strip()
                    continue
                if header is None:
                    header = line.split(",")
                    continue
                rows.append([float(x) for x in line.split(",")])
        arr = np.asarray(rows)
        t = arr[:, 0].astype(int)
        columns = {name: arr[:, j + 1] for j, name in enumerate(header[1:])}
        return DecaySeries(t=t, columns=columns, meta=meta)


@dataclass(frozen=True)
class RateFit:
    """OLS decay rate of ln(value) vs t over [t_lo, t_hi]."""

    t_lo: int
    t_hi: int
    rate: float
    stderr: float
    r_squared: float


def _ols_rate(ts: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(ts, ys, 1)
    fit = slope * ts + intercept
    resid = ys - fit
    n = len(ts)
    sxx = np.sum((ts - ts.mean()) ** 2)
    se = np.sqrt(np.sum(resid ** 2) / max(n - 2, 1) / sxx)
    ss_tot = np.sum((ys - ys.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return -slope, se, r2


def fit_rate(series: DecaySeries, column: str,
             window: tuple[int, int]) -> RateFit:
    """Least squares on ln(value) vs t; the rate is the slope magnitude.

    When the series metadata carries the Hilbert dimension, points in the
    saturation plateau (M_mean < 3/N) are excluded from the window before
    fitting.
    """
    t_lo, t_hi = window
    y = series.columns[column]
    mask = (series.t >= t_lo) & (series.t <= t_hi) & np.isfinite(y)
    n_dim = int(float(series.meta.get("N", 0)) or 0)
    if n_dim and "M_mean" in series.columns:
        mask &= series.columns["M_mean"] >= 3.0 / n_dim
    ts = series.t[mask]
    if len(ts) < 3:
        raise InsufficientWindow(f"only {len(ts)} usable points in [{t_lo}, {t_hi}]")
    vals = y[mask]
    if np.any(vals <= 0.0):
        raise NonpositiveValues(f"column {column} has non-positive values in window")
    rate, se, r2 = _ols_rate(ts.astype(float), np.log(vals))
    return RateFit(t_lo=int(ts[0]), t_hi=int(ts[-1]), rate=float(rate),
                   stderr=float(se), r_squared=float(r2))


def auto_window(series: DecaySeries, column: str = "M_mean") -> tuple[int, int]:
    """Default fit window [2, t_sat - 2], t_sat = first t with M < 3/N."""
    n_dim = int(float(series.meta.get("N", 0)) or 0)
    y = series.columns[column]
    t_sat = int(series.t[-1]) + 1
    if n_dim:
        below = series.t[np.isfinite(y) & (y < 3.0 / n_dim)]
        if len(below):
            t_sat = int(below[0])
    return 2, max(t_sat - 2, 4)


@dataclass(frozen=True)
class TwoSegmentFit:
    pre: RateFit
    post: RateFit
    t_break: int
    crossover: float  # intersection of the two fitted lines


def two_segment_fit(series: DecaySeries, column: str = "M_mean",
                    onset_level: float = 0.2,
                    onset_rate: float | None = None) -> TwoSegmentFit:
    """Piecewise log-linear fit with a scanned breakpoint.

    Points start after the decay onset (first t with value < onset_level,
    or, when ``onset_rate`` is given, the first step whose forward log-slope
    exceeds it) and stop at the saturation guard.  The breakpoint minimizes
    the total squared residual; the crossover is where the two fitted lines
    intersect.
    """
    y = series.columns[column]
    n_dim = int(float(series.meta.get("N", 0)) or 0)
    guard = 3.0 / n_dim if n_dim else 0.0
    usable = np.isfinite(y) & (y > guard)
    start = None
    for i, t in enumerate(series.t):
        if not usable[i]:
            continue
        if onset_rate is not None:
            if i + 1 < len(y) and usable[i + 1] and \
                    np.log(y[i] / y[i + 1]) >= onset_rate:
                start = t
                break
        elif y[i] < onset_level:
            start = t
            break
    if start is None:
        raise InsufficientWindow("no decay onset found")
    mask = usable & (series.t >= start)
    ts = series.t[mask].astype(float)
    ys = np.log(y[mask])
    if len(ts) < 6:
        raise InsufficientWindow(f"{len(ts)} points past onset; need >= 6")
    best = None
    for j in range(2, len(ts) - 2):
        ca = np.polyfit(ts[:j + 1], ys[:j + 1], 1)
        cb = np.polyfit(ts[j:], ys[j:], 1)
        sse = (np.sum((np.polyval(ca, ts[:j + 1]) - ys[:j + 1]) ** 2)
               + np.sum((np.polyval(cb, ts[j:]) - ys[j:]) ** 2))
        if best is None or sse < best[0]:
            best = (sse, j, ca, cb)
    _, j, ca, cb = best
    pre_r, pre_se, pre_r2 = _ols_rate(ts[:j + 1], ys[:j + 1])
    post_r, post_se, post_r2 = _ols_rate(ts[j:], ys[j:])
    crossover = (cb[1] - ca[1]) / (ca[0] - cb[0]) if ca[0] != cb[0] else float(ts[j])
    return TwoSegmentFit(
        pre=RateFit(int(ts[0]), int(ts[j]), pre_r, pre_se, pre_r2),
        post=RateFit(int(ts[j]), int(ts[-1]), post_r, post_se, post_r2),
        t_break=int(ts[j]),
        crossover=float(crossover),
    )


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def _child_seeds(seed: int, n: int = 6) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def run_experiment(cfg: ExperimentConfig) -> DecaySeries:
    """Compute the requested decay curves under a single master seed.

    Deterministic for a fixed (config, seed, workers); the CSV (written when
    cfg.out is set) is byte-identical across reruns.  If a curve fails, its
    column is left nan, the error is noted in a status entry, the partial
    CSV is still flushed, and the error re-raised.
    """
    hs = cfg.hilbert()
    mspec = cfg.map_spec()
    xi = cfg.xi()
    scfg = cfg.scl_config()
    seeds = _child_seeds(cfg.seed)
    ts = np.arange(cfg.t_max + 1)
    columns: dict[str, np.ndarray] = {}
    meta = dict(cfg.resolved())
    failure = None

    def attempt(name, fn):
        nonlocal failure
        try:
            fn()
            meta[f"status_{name}"] = "ok"
        except Exception as exc:  # noqa: BLE001 - flushed with status, re-raised
            meta[f"status_{name}"] = f"failed: {type(exc).__name__}: {exc}"
            if failure is None:
                failure = exc

    if "M" in cfg.curves:
        def run_m():
            mean, stderr, _ = average_fidelity(hs, mspec, xi, cfg.n_packets,
                                               cfg.t_max, seeds[0], cfg.workers)
            columns["M_mean"] = mean
            columns["M_stderr"] = stderr
        attempt("M", run_m)
    if "M_single" in cfg.curves:
        def run_single():
            rng = np.random.default_rng(seeds[4])
            packet = PacketSpec(rng.uniform(0, TWO_PI), rng.uniform(0, TWO_PI), xi)
            columns["M_single"] = fidelity_series(hs, mspec, packet, cfg.t_max)
        attempt("M_single", run_single)
    if "I_s" in cfg.curves:
        def run_is():
            columns["I_s"] = semiclassics.inverse_slope_average_series(
                mspec, cfg.t_max, scfg, seeds[1])
        attempt("I_s", run_is)
    if "I_Lambda" in cfg.curves:
        def run_il():
            columns["I_Lambda"] = semiclassics.inverse_expansion_decay(
                mspec, cfg.t_max, scfg, seeds[2],
                ensemble_size=cfg.lambda1_ensemble)
        attempt("I_Lambda", run_il)
    if "M_cl" in cfg.curves:
        def run_cl():
            rng = np.random.default_rng(seeds[3])
            radius = np.sqrt(hs.hbar)
            acc = np.zeros(cfg.t_max + 1)
            for k in range(cfg.cl_centers):
                center = ClassicalState(r=rng.uniform(0, TWO_PI),
                                        p=rng.uniform(0, TWO_PI))
                acc += classical_fidelity(mspec, center, radius,
                                          cfg.cl_samples, cfg.t_max,
                                          rng_seed=seeds[5] + k)
            columns["M_cl"] = acc / cfg.cl_centers
        attempt("M_cl", run_cl)

    series = DecaySeries(t=ts, columns=columns, meta=meta)
    if cfg.out:
        series.to_csv(cfg.out)
    if failure is not None:
        raise failure
    return series


# ---------------------------------------------------------------------------
# figure pipelines
# ---------------------------------------------------------------------------

_FIG_BASE = {
    1: dict(family=CAT_SAWTOOTH, K=1.0, eta=0.987,
            curves=("M", "I_s", "I_Lambda", "M_cl")),
    2: dict(family=CAT_SAWTOOTH, K=1.0, eta=0.85,
            curves=("M", "I_s", "I_Lambda", "M_cl")),
    3: dict(family=SAWTOOTH_POLY, poly_i=3, K=1.0, eta=0.0,
            curves=("M", "I_s", "I_Lambda")),
    4: dict(family=SAWTOOTH_POLY, poly_i=2, K=1.0, eta=0.0,
            curves=("M", "M_single")),
}

# Desk-scale substitutions keep sigma * w_p at its full-scale value
# (sigma ~ sqrt(N)), which preserves the decay-onset time; figure 3 needs
# N = 2^14 so that both decay segments clear the 3/N saturation guard.
_FIG_SCALE = {
    ("full", 1): dict(N=2 ** 17, sigma=100.0, n_packets=2000, t_max=20,
                      mc_samples=4_000_000, lambda1_ensemble=1_000_000,
                      cl_centers=64, cl_samples=4000),
    ("full", 2): dict(N=2 ** 17, sigma=100.0, n_packets=2000, t_max=16,
                      mc_samples=4_000_000, lambda1_ensemble=1_000_000,
                      cl_centers=64, cl_samples=4000),
    ("full", 3): dict(N=2 ** 17, sigma=100.0, n_packets=2000, t_max=13,
                      mc_samples=2_000_000, lambda1_ensemble=400_000),
    ("full", 4): dict(N=2 ** 17, sigma=100.0, n_packets=2000, t_max=14,
                      mc_samples=1_000_000),
    ("desk", 1): dict(N=2 ** 12, sigma=100.0 / np.sqrt(2 ** 5), n_packets=200,
                      t_max=15, mc_samples=10_000, lambda1_ensemble=50_000,
                      cl_centers=16, cl_samples=1000),
    ("desk", 2): dict(N=2 ** 12, sigma=100.0 / np.sqrt(2 ** 5), n_packets=200,
                      t_max=15, mc_samples=10_000, lambda1_ensemble=50_000,
                      cl_centers=16, cl_samples=1000),
    ("desk", 3): dict(N=2 ** 15, sigma=25.0, n_packets=600, t_max=11,
                      mc_samples=10_000, lambda1_ensemble=50_000),
    ("desk", 4): dict(N=2 ** 14, sigma=100.0 / np.sqrt(2 ** 3), n_packets=200,
                      t_max=12, mc_samples=10_000),
}


def figure_config(figure_id: int, scale: str = "desk", seed: int = 0,
                  out: str | None = None, workers: int = 1) -> ExperimentConfig:
    if figure_id not in _FIG_BASE:
        raise ValueError("figure_id must be 1, 2, 3, or 4")
    if scale not in ("full", "desk"):
        raise ValueError("scale must be 'full' or 'desk'")
    kw = dict(_FIG_BASE[figure_id])
    kw.update(_FIG_SCALE[(scale, figure_id)])
    return ExperimentConfig(seed=seed, out=out, workers=workers, **kw)


def _rate_summary(figure_id: int, cfg: ExperimentConfig,
                  series: DecaySeries) -> dict:
    """Fitted rates and reference values for the requested figure."""
    mspec = cfg.map_spec()
    out: dict = {"figure": figure_id, "scale_N": cfg.N, "sigma": cfg.sigma}
    lam = semiclassics.map_lyapunov(mspec)
    out["lambda"] = lam
    if figure_id in (1, 2):
        from .maps import lambda1_asymptotic
        out["lambda1"] = lambda1_asymptotic(mspec, rng_seed=1)
        fit = fit_rate(series, "M_mean", auto_window(series))
        out["M_rate"] = fit.rate
        out["M_rate_window"] = (fit.t_lo, fit.t_hi)
    elif figure_id == 3:
        seg = two_segment_fit(series)
        out["pre_rate"] = seg.pre.rate
        out["post_rate"] = seg.post.rate
        out["crossover"] = seg.crossover
        out["two_lambda"] = 2.0 * lam
        out["tau_estimate"] = semiclassics.crossover_time(
            mspec, cfg.xi(), cfg.hilbert(), cfg.scl_config())
    elif figure_id == 4:
        fit = fit_rate(series, "M_mean", auto_window(series))
        out["M_rate"] = fit.rate
        out["M_rate_window"] = (fit.t_lo, fit.t_hi)
        win = best_single_packet_window(series, lam)
        if win is not None:
            out["single_window"] = (win.t_lo, win.t_hi)
            out["single_rate"] = win.rate
    return out


def best_single_packet_window(series: DecaySeries, lam: float,
                              span: int = 3) -> RateFit | None:
    """Best 3-step window of M_single with rate nearest 2*lambda."""
    if "M_single" not in series.columns:
        return None
    y = series.columns["M_single"]
    n_dim = int(float(series.meta.get("N", 0)) or 0)
    guard = 3.0 / n_dim if n_dim else 0.0
    best = None
    for a in range(1, len(y) - span):
        b = a + span
        seg = y[a:b + 1]
        if np.any(~np.isfinite(seg)) or np.any(seg <= guard):
            continue
        rate, se, r2 = _ols_rate(np.arange(a, b + 1, dtype=float), np.log(seg))
        score = abs(rate - 2.0 * lam)
        if best is None or score < best[0]:
            best = (score, RateFit(a, b, rate, se, r2))
    return best[1] if best else None


def figure_pipeline(figure_id: int, scale: str = "desk", seed: int = 0,
                    out: str | None = None, workers: int = 1,
                    render: bool = True) -> tuple[DecaySeries, dict]:
    """Run the canonical configuration for one of the four figures.

    Writes the decay CSV, a plot-ready two-column .dat file per curve, a
    rates summary, and (by default) a rendered PNG next to the CSV path.
    """
    base = out or f"figure{figure_id}_{scale}"
    csv_path = base if base.endswith(".csv") else base + ".csv"
    stem = csv_path[:-4]
    cfg = figure_config(figure_id, scale, seed, out=csv_path, workers=workers)
    series = run_experiment(cfg)
    summary = _rate_summary(figure_id, cfg, series)

    for name in series.columns:
        if name == "M_stderr":
            continue
        y = series.anchored(name)
        ok = np.isfinite(y)
        np.savetxt(f"{stem}_{name}.dat",
                   np.column_stack([series.t[ok], y[ok]]), fmt="%d %.17e")
    with open(f"{stem}_summary.txt", "w") as fh:
        for k in sorted(summary):
            fh.write(f"{k} = {summary[k]}\n")
    if render:
        from .figures import render_figure
        render_figure(figure_id, series, summary, f"{stem}.png")
    return series, summary
