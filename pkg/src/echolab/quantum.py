"""Exact quantum mechanics on the N-dimensional torus Hilbert space.

One Floquet period is  U = exp[-i p^2/(2 hbar)] exp[-i U_kick(r)/hbar]
with hbar = 2 pi / N: the kick phase is applied in the position
representation, the free rotation in the momentum representation, and the
two are connected by unitary FFTs.  Momenta are folded to the symmetric
Brillouin zone (-pi, pi] for the free propagator; boundary phases are plain
periodic.  Kick potentials:

* ``cat_sawtooth``:  U_kick(r) = -K[(r - pi)^2/2 - eta*cos r], perturbed
  branch K -> K + eps;
* ``sawtooth_poly``: U_kick(r) = -K (r - pi)^2/2, perturbed branch adds
  -eps * N_i (r - pi)^i,

with r in [0, 2pi) directly (no branch folding), matching the classical
force convention.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .maps import TWO_PI, MapSpec, SAWTOOTH_POLY


class PacketUnresolvable(ValueError):
    """Gaussian width too small for the position grid (xi < 4 * 2pi/N)."""


@dataclass(frozen=True)
class HilbertSpec:
    """Torus Hilbert space of dimension N with hbar = 2 pi / N."""

    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")

    @property
    def hbar(self) -> float:
        return TWO_PI / self.N

    def position_grid(self) -> np.ndarray:
        return TWO_PI * np.arange(self.N) / self.N

    def momentum_grid_folded(self) -> np.ndarray:
        """Momenta 2 pi k / N folded to (-pi, pi]."""
        p = TWO_PI * np.arange(self.N) / self.N
        return np.where(p > np.pi, p - TWO_PI, p)


@dataclass(frozen=True)
class PacketSpec:
    """Gaussian packet: center (r_center, p_center), position width xi.

    The momentum-space width is w_p = hbar / xi.  Default xi is sqrt(hbar)
    (pass xi=None and resolve with ``resolve_xi``).
    """

    r_center: float
    p_center: float
    xi: float

    def momentum_width(self, hs: HilbertSpec) -> float:
        return hs.hbar / self.xi


def resolve_xi(xi_rule, hs: HilbertSpec) -> float:
    """Resolve a width rule: 'sqrt-hbar' or an absolute float."""
    if xi_rule == "sqrt-hbar" or xi_rule is None:
        return float(np.sqrt(hs.hbar))
    return float(xi_rule)


def snap_momentum(p_center: float, hs: HilbertSpec) -> float:
    """Nearest grid momentum; keeps the periodized packet single-valued."""
    return TWO_PI * np.round(p_center * hs.N / TWO_PI) / hs.N


def build_gaussian(hs: HilbertSpec, packet: PacketSpec) -> np.ndarray:
    """Unit-norm Gaussian packet sampled on the position grid.

    Periodized over the images r + 2 pi m, m in {-1, 0, 1} (further images
    are < 1e-30 for xi <= sqrt(hbar) at N >= 2^10); p_center is snapped to
    the momentum grid.
    """
    return build_gaussian_batch(hs, np.array([packet.r_center]),
                                np.array([packet.p_center]), packet.xi)[0]


def build_gaussian_batch(hs: HilbertSpec, r_centers: np.ndarray,
                         p_centers: np.ndarray, xi: float) -> np.ndarray:
    """(B, N) array of unit-norm packets with a common width."""
    if xi < 4.0 * TWO_PI / hs.N:
        raise PacketUnresolvable(
            f"xi = {xi:.3e} < 4 grid spacings = {4 * TWO_PI / hs.N:.3e}")
    r = hs.position_grid()[None, :]
    rc = np.asarray(r_centers, dtype=float)[:, None]
    pc = snap_momentum(np.asarray(p_centers, dtype=float), hs)[:, None]
    psi = np.zeros((len(r_centers), hs.N), dtype=np.complex128)
    for m in (-1, 0, 1):
        rr = r + TWO_PI * m
        psi += np.exp(1j * pc * rr / hs.hbar - (rr - rc) ** 2 / (2.0 * xi ** 2))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    return psi


def kick_potential(hs: HilbertSpec, spec: MapSpec, perturbed: bool) -> np.ndarray:
    r = hs.position_grid()
    if spec.family == SAWTOOTH_POLY:
        u = -spec.K * (r - np.pi) ** 2 / 2.0
        if perturbed:
            u = u - spec.epsilon * spec.poly_norm * (r - np.pi) ** spec.poly_i
        return u
    k = spec.K + (spec.epsilon if perturbed else 0.0)
    return -k * ((r - np.pi) ** 2 / 2.0 - spec.eta * np.cos(r))


def floquet_phases(hs: HilbertSpec, spec: MapSpec):
    """(kick_unperturbed, kick_perturbed, free) diagonal phase factors."""
    kick_u = np.exp(-1j * kick_potential(hs, spec, False) / hs.hbar)
    kick_p = np.exp(-1j * kick_potential(hs, spec, True) / hs.hbar)
    p = hs.momentum_grid_folded()
    free = np.exp(-1j * p ** 2 / (2.0 * hs.hbar))
    return kick_u, kick_p, free


def floquet_step(state: np.ndarray, hs: HilbertSpec, spec: MapSpec,
                 perturbed: bool = False) -> np.ndarray:
    """One Floquet period applied to a position-representation state."""
    kick_u, kick_p, free = floquet_phases(hs, spec)
    kick = kick_p if perturbed else kick_u
    return np.fft.ifft(np.fft.fft(state * kick, norm="ortho") * free, norm="ortho")


def _pair_fidelity_batch(psis: np.ndarray, kick_u: np.ndarray,
                         kick_p: np.ndarray, free: np.ndarray,
                         t_max: int) -> np.ndarray:
    """(t_max+1, B) fidelities of perturbed vs unperturbed evolution."""
    a = psis.copy()
    b = psis.copy()
    out = np.empty((t_max + 1, psis.shape[0]))
    out[0] = 1.0
    for t in range(1, t_max + 1):
        a = np.fft.ifft(np.fft.fft(a * kick_u, axis=1, norm="ortho") * free,
                        axis=1, norm="ortho")
        b = np.fft.ifft(np.fft.fft(b * kick_p, axis=1, norm="ortho") * free,
                        axis=1, norm="ortho")
        m = np.einsum("bn,bn->b", b.conj(), a)
        out[t] = np.abs(m) ** 2
    return out


def fidelity_series(hs: HilbertSpec, spec: MapSpec, packet: PacketSpec,
                    t_max: int) -> np.ndarray:
    """M(t) = |<psi_pert(t)|psi_unpert(t)>|^2 for t = 0..t_max, M(0) = 1."""
    psi = build_gaussian(hs, packet)[None, :]
    kick_u, kick_p, free = floquet_phases(hs, spec)
    return _pair_fidelity_batch(psi, kick_u, kick_p, free, t_max)[:, 0]


def packet_fidelities(hs: HilbertSpec, spec: MapSpec, r_centers, p_centers,
                      xi: float, t_max: int, batch: int = 0,
                      workers: int = 1) -> np.ndarray:
    """(t_max+1, n_packets) fidelity series for an ensemble of centers.

    Packets are processed in fixed-size batches so results do not depend on
    ``workers``; threads only split the batch list (FFT and ufunc kernels
    release the GIL).
    """
    kick_u, kick_p, free = floquet_phases(hs, spec)
    n = len(r_centers)
    if batch <= 0:
        batch = max(1, min(n, 2 ** 22 // hs.N or 1))
    spans = [(s, min(s + batch, n)) for s in range(0, n, batch)]

    def run(span):
        s, e = span
        psis = build_gaussian_batch(hs, r_centers[s:e], p_centers[s:e], xi)
        return _pair_fidelity_batch(psis, kick_u, kick_p, free, t_max)

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, spans))
    else:
        parts = [run(sp) for sp in spans]
    return np.concatenate(parts, axis=1)


def average_fidelity(hs: HilbertSpec, spec: MapSpec, xi: float,
                     n_packets: int, t_max: int, rng_seed: int = 0,
                     workers: int = 1):
    """Mean fidelity over packets with centers uniform on the torus.

    Returns (M_mean, M_stderr, M_all) with M_all of shape
    (t_max+1, n_packets).  Centers are drawn up front from the seed, so the
    result is reproducible independent of batching.
    """
    rng = np.random.default_rng(rng_seed)
    rc = rng.uniform(0.0, TWO_PI, n_packets)
    pc = rng.uniform(0.0, TWO_PI, n_packets)
    M = packet_fidelities(hs, spec, rc, pc, xi, t_max, workers=workers)
    mean = M.mean(axis=1)
    if n_packets > 1:
        stderr = M.std(axis=1, ddof=1) / np.sqrt(n_packets)
    else:
        stderr = np.zeros(t_max + 1)
    return mean, stderr, M


def position_circular_mean(state: np.ndarray) -> float:
    """Circular mean of the position distribution, in [0, 2pi)."""
    n = len(state)
    r = TWO_PI * np.arange(n) / n
    w = np.abs(state) ** 2
    return float(np.mod(np.angle(np.sum(w * np.exp(1j * r))), TWO_PI))


def momentum_circular_mean(state: np.ndarray) -> float:
    """Circular mean of the momentum distribution, in [0, 2pi)."""
    amp = np.fft.fft(state, norm="ortho")
    n = len(state)
    p = TWO_PI * np.arange(n) / n
    w = np.abs(amp) ** 2
    return float(np.mod(np.angle(np.sum(w * np.exp(1j * p))), TWO_PI))
