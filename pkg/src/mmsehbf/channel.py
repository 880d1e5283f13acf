"""Clustered geometric mmWave channels on half-wavelength uniform linear arrays.

The narrowband channel is the ``num_subcarriers == 1`` case of the OFDM
model, where cluster ``i`` (0-based) sits on delay tap ``i`` and picks up
the phase ``exp(-2j*pi*i*k/N)`` on subcarrier ``k``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int

    def __post_init__(self):
        if int(self.num_elements) < 1:
            raise ValueError(f"num_elements must be >= 1, got {self.num_elements}")


@dataclass(frozen=True)
class RayParams:
    """Per-ray gains and angles (radians), shaped ``(num_clusters, rays_per_cluster)``."""

    gains: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    mean_cluster_aod: np.ndarray
    mean_cluster_aoa: np.ndarray
    angular_spread: float = 0.0

    def __post_init__(self):
        shape = np.shape(self.gains)
        if len(shape) != 2:
            raise ValueError("gains must be a num_clusters x rays_per_cluster array")
        if np.shape(self.aod) != shape or np.shape(self.aoa) != shape:
            raise ValueError("angle arrays must match the gain array shape")
        if not (np.all(np.isfinite(self.aod)) and np.all(np.isfinite(self.aoa))):
            raise ValueError("ray angles must be finite")
        if self.angular_spread < 0:
            raise ValueError("angular_spread must be non-negative")

    @property
    def num_clusters(self):
        return self.gains.shape[0]

    @property
    def rays_per_cluster(self):
        return self.gains.shape[1]


@dataclass(frozen=True)
class ChannelRealization:
    """Stack of per-subcarrier channel matrices, shape ``(N, n_rx, n_tx)``."""

    per_subcarrier: np.ndarray
    rays: RayParams | None = None

    def __post_init__(self):
        h = self.per_subcarrier
        if h.ndim != 3 or h.shape[0] < 1:
            raise ValueError("per_subcarrier must have shape (N, n_rx, n_tx) with N >= 1")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")

    @property
    def num_subcarriers(self):
        return self.per_subcarrier.shape[0]

    @property
    def n_rx(self):
        return self.per_subcarrier.shape[1]

    @property
    def n_tx(self):
        return self.per_subcarrier.shape[2]


def make_rng(seed, trial=0):
    """Counter-based generator for trial ``trial`` of a run seeded with ``seed``.

    Each trial gets an independent Philox stream keyed on ``(seed, trial)``,
    so results do not depend on the order trials are executed in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def array_response(geom, angle):
    """Normalized ULA steering vector ``exp(j*pi*n*sin(angle)) / sqrt(M)``."""
    m = geom.num_elements if isinstance(geom, ArrayGeometry) else int(geom)
    n = np.arange(m)
    return np.exp(1j * np.pi * n * np.sin(angle)) / np.sqrt(m)


def array_responses(num_elements, angles):
    """Steering vectors for a flat array of angles, one per column."""
    angles = np.ravel(angles)
    n = np.arange(num_elements)[:, None]
    return np.exp(1j * np.pi * n * np.sin(angles)[None, :]) / np.sqrt(num_elements)


def draw_rays(rng, num_clusters, rays_per_cluster, angular_spread_deg):
    """Draw CN(0, 1) gains and Laplacian-spread angles around uniform cluster means.

    The Laplacian scale is ``spread / sqrt(2)`` so the per-ray angular
    standard deviation equals ``angular_spread_deg``. Deviates are not
    truncated.
    """
    if num_clusters < 1 or rays_per_cluster < 1:
        raise ValueError("need at least one cluster and one ray per cluster")
    shape = (num_clusters, rays_per_cluster)
    gains = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    mean_aod = rng.uniform(0.0, 2 * np.pi, num_clusters)
    mean_aoa = rng.uniform(0.0, 2 * np.pi, num_clusters)
    scale = np.deg2rad(angular_spread_deg) / np.sqrt(2)
    if scale > 0:
        aod = mean_aod[:, None] + rng.laplace(0.0, scale, shape)
        aoa = mean_aoa[:, None] + rng.laplace(0.0, scale, shape)
    else:
        aod = np.repeat(mean_aod[:, None], rays_per_cluster, axis=1)
        aoa = np.repeat(mean_aoa[:, None], rays_per_cluster, axis=1)
    return RayParams(gains, aod, aoa, mean_aod, mean_aoa, float(angular_spread_deg))


def subcarrier_phases(num_clusters, num_subcarriers):
    """Delay-tap phase factors, shape ``(N, num_clusters)``."""
    k = np.arange(num_subcarriers)[:, None]
    i = np.arange(num_clusters)[None, :]
    return np.exp(-2j * np.pi * i * k / num_subcarriers)


def gen_channel(rays, tx, rx, num_subcarriers=1):
    """Build ``H_k`` for every subcarrier from a fixed set of rays."""
    if num_subcarriers < 1:
        raise ValueError("num_subcarriers must be >= 1")
    nt = tx.num_elements if isinstance(tx, ArrayGeometry) else int(tx)
    nr = rx.num_elements if isinstance(rx, ArrayGeometry) else int(rx)
    nc, nray = rays.gains.shape
    a_t = array_responses(nt, rays.aod)
    a_r = array_responses(nr, rays.aoa)
    phase = subcarrier_phases(nc, num_subcarriers)
    # (N, nc*nray): ray gain times its cluster's tap phase
    weights = (phase[:, :, None] * rays.gains[None, :, :]).reshape(num_subcarriers, -1)
    scale = np.sqrt(nt * nr / (nc * nray))
    h = scale * np.einsum("rp,kp,tp->krt", a_r, weights, a_t.conj(), optimize=True)
    return ChannelRealization(h, rays)


def random_channel(rng, n_tx, n_rx, num_subcarriers=1, num_clusters=5, rays_per_cluster=10,
                   angular_spread_deg=10.0):
    rays = draw_rays(rng, num_clusters, rays_per_cluster, angular_spread_deg)
    return gen_channel(rays, ArrayGeometry(n_tx), ArrayGeometry(n_rx), num_subcarriers)


def tx_dictionary(rays, n_tx):
    """Transmit array responses at the true departure angles (unit-norm columns)."""
    return array_responses(n_tx, rays.aod)


def rx_dictionary(rays, n_rx):
    return array_responses(n_rx, rays.aoa)
