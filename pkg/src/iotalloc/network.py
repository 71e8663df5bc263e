"""Random network topologies and channel realizations.

Geometry is a disc of configurable radius containing K access points and N
IoT devices. Large-scale fading combines a log-distance path loss (distance
expressed in kilometers) with log-normal shadowing; small-scale fading is
Rayleigh, so channel power gains are exponential with the large-scale
coefficient as mean. All linear powers are in milliwatts.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Log-distance NLOS model, distance in km.
PATH_LOSS_FIXED_DB = 120.9
PATH_LOSS_SLOPE_DB = 37.6

AP_PLACEMENT_MAX_TRIES = 10_000


def dbm_to_mw(x_dbm):
    """Convert dBm to linear milliwatts."""
    return 10.0 ** (np.asarray(x_dbm, dtype=float) / 10.0)


def mw_to_dbm(x_mw):
    """Convert linear milliwatts to dBm."""
    return 10.0 * np.log10(np.asarray(x_mw, dtype=float))


@dataclass
class NetworkConfig:
    """Static system parameters of one network cell.

    Defaults follow the NB-IoT style setup used throughout: 300 m cell,
    23 dBm AP budget, 180 kHz band, -174 dBm/Hz noise floor, 7 dB shadowing.
    """

    num_aps: int
    num_devices: int
    cell_radius_m: float = 300.0
    min_ap_separation_m: float = 30.0
    bandwidth_hz: float = 180e3
    noise_psd_dbm_hz: float = -174.0
    max_power_dbm: float = 23.0
    shadowing_std_db: float = 7.0
    csi_error: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_aps < 1:
            raise ConfigurationError("num_aps must be >= 1")
        if self.num_devices < 1:
            raise ConfigurationError("num_devices must be >= 1")
        if self.cell_radius_m <= 0:
            raise ConfigurationError("cell_radius_m must be > 0")
        if self.min_ap_separation_m < 0:
            raise ConfigurationError("min_ap_separation_m must be >= 0")
        if not 0.0 <= self.csi_error < 1.0:
            raise ConfigurationError("csi_error must lie in [0, 1)")
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be > 0")

    @property
    def max_power_mw(self):
        """Per-AP transmit budget in mW."""
        return float(dbm_to_mw(self.max_power_dbm))

    @property
    def rho(self):
        """Channel estimation quality factor; csi_error is 1 - rho^2."""
        return float(np.sqrt(1.0 - self.csi_error))


@dataclass
class Topology:
    """Planar AP and device coordinates (meters, origin at the cell center)."""

    ap_positions: np.ndarray
    device_positions: np.ndarray

    @property
    def num_aps(self):
        return self.ap_positions.shape[0]

    @property
    def num_devices(self):
        return self.device_positions.shape[0]

    def distances_m(self):
        """Pairwise AP-to-device distances, shape (K, N), in meters."""
        diff = self.ap_positions[:, None, :] - self.device_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


@dataclass
class ChannelMatrix:
    """One quasi-static channel realization.

    gains[k, n] is the channel power gain |h|^2 between AP k and device n;
    large_scale[k, n] is its mean (path loss times shadowing). rho encodes
    the CSI quality used by the degraded-SINR model.
    """

    gains: np.ndarray
    large_scale: np.ndarray
    rho: float = 1.0

    @property
    def num_aps(self):
        return self.gains.shape[0]

    @property
    def num_devices(self):
        return self.gains.shape[1]


def _uniform_disc(rng, count, radius):
    r = radius * np.sqrt(rng.uniform(size=count))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def generate_topology(cfg: NetworkConfig) -> Topology:
    """Draw a random topology: devices uniform in the disc, APs rejection
    sampled until every pair is at least min_ap_separation_m apart.

    Raises ConfigurationError when the separation cannot be satisfied within
    the retry budget (e.g. too many APs for the disc).
    """
    ss = np.random.SeedSequence(cfg.rng_seed)
    topo_ss, _ = ss.spawn(2)
    rng = np.random.default_rng(topo_ss)

    ap_positions = np.empty((cfg.num_aps, 2))
    placed = 0
    tries = 0
    while placed < cfg.num_aps:
        candidate = _uniform_disc(rng, 1, cfg.cell_radius_m)[0]
        tries += 1
        if placed == 0 or np.all(
            np.hypot(*(ap_positions[:placed] - candidate).T) >= cfg.min_ap_separation_m
        ):
            ap_positions[placed] = candidate
            placed += 1
        elif tries > AP_PLACEMENT_MAX_TRIES:
            raise ConfigurationError(
                f"could not place {cfg.num_aps} APs with separation "
                f">= {cfg.min_ap_separation_m} m in a disc of radius "
                f"{cfg.cell_radius_m} m after {tries} draws"
            )

    device_positions = _uniform_disc(rng, cfg.num_devices, cfg.cell_radius_m)
    return Topology(ap_positions=ap_positions, device_positions=device_positions)


def path_loss_db(distance_km) -> np.ndarray:
    """Path loss in dB at the given distance.

    The argument is in kilometers: the 120.9 + 37.6 log10(d) model is a
    standard NLOS form calibrated for km distances.
    """
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    return -(PATH_LOSS_FIXED_DB + PATH_LOSS_SLOPE_DB * np.log10(d))


def realize_channels(topology: Topology, cfg: NetworkConfig) -> ChannelMatrix:
    """Draw one channel realization for the topology.

    Large-scale coefficient: path loss times 10^(psi*s/10) with s standard
    normal (shadowing). Power gain |h|^2: exponential with the large-scale
    coefficient as mean. Deterministic for a fixed cfg.rng_seed.
    """
    ss = np.random.SeedSequence(cfg.rng_seed)
    _, chan_ss = ss.spawn(2)
    rng = np.random.default_rng(chan_ss)

    d_km = topology.distances_m() / 1000.0
    zeta_db = path_loss_db(d_km)
    shadow_db = cfg.shadowing_std_db * rng.standard_normal(size=zeta_db.shape)
    large_scale = 10.0 ** ((zeta_db + shadow_db) / 10.0)
    gains = rng.exponential(scale=large_scale)
    return ChannelMatrix(gains=gains, large_scale=large_scale, rho=cfg.rho)


def noise_power(cfg: NetworkConfig) -> float:
    """Thermal noise power sigma^2 = B * N0 in mW."""
    return float(cfg.bandwidth_hz * dbm_to_mw(cfg.noise_psd_dbm_hz))


def topology_csv_rows(topology: Topology):
    """Rows (kind, id, x_m, y_m) for dumping a topology to CSV."""
    rows = []
    for i, (x, y) in enumerate(topology.ap_positions):
        rows.append(("ap", i, float(x), float(y)))
    for i, (x, y) in enumerate(topology.device_positions):
        rows.append(("device", i, float(x), float(y)))
    return rows
