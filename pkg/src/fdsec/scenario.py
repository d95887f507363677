"""Cell topologies, path losses, and channel realizations.

Geometry: the BS sits at the origin of a disk cell.  Zone 1 is the inner
disk, zone 2 the outer annulus; each zone holds K DL users and L UL users,
and with M=2 one Eve per zone.  User positions are drawn uniformly over
their zone with rejection below the minimum BS distance.

Channels combine a deterministic path-loss gain with unit-power small-scale
fading: CN(0,1) entries everywhere except the self-interference loop
channel, whose entries are Rician.  The BS array is modeled with nt+nr
elements so that half-duplex baselines (which use the whole array) can
reuse the same fading draw as the full-duplex schemes; full-duplex views
slice the transmit/receive subarrays.

All sampling is pure in (config, seed): a fixed seed reproduces the draw
bit for bit.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from fdsec.config import SystemConfig

_MAX_REJECTIONS = 10**6


def pathloss_db(d_km: float, los: bool) -> float:
    """Path loss in dB at distance d_km (kilometers); LOS or NLOS model."""
    if np.any(np.asarray(d_km) <= 0):
        raise ValueError("distance must be positive")
    if los:
        return 103.8 + 20.9 * np.log10(d_km)
    return 145.4 + 37.5 * np.log10(d_km)


def pathloss_gain(d_m, los: bool):
    """Linear power gain for a distance in meters."""
    return 10.0 ** (-pathloss_db(np.asarray(d_m) / 1000.0, los) / 10.0)


def noise_power(psd_dbm_per_hz: float, bandwidth_hz: float) -> float:
    """Noise power in watts over the given bandwidth."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    dbm = psd_dbm_per_hz + 10.0 * math.log10(bandwidth_hz)
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclasses.dataclass(frozen=True)
class Topology:
    """User and Eve placement for one cell realization (positions in meters).

    DL/UL users are indexed zone-major: entries [0, K) sit in zone 1 and
    [K, 2K) in zone 2 (same for UL with L).
    """

    dl_pos: np.ndarray          # (2K, 2)
    ul_pos: np.ndarray          # (2L, 2)
    eve_pos: np.ndarray         # (M, 2)
    dl_zone: np.ndarray         # (2K,) values in {1, 2}
    ul_zone: np.ndarray
    eve_zone: np.ndarray
    ul_dl_dist_m: np.ndarray    # (2K, 2L) pairwise UL -> DL distances
    ul_eve_dist_m: np.ndarray   # (M, 2L)

    @property
    def dl_bs_dist_m(self) -> np.ndarray:
        return np.linalg.norm(self.dl_pos, axis=1)

    @property
    def ul_bs_dist_m(self) -> np.ndarray:
        return np.linalg.norm(self.ul_pos, axis=1)

    @property
    def eve_bs_dist_m(self) -> np.ndarray:
        return np.linalg.norm(self.eve_pos, axis=1)


def _draw_in_zone(rng, zone: int, cfg: SystemConfig, budget: list) -> np.ndarray:
    r_lo = cfg.min_bs_distance_m
    while True:
        if budget[0] <= 0:
            raise RuntimeError("rejection sampling exceeded budget; geometry inconsistent")
        budget[0] -= 1
        u = rng.uniform()
        if zone == 1:
            r = cfg.inner_radius_m * math.sqrt(u)
        else:
            r = math.sqrt(cfg.inner_radius_m**2 + u * (cfg.cell_radius_m**2 - cfg.inner_radius_m**2))
        if r < r_lo:
            continue
        phi = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([r * math.cos(phi), r * math.sin(phi)])


def sample_topology(config: SystemConfig, seed: int) -> Topology:
    """Draw one placement of all DL users, UL users, and Eves."""
    config.validate()
    rng = np.random.default_rng(seed)
    budget = [_MAX_REJECTIONS]
    dl_pos, dl_zone = [], []
    ul_pos, ul_zone = [], []
    for zone in (1, 2):
        for _ in range(config.k):
            dl_pos.append(_draw_in_zone(rng, zone, config, budget))
            dl_zone.append(zone)
    for zone in (1, 2):
        for _ in range(config.l):
            ul_pos.append(_draw_in_zone(rng, zone, config, budget))
            ul_zone.append(zone)
    eve_pos, eve_zone = [], []
    for m in range(config.m):
        zone = (m % 2) + 1
        eve_pos.append(_draw_in_zone(rng, zone, config, budget))
        eve_zone.append(zone)
    dl = np.array(dl_pos).reshape(-1, 2)
    ul = np.array(ul_pos).reshape(-1, 2)
    ev = np.array(eve_pos).reshape(-1, 2) if eve_pos else np.zeros((0, 2))
    ul_dl = np.linalg.norm(dl[:, None, :] - ul[None, :, :], axis=2)
    ul_ev = np.linalg.norm(ev[:, None, :] - ul[None, :, :], axis=2) if config.m else np.zeros((0, 2 * config.l))
    return Topology(
        dl_pos=dl, ul_pos=ul, eve_pos=ev,
        dl_zone=np.array(dl_zone, dtype=int),
        ul_zone=np.array(ul_zone, dtype=int),
        eve_zone=np.array(eve_zone, dtype=int),
        ul_dl_dist_m=ul_dl, ul_eve_dist_m=ul_ev,
    )


@dataclasses.dataclass(frozen=True)
class ChannelSet:
    """One realization of every propagation channel (full-array storage).

    Full-duplex views slice the first nt array elements for transmit and
    the last nr for receive.  `scsi` marks the statistical-Eve variant,
    in which the instantaneous Eve channels are dropped and only the
    second moments h_bar_full / g_bar survive.
    """

    nt: int
    nr: int
    sigma2: float
    sigma_si: float
    h_full: np.ndarray                      # (2K, nt+nr) BS -> DL users
    g_full: np.ndarray                      # (2L, nt+nr) UL users -> BS
    f_cci: np.ndarray                       # (2K, 2L) UL user -> DL user
    g_si: np.ndarray                        # (nt, nr) loop channel, unit power entries
    h_eve_full: tuple[np.ndarray, ...]      # per Eve (nt+nr, ne_m); empty in SCSI variant
    g_eve: tuple[np.ndarray, ...]           # per Eve (2L, ne_m); empty in SCSI variant
    gain_dl: np.ndarray                     # (2K,) linear BS->DL gains
    gain_ul: np.ndarray                     # (2L,)
    gain_eve: np.ndarray                    # (M,) BS->Eve
    gain_ul_eve: np.ndarray                 # (M, 2L)
    ne_counts: tuple[int, ...] = ()
    scsi: bool = False
    h_bar_scale: np.ndarray | None = None   # (M,) so H_bar_m = scale * I
    g_bar: np.ndarray | None = None         # (M, 2L)

    @property
    def n_eves(self) -> int:
        return len(self.gain_eve)

    @property
    def ne(self) -> tuple[int, ...]:
        return self.ne_counts


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_channels(topology: Topology, config: SystemConfig, seed: int) -> ChannelSet:
    """Draw small-scale fading on top of the topology's path losses.

    LOS path loss for every BS-involved and Eve-involved link, NLOS for
    the UL-to-DL co-channel interference; the loop channel is Rician with
    the configured K-factor and unit mean power per entry.
    """
    rng = np.random.default_rng(seed)
    n = config.nt + config.nr
    gain_dl = pathloss_gain(topology.dl_bs_dist_m, los=True)
    gain_ul = pathloss_gain(topology.ul_bs_dist_m, los=True)
    h_full = np.sqrt(gain_dl)[:, None] * _crandn(rng, 2 * config.k, n)
    g_full = np.sqrt(gain_ul)[:, None] * _crandn(rng, 2 * config.l, n)
    gain_f = pathloss_gain(topology.ul_dl_dist_m, los=False)
    f_cci = np.sqrt(gain_f) * _crandn(rng, 2 * config.k, 2 * config.l)
    kf = config.rician_k_si
    g_si = math.sqrt(kf / (kf + 1.0)) + math.sqrt(1.0 / (kf + 1.0)) * _crandn(rng, config.nt, config.nr)
    gain_eve = pathloss_gain(topology.eve_bs_dist_m, los=True) if config.m else np.zeros(0)
    h_eve = tuple(
        np.sqrt(gain_eve[m]) * _crandn(rng, n, config.ne[m]) for m in range(config.m)
    )
    gain_ul_eve = pathloss_gain(topology.ul_eve_dist_m, los=True) if config.m else np.zeros((0, 2 * config.l))
    g_eve = tuple(
        np.sqrt(gain_ul_eve[m])[:, None] * _crandn(rng, 2 * config.l, config.ne[m])
        for m in range(config.m)
    )
    return ChannelSet(
        nt=config.nt, nr=config.nr,
        sigma2=config.sigma2_w, sigma_si=config.sigma_si,
        h_full=h_full, g_full=g_full, f_cci=f_cci, g_si=g_si,
        h_eve_full=h_eve, g_eve=g_eve,
        gain_dl=gain_dl, gain_ul=gain_ul,
        gain_eve=gain_eve, gain_ul_eve=gain_ul_eve,
        ne_counts=tuple(config.ne),
    )


def derive_scsi(channels: ChannelSet) -> ChannelSet:
    """Second-order Eve statistics implied by the generation model.

    E{H H^H} = ne * gain * I and E{g g^H} = ne * gain, exactly, because
    Eve channel entries are i.i.d. CN(0, gain).  Instantaneous Eve draws
    are dropped from the returned set.
    """
    ne = channels.ne
    h_bar_scale = np.array([ne[m] * channels.gain_eve[m] for m in range(channels.n_eves)])
    g_bar = np.array([ne[m] * channels.gain_ul_eve[m] for m in range(channels.n_eves)])
    if g_bar.size == 0:
        g_bar = np.zeros((0, channels.g_full.shape[0]))
    return dataclasses.replace(
        channels, scsi=True, h_bar_scale=h_bar_scale, g_bar=g_bar,
        h_eve_full=(), g_eve=(),
    )


# ---------------------------------------------------------------------------
# Grouped views: the per-scheme arrangement the optimizer and oracles see.
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GroupedChannels:
    """Channels arranged into served groups for one scheme.

    Arrays are already sliced to the active subarrays (n_tx transmit and
    n_rx receive elements) and UL users inside each group are relabeled in
    descending channel norm so SIC decodes the strongest signal first.
    `dl_ids` / `ul_ids` carry the global user indices for reporting.
    """

    n_tx: int
    n_rx: int
    sigma2: float
    sigma_si: float
    h: tuple[np.ndarray, ...]               # per group (K_i, n_tx)
    g: tuple[np.ndarray, ...]               # per group (L_i, n_rx)
    f: tuple[np.ndarray, ...]               # per group (K_i, L_i)
    g_si: np.ndarray | None                 # (n_tx, n_rx); None disables SI entirely
    h_eve: tuple[np.ndarray, ...]           # per Eve (n_tx, ne_m)
    g_eve: tuple[tuple[np.ndarray, ...], ...]   # [m][i] -> (L_i, ne_m)
    ne: tuple[int, ...]
    dl_ids: tuple[tuple[int, ...], ...]
    ul_ids: tuple[tuple[int, ...], ...]
    scsi: bool = False
    h_bar: tuple[np.ndarray, ...] = ()      # per Eve (n_tx, n_tx)
    g_bar: tuple[tuple[np.ndarray, ...], ...] = ()

    @property
    def n_groups(self) -> int:
        return len(self.h)

    @property
    def n_eves(self) -> int:
        return len(self.ne)

    def group_sizes(self) -> tuple[tuple[int, int], ...]:
        return tuple((h.shape[0], g.shape[0]) for h, g in zip(self.h, self.g))


def _sic_order(g_rows: np.ndarray) -> np.ndarray:
    """Stable relabeling: descending receive-channel power, strongest first."""
    norms = np.sum(np.abs(g_rows) ** 2, axis=1)
    return np.argsort(-norms, kind="stable")


def _grouped(channels: ChannelSet, dl_groups, ul_groups, n_tx, n_rx,
             tx_slice, rx_slice, with_si: bool) -> GroupedChannels:
    h_view = channels.h_full[:, tx_slice]
    g_view = channels.g_full[:, rx_slice]
    h, g, f, dl_ids, ul_ids = [], [], [], [], []
    ul_orders = []
    for dl_idx, ul_idx in zip(dl_groups, ul_groups):
        dl_idx = np.asarray(dl_idx, dtype=int)
        ul_idx = np.asarray(ul_idx, dtype=int)
        g_rows = g_view[ul_idx]
        order = _sic_order(g_rows) if len(ul_idx) else np.zeros(0, dtype=int)
        ul_idx = ul_idx[order]
        h.append(h_view[dl_idx])
        g.append(g_view[ul_idx])
        f.append(channels.f_cci[np.ix_(dl_idx, ul_idx)])
        dl_ids.append(tuple(int(i) for i in dl_idx))
        ul_ids.append(tuple(int(i) for i in ul_idx))
        ul_orders.append(ul_idx)
    h_eve = tuple(H[tx_slice, :] for H in channels.h_eve_full)
    if channels.g_eve:
        g_eve = tuple(
            tuple(channels.g_eve[m][ul_idx] for ul_idx in ul_orders)
            for m in range(channels.n_eves)
        )
    else:
        g_eve = tuple(() for _ in range(channels.n_eves))
    scsi = channels.scsi
    h_bar = ()
    g_bar = ()
    if scsi:
        h_bar = tuple(channels.h_bar_scale[m] * np.eye(n_tx) for m in range(channels.n_eves))
        g_bar = tuple(
            tuple(channels.g_bar[m][ul_idx] for ul_idx in ul_orders)
            for m in range(channels.n_eves)
        )
    return GroupedChannels(
        n_tx=n_tx, n_rx=n_rx, sigma2=channels.sigma2,
        sigma_si=channels.sigma_si if with_si else 0.0,
        h=tuple(h), g=tuple(g), f=tuple(f),
        g_si=channels.g_si if with_si else None,
        h_eve=h_eve, g_eve=g_eve, ne=channels.ne,
        dl_ids=tuple(dl_ids), ul_ids=tuple(ul_ids),
        scsi=scsi, h_bar=h_bar, g_bar=g_bar,
    )


def group_proposed(channels: ChannelSet, config: SystemConfig) -> GroupedChannels:
    """Two fractional-time groups: near DL users serve alongside far UL
    users (group 1), far DL alongside near UL (group 2)."""
    k, l = config.k, config.l
    dl_groups = [list(range(0, k)), list(range(k, 2 * k))]
    ul_groups = [list(range(l, 2 * l)), list(range(0, l))]
    return _grouped(channels, dl_groups, ul_groups, config.nt, config.nr,
                    slice(0, config.nt), slice(config.nt, config.nt + config.nr), with_si=True)


def group_conventional(channels: ChannelSet, config: SystemConfig) -> GroupedChannels:
    """Single group serving every DL and UL user the whole block."""
    dl_groups = [list(range(2 * config.k))]
    ul_groups = [list(range(2 * config.l))]
    return _grouped(channels, dl_groups, ul_groups, config.nt, config.nr,
                    slice(0, config.nt), slice(config.nt, config.nt + config.nr), with_si=True)


def group_hd_blocks(channels: ChannelSet, config: SystemConfig) -> tuple[GroupedChannels, GroupedChannels]:
    """Half-duplex DL-only and UL-only blocks over the full nt+nr array."""
    n = config.nt + config.nr
    full = slice(0, n)
    dl_block = _grouped(channels, [list(range(2 * config.k))], [[]],
                        n, n, full, full, with_si=False)
    ul_block = _grouped(channels, [[]], [list(range(2 * config.l))],
                        n, n, full, full, with_si=False)
    return dl_block, ul_block


def normalize(gch: GroupedChannels) -> GroupedChannels:
    """Noise-normalized copy: channels divided by sigma so sigma2 becomes 1.

    The optimizer works on this view to keep conic coefficients well
    scaled; powers stay in watts.  Rate oracles give identical values on
    raw and normalized channels.
    """
    s = math.sqrt(gch.sigma2)
    return dataclasses.replace(
        gch,
        sigma2=1.0,
        h=tuple(a / s for a in gch.h),
        g=tuple(a / s for a in gch.g),
        f=tuple(a / s for a in gch.f),
        g_si=None if gch.g_si is None else gch.g_si / s,
        h_eve=tuple(a / s for a in gch.h_eve),
        g_eve=tuple(tuple(a / s for a in per) for per in gch.g_eve),
        h_bar=tuple(a / gch.sigma2 for a in gch.h_bar),
        g_bar=tuple(tuple(a / gch.sigma2 for a in per) for per in gch.g_bar),
    )
