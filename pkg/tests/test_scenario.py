import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsec.config import SystemConfig
from fdsec.scenario import (
    derive_scsi,
    group_conventional,
    group_hd_blocks,
    group_proposed,
    noise_power,
    normalize,
    pathloss_db,
    pathloss_gain,
    sample_channels,
    sample_topology,
)


def test_pathloss_reference_values():
    assert pathloss_db(1.0, los=True) == pytest.approx(103.8)
    assert pathloss_db(1.0, los=False) == pytest.approx(145.4)
    assert pathloss_db(0.1, los=True) == pytest.approx(103.8 - 20.9)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        pathloss_db(0.0, los=True)
    with pytest.raises(ValueError):
        pathloss_db(-5.0, los=False)


def test_noise_power_reference_values():
    assert noise_power(-174.0, 1e7) == pytest.approx(10 ** (-13.4), rel=1e-12)
    assert noise_power(0.0, 1.0) == pytest.approx(1e-3)
    assert noise_power(-174.0, 1.0) == pytest.approx(10 ** ((-174 - 30) / 10))
    with pytest.raises(ValueError):
        noise_power(-174.0, 0.0)


def test_topology_counts_and_zones(default_config):
    topo = sample_topology(default_config, 7)
    assert topo.dl_pos.shape == (4, 2)
    assert topo.ul_pos.shape == (4, 2)
    assert topo.eve_pos.shape == (2, 2)
    assert (np.sort(topo.dl_zone) == [1, 1, 2, 2]).all()
    assert (np.sort(topo.ul_zone) == [1, 1, 2, 2]).all()
    assert set(topo.eve_zone) == {1, 2}
    r1 = topo.dl_bs_dist_m[topo.dl_zone == 1]
    r2 = topo.dl_bs_dist_m[topo.dl_zone == 2]
    assert (r1 <= default_config.inner_radius_m + 1e-9).all()
    assert (r2 >= default_config.inner_radius_m - 1e-9).all()


def test_topology_deterministic(default_config):
    a = sample_topology(default_config, 11)
    b = sample_topology(default_config, 11)
    assert np.array_equal(a.dl_pos, b.dl_pos)
    assert np.array_equal(a.ul_pos, b.ul_pos)
    assert np.array_equal(a.eve_pos, b.eve_pos)


def test_topology_radius_bounds_over_many_seeds(default_config):
    worst = 0.0
    best = np.inf
    for seed in range(1000):
        topo = sample_topology(default_config, seed)
        dists = np.concatenate([topo.dl_bs_dist_m, topo.ul_bs_dist_m, topo.eve_bs_dist_m])
        worst = max(worst, dists.max())
        best = min(best, dists.min())
    assert worst <= default_config.cell_radius_m + 1e-9
    assert best >= default_config.min_bs_distance_m - 1e-9


def test_topology_rejection_budget(monkeypatch):
    import fdsec.scenario as S

    monkeypatch.setattr(S, "_MAX_REJECTIONS", 500)
    cfg = SystemConfig(min_bs_distance_m=49.999, inner_radius_m=50.0)
    with pytest.raises(RuntimeError):
        sample_topology(cfg, 0)


def test_config_scalar_ne_broadcast():
    from fdsec.config import config_from_dict

    cfg = config_from_dict({"m": 3, "ne": 2})
    assert cfg.ne == (2, 2, 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_channel_determinism(seed):
    cfg = SystemConfig()
    topo = sample_topology(cfg, seed)
    a = sample_channels(topo, cfg, seed)
    b = sample_channels(topo, cfg, seed)
    assert np.array_equal(a.h_full, b.h_full)
    assert np.array_equal(a.g_si, b.g_si)
    assert all(np.array_equal(x, y) for x, y in zip(a.g_eve, b.g_eve))


def test_channel_mean_power_matches_pathloss(default_config):
    topo = sample_topology(default_config, 3)
    n = default_config.nt + default_config.nr
    acc = np.zeros(4)
    draws = 10_000
    for seed in range(draws):
        ch = sample_channels(topo, default_config, seed)
        acc += np.sum(np.abs(ch.h_full) ** 2, axis=1)
    mean = acc / draws
    expected = n * pathloss_gain(topo.dl_bs_dist_m, los=True)
    assert np.allclose(mean, expected, rtol=0.03)


def test_rician_loop_channel_power_split(default_config):
    topo = sample_topology(default_config, 3)
    draws = 10_000
    acc = np.zeros((default_config.nt, default_config.nr), dtype=complex)
    acc2 = 0.0
    for seed in range(draws):
        ch = sample_channels(topo, default_config, seed)
        acc += ch.g_si
        acc2 += float(np.mean(np.abs(ch.g_si) ** 2))
    mean = acc / draws
    det_power = float(np.mean(np.abs(mean) ** 2))
    total_power = acc2 / draws
    ratio = det_power / (total_power - det_power)
    assert ratio == pytest.approx(10 ** 0.5, rel=0.03)
    assert total_power == pytest.approx(1.0, rel=0.03)


def test_derive_scsi_second_moments(default_config):
    topo = sample_topology(default_config, 5)
    ch = sample_channels(topo, default_config, 5)
    sc = derive_scsi(ch)
    assert sc.scsi
    for m in range(2):
        expected = default_config.ne[m] * ch.gain_eve[m]
        assert sc.h_bar_scale[m] == pytest.approx(expected, rel=1e-12)
    assert (sc.g_bar >= 0).all()
    assert sc.h_eve_full == ()


def test_derive_scsi_zero_gain_channel(default_config):
    topo = sample_topology(default_config, 5)
    ch = sample_channels(topo, default_config, 5)
    ch0 = dataclasses.replace(ch, gain_eve=np.zeros_like(ch.gain_eve))
    sc = derive_scsi(ch0)
    assert np.all(sc.h_bar_scale == 0.0)


def test_proposed_grouping_pairs_near_dl_with_far_ul(default_config):
    topo = sample_topology(default_config, 9)
    ch = sample_channels(topo, default_config, 9)
    g = group_proposed(ch, default_config)
    k, l = default_config.k, default_config.l
    assert g.dl_ids == ((0, 1), (2, 3))                 # zone-1 DL then zone-2 DL
    assert set(g.ul_ids[0]) == set(range(l, 2 * l))     # far UL with near DL
    assert set(g.ul_ids[1]) == set(range(0, l))
    # SIC relabeling: descending receive-channel power inside each group
    for i in range(2):
        norms = np.sum(np.abs(g.g[i]) ** 2, axis=1)
        assert (np.diff(norms) <= 1e-12).all()


def test_conventional_and_hd_groupings(default_config):
    topo = sample_topology(default_config, 9)
    ch = sample_channels(topo, default_config, 9)
    conv = group_conventional(ch, default_config)
    assert conv.group_sizes() == ((4, 4),)
    hd_dl, hd_ul = group_hd_blocks(ch, default_config)
    assert hd_dl.group_sizes() == ((4, 0),)
    assert hd_ul.group_sizes() == ((0, 4),)
    assert hd_dl.n_tx == default_config.nt + default_config.nr
    assert hd_dl.g_si is None and hd_ul.g_si is None


def test_normalize_preserves_rates(default_config):
    from fdsec.rates import DesignPoint, dl_rate, ul_rates

    topo = sample_topology(default_config, 13)
    ch = sample_channels(topo, default_config, 13)
    g = group_proposed(ch, default_config)
    gn = normalize(g)
    assert gn.sigma2 == 1.0
    rng = np.random.default_rng(0)
    pt = DesignPoint(
        w=tuple((rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))) * 0.1
                for _ in range(2)),
        V=tuple((rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))) * 0.02
                for _ in range(2)),
        rho=tuple(rng.uniform(0.1, 0.5, 2) for _ in range(2)),
        tau=(0.5, 0.5))
    for i in range(2):
        for k in range(2):
            assert dl_rate(gn, pt, i, k) == pytest.approx(dl_rate(g, pt, i, k), rel=1e-9)
        assert np.allclose(ul_rates(gn, pt, i), ul_rates(g, pt, i), rtol=1e-9)
