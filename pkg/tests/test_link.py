import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import vlcwdma as v
from vlcwdma.allocator import Candidate
from vlcwdma.geometry import Vec3
from vlcwdma.link import (
    DEFAULT_FRONT_END,
    ELECTRON_CHARGE_C,
    FEC_FLOOR_DB,
    FEC_THRESHOLD_DB,
    UnsupportedLinkError,
)
from vlcwdma.scene import WAVELENGTHS

R, Y, G, B = WAVELENGTHS

# frozen by the independent oracle arithmetic in test_isolated_user_golden
GOLDEN_PREAMP_VAR_A2 = 9.99045e-14
GOLDEN_ISOLATED_SINR_DB = 21.185207231208118

DEFAULT_TX = np.array([7.2, 4.5, 2.7, 2.7])


def manual_table(n_users, n_aps, cells, bandwidth_hz=10e9):
    """GainTable with explicit gains: cells maps (u, b, a, wl) -> gain."""
    shape = (n_users, 4, n_aps, 4)
    dc = np.zeros(shape)
    for (u, b, a, wl), gain in cells.items():
        dc[u, b, a, wl.index] = gain
    bw = np.full(shape, bandwidth_hz)
    return v.GainTable(
        [Vec3(0, 0, 1)] * n_users, 4, n_aps, dc, bw,
        np.ones(shape, bool), np.zeros(shape), np.zeros(shape, bool),
        np.tile(DEFAULT_TX, (n_aps, 1)),
    )


class TestPhotocurrent:
    def test_red_aggregate(self):
        assert v.photocurrent(1.334e-6, 7.2, R) == pytest.approx(0.4 * 7.2 * 1.334e-6, rel=1e-15)
        assert v.photocurrent(1.334e-6, 7.2, R) == pytest.approx(3.841e-6, rel=1e-3)

    def test_zero_gain(self):
        assert v.photocurrent(0.0, 7.2, R) == 0.0

    def test_blue_is_half_of_red(self):
        i_red = v.photocurrent(1e-6, 5.0, R)
        i_blue = v.photocurrent(1e-6, 5.0, B)
        assert i_blue == pytest.approx(0.5 * i_red, rel=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            v.photocurrent(-1e-6, 7.2, R)


class TestNoiseVariance:
    def test_preamp_only(self):
        var = v.noise_variance(0.0, 5e9)
        assert var == pytest.approx((4.47e-12) ** 2 * 5e9, rel=1e-15)
        assert var == pytest.approx(GOLDEN_PREAMP_VAR_A2, rel=1e-6)

    def test_with_shot_term(self):
        var = v.noise_variance(7.742e-6, 5e9)
        shot = 2 * ELECTRON_CHARGE_C * 7.742e-6 * 5e9
        assert shot == pytest.approx(1.240e-14, rel=1e-3)
        assert var == pytest.approx(1.123e-13, rel=1e-3)

    def test_linear_in_bandwidth(self):
        assert v.noise_variance(2e-6, 10e9) == pytest.approx(2 * v.noise_variance(2e-6, 5e9), rel=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            v.noise_variance(-1e-6, 5e9)
        with pytest.raises(ValueError):
            v.noise_variance(1e-6, 0.0)


class TestClassifyLight:
    def test_degenerate_single_user(self):
        table = manual_table(1, 1, {(0, 0, 0, R): 1e-6})
        assignment = {0: Candidate(0, 0, 0, R, 0.0)}
        signal, interference, background = v.classify_light(0, assignment, table)
        assert signal == (0, R)
        assert interference == []
        assert len(background) == 3  # own AP's Y/G/B

    def test_figure_two_scenario(self):
        # three APs, two wavelengths in play: u0 alone on blue,
        # u1 and u2 share red from different APs
        cells = {}
        for a in range(3):
            for b in range(4):
                for wl in WAVELENGTHS:
                    cells[(0, b, a, wl)] = 1e-7
                    cells[(1, b, a, wl)] = 1e-7
                    cells[(2, b, a, wl)] = 1e-7
        table = manual_table(3, 3, cells)
        assignment = {
            0: Candidate(0, 0, 0, B, 0.0),
            1: Candidate(1, 1, 0, R, 0.0),
            2: Candidate(2, 2, 0, R, 0.0),
        }
        _, int0, bg0 = v.classify_light(0, assignment, table)
        assert int0 == []          # sole blue user: background noise only
        assert len(bg0) == 11
        _, int1, _ = v.classify_light(1, assignment, table)
        assert int1 == [(2, R)]    # the other red AP interferes
        _, int2, _ = v.classify_light(2, assignment, table)
        assert int2 == [(1, R)]

    def test_partition_is_complete(self):
        table = manual_table(2, 4, {(0, 0, 0, R): 1e-6, (1, 0, 1, R): 1e-6})
        assignment = {0: Candidate(0, 0, 0, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        signal, interference, background = v.classify_light(0, assignment, table)
        assert 1 + len(interference) + len(background) == 4 * 4

    def test_missing_user(self):
        table = manual_table(1, 1, {(0, 0, 0, R): 1e-6})
        with pytest.raises(KeyError):
            v.classify_light(1, {0: Candidate(0, 0, 0, R, 0.0)}, table)


def isolated_assignment(gain):
    table = manual_table(1, 1, {(0, 3, 0, wl): gain for wl in WAVELENGTHS})
    return table, {0: Candidate(0, 0, 3, R, 0.0)}


class TestSinr:
    def test_isolated_user_golden(self, single_ap_scene):
        # independent arithmetic chain, then the full pipeline to 0.1 dB
        from vlcwdma.scene import default_branches
        g, _ = v.los_contribution(single_ap_scene.room.aps[0], Vec3(0.5, 1.5, 1.0),
                                  default_branches()[3])
        i_sig = 0.4 * 7.2 * g
        i_bg = (0.35 * 4.5 + 0.3 * 2.7 + 0.2 * 2.7) * g
        var = (4.47e-12) ** 2 * 5e9 + 2 * 1.602e-19 * (i_sig + i_bg) * 5e9
        oracle_db = 10 * math.log10(i_sig**2 / var)
        assert i_sig == pytest.approx(3.841e-6, rel=1e-3)
        assert i_bg == pytest.approx(3.901e-6, rel=1e-3)
        assert var == pytest.approx(1.123e-13, rel=1e-3)
        assert oracle_db == pytest.approx(GOLDEN_ISOLATED_SINR_DB, abs=1e-9)

        table = v.gain_matrix(single_ap_scene, [Vec3(0.5, 1.5, 1.0)], max_order=0)
        assignment = v.solve_exact([0], table)
        pipeline_db = v.sinr(0, assignment.entries, table)
        assert pipeline_db == pytest.approx(GOLDEN_ISOLATED_SINR_DB, abs=0.1)
        assert pipeline_db == pytest.approx(GOLDEN_ISOLATED_SINR_DB, abs=1e-6)

    def test_equal_interferer_drops_below_zero_db(self):
        gain = 1.334e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells.update({(0, 3, 1, wl): gain for wl in WAVELENGTHS})
        cells.update({(1, 0, 1, wl): gain for wl in WAVELENGTHS})
        table = manual_table(2, 2, cells)
        assignment = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        assert v.sinr(0, assignment, table) < 0.0

    def test_out_of_fov_interferer_is_harmless(self):
        gain = 1.334e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells[(1, 0, 1, R)] = 1e-6  # interferer visible to its own user only
        table = manual_table(2, 2, cells)
        both = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        alone_table, alone = isolated_assignment(gain)
        # user 0 sees zero gain from AP 2, so the co-channel user changes nothing
        assert v.sinr(0, both, table) == pytest.approx(v.sinr(0, alone, alone_table), abs=1e-12)

    def test_zero_signal_gain_sentinel(self):
        table = manual_table(1, 1, {(0, 0, 0, R): 0.0})
        assignment = {0: Candidate(0, 0, 0, R, 0.0)}
        assert v.sinr(0, assignment, table) == float("-inf")

    def test_interferer_strictly_decreases_and_removal_recovers(self):
        gain = 1.334e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells[(0, 3, 1, R)] = 2e-7   # weak but visible co-channel light
        cells[(1, 0, 1, R)] = 1e-6
        table = manual_table(2, 2, cells)
        both = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        # removal: same table, interfering pair retired to background
        solo = {0: Candidate(0, 0, 3, R, 0.0)}
        with_int = v.sinr(0, both, table)
        without = v.sinr(0, solo, table)
        assert with_int < without
        budget = v.link_budget(0, both, table)
        solo_budget = v.link_budget(0, solo, table)
        # background set differs but total current (hence noise) is identical
        assert budget.noise_var_a2 == pytest.approx(solo_budget.noise_var_a2, rel=1e-15)

    def test_background_enters_noise_only(self):
        gain = 1.334e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells[(0, 3, 1, R)] = 5e-7
        cells[(1, 0, 1, R)] = 1e-6
        cells[(1, 0, 1, Y)] = 1e-6
        table = manual_table(2, 2, cells)
        red = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        yellow = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, Y, 0.0)}
        b_red = v.link_budget(0, red, table)
        b_yel = v.link_budget(0, yellow, table)
        # same radiated field either way: identical noise, different interference
        assert b_red.noise_var_a2 == pytest.approx(b_yel.noise_var_a2, rel=1e-15)
        assert len(b_red.interference_a) == 1 and len(b_yel.interference_a) == 0
        assert b_yel.sinr_db > b_red.sinr_db

    def test_crosstalk_knob_adds_leakage_interference(self):
        gain = 1.334e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells[(0, 3, 1, Y)] = 5e-7   # other-wavelength modulated light
        cells[(1, 0, 1, Y)] = 1e-6
        table = manual_table(2, 2, cells)
        assignment = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, Y, 0.0)}
        ideal = v.link_budget(0, assignment, table)
        leaky_fe = v.ReceiverFrontEnd(crosstalk=0.05)
        leaky = v.link_budget(0, assignment, table, leaky_fe)
        assert leaky.sinr_db < ideal.sinr_db
        # noise is unchanged; only the interference sum grows by (ct*I)^2
        assert leaky.noise_var_a2 == pytest.approx(ideal.noise_var_a2, rel=1e-15)
        i_leak = 0.05 * 0.35 * 4.5 * 5e-7
        expected = 10 * math.log10(
            ideal.signal_a**2 / (ideal.noise_var_a2 + i_leak**2))
        assert leaky.sinr_db == pytest.approx(expected, abs=1e-9)

    def test_power_scaling_formula(self):
        gain = 1.0e-6
        cells = {(0, 3, 0, wl): gain for wl in WAVELENGTHS}
        cells[(0, 3, 1, R)] = 3e-7
        cells[(1, 0, 1, R)] = 1e-6
        k = 3.0
        base = manual_table(2, 2, cells)
        fe = DEFAULT_FRONT_END
        scaled = v.GainTable(
            base.user_positions, 4, 2, base.dc, base.bandwidth_hz,
            base.bandwidth_capped, base.delay_spread_s, base.los_blocked,
            np.asarray(base.tx_power_w * k),
        )
        assignment = {0: Candidate(0, 0, 3, R, 0.0), 1: Candidate(1, 1, 0, R, 0.0)}
        b0 = v.link_budget(0, assignment, base, fe)
        b1 = v.link_budget(0, assignment, scaled, fe)
        i_tot0 = b0.signal_a + sum(b0.interference_a) + sum(b0.background_a)
        expected_lin = (k * b0.signal_a) ** 2 / (
            fe.noise_density_a_rthz**2 * fe.bandwidth_hz
            + 2 * ELECTRON_CHARGE_C * k * i_tot0 * fe.bandwidth_hz
            + k**2 * sum(i**2 for i in b0.interference_a)
        )
        assert b1.sinr_db == pytest.approx(10 * math.log10(expected_lin), abs=1e-9)


class TestDataRate:
    def test_above_threshold(self):
        rate, fec = v.data_rate(4.2e9, 18.0)
        assert rate == pytest.approx(6.0e9, rel=1e-12)
        assert not fec

    def test_room_a_upper_band(self):
        rate, fec = v.data_rate(8.5e9, 20.0)
        assert rate == pytest.approx(12.142857e9, rel=1e-6)
        assert not fec

    def test_fec_penalty(self):
        rate, fec = v.data_rate(4.2e9, 12.0)
        assert rate == pytest.approx(6.0e9 * 0.874, rel=1e-12)
        assert fec

    def test_threshold_boundaries(self):
        _, fec_hi = v.data_rate(1e9, FEC_THRESHOLD_DB)
        assert not fec_hi
        _, fec_lo = v.data_rate(1e9, FEC_FLOOR_DB)
        assert fec_lo
        with pytest.raises(UnsupportedLinkError):
            v.data_rate(1e9, FEC_FLOOR_DB - 0.01)

    def test_threshold_matches_q_squared(self):
        assert abs(FEC_THRESHOLD_DB - 10 * math.log10(36.0)) < 0.05

    def test_rejects_zero_bandwidth(self):
        with pytest.raises(ValueError):
            v.data_rate(0.0, 20.0)

    @given(
        bw=st.floats(1e8, 2e10),
        bw2=st.floats(1e8, 2e10),
        s=st.floats(6.0, 40.0),
        s2=st.floats(6.0, 40.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_bandwidth_and_sinr(self, bw, bw2, s, s2):
        lo_bw, hi_bw = sorted((bw, bw2))
        lo_s, hi_s = sorted((s, s2))
        r1, _ = v.data_rate(lo_bw, lo_s)
        r2, _ = v.data_rate(hi_bw, lo_s)
        r3, _ = v.data_rate(lo_bw, hi_s)
        assert r2 >= r1
        assert r3 >= r1


class TestLinkReport:
    def test_composition(self):
        table, assignment = isolated_assignment(1.334e-6)
        table = v.GainTable(
            table.user_positions, 4, 1, table.dc, np.full(table.dc.shape, 6e9),
            table.bandwidth_capped, table.delay_spread_s, table.los_blocked,
            np.asarray(table.tx_power_w),
        )
        report = v.link_report(0, assignment, table)
        assert report.sinr_db == pytest.approx(21.2, abs=0.1)
        assert report.bandwidth_hz == 6e9
        assert report.rate_bps == pytest.approx(6e9 / 0.7, rel=1e-12)
        assert not report.fec_engaged

    def test_zero_gain_assignment_error(self):
        table = manual_table(1, 1, {(0, 0, 0, R): 0.0})
        with pytest.raises(ValueError):
            v.link_report(0, {0: Candidate(0, 0, 0, R, 0.0)}, table)

    def test_fec_window(self):
        # fec engaged exactly when sinr in [6, 15.6)
        for sinr_db, expect in ((21.0, False), (15.6, False), (15.59, True), (6.0, True)):
            _, fec = v.data_rate(5e9, sinr_db)
            assert fec is expect
