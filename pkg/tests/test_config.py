import json
import math

import pytest
from hypothesis import given, strategies as st

from radcom.config import (
    ConfigError,
    RadarConfig,
    beat_frequency,
    doppler_delay,
    link_budget_constants,
    load_config,
    max_range,
    max_velocity,
    range_resolution,
)

C = 299_792_458.0


def test_table_defaults_closed_forms(cfg):
    assert cfg.samples_per_chirp == 2000
    assert max_range(cfg) == pytest.approx(149.896229, rel=1e-9)
    assert range_resolution(cfg) == pytest.approx(0.149896229, rel=1e-9)
    assert max_velocity(cfg) == pytest.approx(48.6676068, rel=1e-9)


def test_beat_frequency_of_70m_target(cfg):
    # 70 m at 1 GHz / 20 us sweeps to about 23.33 MHz
    assert beat_frequency(cfg, 70.0) == pytest.approx(23.33e6, rel=2e-3)
    with pytest.raises(ValueError):
        beat_frequency(cfg, 200.0)


def test_doppler_delay_at_max_velocity_is_quarter_inverse_bandwidth(cfg):
    assert doppler_delay(cfg, max_velocity(cfg)) == pytest.approx(1 / (4 * cfg.radar_bw))
    assert doppler_delay(cfg, -10.0) == -doppler_delay(cfg, 10.0)
    with pytest.raises(ValueError):
        doppler_delay(cfg, 60.0)


def test_link_budget_against_db_arithmetic(cfg):
    gamma, gamma_int = link_budget_constants(cfg, 100.0)
    lam_db = 20 * math.log10(C / 77e9)
    expect_db = 24 + 24 + 20 + lam_db - 30 * math.log10(4 * math.pi)
    expect_int_db = 24 + 24 + lam_db - 20 * math.log10(4 * math.pi)
    assert 10 * math.log10(gamma) == pytest.approx(expect_db, abs=1e-9)
    assert 10 * math.log10(gamma_int) == pytest.approx(expect_int_db, abs=1e-9)
    assert gamma_int / gamma == pytest.approx(4 * math.pi / 100.0)


def test_transmit_power_is_11_dbm(cfg):
    assert 10 * math.log10(cfg.P_tx / 1e-3) == pytest.approx(11.0)


def test_comm_band_reduces_radar_band(cfg):
    assert cfg.replace(B_c=20e6).radar_bw == pytest.approx(0.96e9)
    assert cfg.replace(B_c=40e6).radar_bw == pytest.approx(0.92e9)
    assert cfg.replace(B_c=20e6, B_r=0.98e9).radar_bw == 0.98e9


@given(st.floats(min_value=0, max_value=49e6))
def test_radar_band_plus_comm_band_fits(bc):
    c = RadarConfig(B_c=bc)
    assert c.radar_bw + c.B_c <= c.B
    assert c.radar_bw == pytest.approx(c.B - 2 * bc)


@pytest.mark.parametrize("changes, field", [
    ({"B_c": 60e6}, "B_c"),
    ({"T": -1.0}, "T"),
    ({"N": 0}, "N"),
    ({"N": 2.5}, "N"),
    ({"cfar_training": 49}, "cfar_training"),
    ({"K": 11}, "K"),
    ({"N": 1000}, "N"),
    ({"NF": -1.0}, "NF"),
    ({"oversample": 1}, "oversample"),
    ({"B_r": 0.99e9, "B_c": 20e6}, "B_r"),
])
def test_invalid_configs_name_the_field(changes, field):
    with pytest.raises(ConfigError) as err:
        RadarConfig(**changes)
    assert err.value.field == field


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"B_c": 20e6, "N": 99.0, "K": 10}))
    c = load_config(path)
    assert c.B_c == 20e6 and c.N == 99 and isinstance(c.N, int)
    assert c.digest() == RadarConfig(B_c=20e6).digest()


@pytest.mark.parametrize("text", ["", "   \n", "{not json", "[1, 2]", '{"bogus": 1}', '{"B_c": 6e7}'])
def test_load_config_rejects(tmp_path, text):
    path = tmp_path / "c.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_digest_tracks_content(cfg):
    assert cfg.digest() == RadarConfig().digest()
    assert cfg.digest() != cfg.replace(B_c=20e6).digest()
    assert len(cfg.digest()) == 16
