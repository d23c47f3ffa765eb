import math

import numpy as np
import pytest

from modemfuse.channel import (
    ChannelRealization,
    FadingModel,
    ObservationBlock,
    average_snr_db,
    instantaneous_snr_db,
    load_iq_block,
    noise_power_for_snr,
    sample_channel,
    synthesize,
    write_iq_block,
)
from modemfuse.constellation import build_constellation
from modemfuse.errors import ConfigurationError, InputError
from modemfuse.rng import stream

QAM16 = build_constellation("16qam")


def test_rayleigh_average_power():
    rng = np.random.default_rng(0)
    fading = FadingModel.from_average_power(1.0)
    gains = np.concatenate([sample_channel(rng, 10, fading, 1.0).gains for _ in range(10_000)])
    assert gains.size == 100_000
    assert np.mean(gains**2) == pytest.approx(1.0, abs=0.02)


def test_phases_uniform_in_range():
    rng = np.random.default_rng(1)
    phases = np.concatenate([sample_channel(rng, 4, FadingModel(), 1.0).phases for _ in range(5000)])
    assert phases.min() >= -np.pi and phases.max() < np.pi
    assert np.mean(phases) == pytest.approx(0.0, abs=0.05)
    assert np.var(phases) == pytest.approx(np.pi**2 / 3, rel=0.05)


def test_gains_independent_across_sensors():
    rng = np.random.default_rng(2)
    gains = np.array([sample_channel(rng, 4, FadingModel(), 1.0).gains for _ in range(10_000)])
    corr = np.corrcoef(gains.T)
    off_diagonal = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off_diagonal) < 0.05)


@pytest.mark.parametrize("count,noise", [(0, 1.0), (-1, 1.0), (2.5, 1.0), (2, 0.0), (2, -1.0)])
def test_sample_channel_rejects_bad_arguments(count, noise):
    with pytest.raises(ConfigurationError):
        sample_channel(np.random.default_rng(0), count, FadingModel(), noise)


def test_snr_definitions():
    assert average_snr_db(FadingModel.from_average_power(1.0), 1.0) == pytest.approx(0.0, abs=1e-12)
    assert average_snr_db(1.0, 10 ** (-0.5)) == pytest.approx(5.0, abs=1e-12)
    assert average_snr_db(1.0, 0.316) == pytest.approx(5.0, abs=0.01)
    assert instantaneous_snr_db(1.0, 0.1) == pytest.approx(10.0, abs=1e-12)
    assert noise_power_for_snr(5.0) == pytest.approx(10 ** (-0.5))


def test_noiseless_identity_channel():
    channel = ChannelRealization([1.0], [0.0], 1e-30)
    block, idx = synthesize(np.random.default_rng(3), QAM16, channel, 200)
    assert np.max(np.abs(block.samples[0] - QAM16.symbols[idx])) < 1e-12


def test_exact_complex_scaling():
    channel = ChannelRealization([2.0], [np.pi / 6], 1e-30)
    block, idx = synthesize(np.random.default_rng(4), QAM16, channel, 200)
    ratio = block.samples[0] / QAM16.symbols[idx]
    assert np.max(np.abs(ratio - 2 * np.exp(1j * np.pi / 6))) < 1e-12


def test_zero_gain_is_pure_noise():
    channel = ChannelRealization([0.0], [0.3], 1.0)
    block, _ = synthesize(np.random.default_rng(5), QAM16, channel, 100_000)
    r = block.samples[0]
    assert np.mean(np.abs(r) ** 2) == pytest.approx(1.0, rel=0.02)
    # Circular: real and imaginary parts each carry N0/2.
    assert np.var(r.real) == pytest.approx(0.5, rel=0.03)
    assert np.var(r.imag) == pytest.approx(0.5, rel=0.03)


def test_second_moment_per_sensor():
    gains = np.array([0.5, 1.0, 1.7])
    channel = ChannelRealization(gains, [0.1, -2.0, 3.0], 0.3)
    block, _ = synthesize(np.random.default_rng(6), build_constellation("64qam"), channel, 200_000)
    m2 = np.mean(np.abs(block.samples) ** 2, axis=1)
    np.testing.assert_allclose(m2, gains**2 + 0.3, rtol=0.02)


def test_symbols_shared_across_sensors():
    channel = ChannelRealization([1.0, 2.0, 0.5], [0.0, 1.0, -1.0], 1e-30)
    block, idx = synthesize(np.random.default_rng(7), QAM16, channel, 64)
    recovered = block.samples / channel.coefficients[:, None]
    for row in recovered:
        assert np.max(np.abs(row - QAM16.symbols[idx])) < 1e-12


def test_synthesis_deterministic_per_stream():
    channel = ChannelRealization([1.0, 0.4], [0.2, 0.9], 0.5)
    a, ia = synthesize(stream(11, 3, purpose="data"), QAM16, channel, 50)
    b, ib = synthesize(stream(11, 3, purpose="data"), QAM16, channel, 50)
    c, _ = synthesize(stream(11, 4, purpose="data"), QAM16, channel, 50)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(ia, ib)
    assert not np.array_equal(a.samples, c.samples)


def test_observation_block_validation():
    block = ObservationBlock(np.zeros((2, 5)))
    assert (block.sensor_count, block.block_length) == (2, 5)
    with pytest.raises(InputError, match="sensor 1, n=2"):
        bad = np.zeros((2, 5), dtype=complex)
        bad[1, 2] = np.nan
        ObservationBlock(bad)


def test_channel_realization_validation():
    with pytest.raises(ConfigurationError):
        ChannelRealization([1.0, 1.0], [0.0], 1.0)
    with pytest.raises(ConfigurationError):
        ChannelRealization([-1.0], [0.0], 1.0)
    with pytest.raises(ConfigurationError):
        ChannelRealization([1.0], [0.0], 0.0)


class TestIqFiles:
    def test_direct_field_mapping(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("sensor,n,re,im\n0,0,1.0,-1.0\n")
        block = load_iq_block(path, "csv")
        assert block.samples.shape == (1, 1)
        assert block.samples[0, 0] == 1 - 1j

    def test_headerless_and_unordered(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("1,1,4,0\n0,0,1,0\n1,0,3,0\n0,1,2,0\n")
        block = load_iq_block(path)
        np.testing.assert_array_equal(block.samples, [[1, 2], [3, 4]])

    def test_ragged_file_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        rows = ["sensor,n,re,im"]
        rows += [f"0,{n},0.5,0.5" for n in range(500)]
        rows += [f"1,{n},0.5,0.5" for n in range(499)]
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(InputError, match="dimension mismatch"):
            load_iq_block(path)

    @pytest.mark.parametrize("body,match", [
        ("0,0,abc,1\n", ":2:"),
        ("0,0,1\n", "expected 4 fields"),
        ("0,0,nan,1\n", "non-finite"),
        ("0,0,1,1\n0,0,2,2\n", "duplicate"),
        ("-1,0,1,1\n", "negative"),
    ])
    def test_malformed_rows(self, tmp_path, body, match):
        path = tmp_path / "bad.csv"
        path.write_text("sensor,n,re,im\n" + body)
        with pytest.raises(InputError, match=match):
            load_iq_block(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_iq_block(tmp_path / "absent.csv")

    def test_round_trip_bit_exact(self, tmp_path):
        channel = sample_channel(np.random.default_rng(8), 3, FadingModel(), 0.7)
        block, _ = synthesize(np.random.default_rng(9), build_constellation("32qam"), channel, 123)
        path = tmp_path / "rt.csv"
        write_iq_block(block, path)
        loaded = load_iq_block(path)
        assert loaded.samples.shape == (3, 123)
        assert np.array_equal(loaded.samples.view(np.uint64), block.samples.view(np.uint64))

    def test_header_exact(self, tmp_path):
        path = tmp_path / "h.csv"
        write_iq_block(np.array([[1 + 2j]]), path)
        assert path.read_text().splitlines()[0] == "sensor,n,re,im"


def test_average_power_property():
    assert FadingModel.from_average_power(1.0).rayleigh_scale == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ConfigurationError):
        FadingModel(0.0)
