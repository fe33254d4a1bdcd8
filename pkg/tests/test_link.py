import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import norm

from occloc.link import (PACKET_BITS, BeaconId, ChannelParams, ManchesterError, PacketError,
                         PacketReceiver, S2pskFrameSample, S2pskWaveform, TraceFormatError,
                         ber_s2psk, blur_penalty, channel_gain, decode_frame, decode_trace,
                         encode_s2psk, led_state_error_prob, manchester_decode,
                         manchester_encode, read_trace, simulate_bits, sinr,
                         trace_to_string, transmit_and_sample)


def roundtrip(bits, p_e=0.0, seed=0):
    wf = S2pskWaveform(bits, clock_rate=120.0, cycles_per_bit=4)
    samples = transmit_and_sample(wf, p_e, 30.0, np.random.default_rng(seed))
    return [decode_frame(s) for s in samples]


# --- S2-PSK codec

def test_bit0_same_phase_bit1_inverted():
    sched = encode_s2psk([0, 1, 0], cycles_per_bit=4)
    n = 8  # half cycles per bit
    assert_array_equal(sched[0, :n], sched[1, :n])
    assert_array_equal(sched[1, n:2 * n], 1 - sched[0, n:2 * n])
    assert_array_equal(sched[0, 2 * n:], sched[1, 2 * n:])


def test_led1_is_the_carrier():
    sched = encode_s2psk([1, 1], cycles_per_bit=2)
    assert_array_equal(sched[0], [1, 0] * 4)


def test_all_zero_id_has_identical_schedules():
    sched = encode_s2psk([0] * 16)
    assert_array_equal(sched[0], sched[1])


def test_xor_truth_table():
    for s1, s2 in itertools.product((0, 1), repeat=2):
        assert decode_frame(S2pskFrameSample(s1, s2)) == s1 ^ s2


def test_sample_rejects_non_binary():
    with pytest.raises(ValueError):
        S2pskFrameSample(2, 0)


def test_codec_identity_exhaustive_short():
    for n in range(1, 13):
        for bits in itertools.product((0, 1), repeat=n):
            assert roundtrip(list(bits)) == list(bits)


def test_codec_identity_random_32():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        bits = rng.integers(0, 2, 32).tolist()
        assert roundtrip(bits) == bits


def test_payload_rate_at_30fps():
    wf = S2pskWaveform([0, 1], clock_rate=120.0, cycles_per_bit=4)
    assert 1.0 / wf.bit_interval == pytest.approx(30.0)
    chips_per_payload_bit = len(manchester_encode([1]))
    assert 30.0 / chips_per_payload_bit == pytest.approx(15.0)


def test_waveform_needs_flicker_free_clock():
    with pytest.raises(ValueError):
        S2pskWaveform([1], clock_rate=60.0)


def test_frame_rate_must_match_bit_interval():
    wf = S2pskWaveform([1, 0], clock_rate=120.0, cycles_per_bit=4)
    with pytest.raises(ValueError):
        transmit_and_sample(wf, 0.0, 25.0, np.random.default_rng(0))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=64))
def test_manchester_roundtrip(bits):
    chips = manchester_encode(bits)
    assert len(chips) == 2 * len(bits)
    assert manchester_decode(chips) == bits


def test_manchester_rejects_invalid_pair():
    with pytest.raises(ManchesterError):
        manchester_decode([1, 1])


# --- packet framing

def test_headers_are_disjoint():
    sl = BeaconId.streetlight(5, 10.0, 25.0).to_bits()[:4]
    fv = BeaconId.vehicle(5, 0.01).to_bits()[:4]
    assert sl != fv


@given(st.integers(0, 4095), st.floats(0.0, 25.0), st.floats(0.0, 255.0))
def test_streetlight_packet_roundtrip(ident, height, spacing):
    b = BeaconId.streetlight(ident, height, spacing)
    back = BeaconId.from_bits(b.to_bits())
    assert back == b
    assert abs(back.lamp_height - height) <= 0.05 + 1e-9
    assert abs(back.spacing - spacing) <= 0.5 + 1e-9
    # quantization is stable under a second pass
    assert BeaconId.streetlight(ident, back.lamp_height, back.spacing) == b


def test_vehicle_packet_area():
    b = BeaconId.vehicle(3, 0.01)
    assert len(b.to_bits()) == PACKET_BITS
    assert BeaconId.from_bits(b.to_bits()).panel_area == pytest.approx(0.01)


def test_packet_field_overflow():
    with pytest.raises(PacketError):
        BeaconId.streetlight(1, 30.0, 10.0)
    with pytest.raises(PacketError):
        BeaconId.from_bits([1, 1, 1, 1] + [0] * 28)


def test_receiver_needs_a_full_unbroken_packet():
    pkt = BeaconId.streetlight(9, 7.0, 30.0)
    chips = manchester_encode(pkt.to_bits())
    rx = PacketReceiver()
    n = len(chips)
    got = [rx.push(k, (k + 11) % n, chips[(k + 11) % n]) for k in range(n)]
    assert all(g is None for g in got[:-1])
    assert got[-1] == pkt

    rx = PacketReceiver()
    for k in range(n - 1):
        rx.push(k, k, chips[k])
    assert rx.push(n + 5, (n - 1), chips[-1]) is None  # gap restarts the run


# --- channel

def test_channel_gain_hand_value():
    H = channel_gain(1, 36e-3 * 24e-3, 20.0, 0.0, 0.0)
    assert H == pytest.approx(2 * 8.64e-4 / (2 * math.pi * 400), rel=1e-12)
    assert H == pytest.approx(6.875e-7, rel=1e-3)


def test_channel_gain_grazing_is_zero():
    assert channel_gain(1, 1e-3, 5.0, math.pi / 2, 0.0) == pytest.approx(0.0, abs=1e-20)


@given(st.floats(0.5, 300), st.floats(0, 1.2), st.floats(0, 1.2), st.floats(0.5, 5))
def test_channel_gain_inverse_square(D, theta, phi, m):
    a = channel_gain(m, 1e-3, D, theta, phi)
    b = channel_gain(m, 1e-3, 2 * D, theta, phi)
    assert a == pytest.approx(4 * b, rel=1e-12)


def test_sinr_hand_value():
    ch = ChannelParams(kappa=0.5, noise_psd=1e-13, bandwidth=1.0, power_conversion=1.0)
    assert sinr(ch, 1e-6, 1.0) == pytest.approx(2.5)


def test_sinr_scaling_and_interference_limit():
    ch = ChannelParams()
    assert sinr(ch, 2e-6, 1.0) == pytest.approx(4 * sinr(ch, 1e-6, 1.0))
    quiet = ChannelParams(noise_psd=1e-40, interferer_gains=(1e-6,))
    assert sinr(quiet, 1e-6, 1.0) == pytest.approx(1.0, rel=1e-9)


def test_sinr_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        sinr(ChannelParams(noise_psd=0.0), 1e-6, 1.0)


def test_sinr_monotone():
    ch = ChannelParams(interferer_gains=(1e-7,))
    p = np.linspace(0.1, 5, 30)
    s = [sinr(ch, 1e-6, x) for x in p]
    assert np.all(np.diff(s) > 0)
    louder = ChannelParams(interferer_gains=(2e-7,))
    assert sinr(louder, 1e-6, 1.0) < sinr(ch, 1e-6, 1.0)


def test_state_error_prob():
    assert led_state_error_prob(0.0) == 0.5
    assert led_state_error_prob(4.0) == pytest.approx(norm.sf(2.0), rel=1e-12)
    assert led_state_error_prob(4.0) == pytest.approx(0.02275, abs=1e-5)
    assert led_state_error_prob(1e4) < 1e-40
    s = np.linspace(0, 40, 200)
    assert np.all(np.diff(led_state_error_prob(s)) < 0)
    with pytest.raises(ValueError):
        led_state_error_prob(-1.0)


def test_blur_penalty():
    assert blur_penalty(0.0) == 1.0
    assert blur_penalty(1.0) < blur_penalty(0.5) < blur_penalty(0.1) < 1.0


# --- BER law

def test_ber_hand_values():
    assert ber_s2psk(0.0) == 0.0
    assert ber_s2psk(0.5) == pytest.approx(0.5)
    assert ber_s2psk(0.1) == pytest.approx(0.18)
    with pytest.raises(ValueError):
        ber_s2psk(0.6, alpha=2.0)


@pytest.mark.parametrize("p_e", [0.01, 0.1, 0.3])
def test_monte_carlo_ber_within_three_sigma(p_e):
    n = 200_000
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, n, dtype=np.int8)
    ber = np.mean(simulate_bits(bits, p_e, rng) != bits)
    p = ber_s2psk(p_e)
    assert abs(ber - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_noisy_sampler_matches_law():
    rng = np.random.default_rng(12)
    bits = rng.integers(0, 2, 30_000).tolist()
    wf = S2pskWaveform(bits)
    out = [decode_frame(s) for s in transmit_and_sample(wf, 0.1, 30.0, rng)]
    ber = np.mean(np.asarray(out) != np.asarray(bits))
    assert abs(ber - 0.18) <= 3 * math.sqrt(0.18 * 0.82 / len(bits))


# --- trace CSV

def test_trace_roundtrip_and_decode():
    rows = [(0.0, "SL-1", 1, 1, 0), (1 / 30, "SL-1", 1, 0, 1), (2 / 30, "SL-1", 0, 0, 1)]
    text = trace_to_string(rows, with_truth=True)
    parsed = list(read_trace(io.StringIO(text)))
    assert [p[2:] for p in parsed] == [(1, 1, 0), (1, 0, 1), (0, 0, 1)]
    bits, truth = decode_trace(io.StringIO(text))["SL-1"]
    assert bits == [0, 1, 0]
    assert truth == [0, 1, 1]


def test_empty_trace():
    assert decode_trace(io.StringIO("")) == {}


def test_bad_state_names_line():
    text = "time,beacon_id,s1,s2\n0.0,SL-1,1,0\n0.1,SL-1,2,0\n"
    with pytest.raises(TraceFormatError) as exc:
        decode_trace(io.StringIO(text))
    assert exc.value.line == 3


def test_bad_header():
    with pytest.raises(TraceFormatError):
        decode_trace(io.StringIO("t,id,a,b\n"))
