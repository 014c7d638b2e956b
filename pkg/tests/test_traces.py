import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcnet.errors import FormatError, InvalidArgumentError
from plcnet.traces import (
    PacketTrace,
    apply_trace,
    burst_stats,
    read_trace,
    reverse_trace,
    trace_to_frame_mask,
    write_trace,
)

bit_arrays = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=200)


class TestPacketTrace:
    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            PacketTrace(bits=np.array([], dtype=np.uint8))

    def test_rejects_non_binary(self):
        with pytest.raises(InvalidArgumentError):
            PacketTrace(bits=np.array([0, 2, 1]))


class TestReadTrace:
    def test_newline_separated(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0\n1\n0\n")
        np.testing.assert_array_equal(read_trace(p).bits, [0, 1, 0])

    def test_contiguous(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("010")
        np.testing.assert_array_equal(read_trace(p).bits, [0, 1, 0])

    def test_space_separated(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 1 1 0")
        np.testing.assert_array_equal(read_trace(p).bits, [0, 1, 1, 0])

    def test_bad_character(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("0 2 0")
        with pytest.raises(FormatError):
            read_trace(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("  \n ")
        with pytest.raises(FormatError):
            read_trace(p)

    @given(bits=bit_arrays)
    @settings(max_examples=25)
    def test_write_read_round_trip(self, bits, tmp_path_factory):
        p = tmp_path_factory.mktemp("traces") / "t.txt"
        trace = PacketTrace(bits=np.array(bits, dtype=np.uint8))
        write_trace(trace, p)
        np.testing.assert_array_equal(read_trace(p).bits, trace.bits)


class TestFrameMask:
    def test_packet_spans_two_frames(self):
        trace = PacketTrace(bits=np.array([0, 1, 0]))
        np.testing.assert_array_equal(
            trace_to_frame_mask(trace, 6), [False, False, True, True, False, False]
        )

    def test_all_zero(self):
        assert not trace_to_frame_mask(PacketTrace(bits=np.zeros(5, dtype=np.uint8)), 10).any()

    def test_short_trace_pads_false(self):
        mask = trace_to_frame_mask(PacketTrace(bits=np.array([1])), 3)
        np.testing.assert_array_equal(mask, [True, True, False])

    def test_excess_trace_ignored(self):
        mask = trace_to_frame_mask(PacketTrace(bits=np.array([1, 1, 1])), 2)
        np.testing.assert_array_equal(mask, [True, True])

    @given(bit_arrays)
    @settings(max_examples=25)
    def test_lost_duration_doubles(self, bits):
        trace = PacketTrace(bits=np.array(bits, dtype=np.uint8))
        mask = trace_to_frame_mask(trace, 2 * len(bits))
        assert mask.sum() == 2 * trace.bits.sum()


class TestApplyTrace:
    def test_middle_packet_zeroed(self):
        x = np.ones(960)
        out = apply_trace(x, PacketTrace(bits=np.array([0, 1, 0])))
        assert not out[320:640].any()
        assert (out[:320] == 1).all() and (out[640:] == 1).all()

    def test_all_zero_trace_identity(self, rng):
        x = rng.uniform(-1, 1, 960)
        np.testing.assert_array_equal(apply_trace(x, PacketTrace(bits=np.zeros(3, dtype=np.uint8))), x)

    def test_matches_per_sample_oracle(self, rng):
        x = rng.uniform(-1, 1, 1700)
        bits = rng.integers(0, 2, size=4).astype(np.uint8)
        trace = PacketTrace(bits=bits)
        out = apply_trace(x, trace)
        for i in range(x.size):
            packet = i // 320
            lost = packet < len(bits) and bits[packet] == 1
            assert out[i] == (0.0 if lost else x[i])

    @given(bit_arrays)
    @settings(max_examples=25)
    def test_idempotent(self, bits):
        rng = np.random.default_rng(0)
        trace = PacketTrace(bits=np.array(bits, dtype=np.uint8))
        x = rng.uniform(-1, 1, 320 * len(bits))
        once = apply_trace(x, trace)
        np.testing.assert_array_equal(apply_trace(once, trace), once)


class TestBurstStats:
    def test_boundary_120ms_is_low(self):
        trace = PacketTrace(bits=np.array([0] + [1] * 6 + [0]))
        stats = burst_stats(trace)
        assert stats.max_burst_ms == 120 and stats.subset == "low"

    def test_140ms_is_med(self):
        trace = PacketTrace(bits=np.array([1] * 7 + [0]))
        stats = burst_stats(trace)
        assert stats.max_burst_ms == 140 and stats.subset == "med"

    def test_boundary_320ms_is_med(self):
        assert burst_stats(PacketTrace(bits=np.array([1] * 16))).subset == "med"

    def test_340ms_is_high(self):
        trace = PacketTrace(bits=np.array([0, 0] + [1] * 17))
        stats = burst_stats(trace)
        assert stats.max_burst_ms == 340 and stats.subset == "high"

    def test_totals(self):
        trace = PacketTrace(bits=np.array([1, 0, 1, 1, 0]))
        stats = burst_stats(trace)
        assert stats.total_lost_ms == 60
        assert stats.loss_ratio == pytest.approx(0.6)
        assert stats.max_burst_ms == 40

    @given(bit_arrays)
    @settings(max_examples=50)
    def test_subsets_exhaustive_and_exclusive(self, bits):
        stats = burst_stats(PacketTrace(bits=np.array(bits, dtype=np.uint8)))
        matches = [
            stats.max_burst_ms <= 120,
            120 < stats.max_burst_ms <= 320,
            stats.max_burst_ms > 320,
        ]
        assert sum(matches) == 1
        assert stats.subset == ("low", "med", "high")[matches.index(True)]


class TestReverseTrace:
    def test_reverses(self):
        np.testing.assert_array_equal(
            reverse_trace(PacketTrace(bits=np.array([0, 1, 1]))).bits, [1, 1, 0]
        )

    def test_palindrome_unchanged(self):
        trace = PacketTrace(bits=np.array([1, 0, 1]))
        np.testing.assert_array_equal(reverse_trace(trace).bits, trace.bits)

    @given(bit_arrays)
    @settings(max_examples=25)
    def test_involution(self, bits):
        trace = PacketTrace(bits=np.array(bits, dtype=np.uint8))
        np.testing.assert_array_equal(reverse_trace(reverse_trace(trace)).bits, trace.bits)
