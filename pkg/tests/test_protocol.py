import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from manusim.errors import ValidationError
from manusim.protocol import (
    FRAME_LENGTH,
    PAYLOAD_LENGTH,
    SYNC_BYTE,
    BadChecksum,
    BadSync,
    CommandFrame,
    DecodeError,
    FrameStream,
    InvalidPayload,
    ReservedBitSet,
    ShortFrame,
    crc8,
    decode,
    encode,
)

FIXTURES = Path(__file__).parent / "fixtures"

GOLDEN_HEX = "aa0200ff000000000000ff000000000010"


def crc8_bitwise(data: bytes) -> int:
    """Bit-at-a-time CRC-8 (poly 0x07, init 0x00), independent of the
    table-driven implementation under test."""
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 0x80:
                crc = ((crc << 1) ^ 0x07) & 0xFF
            else:
                crc = (crc << 1) & 0xFF
    return crc


class TestCrc:
    def test_check_value(self):
        # published check value for this polynomial
        assert crc8(b"123456789") == 0xF4
        assert crc8_bitwise(b"123456789") == 0xF4

    def test_empty(self):
        assert crc8(b"") == 0x00

    @given(st.binary(min_size=0, max_size=64))
    def test_matches_bitwise_oracle(self, data):
        assert crc8(data) == crc8_bitwise(data)

    @given(st.binary(min_size=1, max_size=32), st.integers(min_value=0))
    def test_detects_any_single_bit_flip(self, data, seed):
        rng = random.Random(seed)
        bit = rng.randrange(len(data) * 8)
        corrupted = bytearray(data)
        corrupted[bit // 8] ^= 1 << (bit % 8)
        assert crc8(bytes(corrupted)) != crc8(data)


class TestFrameConstruction:
    def test_golden_frame_bytes(self):
        frame = CommandFrame.single(1, 255, 255)
        data = encode(frame)
        assert data.hex() == GOLDEN_HEX
        assert len(data) == FRAME_LENGTH == 17
        assert data[0] == SYNC_BYTE == 0xAA
        # checksum covers the 15 payload bytes only
        assert data[-1] == crc8_bitwise(data[1:-1])

    def test_golden_fixture_file(self):
        stored = (FIXTURES / "golden_single_index_full.bin").read_bytes()
        assert stored == encode(CommandFrame.single(1, 255, 255))
        noop = (FIXTURES / "golden_noop.bin").read_bytes()
        assert noop == encode(CommandFrame.noop())
        assert noop[-1] == 0x00

    def test_payload_layout(self):
        frame = CommandFrame.for_moves({0: (10, 20), 6: (254, 30)})
        data = encode(frame)
        assert data[1] == 0b01000001                    # flags: slots 0 and 6
        assert data[2] == 10 and data[8] == 254          # targets
        assert data[9] == 20 and data[15] == 30          # pwms
        assert len(data) == 1 + PAYLOAD_LENGTH + 1

    def test_single_and_flag_helpers(self):
        frame = CommandFrame.single(3, 100, 50)
        assert frame.slot_flagged(3)
        assert not frame.slot_flagged(2)
        assert frame.flagged_slots() == (3,)
        assert CommandFrame.noop().flagged_slots() == ()

    def test_validation_is_itemized(self):
        with pytest.raises(ValidationError):
            CommandFrame(flags=1 << 7, targets=(0,) * 7, pwms=(0,) * 7)
        with pytest.raises(ValidationError):
            CommandFrame(flags=1, targets=(256, 0, 0, 0, 0, 0, 0), pwms=(1,) * 7)
        with pytest.raises(ValidationError):
            # a flagged slot must carry a usable pwm
            CommandFrame(flags=1, targets=(0,) * 7, pwms=(0,) * 7)
        with pytest.raises(ValidationError) as exc:
            CommandFrame(flags=0, targets=(0,) * 6, pwms=(300, 0, 0, 0, 0, 0, 0))
        assert len(exc.value.errors) == 2


class TestDecode:
    def test_round_trip(self):
        frame = CommandFrame.for_moves({1: (255, 255), 5: (128, 40)})
        assert decode(encode(frame)) == frame

    @given(
        st.dictionaries(
            st.integers(min_value=0, max_value=6),
            st.tuples(
                st.integers(min_value=0, max_value=255),
                st.integers(min_value=1, max_value=255),
            ),
            min_size=0,
            max_size=7,
        )
    )
    def test_round_trip_property(self, moves):
        frame = CommandFrame.for_moves(moves)
        assert decode(encode(frame)) == frame

    def test_error_taxonomy(self):
        golden = bytes.fromhex(GOLDEN_HEX)

        with pytest.raises(BadSync):
            decode(b"\x00" + golden[1:])
        with pytest.raises(ShortFrame):
            decode(golden[:-1])
        bad_crc = golden[:-1] + bytes([golden[-1] ^ 0xFF])
        with pytest.raises(BadChecksum):
            decode(bad_crc)

        # reserved flag bit set, checksum recomputed so it survives the CRC
        payload = bytearray(golden[1:-1])
        payload[0] |= 0x80
        with pytest.raises(ReservedBitSet):
            decode(bytes([SYNC_BYTE]) + payload + bytes([crc8_bitwise(payload)]))

        # flagged slot with pwm 0, checksum valid
        payload = bytearray(golden[1:-1])
        payload[1 + 7 + 1] = 0  # pwms[1], the flagged slot
        with pytest.raises(InvalidPayload):
            decode(bytes([SYNC_BYTE]) + payload + bytes([crc8_bitwise(payload)]))

    def test_every_single_bit_flip_rejected(self):
        golden = bytes.fromhex(GOLDEN_HEX)
        for bit in range(len(golden) * 8):
            corrupted = bytearray(golden)
            corrupted[bit // 8] ^= 1 << (bit % 8)
            with pytest.raises(DecodeError):
                decode(bytes(corrupted))

    def test_decode_scans_to_sync(self):
        golden = bytes.fromhex(GOLDEN_HEX)
        assert decode(b"\x01\x02" + golden) == CommandFrame.single(1, 255, 255)


def split_events(events):
    frames = [e for e in events if isinstance(e, CommandFrame)]
    errors = [e for e in events if isinstance(e, DecodeError)]
    return frames, errors


class TestFrameStream:
    def test_reassembles_split_frames(self):
        frames = [
            CommandFrame.single(0, 1, 2),
            CommandFrame.single(1, 255, 255),
            CommandFrame.for_moves({2: (7, 7), 3: (8, 8)}),
        ]
        data = b"".join(encode(f) for f in frames)
        stream = FrameStream()
        out = []
        for i in range(0, len(data), 3):
            got, _errors = split_events(stream.feed(data[i : i + 3]))
            out.extend(got)
        assert out == frames

    def test_resyncs_after_garbage(self):
        golden = encode(CommandFrame.single(1, 255, 255))
        stream = FrameStream()
        frames, errors = split_events(stream.feed(b"\xde\xad\xbe\xef" + golden))
        assert frames == [CommandFrame.single(1, 255, 255)]
        assert any(isinstance(e, BadSync) for e in errors)

    def test_recovers_after_corrupt_frame(self):
        good = encode(CommandFrame.single(2, 50, 60))
        bad = bytearray(encode(CommandFrame.single(1, 255, 255)))
        bad[5] ^= 0x40  # corrupt a target byte; checksum now fails
        stream = FrameStream()
        frames, errors = split_events(stream.feed(bytes(bad) + good))
        assert frames == [CommandFrame.single(2, 50, 60)]
        assert any(isinstance(e, BadChecksum) for e in errors)

    def test_buffer_stays_bounded(self):
        stream = FrameStream()
        rng = random.Random(1)
        for _ in range(2000):
            chunk = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 9)))
            stream.feed(chunk)
            assert stream.buffered <= 16

    @settings(max_examples=50)
    @given(st.binary(min_size=0, max_size=200), st.integers(min_value=1, max_value=7))
    def test_fuzz_never_crashes(self, noise, chunk):
        stream = FrameStream()
        for i in range(0, len(noise), chunk):
            frames, errors = split_events(stream.feed(noise[i : i + chunk]))
            for f in frames:
                # anything the stream yields must re-encode cleanly
                assert decode(encode(f)) == f
            for e in errors:
                assert isinstance(e, DecodeError)

    def test_interleaved_noise_and_frames(self):
        rng = random.Random(9)
        frames = [
            CommandFrame.single(rng.randrange(7), rng.randrange(256), rng.randrange(1, 256))
            for _ in range(20)
        ]
        blob = b""
        for f in frames:
            blob += bytes(
                b for b in (rng.randrange(256) for _ in range(rng.randrange(4)))
                if b != SYNC_BYTE
            )
            blob += encode(f)
        stream = FrameStream()
        got, _ = split_events(stream.feed(blob))
        assert got == frames
