"""Binary command wire protocol.

Frame layout, 17 bytes total:

    offset  size  field
    0       1     sync byte 0xAA
    1       1     flags: bit i set => slot i carries a command; bit 7 reserved, 0
    2       7     targets[0..6], normalized 0..255 position per slot
    9       7     pwms[0..6], drive PWM 0..255 per slot
    16      1     CRC-8 (poly 0x07, init 0x00, MSB first) over bytes 1..15

A flagged slot must carry PWM >= 1; unflagged targets/pwms are don't-care
on the wire but encoded as written.  See docs/protocol.md.
"""

from dataclasses import dataclass

from .errors import ManusimError, ValidationError
from .hand import NUM_SLOTS

SYNC_BYTE = 0xAA
FRAME_LENGTH = 17
PAYLOAD_LENGTH = 15
RESERVED_FLAG_MASK = 0x80
CRC_POLY = 0x07


def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ CRC_POLY) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00, no reflection, no final XOR."""
    crc = 0x00
    for byte in data:
        crc = _CRC_TABLE[crc ^ byte]
    return crc


class DecodeError(ManusimError):
    """Base class for frame decode failures."""


class BadSync(DecodeError):
    """No sync byte found in the buffer."""


class ShortFrame(DecodeError):
    """A sync byte was found but fewer than 17 bytes follow it."""


class BadChecksum(DecodeError):
    """Frame CRC mismatch."""


class ReservedBitSet(DecodeError):
    """Reserved flag bit 7 is set."""


class InvalidPayload(DecodeError):
    """Checksum-valid payload violating frame rules (flagged slot with PWM 0)."""


@dataclass(frozen=True)
class CommandFrame:
    """One decoded command frame."""

    flags: int
    targets: tuple[int, ...]
    pwms: tuple[int, ...]

    def __post_init__(self):
        errors = []
        if not isinstance(self.flags, int) or not 0 <= self.flags <= 0x7F:
            errors.append(f"flags {self.flags!r} outside [0x00, 0x7F]")
        for name, values in (("targets", self.targets), ("pwms", self.pwms)):
            if len(values) != NUM_SLOTS:
                errors.append(f"{name} must have {NUM_SLOTS} entries, got {len(values)}")
            else:
                for i, v in enumerate(values):
                    if not isinstance(v, int) or not 0 <= v <= 255:
                        errors.append(f"{name}[{i}] = {v!r} outside [0, 255]")
        if not errors and isinstance(self.flags, int):
            for slot in range(NUM_SLOTS):
                if self.flags >> slot & 1 and self.pwms[slot] < 1:
                    errors.append(f"slot {slot} flagged with PWM 0")
        if errors:
            raise ValidationError(errors)

    def slot_flagged(self, slot: int) -> bool:
        return bool(self.flags >> slot & 1)

    def flagged_slots(self) -> tuple[int, ...]:
        return tuple(s for s in range(NUM_SLOTS) if self.slot_flagged(s))

    @classmethod
    def noop(cls) -> "CommandFrame":
        return cls(0, (0,) * NUM_SLOTS, (0,) * NUM_SLOTS)

    @classmethod
    def single(cls, slot: int, target: int, pwm: int) -> "CommandFrame":
        if not 0 <= slot < NUM_SLOTS:
            raise ValidationError([f"slot {slot} outside [0, {NUM_SLOTS - 1}]"])
        targets = [0] * NUM_SLOTS
        pwms = [0] * NUM_SLOTS
        targets[slot] = target
        pwms[slot] = pwm
        return cls(1 << slot, tuple(targets), tuple(pwms))

    @classmethod
    def for_moves(cls, moves: dict[int, tuple[int, int]]) -> "CommandFrame":
        """Build a frame from {slot: (target, pwm)}."""
        flags = 0
        targets = [0] * NUM_SLOTS
        pwms = [0] * NUM_SLOTS
        for slot, (target, pwm) in moves.items():
            if not 0 <= slot < NUM_SLOTS:
                raise ValidationError([f"slot {slot} outside [0, {NUM_SLOTS - 1}]"])
            flags |= 1 << slot
            targets[slot] = target
            pwms[slot] = pwm
        return cls(flags, tuple(targets), tuple(pwms))


def encode(frame: CommandFrame) -> bytes:
    payload = bytes([frame.flags, *frame.targets, *frame.pwms])
    return bytes([SYNC_BYTE]) + payload + bytes([crc8(payload)])


def _parse_frame(chunk: bytes) -> CommandFrame:
    # chunk is exactly FRAME_LENGTH bytes starting at a sync byte
    payload = chunk[1:1 + PAYLOAD_LENGTH]
    if crc8(payload) != chunk[FRAME_LENGTH - 1]:
        raise BadChecksum(f"CRC mismatch on candidate frame {chunk.hex()}")
    flags = payload[0]
    if flags & RESERVED_FLAG_MASK:
        raise ReservedBitSet(f"reserved flag bit set in 0x{flags:02x}")
    targets = tuple(payload[1:1 + NUM_SLOTS])
    pwms = tuple(payload[1 + NUM_SLOTS:1 + 2 * NUM_SLOTS])
    for slot in range(NUM_SLOTS):
        if flags >> slot & 1 and pwms[slot] < 1:
            raise InvalidPayload(f"slot {slot} flagged with PWM 0")
    return CommandFrame(flags, targets, pwms)


def decode(data: bytes | bytearray) -> CommandFrame:
    """Decode the first valid frame in a buffer.

    Scans forward for sync bytes, so leading garbage is tolerated.  If no
    candidate parses, raises the error from the first full-length
    candidate (or BadSync / ShortFrame when there is none).
    """
    buf = bytes(data)
    start = buf.find(SYNC_BYTE)
    if start < 0:
        raise BadSync("no sync byte in buffer")
    first_error: DecodeError | None = None
    while start >= 0:
        chunk = buf[start:start + FRAME_LENGTH]
        if len(chunk) < FRAME_LENGTH:
            if first_error is not None:
                raise first_error
            raise ShortFrame(
                f"only {len(chunk)} of {FRAME_LENGTH} bytes after sync at offset {start}"
            )
        try:
            return _parse_frame(chunk)
        except DecodeError as exc:
            if first_error is None:
                first_error = exc
        start = buf.find(SYNC_BYTE, start + 1)
    raise first_error


class FrameStream:
    """Incremental decoder for a byte stream.

    feed() accepts arbitrary chunks and returns an ordered list of decoded
    CommandFrames and DecodeErrors (for skipped garbage and corrupt
    candidates).  At most FRAME_LENGTH - 1 bytes are retained between
    calls, so memory stays bounded regardless of input.
    """

    def __init__(self):
        self._buffer = bytearray()

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    def feed(self, data: bytes | bytearray) -> list[CommandFrame | DecodeError]:
        self._buffer.extend(data)
        events: list[CommandFrame | DecodeError] = []
        buf = self._buffer
        while True:
            start = buf.find(SYNC_BYTE)
            if start < 0:
                if buf:
                    events.append(BadSync(f"skipped {len(buf)} bytes without sync"))
                    buf.clear()
                return events
            if start > 0:
                events.append(BadSync(f"skipped {start} bytes before sync"))
                del buf[:start]
            if len(buf) < FRAME_LENGTH:
                # partial candidate; wait for more bytes
                return events
            try:
                events.append(_parse_frame(bytes(buf[:FRAME_LENGTH])))
                del buf[:FRAME_LENGTH]
            except DecodeError as exc:
                events.append(exc)
                # corrupt candidate: drop one byte and rescan so a real
                # frame overlapping this window is still found
                del buf[:1]
