"""MBR raster codec and 8-bit PGM/PPM import/export."""

import hashlib
import logging
from pathlib import Path

import numpy as np

from src.errors import FormatError
from src.raster import Raster, clamp

log = logging.getLogger(__name__)

MBR_MAGIC = b"MBR1\n"
MBR_DTYPE = "f32le"


def encode_mbr(r: Raster) -> bytes:
    header = (
        f"width={r.width}\nheight={r.height}\nbands={r.bands}\ndtype={MBR_DTYPE}\n\n"
    ).encode("ascii")
    return MBR_MAGIC + header + r.data.astype("<f4").tobytes()


def decode_mbr(blob: bytes) -> Raster:
    if not blob.startswith(MBR_MAGIC):
        raise FormatError("not an MBR1 raster (bad magic)")
    end = blob.find(b"\n\n", len(MBR_MAGIC) - 1)
    if end < 0:
        raise FormatError("MBR header is not terminated by a blank line")

    fields = {}
    for line in blob[len(MBR_MAGIC) : end].decode("ascii").splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed MBR header line {line!r}")
        fields[key.strip()] = value.strip()

    try:
        width, height, bands = (int(fields[k]) for k in ("width", "height", "bands"))
    except (KeyError, ValueError) as e:
        raise FormatError(f"MBR header missing or invalid dimension: {e}") from e
    if fields.get("dtype") != MBR_DTYPE:
        raise FormatError(f"unsupported MBR dtype {fields.get('dtype')!r}")
    if min(width, height, bands) < 1:
        raise FormatError(f"invalid MBR dimensions {width}x{height}x{bands}")

    payload = blob[end + 2 :]
    expected = width * height * bands * 4
    if len(payload) != expected:
        raise FormatError(f"MBR payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype="<f4").reshape(bands, height, width)
    return Raster(samples)


def write_mbr(r: Raster, path: str | Path):
    """Write a raster as MBR1 (f32 little-endian, band-sequential)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_mbr(r))
    log.debug(f"Wrote {r!r} to {path}")


def read_mbr(path: str | Path) -> Raster:
    """Read an MBR1 raster."""
    return decode_mbr(Path(path).read_bytes())


def quantize8(values: np.ndarray) -> np.ndarray:
    """8-bit display quantization round(255 * clamp(v, 0, 1)), halves rounded up."""
    return np.floor(255.0 * np.clip(values, 0.0, 1.0) + 0.5).astype(np.uint8)


def write_pnm(r: Raster, path: str | Path):
    """Export to PGM (single band) or PPM (first three bands) for viewing."""
    path = Path(path)
    if r.bands == 1:
        magic, pixels = b"P5", quantize8(clamp(r).band(0))
    elif r.bands >= 3:
        magic, pixels = b"P6", quantize8(np.moveaxis(clamp(r).data[:3], 0, -1))
    else:
        raise FormatError(f"cannot export a {r.bands}-band raster as PGM or PPM")
    header = magic + f"\n{r.width} {r.height}\n255\n".encode("ascii")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + pixels.tobytes())


def _pnm_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.find(b"\n", pos)
            if pos < 0:
                break
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            break
        tokens.append(blob[start:pos])
    if len(tokens) < count:
        raise FormatError("truncated PNM header")
    return tokens, pos + 1  # single whitespace byte ends the header


def read_pnm(path: str | Path) -> Raster:
    """Import an 8-bit binary PGM (1 band) or PPM (3 bands) as values v/255."""
    blob = Path(path).read_bytes()
    tokens, offset = _pnm_tokens(blob, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM type {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"invalid PNM header: {e}") from e
    if maxval != 255:
        raise FormatError(f"only 8-bit PNM (maxval 255) is supported, got {maxval}")

    channels = 1 if magic == b"P5" else 3
    payload = blob[offset : offset + width * height * channels]
    if len(payload) != width * height * channels:
        raise FormatError("truncated PNM payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Raster(np.moveaxis(pixels, -1, 0).astype(np.float64) / 255.0)


def file_checksum(path: str | Path) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
