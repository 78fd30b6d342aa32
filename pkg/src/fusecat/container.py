"""Binary container shared by model (.fcm), classifier (.fsv) and descriptor files.

Layout, all integers little-endian::

    offset  size  field
    0       4     magic (b"FCM1", b"FSV1" or b"FDS1")
    4       2     format version
    6       2     flags (reserved, 0)
    8       4     item count (layers, classes or rows)
    12      4     header length H in bytes
    16      4     extension length E in bytes (reserved, 0 for now)
    20      8     blob section length B in bytes
    28      4     CRC-32 of header + extension + blob sections
    32      H     UTF-8 JSON header; its "blobs" list gives name, dtype,
                  shape, offset and byte length of every array
    32+H    E     extension section (reserved for weight-import adapters)
    32+H+E  B     raw array data, each array C-ordered little-endian
"""

import json
import struct
import zlib

import numpy as np

from .errors import CorruptFileError

VERSION = 1
_FIXED = struct.Struct("<4sHHIIIQI")
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8"}


def write_container(path, magic, count, header, arrays, extension=b""):
    """Write ``arrays`` (an ordered ``{name: ndarray}``) and a JSON ``header``."""
    blobs = []
    parts = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = arr.dtype.kind + str(arr.dtype.itemsize)
        if code not in _DTYPES:
            raise TypeError(f"unsupported dtype {arr.dtype} for blob {name!r}")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        blobs.append({"name": name, "dtype": code, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(data)})
        parts.append(data)
        offset += len(data)
    head = json.dumps(dict(header, blobs=blobs), sort_keys=True).encode("utf-8")
    blob = b"".join(parts)
    crc = zlib.crc32(blob, zlib.crc32(extension, zlib.crc32(head)))
    fixed = _FIXED.pack(magic, VERSION, 0, count, len(head), len(extension), len(blob), crc)
    with open(path, "wb") as fh:
        fh.write(fixed)
        fh.write(head)
        fh.write(extension)
        fh.write(blob)


def read_container(path, magic):
    """Return ``(count, header, arrays)``; any inconsistency raises CorruptFileError."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CorruptFileError(f"{path}: cannot read file ({exc})") from exc
    return parse_container(raw, magic, str(path))


def parse_container(raw, magic, where="<bytes>"):
    if len(raw) < _FIXED.size:
        raise CorruptFileError(f"{where}: truncated header ({len(raw)} bytes)")
    got_magic, version, _flags, count, hlen, elen, blen, crc = _FIXED.unpack_from(raw)
    if got_magic != magic:
        raise CorruptFileError(f"{where}: bad magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise CorruptFileError(f"{where}: unsupported version {version}")
    end = _FIXED.size + hlen + elen + blen
    if len(raw) != end:
        raise CorruptFileError(f"{where}: expected {end} bytes, found {len(raw)} (truncated?)")
    body = memoryview(raw)[_FIXED.size:]
    if zlib.crc32(body) != crc:
        raise CorruptFileError(f"{where}: checksum mismatch")
    try:
        header = json.loads(bytes(body[:hlen]).decode("utf-8"))
        blob = body[hlen + elen:]
        arrays = {}
        for entry in header["blobs"]:
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            shape = tuple(int(s) for s in entry["shape"])
            start, nbytes = int(entry["offset"]), int(entry["nbytes"])
            if nbytes != dtype.itemsize * int(np.prod(shape)) or start + nbytes > blen:
                raise CorruptFileError(f"{where}: blob {entry['name']!r} is out of bounds")
            arr = np.frombuffer(blob[start:start + nbytes], dtype=dtype).reshape(shape)
            arrays[entry["name"]] = arr.astype(dtype.newbyteorder("="))
    except CorruptFileError:
        raise
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{where}: malformed header ({exc})") from exc
    return count, header, arrays
