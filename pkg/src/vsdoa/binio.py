"""Shared binary artifact container used by dataset and model files.

Layout (little-endian throughout):

    magic (4 bytes) | u32 format version | u32 header length |
    JSON header | payload blobs | u64 checksum

The checksum is an 8-byte blake2b digest over every preceding byte.
Writes are atomic: data goes to a temp file in the target directory and
is renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

CHECKSUM_ALGORITHM = "blake2b-64"


class ArtifactError(Exception):
    """Base class for malformed artifact files."""


class BadMagicError(ArtifactError):
    pass


class VersionError(ArtifactError):
    pass


class TruncatedError(ArtifactError):
    pass


class ChecksumError(ArtifactError):
    pass


def checksum64(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_artifact(path, magic: bytes, version: int, header: dict, blobs) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    header_bytes = encode_header(header)
    body = bytearray()
    body += magic
    body += struct.pack("<I", version)
    body += struct.pack("<I", len(header_bytes))
    body += header_bytes
    for blob in blobs:
        body += blob
    body += checksum64(bytes(body))
    atomic_write_bytes(path, bytes(body))


def read_artifact(path, magic: bytes, version: int) -> tuple[dict, bytes]:
    """Validate and parse an artifact; returns (header, payload bytes)."""
    data = Path(path).read_bytes()
    prefix = 4 + 4 + 4
    if len(data) < prefix + 8:
        raise TruncatedError(f"{path}: file too short to be a valid artifact")
    if data[:4] != magic:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    (file_version,) = struct.unpack_from("<I", data, 4)
    if file_version != version:
        raise VersionError(f"{path}: format version {file_version}, reader supports {version}")
    (header_len,) = struct.unpack_from("<I", data, 8)
    if prefix + header_len + 8 > len(data):
        raise TruncatedError(f"{path}: truncated header")
    body, stored = data[:-8], data[-8:]
    if checksum64(body) != stored:
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupt")
    header = json.loads(body[prefix : prefix + header_len].decode("utf-8"))
    return header, body[prefix + header_len :]
