"""Role-adapter container format.

An adapter maps each role to its reserved token literals and trained
embedding rows. The byte layout is fixed so any consumer (including
non-Python trainers) can read and write it:

    bytes 0..7            magic ``RTADPT01``
    bytes 8..11           uint32 little-endian manifest length H
    bytes 12..12+H        UTF-8 JSON manifest:
                          {
                            "model_fingerprint": str,
                            "embedding_dim": int,
                            "tokens_per_role": int,
                            "roles": [{"name": str, "tokens": [str, ...]}, ...],
                            "payload_sha256": hex str
                          }
    remaining bytes       payload: for each role in manifest order,
                          tokens_per_role * embedding_dim float32
                          little-endian embedding values

``payload_sha256`` is the SHA-256 of the payload bytes; a mismatch means
the file was corrupted or tampered with.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import AdapterFingerprintError, MalformedAdapterError

MAGIC = b"RTADPT01"


@dataclass(frozen=True)
class AdapterFile:
    model_fingerprint: str
    embedding_dim: int
    tokens_per_role: int
    # role name -> token literals, in manifest order
    tokens: dict[str, tuple[str, ...]]
    # role name -> row-major embedding matrix (tokens_per_role x embedding_dim)
    embeddings: dict[str, list[list[float]]]


def write_adapter(
    path: str | Path,
    *,
    model_fingerprint: str,
    embedding_dim: int,
    tokens: dict[str, list[str]],
    embeddings: dict[str, list[list[float]]],
) -> None:
    """Write an adapter container; all roles must share one token count."""
    counts = {len(t) for t in tokens.values()}
    if len(counts) != 1:
        raise MalformedAdapterError("all roles must have the same number of tokens")
    (tokens_per_role,) = counts

    role_order = list(tokens.keys())
    payload = bytearray()
    for role in role_order:
        rows = embeddings[role]
        if len(rows) != tokens_per_role or any(len(r) != embedding_dim for r in rows):
            raise MalformedAdapterError(f"embedding shape mismatch for role {role}")
        for row in rows:
            payload += struct.pack(f"<{embedding_dim}f", *row)

    manifest = {
        "model_fingerprint": model_fingerprint,
        "embedding_dim": embedding_dim,
        "tokens_per_role": tokens_per_role,
        "roles": [{"name": r, "tokens": list(tokens[r])} for r in role_order],
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    header = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_adapter(path: str | Path) -> AdapterFile:
    """Parse an adapter container, verifying structure and payload checksum."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise MalformedAdapterError("bad magic; not an adapter file")
    (header_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + header_len:
        raise MalformedAdapterError("truncated manifest")
    try:
        manifest = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedAdapterError(f"manifest is not valid JSON: {exc}") from exc

    try:
        dim = int(manifest["embedding_dim"])
        tokens_per_role = int(manifest["tokens_per_role"])
        roles = manifest["roles"]
        recorded_sha = manifest["payload_sha256"]
        fingerprint = manifest["model_fingerprint"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedAdapterError(f"manifest missing or malformed field: {exc}") from exc
    if not isinstance(roles, list) or not roles:
        raise MalformedAdapterError("manifest lists no roles")

    payload = raw[12 + header_len :]
    expected_len = len(roles) * tokens_per_role * dim * 4
    if len(payload) != expected_len:
        raise MalformedAdapterError(
            f"payload length {len(payload)} != expected {expected_len}"
        )
    if hashlib.sha256(payload).hexdigest() != recorded_sha:
        raise AdapterFingerprintError("payload checksum mismatch; file corrupted or tampered")

    tokens: dict[str, tuple[str, ...]] = {}
    embeddings: dict[str, list[list[float]]] = {}
    role_bytes = tokens_per_role * dim * 4
    for i, spec in enumerate(roles):
        try:
            name = spec["name"]
            literals = spec["tokens"]
        except (KeyError, TypeError) as exc:
            raise MalformedAdapterError(f"role entry {i} malformed: {exc}") from exc
        if name in tokens:
            raise MalformedAdapterError(f"duplicate role {name}")
        chunk = payload[i * role_bytes : (i + 1) * role_bytes]
        rows = [
            list(struct.unpack(f"<{dim}f", chunk[j * dim * 4 : (j + 1) * dim * 4]))
            for j in range(tokens_per_role)
        ]
        tokens[name] = tuple(literals)
        embeddings[name] = rows

    return AdapterFile(
        model_fingerprint=fingerprint,
        embedding_dim=dim,
        tokens_per_role=tokens_per_role,
        tokens=tokens,
        embeddings=embeddings,
    )
