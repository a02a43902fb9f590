"""Binary checkpoint with a whole-file digest.

Layout (little-endian): header {magic, version, topology fingerprint,
iteration}, dimension block, then sections in order: model shards (current
per configuration, plus the cross-configuration base when C > 1), topic
totals per configuration, the prior vector and scalar, label shards per
data row, generator states, and a trailing SHA-256 over everything before
it. Word and topic entries are sorted, so identical state always produces
identical bytes.
"""

import hashlib
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CheckpointError",
    "ChecksumError",
    "TopologyMismatchError",
    "CheckpointData",
    "save_checkpoint",
    "load_checkpoint",
]

FILE_MAGIC = 0x474C4331
VERSION = 1
_DIGEST_SIZE = 32


class CheckpointError(RuntimeError):
    pass


class ChecksumError(CheckpointError):
    pass


class TopologyMismatchError(CheckpointError):
    pass


@dataclass
class CheckpointData:
    fingerprint: bytes
    iteration: int
    num_topics: int
    num_words: int
    num_configs: int
    num_shards: int
    alpha: np.ndarray
    beta: float
    shard_rows: list  # [config][shard] -> {word: {topic: count}}
    global_rows: list  # [shard] -> rows, or None when C == 1
    psi: list  # [config] -> list of K ints
    z_rows: list  # [config][row] -> list of (doc_id, labels)
    rng_states: list  # [config][shard] -> state dict


def _write_rows(out, rows):
    out.write(struct.pack("<I", len(rows)))
    for word in sorted(rows):
        entries = sorted(rows[word].items())
        out.write(struct.pack("<II", word, len(entries)))
        for topic, count in entries:
            out.write(struct.pack("<IQ", topic, count))


def _read_rows(buf):
    (n_words,) = struct.unpack("<I", buf.read(4))
    rows = {}
    for _ in range(n_words):
        word, n_entries = struct.unpack("<II", buf.read(8))
        row = {}
        for _ in range(n_entries):
            topic, count = struct.unpack("<IQ", buf.read(12))
            row[topic] = count
        rows[word] = row
    return rows


def save_checkpoint(data, path):
    out = io.BytesIO()
    out.write(struct.pack("<II", FILE_MAGIC, VERSION))
    if len(data.fingerprint) != 32:
        raise CheckpointError("topology fingerprint must be 32 bytes")
    out.write(data.fingerprint)
    out.write(struct.pack("<Q", data.iteration))
    out.write(
        struct.pack(
            "<IIII", data.num_topics, data.num_words, data.num_configs, data.num_shards
        )
    )
    for config_rows in data.shard_rows:
        for rows in config_rows:
            _write_rows(out, rows)
    if data.num_configs > 1:
        for rows in data.global_rows:
            _write_rows(out, rows)
    for psi in data.psi:
        out.write(np.asarray(psi, dtype="<u8").tobytes())
    out.write(np.asarray(data.alpha, dtype="<f8").tobytes())
    out.write(struct.pack("<d", data.beta))
    for config_z in data.z_rows:
        out.write(struct.pack("<I", len(config_z)))
        for row_docs in config_z:
            out.write(struct.pack("<I", len(row_docs)))
            for doc_id, labels in row_docs:
                out.write(struct.pack("<II", doc_id, len(labels)))
                out.write(np.asarray(labels, dtype="<u4").tobytes())
    for config_states in data.rng_states:
        for state in config_states:
            blob = json.dumps(state, sort_keys=True).encode()
            out.write(struct.pack("<I", len(blob)))
            out.write(blob)
    body = out.getvalue()
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(digest)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _DIGEST_SIZE + 8:
        raise ChecksumError(f"checkpoint {path} is truncated")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"checkpoint {path} failed its checksum")
    buf = io.BytesIO(body)
    magic, version = struct.unpack("<II", buf.read(8))
    if magic != FILE_MAGIC:
        raise CheckpointError(f"checkpoint {path} has bad magic 0x{magic:08x}")
    if version != VERSION:
        raise CheckpointError(f"checkpoint {path} is format version {version}")
    fingerprint = buf.read(32)
    (iteration,) = struct.unpack("<Q", buf.read(8))
    K, V, C, M = struct.unpack("<IIII", buf.read(16))
    shard_rows = [[_read_rows(buf) for _ in range(M)] for _ in range(C)]
    global_rows = [_read_rows(buf) for _ in range(M)] if C > 1 else None
    psi = [
        [int(x) for x in np.frombuffer(buf.read(8 * K), dtype="<u8")] for _ in range(C)
    ]
    alpha = np.frombuffer(buf.read(8 * K), dtype="<f8").copy()
    (beta,) = struct.unpack("<d", buf.read(8))
    z_rows = []
    for _ in range(C):
        (n_rows,) = struct.unpack("<I", buf.read(4))
        rows = []
        for _ in range(n_rows):
            (n_docs,) = struct.unpack("<I", buf.read(4))
            docs = []
            for _ in range(n_docs):
                doc_id, length = struct.unpack("<II", buf.read(8))
                labels = [int(x) for x in np.frombuffer(buf.read(4 * length), dtype="<u4")]
                docs.append((doc_id, labels))
            rows.append(docs)
        z_rows.append(rows)
    rng_states = []
    for _ in range(C):
        states = []
        for _ in range(M):
            (n,) = struct.unpack("<I", buf.read(4))
            states.append(json.loads(buf.read(n)))
        rng_states.append(states)
    if buf.read(1):
        raise CheckpointError(f"checkpoint {path} has trailing bytes")
    return CheckpointData(
        fingerprint=fingerprint,
        iteration=iteration,
        num_topics=K,
        num_words=V,
        num_configs=C,
        num_shards=M,
        alpha=alpha,
        beta=beta,
        shard_rows=shard_rows,
        global_rows=global_rows,
        psi=psi,
        z_rows=z_rows,
        rng_states=rng_states,
    )
