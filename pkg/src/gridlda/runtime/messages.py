"""Binary message contract shared by the in-process and socket transports.

Little-endian throughout. Header: u32 magic, u8 message type, u64 payload
length. The payload layouts are fixed so the socket transport is bit-exact
and testable byte for byte.
"""

import struct

import numpy as np

__all__ = [
    "MAGIC",
    "MSG_PACKAGE_REQUEST",
    "MSG_PACKAGE_RESPONSE",
    "MSG_PSI_SYNC",
    "MSG_ALPHA_SYNC",
    "MSG_PHI_DELTA",
    "MessageError",
    "encode_message",
    "decode_header",
    "encode_package_request",
    "decode_package_request",
    "encode_package_response",
    "decode_package_response",
    "encode_psi_sync",
    "decode_psi_sync",
    "encode_alpha_sync",
    "decode_alpha_sync",
    "encode_phi_delta",
    "decode_phi_delta",
    "read_message",
]

MAGIC = 0x50434B31
HEADER = struct.Struct("<IBQ")
HEADER_SIZE = HEADER.size

MSG_PACKAGE_REQUEST = 1
MSG_PACKAGE_RESPONSE = 2
MSG_PSI_SYNC = 3
MSG_ALPHA_SYNC = 4
MSG_PHI_DELTA = 5

_KNOWN_TYPES = frozenset(
    (MSG_PACKAGE_REQUEST, MSG_PACKAGE_RESPONSE, MSG_PSI_SYNC, MSG_ALPHA_SYNC, MSG_PHI_DELTA)
)


class MessageError(ValueError):
    """Malformed frame: bad magic, unknown type, or payload size mismatch."""


def encode_message(msg_type, payload):
    if msg_type not in _KNOWN_TYPES:
        raise MessageError(f"unknown message type {msg_type}")
    return HEADER.pack(MAGIC, msg_type, len(payload)) + payload


def decode_header(buf):
    """(msg_type, payload_len) from a 13-byte header."""
    if len(buf) < HEADER_SIZE:
        raise MessageError(f"short header: {len(buf)} bytes")
    magic, msg_type, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise MessageError(f"bad magic 0x{magic:08x}")
    if msg_type not in _KNOWN_TYPES:
        raise MessageError(f"unknown message type {msg_type}")
    return msg_type, length


# -- payloads ---------------------------------------------------------------


def encode_package_request(block_id, tokens):
    """block_id u32 then (doc_id u32, word_id u32, topic u32) per token."""
    arr = np.asarray(tokens, dtype="<u4")
    if arr.size and (arr.ndim != 2 or arr.shape[1] != 3):
        raise MessageError("tokens must be (doc_id, word_id, topic) triples")
    payload = struct.pack("<I", block_id) + arr.tobytes()
    return encode_message(MSG_PACKAGE_REQUEST, payload)


def decode_package_request(payload):
    if len(payload) < 4 or (len(payload) - 4) % 12 != 0:
        raise MessageError(f"package request payload of {len(payload)} bytes")
    (block_id,) = struct.unpack_from("<I", payload)
    tokens = np.frombuffer(payload, dtype="<u4", offset=4).reshape(-1, 3)
    return block_id, tokens


def encode_package_response(changed):
    """(token index u32, new topic u32) per changed assignment."""
    arr = np.asarray(changed, dtype="<u4")
    if arr.size and (arr.ndim != 2 or arr.shape[1] != 2):
        raise MessageError("changed entries must be (index, topic) pairs")
    return encode_message(MSG_PACKAGE_RESPONSE, arr.tobytes())


def decode_package_response(payload):
    if len(payload) % 8 != 0:
        raise MessageError(f"package response payload of {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<u4").reshape(-1, 2)


def encode_psi_sync(psi):
    return encode_message(MSG_PSI_SYNC, np.asarray(psi, dtype="<u8").tobytes())


def decode_psi_sync(payload):
    if len(payload) % 8 != 0:
        raise MessageError(f"psi payload of {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<u8")


def encode_alpha_sync(alpha):
    return encode_message(MSG_ALPHA_SYNC, np.asarray(alpha, dtype="<f8").tobytes())


def decode_alpha_sync(payload):
    if len(payload) % 8 != 0:
        raise MessageError(f"alpha payload of {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f8")


def encode_phi_delta(triples):
    """(word u32, topic u32, delta i64) per changed count."""
    out = bytearray()
    pack = struct.Struct("<IIq").pack
    for word, topic, delta in triples:
        out += pack(word, topic, delta)
    return encode_message(MSG_PHI_DELTA, bytes(out))


def decode_phi_delta(payload):
    rec = struct.Struct("<IIq")
    if len(payload) % rec.size != 0:
        raise MessageError(f"phi delta payload of {len(payload)} bytes")
    return [rec.unpack_from(payload, off) for off in range(0, len(payload), rec.size)]


def read_message(read_exact):
    """Read one framed message via a read_exact(n) callable."""
    msg_type, length = decode_header(read_exact(HEADER_SIZE))
    payload = read_exact(length) if length else b""
    return msg_type, payload
