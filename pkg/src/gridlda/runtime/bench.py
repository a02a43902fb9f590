"""Socket-transport pipeline benchmark.

Streams a synthetic token block through the framed TCP transport at a fixed
client buffer budget y = T * L, sweeping the slot count T. Both sides do
per-token work standing in for serialization and sampling cost (calibrated
once per sweep), so a window of one serializes the two halves (slow), a
huge window shrinks packages until per-package overhead dominates (slow
again), and the best throughput sits between. The measured shape is the
deliverable, not absolute times.
"""

import multiprocessing
import socket
import time

import numpy as np

from . import messages
from .transport import PipelinedSender, SocketChannel, run_server

__all__ = ["run_pipeline_bench", "run_one", "bench_rows_csv", "calibrate_repeats"]

TOKEN_BYTES = 12  # doc u32, word u32, topic u32
# Aim for this much per-side token work per sweep point, enough to dwarf
# scheduling noise without dragging out a five-point sweep.
TARGET_WORK_SECONDS = 0.25


def _work(arr, repeats):
    # LCG hash over the topic column, python-level: a stand-in with a cost
    # per token comparable to real sampling/serialization work.
    h = 0
    for _ in range(repeats):
        for v in arr[:, 2].tolist():
            h = (h * 1103515245 + v + 12345) & 0xFFFFFFFF
    return h


def calibrate_repeats(total_tokens, target_seconds=TARGET_WORK_SECONDS):
    """Pick the hash-pass count so one side's full-block work hits target."""
    probe = np.zeros((4096, 3), dtype="<u4")
    per_token = None
    for _ in range(3):
        started = time.perf_counter()
        _work(probe, 1)
        cost = max(time.perf_counter() - started, 1e-9) / probe.shape[0]
        per_token = cost if per_token is None else min(per_token, cost)
    return max(1, min(200, round(target_seconds / (per_token * total_tokens))))


def _bench_server(ready, repeats, host="127.0.0.1"):
    def handler(msg_type, payload):
        if msg_type != messages.MSG_PACKAGE_REQUEST:
            raise messages.MessageError(f"unexpected message type {msg_type}")
        _, tokens = messages.decode_package_request(payload)
        if tokens.size:
            _work(tokens, repeats)
        return messages.encode_package_response(np.empty((0, 2), dtype="<u4"))

    run_server(handler, host=host, ready=ready, once=True)


def run_one(slots, package_bytes, total_tokens, repeats=None, timeout=60.0):
    """Time one sweep of the synthetic block at (T, L); returns seconds."""
    if repeats is None:
        repeats = calibrate_repeats(total_tokens)
    tokens_per_package = max(1, package_bytes // TOKEN_BYTES)
    block = np.empty((total_tokens, 3), dtype="<u4")
    block[:, 0] = np.arange(total_tokens) // 64
    block[:, 1] = np.arange(total_tokens) % 997
    block[:, 2] = np.arange(total_tokens) % 31
    packages = [
        block[i : i + tokens_per_package]
        for i in range(0, total_tokens, tokens_per_package)
    ]
    ready = multiprocessing.Queue()
    proc = multiprocessing.Process(target=_bench_server, args=(ready, repeats), daemon=True)
    proc.start()
    port = ready.get(timeout=30)

    def encode(tokens):
        _work(tokens, repeats)
        return messages.encode_package_request(0, tokens)

    sock = socket.create_connection(("127.0.0.1", port))
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    channel = SocketChannel(sock, timeout=timeout, encode=encode)
    sender = PipelinedSender(channel, slots)
    started = time.perf_counter()
    sender.run(packages)
    elapsed = time.perf_counter() - started
    channel.close()
    proc.join(timeout=10)
    if proc.is_alive():
        proc.terminate()
    return elapsed


def run_pipeline_bench(budget, t_values, total_tokens=32768, timeout=60.0):
    """Sweep T at fixed budget; rows of (T, L, seconds) with L = budget // T."""
    if budget < 1:
        raise ValueError("budget must be positive")
    repeats = calibrate_repeats(total_tokens)
    rows = []
    for t in t_values:
        if t < 1:
            raise ValueError("slot counts must be positive")
        package_bytes = max(1, budget // t)
        seconds = run_one(t, package_bytes, total_tokens, repeats=repeats, timeout=timeout)
        rows.append((t, package_bytes, seconds))
    return rows


def bench_rows_csv(rows):
    lines = ["T,L,seconds"]
    for t, l, seconds in rows:
        lines.append(f"{t},{l},{seconds:.6f}")
    return "\n".join(lines) + "\n"
