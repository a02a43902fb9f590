"""Package transport: splitting, the T-slot pipelined sender, and the two
channel implementations (deterministic in-process calls and framed TCP).

The sender keeps at most T packages unacknowledged; a timed-out slot is
retransmitted once and then surfaces a transport error.
"""

import queue
import socket
import threading
from collections import deque

from . import messages

__all__ = [
    "TransportError",
    "TIMEOUT",
    "split_token_packages",
    "pack_documents",
    "PipelinedSender",
    "InProcessChannel",
    "SocketChannel",
    "serve_connection",
    "run_server",
]


class TransportError(RuntimeError):
    """A package exhausted its retransmissions."""


class _Timeout:
    def __repr__(self):
        return "TIMEOUT"


TIMEOUT = _Timeout()


def split_token_packages(tokens, package_size):
    """Split a token list into ceil(n / L) contiguous packages."""
    if package_size < 1:
        raise ValueError("package size must be >= 1")
    n = len(tokens)
    return [tokens[i : i + package_size] for i in range(0, n, package_size)] if n else []


def pack_documents(docs, package_size):
    """Greedy whole-document packing into packages of at most L tokens.

    A document longer than L gets a package of its own; documents are never
    split, so each package carries complete per-document context.
    """
    if package_size < 1:
        raise ValueError("package size must be >= 1")
    packages = []
    current, current_tokens = [], 0
    for doc in docs:
        size = len(doc)
        if current and current_tokens + size > package_size:
            packages.append(current)
            current, current_tokens = [], 0
        current.append(doc)
        current_tokens += size
        if current_tokens >= package_size:
            packages.append(current)
            current, current_tokens = [], 0
    if current:
        packages.append(current)
    return packages


class PipelinedSender:
    """Window of T in-flight packages with one retransmission per timeout."""

    def __init__(self, channel, slots):
        if slots < 1:
            raise ValueError("need at least one slot")
        self.channel = channel
        self.slots = slots

    def run(self, packages):
        """Send all packages, return responses aligned with package order."""
        n = len(packages)
        responses = [None] * n
        retried = set()
        in_flight = set()
        next_seq = 0
        pending = n
        while pending:
            while next_seq < n and len(in_flight) < self.slots:
                self.channel.send(next_seq, packages[next_seq])
                in_flight.add(next_seq)
                next_seq += 1
            seq, resp = self.channel.poll()
            if resp is TIMEOUT:
                if seq in retried:
                    raise TransportError(f"package {seq} lost after retransmission")
                retried.add(seq)
                self.channel.send(seq, packages[seq])
            else:
                if seq not in in_flight:
                    raise TransportError(f"response for unknown package {seq}")
                in_flight.discard(seq)
                responses[seq] = resp
                pending -= 1
        return responses


class InProcessChannel:
    """Deterministic channel: FIFO delivery straight into a handler callable."""

    def __init__(self, handler, drop_seqs=()):
        self.handler = handler
        self.queue = deque()
        self.drop_seqs = set(drop_seqs)  # (seq, attempt) pairs to time out
        self.attempts = {}

    def send(self, seq, package):
        self.attempts[seq] = self.attempts.get(seq, 0) + 1
        self.queue.append((seq, package))

    def poll(self):
        if not self.queue:
            raise TransportError("poll on idle channel")
        seq, package = self.queue.popleft()
        if (seq, self.attempts[seq]) in self.drop_seqs:
            return seq, TIMEOUT
        return seq, self.handler(package)


class SocketChannel:
    """Framed request/response channel over one TCP connection.

    A reader thread frames responses; requests and responses match FIFO,
    which the in-order byte stream guarantees. ``timeout`` bounds how long
    poll() waits before reporting the oldest outstanding package lost.
    """

    def __init__(self, sock, timeout=10.0, encode=None):
        self.sock = sock
        self.timeout = timeout
        self.encode = encode or (lambda pkg: pkg)
        self.order = deque()
        self.responses = queue.Queue()
        self.reader = threading.Thread(target=self._read_loop, daemon=True)
        self.reader.start()

    def _read_loop(self):
        try:
            while True:
                msg_type, payload = messages.read_message(self._read_exact)
                self.responses.put((msg_type, payload))
        except (OSError, messages.MessageError, _ClosedError):
            self.responses.put(None)

    def _read_exact(self, n):
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise _ClosedError()
            buf += chunk
        return buf

    def send(self, seq, package):
        self.order.append(seq)
        self.sock.sendall(self.encode(package))

    def poll(self):
        if not self.order:
            raise TransportError("poll with nothing outstanding")
        seq = self.order[0]
        try:
            item = self.responses.get(timeout=self.timeout)
        except queue.Empty:
            self.order.popleft()
            return seq, TIMEOUT
        if item is None:
            raise TransportError("connection closed by peer")
        self.order.popleft()
        return seq, item

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _ClosedError(Exception):
    pass


def serve_connection(conn, handler):
    """Answer framed messages on one connection until the peer closes."""

    def read_exact(n):
        buf = b""
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                raise _ClosedError()
            buf += chunk
        return buf

    try:
        while True:
            msg_type, payload = messages.read_message(read_exact)
            reply = handler(msg_type, payload)
            if reply is not None:
                conn.sendall(reply)
    except (_ClosedError, ConnectionResetError, BrokenPipeError):
        pass
    finally:
        conn.close()


def run_server(handler, host="127.0.0.1", port=0, ready=None, once=True):
    """Accept connections and serve them with ``handler``.

    ``ready``, when given, receives the bound port (a queue-like object with
    put()). With ``once`` the server exits after its first connection ends.
    """
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(4)
    if ready is not None:
        ready.put(srv.getsockname()[1])
    try:
        while True:
            conn, _ = srv.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            serve_connection(conn, handler)
            if once:
                break
    finally:
        srv.close()
