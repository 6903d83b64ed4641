"""Message types, binary framing, and in-process / TCP socket transports.

Frame layout (little-endian)::

    u32 length            bytes that follow this field
    u8  kind              0 = rates, 1 = spikes, 2 = end
    u64 window_index
    f64 t_start           ms
    f64 dt                ms
    payload
      rates:  u32 n_proxies, u32 n_steps, f64[n_proxies * n_steps] row-major
      spikes: u32 count, then count * (u32 train_id, f64 time)
      end:    empty
"""
import queue
import socket
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import TransportError

RATES, SPIKES, END = 0, 1, 2
_HEAD = struct.Struct("<BQdd")
_LEN = struct.Struct("<I")
_DIMS = struct.Struct("<II")
_SPIKE = np.dtype([("train", "<u4"), ("time", "<f8")])


@dataclass
class CosimMessage:
    kind: int
    window_index: int
    t_start: float
    dt: float
    rates: np.ndarray = None
    spikes: list = field(default_factory=list)


def encode(msg):
    body = _HEAD.pack(msg.kind, msg.window_index, msg.t_start, msg.dt)
    if msg.kind == RATES:
        r = np.ascontiguousarray(msg.rates, dtype="<f8")
        body += _DIMS.pack(*r.shape) + r.tobytes()
    elif msg.kind == SPIKES:
        arr = np.array([tuple(s) for s in msg.spikes], dtype=_SPIKE)
        body += _LEN.pack(len(arr)) + arr.tobytes()
    elif msg.kind != END:
        raise TransportError(f"unknown message kind {msg.kind}", msg.window_index)
    return _LEN.pack(len(body)) + body


def decode(body):
    """Decode a frame body (everything after the length prefix)."""
    try:
        kind, window, t_start, dt = _HEAD.unpack_from(body)
        off = _HEAD.size
        msg = CosimMessage(kind, window, t_start, dt)
        if kind == RATES:
            n_p, n_s = _DIMS.unpack_from(body, off)
            off += _DIMS.size
            msg.rates = np.frombuffer(body, "<f8", n_p * n_s, off).reshape(n_p, n_s).copy()
            off += 8 * n_p * n_s
        elif kind == SPIKES:
            (count,) = _LEN.unpack_from(body, off)
            off += _LEN.size
            arr = np.frombuffer(body, _SPIKE, count, off)
            msg.spikes = [(int(a), float(b)) for a, b in arr]
            off += _SPIKE.itemsize * count
        elif kind != END:
            raise TransportError(f"unknown message kind {kind}", window)
    except struct.error as exc:
        raise TransportError(f"malformed frame: {exc}") from None
    if off != len(body):
        raise TransportError(f"frame has {len(body) - off} trailing bytes", window)
    return msg


class Endpoint:
    """One side of a channel. ``recv`` enforces window indices 0, 1, 2, ...
    per message kind and raises TransportError on any violation."""

    def __init__(self):
        self._expect = {RATES: 0, SPIKES: 0}

    def recv(self, kind=None, timeout=None):
        msg = self._recv(timeout)
        if kind is not None and msg.kind != kind and msg.kind != END:
            raise TransportError(f"expected message kind {kind}, got {msg.kind}", msg.window_index)
        if msg.kind in self._expect:
            want = self._expect[msg.kind]
            if msg.window_index != want:
                raise TransportError(f"out-of-order window: expected {want}, got "
                                     f"{msg.window_index}", msg.window_index)
            self._expect[msg.kind] = want + 1
        return msg

    def close(self):
        pass


class QueueEndpoint(Endpoint):
    def __init__(self, inbox, outbox):
        super().__init__()
        self.inbox, self.outbox = inbox, outbox

    def send(self, msg):
        # messages cross as encoded frames so both transports share the codec
        self.outbox.put(encode(msg))

    def _recv(self, timeout=None):
        try:
            frame = self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError("timed out waiting for peer") from None
        if frame is None:
            raise TransportError("peer closed the channel")
        return decode(frame[_LEN.size:])

    def close(self):
        self.outbox.put(None)


def inprocess_pair():
    """Connected (macro, micro) endpoints backed by queues."""
    a, b = queue.Queue(), queue.Queue()
    return QueueEndpoint(a, b), QueueEndpoint(b, a)


class SocketEndpoint(Endpoint):
    def __init__(self, sock):
        super().__init__()
        self.sock = sock

    def send(self, msg):
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}", msg.window_index) from None

    def _read(self, n):
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout:
                raise TransportError("timed out waiting for peer") from None
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from None
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def _recv(self, timeout=None):
        self.sock.settimeout(timeout)
        (n,) = _LEN.unpack(self._read(_LEN.size))
        return decode(self._read(n))

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class SocketListener:
    """Macro side: listen on ``(host, port)``; port 0 picks a free port."""

    def __init__(self, host="127.0.0.1", port=0):
        try:
            self.sock = socket.create_server((host, port))
        except OSError as exc:
            raise TransportError(f"cannot listen on {host}:{port}: {exc}") from None
        self.host, self.port = self.sock.getsockname()[:2]

    def accept(self, timeout=30.0):
        self.sock.settimeout(timeout)
        try:
            conn, _ = self.sock.accept()
        except OSError as exc:
            raise TransportError(f"no micro endpoint connected: {exc}") from None
        finally:
            self.sock.close()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return SocketEndpoint(conn)


def connect(host, port, timeout=30.0):
    """Micro side: connect to a listening macro endpoint."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from None
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketEndpoint(sock)
