"""Black-box classifier oracles.

Every oracle exposes ``predict(img) -> probabilities`` and counts its
queries. Outputs are validated: a vector with negative entries, non-finite
entries or a sum away from 1 raises instead of being renormalised.
"""

import base64
import hashlib
import itertools
import json
import queue
import shlex
import socket
import subprocess
import threading
from pathlib import Path

import numpy as np

from colorfool.colorspace import check_rgb

PROB_SUM_TOL = 1e-6

HIST_BINS = 8
N_FEATURES = 3 * HIST_BINS
WEIGHTS_MAGIC = "colorfool-reference"


class OracleError(RuntimeError):
    """The classifier could not produce a prediction."""


class TransportError(OracleError):
    """The remote backend is unreachable, timed out or closed the stream."""


class ProtocolError(OracleError):
    """The remote backend sent a malformed or mismatched response."""


class ProbabilityError(ProtocolError):
    """A probability vector violates its invariants."""


class WeightsFormatError(ValueError):
    pass


def validate_probs(probs):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ProbabilityError(f"probability vector must be 1-d and non-empty, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ProbabilityError("probability vector has non-finite entries")
    if np.any(p < 0):
        raise ProbabilityError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise ProbabilityError(f"probabilities sum to {p.sum():.9f}, expected 1")
    return p


def top1(probs):
    """Index of the most probable class; ties go to the lowest index."""
    return int(np.argmax(np.asarray(probs)))


class Oracle:
    """Base class. Subclasses implement ``_predict``."""

    name = "oracle"

    def __init__(self):
        self._count_lock = threading.Lock()
        self.queries = 0

    def predict(self, img):
        img = check_rgb(img)
        probs = validate_probs(self._predict(img))
        with self._count_lock:
            self.queries += 1
        return probs

    def classify(self, img):
        return top1(self.predict(img))

    def _predict(self, img):
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class FunctionOracle(Oracle):
    """Wrap a plain ``img -> probabilities`` callable."""

    def __init__(self, fn, name="function"):
        super().__init__()
        self._fn = fn
        self.name = name

    def _predict(self, img):
        return self._fn(img)


def softmax(scores):
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def histogram_features(img):
    """Per-channel 8-bin color histogram, each channel normalised to sum 1."""
    img = check_rgb(img)
    bins = (img >> 5).reshape(-1, 3).astype(np.int64)
    counts = np.stack(
        [np.bincount(bins[:, c], minlength=HIST_BINS) for c in range(3)]
    )
    return (counts / bins.shape[0]).reshape(-1)


class ReferenceClassifier(Oracle):
    """Linear softmax classifier over a 24-d color-histogram feature.

    ``weights`` has shape ``(n_classes, 24)``; features are ordered R bins
    0-7, G bins 0-7, B bins 0-7, bin width 32 intensity levels.
    """

    def __init__(self, weights, bias=None, name="reference"):
        super().__init__()
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[1] != N_FEATURES:
            raise ValueError(f"weights must have shape (n_classes, {N_FEATURES})")
        if bias is None:
            bias = np.zeros(weights.shape[0])
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weights.shape[0],):
            raise ValueError("bias must have one entry per class")
        self.weights = weights
        self.bias = bias
        self.name = name

    @property
    def n_classes(self):
        return self.weights.shape[0]

    def scores(self, img):
        return self.weights @ histogram_features(img) + self.bias

    def _predict(self, img):
        return softmax(self.scores(img))

    def save(self, path):
        """Write the weights file.

        Format: a header line ``colorfool-reference <n_classes> <n_features>``
        then one line per class with ``n_features`` weights followed by the
        bias. Lines starting with ``#`` are comments.
        """
        lines = [
            "# one row per class: 24 histogram weights (R0..R7 G0..G7 B0..B7) then bias",
            f"{WEIGHTS_MAGIC} {self.n_classes} {N_FEATURES}",
        ]
        for w, b in zip(self.weights, self.bias):
            lines.append(" ".join(repr(float(x)) for x in (*w, b)))
        Path(path).write_text("\n".join(lines) + "\n")


def load_reference_weights(path):
    rows = []
    header = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 3 or parts[0] != WEIGHTS_MAGIC:
                raise WeightsFormatError(f"{path}:{lineno}: bad header {line!r}")
            try:
                header = (int(parts[1]), int(parts[2]))
            except ValueError:
                raise WeightsFormatError(f"{path}:{lineno}: bad header {line!r}") from None
            if header[1] != N_FEATURES or header[0] < 1:
                raise WeightsFormatError(
                    f"{path}: expected feature length {N_FEATURES}, got {header[1]}"
                )
            continue
        try:
            row = [float(x) for x in line.split()]
        except ValueError:
            raise WeightsFormatError(f"{path}:{lineno}: non-numeric value") from None
        if len(row) != N_FEATURES + 1:
            raise WeightsFormatError(
                f"{path}:{lineno}: expected {N_FEATURES + 1} values, got {len(row)}"
            )
        rows.append(row)
    if header is None:
        raise WeightsFormatError(f"{path}: missing header")
    if len(rows) != header[0]:
        raise WeightsFormatError(f"{path}: header says {header[0]} classes, found {len(rows)}")
    table = np.array(rows)
    return table[:, :N_FEATURES], table[:, N_FEATURES]


def reference_classifier(weights_path):
    weights, bias = load_reference_weights(weights_path)
    return ReferenceClassifier(weights, bias, name=f"ref:{weights_path}")


class CachedOracle(Oracle):
    """Memoise a deterministic oracle by a hash of the image bytes."""

    def __init__(self, oracle):
        super().__init__()
        self.inner = oracle
        self.name = oracle.name
        self._cache = {}
        self._lock = threading.Lock()
        self.hits = 0

    @staticmethod
    def key(img):
        h = hashlib.sha256()
        h.update(repr(img.shape).encode())
        h.update(np.ascontiguousarray(img).tobytes())
        return h.hexdigest()

    def _predict(self, img):
        k = self.key(img)
        with self._lock:
            hit = self._cache.get(k)
            if hit is not None:
                self.hits += 1
                return hit
        probs = self.inner.predict(img)
        probs.setflags(write=False)
        with self._lock:
            self._cache[k] = probs
        return probs

    def close(self):
        self.inner.close()


def cached(oracle):
    return CachedOracle(oracle)


# -- remote oracle ----------------------------------------------------------


def encode_request(request_id, img):
    img = check_rgb(img)
    payload = {
        "id": request_id,
        "width": int(img.shape[1]),
        "height": int(img.shape[0]),
        "pixels": base64.b64encode(np.ascontiguousarray(img).tobytes()).decode("ascii"),
    }
    return (json.dumps(payload) + "\n").encode("utf-8")


def decode_request(line):
    """Parse one request line into ``(id, image)``."""
    msg = json.loads(line)
    width, height = int(msg["width"]), int(msg["height"])
    raw = base64.b64decode(msg["pixels"], validate=True)
    if len(raw) != width * height * 3:
        raise ValueError(f"pixel payload has {len(raw)} bytes, expected {width * height * 3}")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return msg["id"], img


def encode_response(request_id, probs=None, error=None):
    msg = {"id": request_id}
    if error is not None:
        msg["error"] = str(error)
    else:
        msg["probs"] = [float(p) for p in probs]
    return (json.dumps(msg) + "\n").encode("utf-8")


def decode_response(line, expected_id):
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from exc
    if not isinstance(msg, dict) or "id" not in msg:
        raise ProtocolError("response lacks an id")
    if msg["id"] != expected_id:
        raise ProtocolError(f"response id {msg['id']!r} does not match request id {expected_id!r}")
    if "error" in msg:
        raise OracleError(f"backend failed to classify: {msg['error']}")
    if "probs" not in msg or not isinstance(msg["probs"], list):
        raise ProtocolError("response lacks a probs list")
    try:
        return validate_probs(msg["probs"])
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"probs are not numeric: {exc}") from exc


class _SocketConnection:
    def __init__(self, host, port, timeout):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.reader = self.sock.makefile("rb")

    def exchange(self, data):
        try:
            self.sock.sendall(data)
            line = self.reader.readline()
        except OSError as exc:
            raise TransportError(f"socket error: {exc}") from exc
        if not line:
            raise TransportError("connection closed by backend")
        return line

    def close(self):
        self.reader.close()
        self.sock.close()


class _PipeConnection:
    """Talk to a child process over its stdin/stdout."""

    def __init__(self, argv, timeout):
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise TransportError(f"cannot start {argv[0]!r}: {exc}") from exc
        self.timeout = timeout

    def exchange(self, data):
        result = {}

        def read():
            result["line"] = self.proc.stdout.readline()

        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except OSError as exc:
            raise TransportError(f"pipe error: {exc}") from exc
        reader = threading.Thread(target=read, daemon=True)
        reader.start()
        reader.join(self.timeout)
        if reader.is_alive():
            self.proc.kill()
            raise TransportError(f"no response within {self.timeout}s")
        line = result.get("line", b"")
        if not line:
            raise TransportError("backend process closed its output")
        return line

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self.proc.stdout.close()


def _connector(endpoint, timeout):
    if endpoint.startswith("exec:"):
        argv = shlex.split(endpoint[len("exec:"):])
        if not argv:
            raise ValueError("exec: endpoint needs a command")
        return lambda: _PipeConnection(argv, timeout)
    address = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, tcp://host:port or exec:<command>, got {endpoint!r}")
    return lambda: _SocketConnection(host or "127.0.0.1", int(port), timeout)


class RemoteOracle(Oracle):
    """Client for the newline-delimited JSON oracle protocol.

    Each request ``{id, width, height, pixels}`` (pixels are base64 raw RGB
    bytes, row-major) is answered by ``{id, probs}`` or ``{id, error}`` on the
    same connection. Up to ``pool_size`` connections are opened lazily, one
    in-flight request each.
    """

    def __init__(self, endpoint, timeout=30.0, pool_size=1):
        super().__init__()
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        self.endpoint = endpoint
        self.name = f"remote:{endpoint}"
        self._connect = _connector(endpoint, timeout)
        self._idle = queue.LifoQueue()
        self._slots = threading.BoundedSemaphore(pool_size)
        self._all = []
        self._all_lock = threading.Lock()
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()

    def _acquire(self):
        self._slots.acquire()
        try:
            return self._idle.get_nowait()
        except queue.Empty:
            pass
        try:
            conn = self._connect()
        except BaseException:
            self._slots.release()
            raise
        with self._all_lock:
            self._all.append(conn)
        return conn

    def _discard(self, conn):
        with self._all_lock:
            if conn in self._all:
                self._all.remove(conn)
        try:
            conn.close()
        except OSError:
            pass

    def _predict(self, img):
        with self._id_lock:
            request_id = next(self._ids)
        conn = self._acquire()
        try:
            line = conn.exchange(encode_request(request_id, img))
            probs = decode_response(line, request_id)
        except (TransportError, ProtocolError):
            # stream state is unknown after a failure
            self._discard(conn)
            self._slots.release()
            raise
        except BaseException:
            self._idle.put(conn)
            self._slots.release()
            raise
        self._idle.put(conn)
        self._slots.release()
        return probs

    def close(self):
        with self._all_lock:
            conns, self._all = self._all, []
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass


def remote_oracle(endpoint, timeout=30.0, pool_size=1):
    return RemoteOracle(endpoint, timeout=timeout, pool_size=pool_size)


def oracle_from_spec(spec, **kwargs):
    """Build an oracle from ``ref:<weights path>`` or ``remote:<endpoint>``."""
    kind, sep, value = spec.partition(":")
    if not sep or not value:
        raise ValueError(f"oracle spec must be ref:<weights> or remote:<endpoint>, got {spec!r}")
    if kind == "ref":
        return reference_classifier(value)
    if kind == "remote":
        return remote_oracle(value, **kwargs)
    raise ValueError(f"unknown oracle kind {kind!r}")
