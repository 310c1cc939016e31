"""Token model served over HTTP, plus a loopback server for tests and demos.

Wire protocol (HTTP/1.1, JSON)::

    POST <endpoint>/v1/logprobs
    {"model": "<id>", "prefix": [ids]}

    -> {"logprobs": [lp_0, ..., lp_{V-1}]}                 full vector
    -> {"topk": [[id, lp], ...], "tail_logmass": lp_tail}  truncated

``null`` (or ``-Infinity``) encodes a zero-probability token.  Truncated
responses spread the tail mass uniformly over unlisted tokens and mark the
model ``approximate``; samplers that need exact acceptance ratios refuse
such models.
"""

import hashlib
import json
import math
import os
import random
import threading
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from .errors import CapabilityError, ConfigError, ProtocolError, TransportError
from .models import TokenModel

ENDPOINT_ENV = "POWERSAMPLE_ENDPOINT"
NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class RemoteModelConfig:
    """Connection settings.  ``token`` is sent as a bearer token when set."""

    endpoint: str = "http://127.0.0.1:8000"
    model: str = "default"
    vocab_size: int = None
    timeout_ms: int = 10_000
    max_retries: int = 3
    backoff_ms: float = 50.0
    cache_capacity: int = 65_536
    max_prefix_len: int = None
    token: str = None
    jitter_seed: int = None
    log_path: str = None

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.cache_capacity < 0:
            raise ConfigError("cache_capacity must be >= 0")
        if self.backoff_ms < 0:
            raise ConfigError("backoff_ms must be >= 0")

    def resolved(self):
        """Copy with the endpoint replaced by ``$POWERSAMPLE_ENDPOINT`` when set."""
        env = os.environ.get(ENDPOINT_ENV)
        if not env:
            return self
        return RemoteModelConfig(**{**asdict(self), "endpoint": env})


def _lp_array(values):
    return np.array([-math.inf if v is None else float(v) for v in values])


def parse_response(payload, vocab_size):
    """Decode one response body into ``(probs, approximate)``.

    Raises :class:`ProtocolError` on malformed or unnormalized payloads.
    """
    if not isinstance(payload, dict):
        raise ProtocolError("response is not a JSON object")
    if "logprobs" in payload:
        lp = _lp_array(payload["logprobs"])
        if vocab_size is not None and lp.shape != (vocab_size,):
            raise ProtocolError(f"expected {vocab_size} logprobs, got {lp.size}")
        if np.isnan(lp).any() or (lp > 1e-12).any():
            raise ProtocolError("logprobs must be finite non-positive numbers or null")
        p = np.exp(lp)
        total = p.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ProtocolError(f"probabilities sum to {total!r}")
        return p / total, False
    if "topk" in payload:
        if vocab_size is None:
            raise ProtocolError("top-k responses need a configured vocab_size")
        p = np.zeros(vocab_size)
        listed = np.zeros(vocab_size, dtype=bool)
        try:
            for tok, lp in payload["topk"]:
                tok = int(tok)
                if not 0 <= tok < vocab_size or listed[tok]:
                    raise ProtocolError(f"bad or repeated token id {tok} in top-k list")
                p[tok] = 0.0 if lp is None else math.exp(float(lp))
                listed[tok] = True
            tail = payload.get("tail_logmass")
            tail = 0.0 if tail is None else math.exp(float(tail))
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed top-k entry: {exc}") from None
        if abs(tail - (1.0 - p.sum())) > NORMALIZATION_TOL:
            raise ProtocolError(f"tail mass {tail!r} disagrees with 1 - sum(top-k) = "
                                f"{1.0 - p.sum()!r}")
        n_rest = vocab_size - listed.sum()
        if n_rest:
            p[~listed] = max(tail, 0.0) / n_rest
        return p / p.sum(), True
    raise ProtocolError("response has neither 'logprobs' nor 'topk'")


class RemoteModel(TokenModel):
    """:class:`TokenModel` whose conditionals come from a logprob service.

    Responses are cached in a bounded LRU keyed by prefix; concurrent
    requests for the same uncached prefix share a single network call.
    Transient failures (connection errors, timeouts, HTTP 5xx and 429) are
    retried with exponential backoff and jitter; the jitter source is seeded
    when ``jitter_seed`` is set.
    """

    def __init__(self, config, session=None):
        self.config = config.resolved()
        self.vocab_size = self.config.vocab_size
        self._url = self.config.endpoint.rstrip("/") + "/v1/logprobs"
        self._cache = OrderedDict()
        self._digests = {}
        self._inflight = {}
        self._lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._jitter = random.Random(self.config.jitter_seed)
        self._local = threading.local()
        self._session = session
        self.approximate = False
        self.stats = {"requests": 0, "retries": 0, "cache_hits": 0}
        # the root probe also reveals a truncated (approximate) service up front
        root = self.next_dist(())
        if self.vocab_size is None:
            self.vocab_size = len(root)
        elif len(root) != self.vocab_size:
            raise ProtocolError(f"service vocabulary {len(root)} != configured {self.vocab_size}")

    # -- TokenModel --

    def next_dist(self, prefix):
        key = tuple(int(v) for v in prefix)
        limit = self.config.max_prefix_len
        if limit is not None and len(key) > limit:
            raise CapabilityError(f"prefix length {len(key)} exceeds the service limit {limit}")
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                self.stats["cache_hits"] += 1
                return hit
            waiter = self._inflight.get(key)
            owner = waiter is None
            if owner:
                waiter = self._inflight[key] = _Pending()
        if not owner:
            return waiter.wait()
        try:
            probs = self._fetch(key)
        except BaseException as exc:
            waiter.fail(exc)
            with self._lock:
                self._inflight.pop(key, None)
            raise
        probs.setflags(write=False)
        with self._lock:
            if self.config.cache_capacity:
                self._cache[key] = probs
                while len(self._cache) > self.config.cache_capacity:
                    self._cache.popitem(last=False)
            self._inflight.pop(key, None)
        waiter.set(probs)
        return probs

    # -- transport --

    def _http(self):
        if self._session is not None:
            return self._session
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def _fetch(self, key):
        body = {"model": self.config.model, "prefix": list(key)}
        headers = {"Content-Type": "application/json"}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        last = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.stats["retries"] += 1
                time.sleep(self._backoff(attempt))
            start = time.perf_counter()
            self.stats["requests"] += 1
            try:
                resp = self._http().post(self._url, json=body, headers=headers,
                                         timeout=self.config.timeout_ms / 1000)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                self._log(key, attempt, None, start, error=last)
                continue
            self._log(key, attempt, resp.status_code, start, body=resp.text)
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code == 413:
                raise CapabilityError(f"service refused prefix of length {len(key)}")
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError:
                raise ProtocolError(f"response is not JSON: {resp.text[:200]!r}") from None
            probs, approx = parse_response(payload, self.config.vocab_size)
            self._check_idempotent(key, probs, payload)
            if approx:
                self.approximate = True
            return probs
        raise TransportError(f"{self._url} unreachable after {self.config.max_retries + 1} "
                             f"attempts ({last})")

    def _backoff(self, attempt):
        with self._lock:
            jitter = self._jitter.random()
        return self.config.backoff_ms / 1000 * 2 ** (attempt - 1) * (0.5 + jitter)

    def _check_idempotent(self, key, probs, payload):
        digest = hashlib.sha1(probs.tobytes()).hexdigest()
        with self._lock:
            seen = self._digests.setdefault(key, (digest, payload))
        if seen[0] != digest:
            self._log(key, None, None, None, error="non-idempotent response",
                      body=json.dumps({"first": seen[1], "second": payload}))
            raise ProtocolError(f"service returned different distributions for prefix {key}")

    def _log(self, key, attempt, status, start, body=None, error=None):
        if not self.config.log_path:
            return
        rec = {"time": time.time(), "prefix": list(key), "attempt": attempt, "status": status}
        if start is not None:
            rec["elapsed_ms"] = round((time.perf_counter() - start) * 1000, 3)
        if body is not None:
            rec["response"] = body
        if error is not None:
            rec["error"] = error
        with self._log_lock, open(self.config.log_path, "a") as fh:
            fh.write(json.dumps(rec) + "\n")

    def clear_cache(self):
        with self._lock:
            self._cache.clear()


class _Pending:
    def __init__(self):
        self._event = threading.Event()
        self._value = self._error = None

    def set(self, value):
        self._value = value
        self._event.set()

    def fail(self, exc):
        self._error = exc
        self._event.set()

    def wait(self):
        self._event.wait()
        if self._error is not None:
            raise self._error
        return self._value


# -- loopback server ----------------------------------------------------------


class LoopbackServer:
    """Serve a local :class:`TokenModel` over the wire protocol on 127.0.0.1.

    Parameters
    ----------
    model : TokenModel
    topk : int, optional
        Reply in truncated mode with this many entries.
    fail_first : int
        Answer the first ``fail_first`` requests with HTTP 503.
    corrupt : float, optional
        Multiply every probability by this factor (to provoke validation).
    """

    def __init__(self, model, topk=None, fail_first=0, corrupt=None, host="127.0.0.1", port=0):
        self.model = model
        self.topk = topk
        self.corrupt = corrupt
        self.n_requests = 0
        self._failures = fail_first
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler())
        self._httpd.daemon_threads = True
        self._thread = None

    @property
    def url(self):
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def respond(self, prefix):
        p = np.asarray(self.model.next_dist(tuple(prefix)), dtype=float)
        if self.corrupt is not None:
            p = p * self.corrupt
        with np.errstate(divide="ignore"):
            lp = np.log(p)
        if self.topk is None:
            return {"logprobs": [None if v == -math.inf else float(v) for v in lp]}
        top = np.argsort(-p, kind="stable")[:self.topk]
        tail = 1.0 - p[top].sum()
        return {"topk": [[int(i), None if lp[i] == -math.inf else float(lp[i])] for i in top],
                "tail_logmass": math.log(tail) if tail > 0 else None}

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            disable_nagle_algorithm = True

            def log_message(self, *args):
                pass

            def do_POST(self):
                with server._lock:
                    server.n_requests += 1
                    fail = server._failures > 0
                    server._failures -= fail
                raw = self.rfile.read(int(self.headers.get("Content-Length") or 0))
                if self.path != "/v1/logprobs":
                    return self._send(404, {"error": "not found"})
                if fail:
                    return self._send(503, {"error": "unavailable"})
                try:
                    body = json.loads(raw)
                    prefix = [int(v) for v in body["prefix"]]
                except (KeyError, TypeError, ValueError):
                    return self._send(400, {"error": "bad request"})
                self._send(200, server.respond(prefix))

            def _send(self, code, obj):
                data = json.dumps(obj).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler
