"""Credential-protected off-chain data host.

Objects live in memory under unguessable tokens (128 bits) and are served
either in-process (``movsc-store://<token>`` URLs) or over a loopback HTTP
endpoint, ``GET /objects/<token>`` with the password in the
``X-Data-Password`` header (hex).  No TLS: the HTTP mode is for local
integration runs only.
"""

from __future__ import annotations

import base64
import hmac
import io
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import BinaryIO, Callable

from . import crypto

SCHEME = "movsc-store://"
PASSWORD_HEADER = "X-Data-Password"
TOKEN_BYTES = 16


class DataStoreError(Exception):
    pass


class NotFound(DataStoreError):
    pass


class AccessDenied(DataStoreError):
    pass


class StorageFull(DataStoreError):
    pass


class SimulationOnly(DataStoreError):
    pass


@dataclass(frozen=True)
class StoredObject:
    url_token: str
    password: bytes
    content: bytes

    @property
    def content_length(self) -> int:
        return len(self.content)


Mutation = Callable[[bytes], bytes]


def flip_byte(offset: int, mask: int = 0x01) -> Mutation:
    if not 1 <= mask <= 0xFF:
        raise ValueError("mask must flip at least one bit")

    def mutate(content: bytes) -> bytes:
        buf = bytearray(content)
        buf[offset % len(buf)] ^= mask
        return bytes(buf)

    return mutate


def truncate(length: int) -> Mutation:
    return lambda content: content[:length]


def identity_mutation(content: bytes) -> bytes:
    return content


class DataStore:
    def __init__(
        self,
        capacity: int | None = None,
        rng: crypto.Rng | None = None,
        simulation: bool = False,
    ):
        self.capacity = capacity
        self.simulation = simulation
        self._rng = rng
        self._objects: dict[str, StoredObject] = {}
        self._used = 0
        self._lock = threading.Lock()

    def put(self, content: bytes, password: bytes) -> str:
        content = bytes(content)
        with self._lock:
            if self.capacity is not None and self._used + len(content) > self.capacity:
                raise StorageFull(f"{self._used + len(content)} > {self.capacity} bytes")
            token = base64.urlsafe_b64encode(crypto.random_bytes(TOKEN_BYTES, self._rng)).decode().rstrip("=")
            self._objects[token] = StoredObject(token, bytes(password), content)
            self._used += len(content)
        return token

    def url_for(self, token: str) -> str:
        return SCHEME + token

    def _get(self, token: str) -> StoredObject:
        obj = self._objects.get(token)
        if obj is None:
            raise NotFound(token)
        return obj

    def retrieve_data(self, url_token: str, password: bytes) -> BinaryIO:
        obj = self._get(url_token)
        if not hmac.compare_digest(obj.password, bytes(password)):
            raise AccessDenied(url_token)
        return io.BytesIO(obj.content)

    def tamper(self, url_token: str, mutation: Mutation) -> None:
        if not self.simulation:
            raise SimulationOnly("tamper is only available in simulation mode")
        with self._lock:
            obj = self._get(url_token)
            content = mutation(obj.content)
            self._used += len(content) - len(obj.content)
            self._objects[url_token] = StoredObject(url_token, obj.password, content)

    def serve_http(self, host: str = "127.0.0.1", port: int = 0) -> "HttpDataServer":
        return HttpDataServer(self, host, port)


class _Handler(BaseHTTPRequestHandler):
    store: DataStore

    def do_GET(self) -> None:  # noqa: N802
        prefix = "/objects/"
        if not self.path.startswith(prefix):
            self.send_error(404)
            return
        try:
            password = bytes.fromhex(self.headers.get(PASSWORD_HEADER, ""))
        except ValueError:
            self.send_error(403)
            return
        try:
            stream = self.store.retrieve_data(self.path[len(prefix):], password)
        except NotFound:
            self.send_error(404)
            return
        except AccessDenied:
            self.send_error(403)
            return
        body = stream.getvalue()
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        view = memoryview(body)
        for start in range(0, len(view), 1 << 16):
            self.wfile.write(view[start : start + (1 << 16)])

    def log_message(self, format, *args):  # noqa: A002
        pass


class HttpDataServer:
    """Loopback HTTP front end for a :class:`DataStore`; a context manager."""

    def __init__(self, store: DataStore, host: str, port: int):
        handler = type("Handler", (_Handler,), {"store": store})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def url_for(self, token: str) -> str:
        return f"{self.base_url}/objects/{token}"

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "HttpDataServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def http_retrieve(url: str, password: bytes, timeout: float = 30.0) -> BinaryIO:
    req = urllib.request.Request(url, headers={PASSWORD_HEADER: bytes(password).hex()})
    try:
        return urllib.request.urlopen(req, timeout=timeout)
    except urllib.error.HTTPError as exc:
        if exc.code == 404:
            raise NotFound(url) from exc
        if exc.code == 403:
            raise AccessDenied(url) from exc
        raise DataStoreError(f"{url}: HTTP {exc.code}") from exc


class Resolver:
    """Maps data URLs to byte streams for clients, notaries and peers."""

    def __init__(self, store: DataStore | None = None, timeout: float = 30.0):
        self.store = store
        self.timeout = timeout

    def __call__(self, url: str | bytes, password: bytes) -> BinaryIO:
        if isinstance(url, bytes):
            url = url.decode("utf-8")
        if url.startswith(SCHEME):
            if self.store is None:
                raise NotFound(f"no in-process store for {url}")
            return self.store.retrieve_data(url[len(SCHEME):], password)
        if url.startswith(("http://", "https://")):
            return http_retrieve(url, password, self.timeout)
        raise NotFound(f"unsupported URL scheme: {url}")
