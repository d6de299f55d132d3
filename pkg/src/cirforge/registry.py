"""Component registry: version/environment/component queries over HTTP or
in process, with lazy conversion of upstream artifacts.

The service answers three queries:

* versions of a package (union of already-published components and what
  the upstream source can provide),
* variants of one version (the uniform metadata per environment; asking
  converts upstream artifacts on first touch, exactly once),
* one component's metadata or payload bytes.

Publishing accepts a payload archive, reads the embedded ``uniform.meta``,
and indexes it; re-publishing identical bytes is a no-op while rebinding an
id to different bytes is refused.

HTTP surface (all path parts percent-encoded)::

    GET /v1/ping
    GET /v1/<manager>/<name>/versions                  -> JSON list
    GET /v1/<manager>/<name>/<version>/environments    -> JSON list
    GET /v1/<manager>/<name>/<version>/<env>/meta      -> text/plain
    GET /v1/<manager>/<name>/<version>/<env>/payload   -> tgz (Range ok)
    PUT /v1/publish                                    -> JSON {id fields}
"""

from __future__ import annotations

import io
import json
import shutil
import socket
import tarfile
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import quote, unquote
from urllib.request import Request, urlopen
from urllib.error import HTTPError, URLError

from .archive import CHUNK
from .convert import (
    META_MEMBER,
    XDeps,
    convert_deb,
    convert_oci,
    convert_sdist,
    convert_wheel,
)
from .errors import (
    CirError,
    ConversionError,
    FetchError,
    ImmutabilityError,
    NotFoundError,
)
from .model import (
    ComponentId,
    ManagerKind,
    SpecSheet,
    UniformComponentMeta,
    canonicalize_name,
    parse_meta,
    serialize_meta,
)
from .store import LocalStore
from .upstream import NullUpstream, UpstreamArtifact, UpstreamSource
from .versions import Version, sort_versions

__all__ = [
    "RegistryService",
    "RegistryServer",
    "LocalRegistryClient",
    "HttpRegistryClient",
    "RegistryClient",
]

_MANAGER_BY_TAG = {kind.path_tag: kind for kind in ManagerKind}


class RegistryService:
    """Store-backed registry with convert-on-demand from an upstream."""

    def __init__(self, store: LocalStore, upstream: UpstreamSource | None = None,
                 sheet: SpecSheet | None = None, xdeps: XDeps | None = None,
                 interpreters: dict[str, str] | None = None):
        self.store = store
        self.upstream = upstream or NullUpstream()
        # Wheels need a sheet for environment-marker evaluation; default to
        # the machine the registry runs on.
        if sheet is None:
            from .environment import probe_specsheet

            sheet = probe_specsheet()
        self.sheet = sheet
        self.xdeps = xdeps
        self.interpreters = interpreters
        self._converted: set[tuple[ManagerKind, str, str]] = set()
        self._convert_locks: dict[tuple[ManagerKind, str, str], threading.Lock] = {}
        self._guard = threading.Lock()

    # -- queries ------------------------------------------------------------

    def versions(self, manager: ManagerKind, name: str) -> list[Version]:
        """All known versions, store and upstream merged, newest first."""
        name = canonicalize_name(manager, name)
        found: dict[str, Version] = {}
        for raw in self.store.list_versions(manager, name):
            try:
                version = Version(manager, raw)
            except CirError:
                continue
            found.setdefault(version.canonical, version)
        for version in self.upstream.list_versions(manager, name):
            found.setdefault(version.canonical, version)
        return sort_versions(found.values(), reverse=True)

    def variants(self, manager: ManagerKind, name: str,
                 version: Version | str) -> list[UniformComponentMeta]:
        """Uniform metadata for every environment of one version.

        First touch converts whatever the upstream has for that version;
        subsequent calls serve the store index."""
        name = canonicalize_name(manager, name)
        if isinstance(version, str):
            version = Version(manager, version)
        key = (manager, name, version.canonical)
        if key not in self._converted:
            self._convert_version(key, version)
        return self.store.list_variants(manager, name, version.canonical)

    def meta(self, cid: ComponentId) -> UniformComponentMeta:
        found = self.store.get_meta(cid)
        if found is None:
            # The id may name a variant that exists upstream but was never
            # asked for; converting the version fills the index.
            self.variants(cid.manager, cid.name, Version(cid.manager, cid.version))
            found = self.store.get_meta(cid)
        if found is None:
            raise NotFoundError(f"component {cid} not found")
        return found

    def payload_path(self, cid: ComponentId) -> tuple[UniformComponentMeta, Path]:
        meta = self.meta(cid)
        blob = self.store.blob_path(meta.payload_digest)
        if not blob.is_file():
            raise NotFoundError(f"payload {meta.payload_digest} missing for {cid}")
        return meta, blob

    # -- publishing ---------------------------------------------------------

    def publish_archive(self, payload: Path | bytes) -> UniformComponentMeta:
        """Index a payload archive by its embedded uniform.meta."""
        if isinstance(payload, (bytes, bytearray)):
            handle = io.BytesIO(payload)
        else:
            handle = open(payload, "rb")
        try:
            handle.seek(0)
            with tarfile.open(fileobj=handle, mode="r:gz") as tar:
                try:
                    member = tar.extractfile(META_MEMBER)
                except KeyError:
                    member = None
                if member is None:
                    raise ConversionError(
                        f"payload archive has no {META_MEMBER} member")
                meta = parse_meta(member.read().decode("utf-8"))
            handle.seek(0)
            digest = self.store.put_blob(handle)
        finally:
            handle.close()
        size = self.store.blob_path(digest).stat().st_size
        meta = meta.with_payload(digest, size)
        self.store.put_meta(meta)
        return meta

    # -- conversion ---------------------------------------------------------

    def _lock_for(self, key) -> threading.Lock:
        with self._guard:
            return self._convert_locks.setdefault(key, threading.Lock())

    def _convert_version(self, key, version: Version) -> None:
        manager, name, _canonical = key
        with self._lock_for(key):
            if key in self._converted:
                return
            artifacts = self.upstream.artifacts(manager, name, version)
            errors: list[Exception] = []
            wheels = [a for a in artifacts if a.kind == "wheel"]
            sdists = [a for a in artifacts if a.kind == "sdist"]
            others = [a for a in artifacts if a.kind not in ("wheel", "sdist")]
            produced = 0
            for artifact in wheels + others:
                try:
                    produced += self._convert_one(artifact)
                except CirError as exc:
                    errors.append(exc)
            # Source distributions are the fallback, not a sibling variant.
            if not produced and sdists:
                for artifact in sdists:
                    try:
                        produced += self._convert_one(artifact)
                    except CirError as exc:
                        errors.append(exc)
            self._converted.add(key)
            if errors and produced == 0 and not self.store.list_variants(
                    manager, name, version.canonical):
                raise errors[0]

    def _convert_one(self, artifact: UpstreamArtifact) -> int:
        with tempfile.TemporaryDirectory(dir=self.store.tmp_dir,
                                         prefix="convert-") as scratch:
            out = Path(scratch)
            if artifact.kind == "wheel":
                results = [convert_wheel(artifact.path, self.sheet, out,
                                         xdeps=self.xdeps)]
            elif artifact.kind == "sdist":
                results = convert_sdist(artifact.path, self.sheet, out,
                                        interpreters=self.interpreters,
                                        xdeps=self.xdeps)
            elif artifact.kind == "deb":
                results = [convert_deb(artifact.path, xdeps=self.xdeps,
                                       out_dir=out)]
            elif artifact.kind == "oci":
                results = convert_oci(artifact.path, out, xdeps=self.xdeps)
            else:
                raise ConversionError(f"unknown artifact kind {artifact.kind!r}")
            for converted in results:
                self.store.publish(converted.meta, converted.payload_path)
            return len(results)


# ----------------------------------------------------------------------------
# HTTP server


def _parse_manager(tag: str) -> ManagerKind:
    kind = _MANAGER_BY_TAG.get(tag)
    if kind is None:
        raise NotFoundError(f"unknown manager {tag!r}")
    return kind


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: RegistryService  # injected by RegistryServer

    def log_message(self, fmt, *args):  # quiet by default
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    # -- helpers ------------------------------------------------------------

    def _send_json(self, obj, status: int = 200) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, text: str, status: int = 200) -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def _range_start(self) -> int:
        header = self.headers.get("Range", "")
        if not header.startswith("bytes="):
            return 0
        spec = header[len("bytes="):]
        start, _, end = spec.partition("-")
        if not start.isdigit() or end:
            return 0  # only open-ended resume ranges are honored
        return int(start)

    def _path_parts(self) -> list[str]:
        path = self.path.split("?", 1)[0]
        return [unquote(part) for part in path.strip("/").split("/") if part]

    # -- methods --------------------------------------------------------------

    def do_GET(self):  # noqa: N802  (http.server API)
        try:
            self._get()
        except NotFoundError as exc:
            self._send_error_json(404, str(exc))
        except CirError as exc:
            self._send_error_json(502, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:  # pragma: no cover - defensive
            try:
                self._send_error_json(500, f"internal error: {exc}")
            except Exception:
                pass

    def _get(self):
        parts = self._path_parts()
        if parts == ["v1", "ping"]:
            self._send_json({"ok": True})
            return
        if len(parts) < 4 or parts[0] != "v1":
            raise NotFoundError(f"no such route: {self.path}")
        service = self.service
        if len(parts) == 4 and parts[3] == "versions":
            manager = _parse_manager(parts[1])
            versions = service.versions(manager, parts[2])
            self._send_json([v.raw for v in versions])
            return
        if len(parts) == 5 and parts[4] == "environments":
            manager = _parse_manager(parts[1])
            metas = service.variants(manager, parts[2], parts[3])
            self._send_json([m.id.environment for m in metas])
            return
        if len(parts) == 6 and parts[5] in ("meta", "payload"):
            manager = _parse_manager(parts[1])
            cid = ComponentId(manager, parts[2],
                              Version(manager, parts[3]).canonical, parts[4])
            if parts[5] == "meta":
                meta = service.meta(cid)
                self._send_text(serialize_meta(meta, include_payload=True))
                return
            meta, blob = service.payload_path(cid)
            start = self._range_start()
            total = blob.stat().st_size
            if start >= total and start:
                self._send_error_json(416, "range start beyond payload")
                return
            status = 206 if start else 200
            self.send_response(status)
            self.send_header("Content-Type", "application/gzip")
            self.send_header("Content-Length", str(total - start))
            if start:
                self.send_header("Content-Range", f"bytes {start}-{total-1}/{total}")
            self.end_headers()
            with open(blob, "rb") as handle:
                if start:
                    handle.seek(start)
                shutil.copyfileobj(handle, self.wfile, CHUNK)
            return
        raise NotFoundError(f"no such route: {self.path}")

    def do_PUT(self):  # noqa: N802
        parts = self._path_parts()
        if parts != ["v1", "publish"]:
            self._send_error_json(404, f"no such route: {self.path}")
            return
        length_header = self.headers.get("Content-Length")
        if length_header is None:
            self._send_error_json(411, "Content-Length required")
            return
        remaining = int(length_header)
        try:
            with tempfile.NamedTemporaryFile(
                    dir=self.service.store.tmp_dir, prefix="upload-",
                    delete=True) as upload:
                while remaining > 0:
                    chunk = self.rfile.read(min(CHUNK, remaining))
                    if not chunk:
                        raise FetchError("connection closed mid-upload")
                    upload.write(chunk)
                    remaining -= len(chunk)
                upload.flush()
                meta = self.service.publish_archive(Path(upload.name))
        except ImmutabilityError as exc:
            self._send_error_json(409, str(exc))
            return
        except CirError as exc:
            self._send_error_json(400, str(exc))
            return
        cid = meta.id
        self._send_json({
            "manager": cid.manager.value,
            "name": cid.name,
            "version": cid.version,
            "environment": cid.environment,
            "digest": meta.payload_digest,
            "size": meta.payload_size,
        })


class RegistryServer:
    """Threaded HTTP front end over a RegistryService."""

    def __init__(self, service: RegistryService, host: str = "127.0.0.1",
                 port: int = 0, verbose: bool = False):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        self.service = service
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.httpd.verbose = verbose
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "RegistryServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name="registry-http", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=10)
        self.httpd.server_close()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def __enter__(self) -> "RegistryServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


# ----------------------------------------------------------------------------
# Clients

class RegistryClient:
    """Query interface the resolver and builder consume.

    Both clients count payload bytes actually transferred; cache hits in
    the destination store transfer nothing."""

    bytes_received: int
    payload_bytes_received: int

    def versions(self, manager: ManagerKind, name: str) -> list[Version]:
        raise NotImplementedError

    def variants(self, manager: ManagerKind, name: str,
                 version: Version) -> list[UniformComponentMeta]:
        raise NotImplementedError

    def meta(self, cid: ComponentId) -> UniformComponentMeta:
        raise NotImplementedError

    def fetch_payload(self, meta: UniformComponentMeta, store: LocalStore) -> str:
        """Ensure the payload blob is in store; returns its digest."""
        raise NotImplementedError

    def reset_counters(self) -> None:
        self.bytes_received = 0
        self.payload_bytes_received = 0


class LocalRegistryClient(RegistryClient):
    """In-process client; transfer is a file copy from the registry store."""

    def __init__(self, service: RegistryService):
        self.service = service
        self.reset_counters()

    def versions(self, manager, name):
        return self.service.versions(manager, name)

    def variants(self, manager, name, version):
        return self.service.variants(manager, name, version)

    def meta(self, cid):
        return self.service.meta(cid)

    def fetch_payload(self, meta, store):
        digest = meta.payload_digest
        if not store.has_blob(digest):
            _meta, blob = self.service.payload_path(meta.id)
            with open(blob, "rb") as handle:
                store.put_blob(handle, expected_digest=digest)
            self.payload_bytes_received += meta.payload_size
            self.bytes_received += meta.payload_size
        store.put_meta(meta)  # index the cache so later builds can reuse it
        return digest


class HttpRegistryClient(RegistryClient):
    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.reset_counters()
        self._meta_cache: dict[ComponentId, UniformComponentMeta] = {}

    # -- plumbing -----------------------------------------------------------

    def _url(self, *parts: str) -> str:
        quoted = "/".join(quote(part, safe="") for part in parts)
        return f"{self.base_url}/v1/{quoted}"

    def _request(self, url: str, method: str = "GET", data=None,
                 headers: dict[str, str] | None = None):
        request = Request(url, method=method, data=data,
                          headers=headers or {})
        try:
            return urlopen(request, timeout=self.timeout)
        except HTTPError as exc:
            body = exc.read()
            self.bytes_received += len(body)
            message = ""
            try:
                message = json.loads(body.decode("utf-8")).get("error", "")
            except Exception:
                message = body.decode("utf-8", "replace")[:200]
            detail = f"{method} {url} -> {exc.code}" + (f": {message}" if message else "")
            if exc.code == 404:
                raise NotFoundError(detail) from None
            if exc.code == 409:
                raise ImmutabilityError(detail) from None
            raise FetchError(detail) from None
        except (URLError, socket.timeout, ConnectionError) as exc:
            raise FetchError(f"{method} {url} failed: {exc}") from None

    def _get_body(self, url: str) -> bytes:
        with self._request(url) as response:
            body = response.read()
        self.bytes_received += len(body)
        return body

    # -- queries ------------------------------------------------------------

    def ping(self) -> bool:
        try:
            return json.loads(self._get_body(self._url("ping"))).get("ok", False)
        except CirError:
            return False

    def versions(self, manager, name):
        name = canonicalize_name(manager, name)
        raw_list = json.loads(self._get_body(
            self._url(manager.path_tag, name, "versions")))
        out = []
        for raw in raw_list:
            try:
                out.append(Version(manager, raw))
            except CirError:
                continue
        return out

    def variants(self, manager, name, version):
        name = canonicalize_name(manager, name)
        environments = json.loads(self._get_body(
            self._url(manager.path_tag, name, version.canonical, "environments")))
        metas = []
        for env in environments:
            metas.append(self.meta(ComponentId(manager, name,
                                               version.canonical, env)))
        return metas

    def meta(self, cid):
        cached = self._meta_cache.get(cid)
        if cached is not None:
            return cached
        text = self._get_body(self._url(
            cid.manager.path_tag, cid.name, cid.version, cid.environment,
            "meta")).decode("utf-8")
        meta = parse_meta(text)
        self._meta_cache[cid] = meta
        return meta

    def fetch_payload(self, meta, store):
        digest = meta.payload_digest
        if store.has_blob(digest):
            store.put_meta(meta)
            return digest
        url = self._url(meta.id.manager.path_tag, meta.id.name,
                        meta.id.version, meta.id.environment, "payload")

        client = self

        class _Counting:
            """File-like wrapper counting payload bytes as they stream."""

            def __init__(self, response):
                self.response = response

            def read(self, size: int = -1) -> bytes:
                chunk = self.response.read(size)
                client.bytes_received += len(chunk)
                client.payload_bytes_received += len(chunk)
                return chunk

        with self._request(url) as response:
            store.put_blob(_Counting(response), expected_digest=digest)
        store.put_meta(meta)  # index the cache so later builds can reuse it
        return digest

    # -- publishing ---------------------------------------------------------

    def publish(self, payload_path: Path) -> dict:
        data = Path(payload_path).read_bytes()
        with self._request(self._url("publish"), method="PUT", data=data,
                           headers={"Content-Type": "application/gzip"}) as response:
            body = response.read()
        self.bytes_received += len(body)
        return json.loads(body.decode("utf-8"))
