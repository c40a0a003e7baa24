"""HTTP front end: RPC dispatch on one POST path, static GET elsewhere.

Every request is self-contained.  Stores flush to disk before a mutating
call returns, so stopping the process between any two calls and starting
a fresh one against the same data directory changes nothing.
"""

import argparse
import mimetypes
import os
import posixpath
import shutil
import sys
import threading
from dataclasses import dataclass
from html import escape
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import quote, unquote, urlsplit

from .config import ConfigError, ServerConfig, load_config
from .escrow import EscrowService, EscrowStore, RateLimiter, ensure_portal
from .files import FileService, PathResolver, _contained
from .identity_acl import AclService, AclStore, AuthError, AuthHeader, Verifier
from .jobs import HelperAdapter, JobService, JobStore, NoopAdapter
from .vo import CaDirectory, CertStore, GroupStore, VoService
from .wire import (
    DecodeError,
    RpcFault,
    decode_request,
    encode_fault,
    encode_response,
    valid_method_name,
)

FAULT_PARSE = 100
FAULT_AUTH = 401
FAULT_DENIED = 403
FAULT_UNKNOWN_METHOD = 404
FAULT_HANDLER = 500


@dataclass
class CallContext:
    """Per-request facts passed as the first argument of every handler."""

    dn: Optional[str]
    client_addr: str = ""
    http_method: str = "POST"
    path: str = "/rpc"


@dataclass
class _Handler:
    func: object
    requires_auth: bool


class MethodRegistry:
    """Dotted method name → handler; names are unique and well-formed."""

    def __init__(self):
        self._methods: dict = {}

    def register(self, name: str, func, requires_auth: bool = True) -> None:
        if not valid_method_name(name):
            raise ValueError(f"bad method name {name!r}")
        if name in self._methods:
            raise ValueError(f"method {name!r} already registered")
        self._methods[name] = _Handler(func, requires_auth)

    def get(self, name: str) -> Optional[_Handler]:
        return self._methods.get(name)

    def names(self) -> list:
        return sorted(self._methods)


class EchoService:
    def echo(self, ctx, value):
        return value

    def register(self, registry: MethodRegistry) -> None:
        registry.register("echo.echo", self.echo)


class Dispatcher:
    """Turns raw POST bodies into encoded responses; never raises."""

    def __init__(
        self,
        registry: MethodRegistry,
        verifier: Verifier,
        acl: AclStore,
        is_member,
        is_admin=lambda dn: False,
        max_body_bytes: int = 8 * 1024 * 1024,
    ):
        self.registry = registry
        self.verifier = verifier
        self.acl = acl
        self.is_member = is_member
        self.is_admin = is_admin
        self.max_body_bytes = max_body_bytes

    def dispatch(self, body: bytes, headers, client_addr: str, http_method: str,
                 path: str) -> bytes:
        try:
            result = self._run(body, headers, client_addr, http_method, path)
        except RpcFault as fault:
            return encode_fault(fault)
        except Exception as exc:  # totality: transport never sees an exception
            return encode_fault(RpcFault(FAULT_HANDLER, f"internal error: {exc}"))
        return encode_response(result)

    def _run(self, body, headers, client_addr, http_method, path):
        try:
            request = decode_request(body, max_bytes=self.max_body_bytes)
        except DecodeError as exc:
            raise RpcFault(FAULT_PARSE, f"parse error: {exc}") from None

        handler = self.registry.get(request.method)
        if handler is None:
            raise RpcFault(FAULT_UNKNOWN_METHOD, f"unknown method {request.method!r}")

        try:
            auth = AuthHeader.from_headers(headers)
            dn = None
            if auth is not None:
                dn = self.verifier.verify(auth, http_method, path, body)
        except AuthError as exc:
            raise RpcFault(FAULT_AUTH, f"authentication failed: {exc}") from None

        if handler.requires_auth:
            if dn is None:
                raise RpcFault(FAULT_AUTH, "authentication required")
            if not self.is_admin(dn) and not self.acl.resolve(
                dn, request.method, self.is_member
            ):
                raise RpcFault(FAULT_DENIED, f"access denied for {request.method}")

        ctx = CallContext(dn=dn, client_addr=client_addr,
                          http_method=http_method, path=path)
        try:
            result = handler.func(ctx, *request.params)
        except RpcFault:
            raise
        except Exception as exc:
            raise RpcFault(FAULT_HANDLER, f"handler error: {exc}") from None
        if isinstance(result, tuple):
            result = list(result)
        # results are always lists; scalars ride in a one-element list
        return result if isinstance(result, list) else [result]


# ---------------------------------------------------------------------------
# GET serving
# ---------------------------------------------------------------------------


def render_index(url_path: str, names) -> str:
    """HTML directory listing; directories carry a trailing slash."""
    title = escape(url_path)
    items = "".join(
        f'<li><a href="{quote(name)}">{escape(name)}</a></li>\n' for name in names
    )
    return (
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\">"
        f"<title>Index of {title}</title></head>\n"
        f"<body>\n<h1>Index of {title}</h1>\n<ul>\n{items}</ul>\n</body>\n</html>\n"
    )


def copy_file(out, handle, size: int, use_sendfile: bool = True) -> None:
    """Zero-copy send when the fd pair supports it, buffered otherwise."""
    offset = 0
    if use_sendfile:
        try:
            out_fd = out.fileno()
            in_fd = handle.fileno()
            while offset < size:
                sent = os.sendfile(out_fd, in_fd, offset, min(1 << 20, size - offset))
                if sent == 0:
                    break
                offset += sent
            if offset >= size:
                return
        except (AttributeError, OSError, ValueError):
            pass
    handle.seek(offset)
    shutil.copyfileobj(handle, out)


class _RequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "GridServer/0.1"

    def log_message(self, fmt, *args):
        if self.server.grid.verbose:
            sys.stderr.write("%s - %s\n" % (self.address_string(), fmt % args))

    @property
    def grid(self) -> "GridServer":
        return self.server.grid

    def do_POST(self):
        parsed = urlsplit(self.path)
        if parsed.path != self.grid.config.rpc_path:
            self.send_error(404, "unknown POST path")
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self.send_error(411, "Content-Length required")
            return
        if length < 0 or length > self.grid.config.max_body_bytes:
            body = encode_fault(RpcFault(FAULT_PARSE, "request body too large"))
        else:
            raw = self.rfile.read(length)
            body = self.grid.dispatcher.dispatch(
                raw, self.headers, self.client_address[0], "POST", parsed.path
            )
        self.send_response(200)
        self.send_header("Content-Type", "text/xml; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        grid = self.grid
        path = unquote(urlsplit(self.path).path)
        if any(path.startswith(p) for p in grid.config.get_auth_prefixes):
            if not self._authenticate_get(path):
                return
        slashed = path.replace("\\", "/")
        if ".." in slashed.split("/"):
            self.send_error(403, "path escapes document root")
            return
        normalized = posixpath.normpath("/" + slashed.lstrip("/"))
        target = grid.config.get_root / normalized.lstrip("/")
        if not _contained(target, grid.config.get_root):
            self.send_error(403, "path escapes document root")
            return
        if target.is_dir():
            names = []
            for child in sorted(os.listdir(target)):
                names.append(child + "/" if (target / child).is_dir() else child)
            payload = render_index(normalized, names).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
            return
        if not target.is_file():
            self.send_error(404, "not found")
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        size = target.stat().st_size
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(size))
        self.end_headers()
        self.wfile.flush()
        with open(target, "rb") as handle:
            copy_file(self.wfile, handle, size, use_sendfile=self.grid.use_sendfile)
        self.wfile.flush()

    def _authenticate_get(self, path: str) -> bool:
        try:
            auth = AuthHeader.from_headers(self.headers)
            if auth is None:
                raise AuthError("authentication required")
            self.grid.verifier.verify(auth, "GET", path, b"")
            return True
        except AuthError as exc:
            self.send_error(401, f"authentication failed: {exc}")
            return False


class _HttpServer(ThreadingHTTPServer):
    daemon_threads = True
    # default backlog of 5 drops connections under bursts of parallel clients
    request_queue_size = 128


class GridServer:
    """Owns the stores, the registry, and the HTTP listener."""

    def __init__(self, config: ServerConfig, verbose: bool = False):
        self.config = config
        self.verbose = verbose
        self.use_sendfile = True
        data = config.data_dir

        self.acl = AclStore(data / "acl.jsonl")
        self.groups = GroupStore(data / "groups.jsonl")
        self.certs = CertStore(data / "certs.jsonl")
        ca_dir = config.ca_dir if config.ca_dir is not None else data / "ca"
        ca_dir.mkdir(exist_ok=True)
        self.ca = CaDirectory(ca_dir)

        admins = set(config.admin_dns)
        is_admin = lambda dn: dn is not None and dn in admins
        self.is_admin = is_admin

        self.verifier = Verifier(
            find_credential=self._find_credential,
            find_ca=self.ca.credential,
            clock_skew_seconds=config.clock_skew_seconds,
        )

        self.vo = VoService(self.groups, self.certs, self.ca, admins)
        self.escrow = EscrowService(
            EscrowStore(data / "escrow.bin"),
            RateLimiter(config.escrow_rate_limit, config.escrow_rate_window),
        )
        adapter = HelperAdapter(config.job_helper) if config.job_helper else NoopAdapter()
        self.jobs = JobStore(data / "jobs", adapter, config.job_concurrency)
        self.job_service = JobService(
            self.jobs, config.dn_user_map, config.job_fallback_identity, is_admin
        )
        resolver = PathResolver(
            config.rpc_file_root, job_lookup=self.jobs.job_root_lookup, is_admin=is_admin
        )
        self.files = FileService(resolver, max_read_bytes=config.max_read_bytes)

        self.registry = MethodRegistry()
        EchoService().register(self.registry)
        AclService(self.acl).register(self.registry)
        self.vo.register(self.registry)
        self.escrow.register(self.registry)
        self.files.register(self.registry)
        self.job_service.register(self.registry)

        self.dispatcher = Dispatcher(
            self.registry,
            self.verifier,
            self.acl,
            is_member=self.groups.is_member,
            is_admin=is_admin,
            max_body_bytes=config.max_body_bytes,
        )

        ensure_portal(config.get_root, config.rpc_path)

        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def _find_credential(self, dn: str):
        cred = self.certs.credential(dn)
        return cred if cred is not None else self.ca.credential(dn)

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self._httpd = _HttpServer(
            (self.config.listen_host, self.config.listen_port), _RequestHandler
        )
        self._httpd.grid = self
        # small poll interval keeps stop() fast; restart cost matters for
        # anything cycling the server between calls
        httpd = self._httpd
        self._thread = threading.Thread(
            target=lambda: httpd.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    @property
    def port(self) -> int:
        # actual bound port (config may say port 0 for tests)
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.config.listen_host}:{self.port}{self.config.rpc_path}"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None

    def serve_forever(self) -> None:
        self.start()
        try:
            self._thread.join()
        except KeyboardInterrupt:
            self.stop()


def _bootstrap_config(args) -> ServerConfig:
    if args.config:
        config = load_config(args.config)
    else:
        if not args.data_dir:
            raise ConfigError("either --config or --data-dir is required")
        data = Path(args.data_dir)
        for sub in ("", "files", "www"):
            (data / sub).mkdir(parents=True, exist_ok=True)
        config = ServerConfig(
            rpc_file_root=data / "files", get_root=data / "www", data_dir=data
        ).validate()
    if args.listen:
        config.listen = args.listen
    if args.data_dir:
        config.data_dir = Path(os.path.realpath(args.data_dir))
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="grid-server", description="XML-RPC grid services server"
    )
    parser.add_argument("--config", help="path to key = value config file")
    parser.add_argument("--listen", help="host:port to bind (overrides config)")
    parser.add_argument("--data-dir", help="persistent store directory (overrides config)")
    parser.add_argument("--verbose", action="store_true", help="log requests to stderr")
    args = parser.parse_args(argv)
    try:
        config = _bootstrap_config(args)
    except ConfigError as exc:
        parser.error(str(exc))
    server = GridServer(config, verbose=args.verbose)
    sys.stderr.write(f"listening on {config.listen}, rpc at {config.rpc_path}\n")
    server.serve_forever()
    return 0


if __name__ == "__main__":
    sys.exit(main())
