"""Client session: signed XML-RPC calls, block-cached reads, downloads.

Credential search order: explicit paths, then GRID_CERT/GRID_KEY
environment variables, then a credential directory (GRID_CREDENTIAL_DIR
or ~/.grid-credentials) where a short-lived proxy.pem is preferred over
the long-lived credential.pem.
"""

import hashlib
import os
import socket
import tempfile
import urllib.error
import urllib.request
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Optional, Tuple
from urllib.parse import urlsplit

from .identity_acl import (
    Credential,
    CredentialError,
    credential_from_text,
    sign_request,
    verify_signature,
)
from .wire import RpcFault, RpcRequest, decode_response, encode_request

DEFAULT_BLOCK_SIZE = 64 * 1024
DEFAULT_CAPACITY = 256
DEFAULT_MAX_RESPONSE = 64 * 1024 * 1024

ENV_CERT = "GRID_CERT"
ENV_KEY = "GRID_KEY"
ENV_CRED_DIR = "GRID_CREDENTIAL_DIR"
CRED_DIR_DEFAULT = "~/.grid-credentials"
PROXY_NAME = "proxy.pem"
CREDENTIAL_NAME = "credential.pem"


class TransportError(Exception):
    """Networking or HTTP-level failure; distinct from a decoded fault."""


class CredentialNotFound(CredentialError):
    """Discovery found nothing anywhere; distinct from a broken credential."""


def load_credential(
    cert_path=None, key_path=None, env=os.environ, home: Optional[Path] = None
) -> Credential:
    """Locate and parse a signing credential; private key is required."""
    if cert_path:
        text = Path(cert_path).read_text()
        if key_path:
            text += "\n" + Path(key_path).read_text()
        return _require_private(credential_from_text(text), str(cert_path))
    if env.get(ENV_CERT):
        text = Path(env[ENV_CERT]).read_text()
        if env.get(ENV_KEY):
            text += "\n" + Path(env[ENV_KEY]).read_text()
        return _require_private(credential_from_text(text), env[ENV_CERT])
    base = env.get(ENV_CRED_DIR)
    cred_dir = Path(base) if base else (home or Path.home()) / ".grid-credentials"
    for name in (PROXY_NAME, CREDENTIAL_NAME):
        candidate = cred_dir / name
        if candidate.is_file():
            return _require_private(
                credential_from_text(candidate.read_text()), str(candidate)
            )
    raise CredentialNotFound(
        f"no credential found: pass paths, set ${ENV_CERT}, or place "
        f"{PROXY_NAME}/{CREDENTIAL_NAME} under {cred_dir}"
    )


def _require_private(cred: Credential, source: str) -> Credential:
    if cred.private_key is None:
        raise CredentialError(f"{source} has no private key block")
    return cred


class _ModuleProxy:
    """Attribute sugar: session.echo.echo('Hello')."""

    def __init__(self, session: "ClientSession", module: str):
        self._session = session
        self._module = module

    def __getattr__(self, method: str):
        name = f"{self._module}.{method}"
        return lambda *params: self._session.call(name, list(params))


class ClientSession:
    """One signing identity bound to one server URL.

    A session without any discoverable credential is anonymous: requests go
    out unsigned, which only methods open to unauthenticated callers accept
    (the credential-retrieval bootstrap). Explicitly passed paths that fail
    to load are still hard errors.
    """

    def __init__(
        self,
        server_url: str,
        cert_path=None,
        key_path=None,
        credential: Optional[Credential] = None,
        timeout: float = 30.0,
        max_response_bytes: int = DEFAULT_MAX_RESPONSE,
    ):
        parts = urlsplit(server_url)
        if parts.scheme != "http" or not parts.netloc:
            raise ValueError(f"server URL must be http://host:port[/path], got {server_url!r}")
        self.rpc_path = parts.path or "/rpc"
        self.url = f"http://{parts.netloc}{self.rpc_path}"
        if credential is not None:
            self.credential = credential
        else:
            try:
                self.credential = load_credential(cert_path, key_path)
            except CredentialNotFound:
                if cert_path or key_path:
                    raise
                self.credential = None
        self.timeout = timeout
        self.max_response_bytes = max_response_bytes
        self.request_count = 0

    def call(self, method: str, params=()):
        """Signs and sends one call; faults are raised as RpcFault."""
        body = encode_request(RpcRequest(method, list(params)))
        headers = {"Content-Type": "text/xml"}
        if self.credential is not None:
            auth = sign_request(self.credential, "POST", self.rpc_path, body)
            # signing-path self check: our own public key must accept it
            if not verify_signature(self.credential.public_key, auth, "POST",
                                    self.rpc_path, body):
                raise CredentialError("request signature failed self-verification")
            headers.update(auth.to_headers())
        request = urllib.request.Request(self.url, data=body, headers=headers,
                                         method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            raise TransportError(f"HTTP {exc.code}: {exc.reason}") from None
        except (urllib.error.URLError, socket.timeout, ConnectionError) as exc:
            raise TransportError(str(exc)) from None
        self.request_count += 1
        result = decode_response(raw, max_bytes=self.max_response_bytes)
        if isinstance(result, RpcFault):
            raise result
        return result

    def __getattr__(self, name: str) -> _ModuleProxy:
        if name.startswith("_"):
            raise AttributeError(name)
        return _ModuleProxy(self, name)

    # -- convenience wrappers -----------------------------------------

    def read(self, path: str, offset: int, nbytes: int) -> bytes:
        return self.call("file.read", [path, offset, nbytes])[0]

    def download(self, remote_path: str, local_path, chunk_size: int = 1 << 20) -> int:
        """Streams a remote file to disk; verifies the md5 afterwards."""
        local_path = Path(local_path)
        remote_md5 = self.call("file.md5", [remote_path])[0]
        digest = hashlib.md5()
        total = 0
        fd, tmp_name = tempfile.mkstemp(dir=str(local_path.parent or Path(".")),
                                        prefix=local_path.name + ".part-")
        try:
            with os.fdopen(fd, "wb") as out:
                offset = 0
                while True:
                    chunk = self.read(remote_path, offset, chunk_size)
                    if not chunk:
                        break
                    out.write(chunk)
                    digest.update(chunk)
                    offset += len(chunk)
                    total += len(chunk)
            if digest.hexdigest() != remote_md5:
                raise TransportError(
                    f"download of {remote_path!r} failed integrity check"
                )
            os.replace(tmp_name, local_path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise
        return total


class BlockCache:
    """Fixed-granularity LRU cache over file.read.

    A path's blocks carry the (size, mtime) stamp observed when fetched;
    any miss re-stats the file and a changed stamp drops the stale blocks.
    Reads served entirely from cache make no server calls at all.
    """

    def __init__(
        self,
        session: ClientSession,
        block_size: int = DEFAULT_BLOCK_SIZE,
        capacity: int = DEFAULT_CAPACITY,
    ):
        if block_size <= 0 or capacity <= 0:
            raise ValueError("block_size and capacity must be positive")
        self.session = session
        self.block_size = block_size
        self.capacity = capacity
        self._blocks: "OrderedDict[Tuple[str, int], bytes]" = OrderedDict()
        self._stamps: Dict[str, Tuple[str, object]] = {}
        self.fetch_count = 0  # block fetches sent to the server
        self.hit_count = 0

    def read(self, path: str, offset: int, nbytes: int) -> bytes:
        if not isinstance(offset, int) or not isinstance(nbytes, int):
            raise ValueError("offset and nbytes must be integers")
        if offset < 0 or nbytes < 0:
            raise ValueError("offset and nbytes must be non-negative")
        if nbytes == 0:
            return b""
        bs = self.block_size
        first = offset // bs
        last = (offset + nbytes - 1) // bs
        indices = range(first, last + 1)

        if all((path, i) in self._blocks for i in indices):
            self.hit_count += 1
        else:
            # a miss re-stats the file; a changed stamp drops stale blocks
            self._refresh_stamp(path)

        # assemble from a local map: a wide read may itself evict blocks
        blocks = {}
        for i in indices:
            cached = self._blocks.get((path, i))
            if cached is not None:
                self._blocks.move_to_end((path, i))
                blocks[i] = cached
            else:
                block = self.session.read(path, i * bs, bs)
                self.fetch_count += 1
                self._insert(path, i, block)
                blocks[i] = block

        parts = []
        for i in indices:
            lo = offset - i * bs if i == first else 0
            hi = offset + nbytes - i * bs if i == last else bs
            parts.append(blocks[i][lo:hi])
        return b"".join(parts)

    def cached_bytes(self) -> int:
        return sum(len(b) for b in self._blocks.values())

    # -- internals -----------------------------------------------------

    def _refresh_stamp(self, path: str) -> None:
        entry = self.session.call("file.stat", [path])[0]
        stamp = (entry["size"], entry["mtime"])
        if self._stamps.get(path) != stamp:
            self._stamps[path] = stamp
            for key in [k for k in self._blocks if k[0] == path]:
                del self._blocks[key]

    def _insert(self, path: str, index: int, block: bytes) -> None:
        self._blocks[(path, index)] = block
        self._blocks.move_to_end((path, index))
        while len(self._blocks) > self.capacity:
            self._blocks.popitem(last=False)
