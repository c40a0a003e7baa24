"""Password-encrypted credential escrow keyed by DN.

Records hold a credential blob sealed with AES-256-GCM under a key derived
from the caller's password via scrypt (memory-hard; parameters are recorded
per record so they can be tuned later without breaking old records). The
password itself is never persisted, and wrong passwords are detected by the
authenticated cipher rather than producing garbage.

Retrieval is the one method callable without a verified identity header:
knowing the DN and password is the factor, which breaks the circularity of
needing credentials to fetch credentials. That path is rate-limited per
source address so it cannot be used as a probing oracle.

Store file format (``escrow.bin``), all integers big-endian:

    header   8s magic b"GRESCROW" | u8 version (1)
    record   u32 total length, then within it:
             u16 dn length | dn utf-8 | u8 salt length | salt
             u32 n | u32 r | u32 p | u8 nonce length | nonce
             u32 ciphertext length | ciphertext | f64 created_at
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from gridrpc.identity_acl import CredentialError, credential_from_text, normalize_dn
from gridrpc.storage import atomic_write_bytes
from gridrpc.wire import RpcFault

log = logging.getLogger(__name__)

_MAGIC = b"GRESCROW"
_VERSION = 1

# One message for unknown DN and wrong password, so the bootstrap path
# cannot be used to enumerate stored DNs.
UNAVAILABLE_MESSAGE = "proxy credential unavailable"

DEFAULT_KDF_PARAMS = (2**14, 8, 1)  # scrypt (n, r, p)


@dataclass
class EscrowRecord:
    dn: str
    kdf_salt: bytes
    kdf_n: int
    kdf_r: int
    kdf_p: int
    nonce: bytes
    ciphertext: bytes
    created_at: float


def _derive_key(password: str, salt: bytes, n: int, r: int, p: int) -> bytes:
    return hashlib.scrypt(
        password.encode("utf-8"), salt=salt, n=n, r=r, p=p, dklen=32,
        maxmem=256 * 1024 * 1024,
    )


def _pack_record(rec: EscrowRecord) -> bytes:
    dn = rec.dn.encode("utf-8")
    body = b"".join(
        [
            struct.pack("!H", len(dn)),
            dn,
            struct.pack("!B", len(rec.kdf_salt)),
            rec.kdf_salt,
            struct.pack("!III", rec.kdf_n, rec.kdf_r, rec.kdf_p),
            struct.pack("!B", len(rec.nonce)),
            rec.nonce,
            struct.pack("!I", len(rec.ciphertext)),
            rec.ciphertext,
            struct.pack("!d", rec.created_at),
        ]
    )
    return struct.pack("!I", len(body)) + body


def _unpack_records(data: bytes) -> dict[str, EscrowRecord]:
    if len(data) < 9 or data[:8] != _MAGIC or data[8] != _VERSION:
        raise ValueError("bad escrow store header")
    records: dict[str, EscrowRecord] = {}
    pos = 9
    while pos < len(data):
        (total,) = struct.unpack_from("!I", data, pos)
        body = data[pos + 4 : pos + 4 + total]
        pos += 4 + total
        off = 0
        (dn_len,) = struct.unpack_from("!H", body, off); off += 2
        dn = body[off : off + dn_len].decode("utf-8"); off += dn_len
        (salt_len,) = struct.unpack_from("!B", body, off); off += 1
        salt = body[off : off + salt_len]; off += salt_len
        n, r, p = struct.unpack_from("!III", body, off); off += 12
        (nonce_len,) = struct.unpack_from("!B", body, off); off += 1
        nonce = body[off : off + nonce_len]; off += nonce_len
        (ct_len,) = struct.unpack_from("!I", body, off); off += 4
        ciphertext = body[off : off + ct_len]; off += ct_len
        (created_at,) = struct.unpack_from("!d", body, off)
        records[dn] = EscrowRecord(dn, salt, n, r, p, nonce, ciphertext, created_at)
    return records


class RateLimiter:
    """Sliding-window limiter per source address; in-memory policy state."""

    def __init__(self, limit: int = 5, window_seconds: float = 60.0,
                 clock=time.monotonic):
        self.limit = limit
        self.window = window_seconds
        self.clock = clock
        self._lock = threading.Lock()
        self._hits: dict[str, deque] = {}

    def allow(self, key: str) -> bool:
        now = self.clock()
        with self._lock:
            hits = self._hits.setdefault(key, deque())
            while hits and now - hits[0] > self.window:
                hits.popleft()
            if len(hits) >= self.limit:
                return False
            hits.append(now)
            return True


class EscrowStore:
    """Per-DN encrypted records in a single versioned binary file."""

    def __init__(self, path: Path, kdf_params: tuple[int, int, int] = DEFAULT_KDF_PARAMS):
        self.path = Path(path)
        self.kdf_params = kdf_params
        self._lock = threading.Lock()

    def _load(self) -> dict[str, EscrowRecord]:
        try:
            data = self.path.read_bytes()
        except FileNotFoundError:
            return {}
        return _unpack_records(data)

    def _save(self, records: dict[str, EscrowRecord]) -> None:
        blob = _MAGIC + bytes([_VERSION])
        for dn in sorted(records):
            blob += _pack_record(records[dn])
        atomic_write_bytes(self.path, blob)

    def store(self, dn: str, blob: bytes, password: str) -> None:
        n, r, p = self.kdf_params
        salt = os.urandom(16)
        nonce = os.urandom(12)
        key = _derive_key(password, salt, n, r, p)
        ciphertext = AESGCM(key).encrypt(nonce, blob, dn.encode("utf-8"))
        record = EscrowRecord(dn, salt, n, r, p, nonce, ciphertext, time.time())
        with self._lock:
            records = self._load()
            records[dn] = record  # replaces any prior record
            self._save(records)

    def retrieve(self, dn: str, password: str) -> bytes:
        rec = self._load().get(dn)
        if rec is None:
            raise RpcFault(500, UNAVAILABLE_MESSAGE)
        key = _derive_key(password, rec.kdf_salt, rec.kdf_n, rec.kdf_r, rec.kdf_p)
        try:
            return AESGCM(key).decrypt(rec.nonce, rec.ciphertext, dn.encode("utf-8"))
        except InvalidTag:
            raise RpcFault(500, UNAVAILABLE_MESSAGE) from None

    def delete(self, dn: str, password: str) -> None:
        with self._lock:
            records = self._load()
            rec = records.get(dn)
            if rec is None:
                raise RpcFault(500, UNAVAILABLE_MESSAGE)
            key = _derive_key(password, rec.kdf_salt, rec.kdf_n, rec.kdf_r, rec.kdf_p)
            try:
                AESGCM(key).decrypt(rec.nonce, rec.ciphertext, dn.encode("utf-8"))
            except InvalidTag:
                raise RpcFault(500, UNAVAILABLE_MESSAGE) from None
            del records[dn]
            self._save(records)


class EscrowService:
    """RPC handlers under ``proxy.``; retrieve works without identity headers."""

    def __init__(self, store: EscrowStore, rate_limiter: Optional[RateLimiter] = None):
        self.store = store
        self.rate_limiter = rate_limiter or RateLimiter()

    def proxy_store(self, ctx, blob_text, password):
        if not isinstance(password, str) or not password:
            raise RpcFault(500, "password must be non-empty")
        try:
            cred = credential_from_text(blob_text)
        except CredentialError as exc:
            raise RpcFault(500, f"blob does not parse as a credential: {exc}")
        if cred.dn != ctx.dn:
            raise RpcFault(403, "credential DN does not match caller")
        self.store.store(ctx.dn, blob_text.encode("utf-8"), password)
        return True

    def proxy_retrieve(self, ctx, dn, password):
        if ctx.dn is None and not self.rate_limiter.allow(ctx.client_addr):
            raise RpcFault(429, "retrieval rate limit exceeded")
        try:
            dn = normalize_dn(dn)
        except CredentialError:
            raise RpcFault(500, UNAVAILABLE_MESSAGE) from None
        if not isinstance(password, str):
            raise RpcFault(500, UNAVAILABLE_MESSAGE)
        return [self.store.retrieve(dn, password).decode("utf-8")]

    def proxy_delete(self, ctx, password):
        if not isinstance(password, str):
            raise RpcFault(500, UNAVAILABLE_MESSAGE)
        self.store.delete(ctx.dn, password)
        return True

    def register(self, registry) -> None:
        registry.register("proxy.store", self.proxy_store)
        registry.register("proxy.retrieve", self.proxy_retrieve, requires_auth=False)
        registry.register("proxy.delete", self.proxy_delete)


PORTAL_PATH = "portal.html"

_PORTAL_HTML = """<!DOCTYPE html>
<!-- generated by grid-server; credential escrow bootstrap portal -->
<html>
<head>
<meta charset="utf-8">
<title>Credential retrieval portal</title>
<style>
 body { font-family: sans-serif; max-width: 42em; margin: 2em auto; }
 label { display: block; margin-top: 1em; }
 input { width: 100%%; padding: 0.4em; }
 textarea { width: 100%%; height: 14em; margin-top: 1em; font-family: monospace; }
 .error { color: #a00; margin-top: 1em; }
 button { margin-top: 1em; padding: 0.5em 1.5em; }
</style>
</head>
<body>
<h1>Credential retrieval</h1>
<p>Fetch your escrowed credential with your distinguished name and the
password you chose when storing it. Nothing here is persisted by the page;
the same call is available programmatically via <code>proxy.retrieve</code>.</p>
<form id="f">
  <label>Distinguished name
    <input type="text" name="dn" autocomplete="username">
  </label>
  <label>Password
    <input type="password" name="password" autocomplete="current-password">
  </label>
  <button type="submit">Retrieve</button>
</form>
<div class="error" id="err"></div>
<textarea id="out" readonly placeholder="credential appears here"></textarea>
<script>
const RPC_PATH = %(rpc_path)r;
function esc(s) {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
function call(method, params) {
  const body = '<?xml version="1.0"?><methodCall><methodName>' + method +
    "</methodName><params>" +
    params.map(p => "<param><value><string>" + esc(p) + "</string></value></param>").join("") +
    "</params></methodCall>";
  return fetch(RPC_PATH, {method: "POST", headers: {"Content-Type": "text/xml"}, body})
    .then(r => r.text())
    .then(text => {
      const doc = new DOMParser().parseFromString(text, "text/xml");
      const fault = doc.querySelector("fault");
      if (fault) {
        const members = fault.querySelectorAll("member");
        let code = 0, msg = "fault";
        members.forEach(m => {
          const name = m.querySelector("name").textContent;
          if (name === "faultCode") code = m.querySelector("value").textContent.trim();
          if (name === "faultString") msg = m.querySelector("value").textContent.trim();
        });
        throw new Error("fault " + code + ": " + msg);
      }
      return doc.querySelectorAll("params > param > value array value string");
    });
}
document.getElementById("f").addEventListener("submit", ev => {
  ev.preventDefault();
  const dn = ev.target.dn.value, pw = ev.target.password.value;
  document.getElementById("err").textContent = "";
  call("proxy.retrieve", [dn, pw])
    .then(values => { document.getElementById("out").value = values[0].textContent; })
    .catch(e => { document.getElementById("err").textContent = e.message; });
});
</script>
</body>
</html>
"""


def portal_page(rpc_path: str = "/rpc") -> str:
    """The static bootstrap portal served from the GET root."""
    return _PORTAL_HTML % {"rpc_path": rpc_path}


def ensure_portal(get_root: Path, rpc_path: str = "/rpc") -> Path:
    """Materialize the portal under get_root if missing or out of date."""
    target = Path(get_root) / PORTAL_PATH
    content = portal_page(rpc_path)
    if not target.exists() or target.read_text(encoding="utf-8") != content:
        target.write_text(content, encoding="utf-8")
    return target
