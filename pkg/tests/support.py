"""Seeded generators and a live-server harness shared across test modules."""

from __future__ import annotations

import random
import string
from datetime import datetime
from pathlib import Path

from gridrpc.client import ClientSession
from gridrpc.config import ServerConfig
from gridrpc.identity_acl import credential_to_text, generate_credential
from gridrpc.server import GridServer
from gridrpc.vo import CertStore
from gridrpc.wire import INT32_MAX, INT32_MIN, RpcFault

ADMIN_DN = "/O=Test/CN=harness admin"

# Printable-ish XML-safe alphabet plus some non-ASCII to exercise UTF-8.
_TEXT_ALPHABET = (
    string.ascii_letters + string.digits + " <>&\"'.,:;/\\()[]{}=+-_!?@#\t\n"
    + "äöüßéπλ日本語"
)

_KINDS = ("int", "bool", "double", "string", "datetime", "binary", "list", "map")


def random_text(rng: random.Random, max_len: int = 24) -> str:
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(rng.randrange(max_len + 1)))


def random_datetime(rng: random.Random) -> datetime:
    return datetime(
        rng.randrange(1, 10000),
        rng.randrange(1, 13),
        rng.randrange(1, 29),
        rng.randrange(24),
        rng.randrange(60),
        rng.randrange(60),
    )


def random_double(rng: random.Random) -> float:
    raw = rng.uniform(-1e9, 1e9) * (10.0 ** rng.randrange(-12, 13))
    return raw


def random_value(rng: random.Random, depth: int = 0, max_depth: int = 8):
    """One generated wire value; nesting stays within max_depth."""
    kinds = _KINDS if depth < max_depth - 1 else _KINDS[:6]
    kind = rng.choice(kinds)
    if kind == "int":
        return rng.randrange(INT32_MIN, INT32_MAX + 1)
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "double":
        return random_double(rng)
    if kind == "string":
        return random_text(rng)
    if kind == "datetime":
        return random_datetime(rng)
    if kind == "binary":
        return rng.randbytes(rng.randrange(32))
    if kind == "list":
        return [random_value(rng, depth + 1, max_depth) for _ in range(rng.randrange(4))]
    return {
        random_text(rng, 8): random_value(rng, depth + 1, max_depth)
        for _ in range(rng.randrange(4))
    }


def random_tree(rng: random.Random, max_depth: int = 8):
    """A value guaranteed to contain some nesting."""
    return [random_value(rng, 1, max_depth) for _ in range(rng.randrange(1, 4))]


# Brute-force access resolver: enumerate precedence and membership explicitly.


def oracle_resolve(specs, groups, dn, method):
    """Independent resolver over {target: (allow, deny)} and {group: members}."""

    def member_of(d, g):
        seen = set()
        frontier = [g]
        while frontier:
            cur = frontier.pop()
            if cur in seen:
                continue
            seen.add(cur)
            if d in groups.get(cur, set()):
                return True
            for other in groups:
                if other != cur and other.startswith(cur.rstrip("/") + "/"):
                    frontier.append(other)
        return False

    def matches(d, principals):
        return any(p == d or member_of(d, p) for p in principals)

    module = method.split(".")[0]
    for level in (method, module, "*"):
        if level in specs:
            allow, deny = specs[level]
            if matches(dn, deny):
                return False
            return matches(dn, allow)
    return False


class ServerHarness:
    """A live server with on-disk state plus minted client identities.

    restart() swaps in a fresh process-equivalent server over the same
    data directory, which is how the statelessness property is exercised.
    """

    def __init__(self, base_dir: Path, admins=(ADMIN_DN,), **overrides):
        self.base = Path(base_dir)
        for sub in ("files", "www", "data"):
            (self.base / sub).mkdir(parents=True, exist_ok=True)
        kwargs = dict(
            rpc_file_root=self.base / "files",
            get_root=self.base / "www",
            data_dir=self.base / "data",
            listen="127.0.0.1:0",
            admin_dns=list(admins),
        )
        kwargs.update(overrides)
        self.config = ServerConfig(**kwargs).validate()
        self.creds = {}
        self.server = None
        self._port = None
        self.add_identity(ADMIN_DN)

    # -- identities ----------------------------------------------------

    def add_identity(self, dn: str, cred=None):
        if cred is None:
            cred = generate_credential(dn)
        self.creds[dn] = cred
        CertStore(self.config.data_dir / "certs.jsonl").store(
            credential_to_text(cred), stored_by="harness"
        )
        return cred

    def write_credential(self, dn: str, path: Path) -> Path:
        Path(path).write_text(credential_to_text(self.creds[dn], include_private=True))
        return Path(path)

    # -- lifecycle -------------------------------------------------------

    def start(self) -> "ServerHarness":
        # keep the first bound port so restarted servers serve the same URL
        if self._port is not None:
            self.config.listen = f"127.0.0.1:{self._port}"
        self.server = GridServer(self.config)
        self.server.start()
        self._port = self.server.port
        return self

    def stop(self) -> None:
        if self.server is not None:
            self.server.stop()
            self.server = None

    def restart(self) -> None:
        self.stop()
        self.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._port}{self.config.rpc_path}"

    def session(self, dn: str = ADMIN_DN, **kwargs) -> ClientSession:
        return ClientSession(self.url, credential=self.creds[dn], **kwargs)

    def allow(self, target: str, principals) -> None:
        """Admin-side ACL grant used by test setup."""
        session = self.session(ADMIN_DN)
        try:
            session.call("system.add_acl_spec", [target, list(principals), []])
        except RpcFault:  # spec already present: append instead
            session.call("system.add_acl_allow", [target, list(principals)])
