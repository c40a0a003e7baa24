"""Server configuration: flat ``key = value`` text with # comments.

List-valued keys (admin_dn, dn_user_map, get_auth_prefix) repeat, one
line per entry.  dn_user_map entries use ``DN -> identity``; the arrow
separator avoids colliding with the ``=`` signs inside DNs.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

DEFAULT_LISTEN = "127.0.0.1:8080"
DEFAULT_RPC_PATH = "/rpc"
DEFAULT_MAX_BODY = 8 * 1024 * 1024
DEFAULT_MAX_READ = 4 * 1024 * 1024


class ConfigError(Exception):
    pass


@dataclass
class ServerConfig:
    rpc_file_root: Path
    get_root: Path
    data_dir: Path
    ca_dir: Optional[Path] = None
    listen: str = DEFAULT_LISTEN
    rpc_path: str = DEFAULT_RPC_PATH
    max_body_bytes: int = DEFAULT_MAX_BODY
    max_read_bytes: int = DEFAULT_MAX_READ
    clock_skew_seconds: int = 300
    admin_dns: List[str] = field(default_factory=list)
    dn_user_map: Dict[str, str] = field(default_factory=dict)
    get_auth_prefixes: List[str] = field(default_factory=list)
    escrow_rate_limit: int = 5
    escrow_rate_window: int = 60
    job_concurrency: int = 16
    job_fallback_identity: Optional[str] = "nobody"
    job_helper: Optional[str] = None

    def validate(self) -> "ServerConfig":
        for name in ("rpc_file_root", "get_root", "data_dir", "ca_dir"):
            value = getattr(self, name)
            if value is None:
                continue
            real = Path(os.path.realpath(value))
            if not real.is_dir():
                raise ConfigError(f"{name} {str(value)!r} is not a directory")
            setattr(self, name, real)
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen must be host:port, got {self.listen!r}")
        if not self.rpc_path.startswith("/"):
            raise ConfigError("rpc_path must start with /")
        for limit in ("max_body_bytes", "max_read_bytes", "clock_skew_seconds",
                      "escrow_rate_limit", "escrow_rate_window", "job_concurrency"):
            if getattr(self, limit) <= 0:
                raise ConfigError(f"{limit} must be positive")
        return self

    @property
    def listen_host(self) -> str:
        return self.listen.rpartition(":")[0]

    @property
    def listen_port(self) -> int:
        return int(self.listen.rpartition(":")[2])


_INT_KEYS = {
    "max_body_bytes", "max_read_bytes", "clock_skew_seconds",
    "escrow_rate_limit", "escrow_rate_window", "job_concurrency",
}
_PATH_KEYS = {"rpc_file_root", "get_root", "data_dir", "ca_dir"}
_STR_KEYS = {"listen", "rpc_path", "job_helper", "job_fallback_identity"}
_LIST_KEYS = {"admin_dn", "dn_user_map", "get_auth_prefix"}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Returns a kwargs dict for ServerConfig; raises ConfigError on junk."""
    out: dict = {"admin_dns": [], "dn_user_map": {}, "get_auth_prefixes": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        if key in _INT_KEYS:
            try:
                out[key] = int(value)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: {key} needs an integer") from None
        elif key in _PATH_KEYS:
            out[key] = Path(value)
        elif key in _STR_KEYS:
            if key in ("job_helper", "job_fallback_identity"):
                # explicit empty string disables the feature
                out[key] = value or None
            else:
                out[key] = value
        elif key == "admin_dn":
            out["admin_dns"].append(value)
        elif key == "get_auth_prefix":
            out["get_auth_prefixes"].append(value)
        elif key == "dn_user_map":
            dn, arrow, identity = value.partition("->")
            if not arrow or not dn.strip() or not identity.strip():
                raise ConfigError(f"{source}:{lineno}: dn_user_map needs 'DN -> identity'")
            out["dn_user_map"][dn.strip()] = identity.strip()
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
    return out


def load_config(path) -> ServerConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    kwargs = parse_config(text, source=str(path))
    missing = [k for k in ("rpc_file_root", "get_root", "data_dir") if k not in kwargs]
    if missing:
        raise ConfigError(f"{path}: missing required keys: {', '.join(missing)}")
    return ServerConfig(**kwargs).validate()
