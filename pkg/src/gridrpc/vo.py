"""Virtual-organization store: hierarchical groups, certificates, CA directory.

Groups are slash-rooted paths (``/cms/prod``). Membership propagates upward:
a member of a subgroup counts as a member of every ancestor group. Admin
rights propagate downward: an admin of ``/cms`` administers ``/cms/prod``.

The CA directory is a read-only filesystem view managed by the system
administrator; no RPC method writes it.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional

from gridrpc.identity_acl import (
    Credential,
    CredentialError,
    credential_from_text,
    credential_to_text,
    normalize_dn,
    utcnow,
)
from gridrpc.storage import atomic_write_bytes
from gridrpc.wire import RpcFault

log = logging.getLogger(__name__)


def _check_group_name(name: str) -> str:
    if not isinstance(name, str):
        raise RpcFault(500, "group name must be a string")
    name = name.strip()
    if not name.startswith("/") or name.endswith("/"):
        raise RpcFault(500, f"group name must be a slash-rooted path, got {name!r}")
    segments = name[1:].split("/")
    if not segments or any(not seg for seg in segments):
        raise RpcFault(500, f"group name has empty segments: {name!r}")
    return name


def parent_group(name: str) -> Optional[str]:
    head, _, _ = name.rpartition("/")
    return head or None


@dataclass
class StoredCert:
    dn: str
    certificate: str
    stored_by: str
    stored_at: datetime


class GroupStore:
    """Group forest in a JSON-lines file; linearizable mutations."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def _load(self) -> dict[str, dict]:
        groups: dict[str, dict] = {}
        try:
            text = self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return groups
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                groups[rec["name"]] = rec
        return groups

    def _save(self, groups: dict[str, dict]) -> None:
        lines = [json.dumps(groups[name], sort_keys=True) for name in sorted(groups)]
        atomic_write_bytes(self.path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")

    def names(self) -> list[str]:
        return sorted(self._load())

    def exists(self, name: str) -> bool:
        return name in self._load()

    def create(self, name: str) -> None:
        name = _check_group_name(name)
        with self._lock:
            groups = self._load()
            if name in groups:
                raise RpcFault(500, f"group {name!r} already exists")
            parent = parent_group(name)
            if parent is not None and parent not in groups:
                raise RpcFault(500, f"parent group {parent!r} does not exist")
            groups[name] = {"name": name, "members": [], "admins": []}
            self._save(groups)

    def delete(self, name: str) -> None:
        with self._lock:
            groups = self._load()
            if name not in groups:
                raise RpcFault(500, f"unknown group {name!r}")
            prefix = name + "/"
            if any(other.startswith(prefix) for other in groups):
                raise RpcFault(500, f"group {name!r} has child groups")
            del groups[name]
            self._save(groups)

    def _append(self, name: str, dns: Iterable[str], key: str) -> None:
        cleaned = [normalize_dn(dn) for dn in dns]
        with self._lock:
            groups = self._load()
            if name not in groups:
                raise RpcFault(500, f"unknown group {name!r}")
            bucket = groups[name][key]
            for dn in cleaned:
                if dn not in bucket:
                    bucket.append(dn)
            self._save(groups)

    def add_users(self, name: str, dns: Iterable[str]) -> None:
        self._append(name, dns, "members")

    def add_admins(self, name: str, dns: Iterable[str]) -> None:
        self._append(name, dns, "admins")

    def _field(self, name: str, key: str) -> list[str]:
        groups = self._load()
        if name not in groups:
            raise RpcFault(500, f"unknown group {name!r}")
        return list(groups[name][key])

    def users(self, name: str) -> list[str]:
        return self._field(name, "members")

    def admins(self, name: str) -> list[str]:
        return self._field(name, "admins")

    def is_member(self, dn: str, name: str) -> bool:
        """Direct member of the group or of any descendant subgroup."""
        groups = self._load()
        if name not in groups:
            return False
        prefix = name + "/"
        for other, rec in groups.items():
            if other == name or other.startswith(prefix):
                if dn in rec["members"]:
                    return True
        return False

    def is_admin(self, dn: str, name: str) -> bool:
        """Admin of the group or of any ancestor (admin rights flow down)."""
        groups = self._load()
        current: Optional[str] = name
        while current is not None:
            rec = groups.get(current)
            if rec and dn in rec["admins"]:
                return True
            current = parent_group(current)
        return False


class CertStore:
    """Stored certificates keyed by DN; re-store replaces."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def _load(self) -> dict[str, dict]:
        certs: dict[str, dict] = {}
        try:
            text = self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return certs
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                certs[rec["dn"]] = rec
        return certs

    def _save(self, certs: dict[str, dict]) -> None:
        lines = [json.dumps(certs[dn], sort_keys=True) for dn in sorted(certs)]
        atomic_write_bytes(self.path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")

    def store(self, cert_text: str, stored_by: str) -> str:
        try:
            cred = credential_from_text(cert_text)
        except CredentialError as exc:
            raise RpcFault(500, f"certificate does not parse: {exc}")
        dn = cred.dn
        # keep only the public part even if a caller pastes a full key pair
        public_text = credential_to_text(cred, include_private=False)
        with self._lock:
            certs = self._load()
            certs[dn] = {
                "dn": dn,
                "certificate": public_text,
                "stored_by": stored_by,
                "stored_at": utcnow().strftime("%Y-%m-%dT%H:%M:%SZ"),
            }
            self._save(certs)
        return dn

    def retrieve(self, dn: str) -> str:
        rec = self._load().get(dn)
        if rec is None:
            raise RpcFault(500, f"no certificate stored for {dn!r}")
        return rec["certificate"]

    def search(self, substring: str) -> list[StoredCert]:
        needle = substring.lower()
        out = []
        for dn, rec in sorted(self._load().items()):
            if needle in dn.lower():
                out.append(
                    StoredCert(
                        dn=dn,
                        certificate=rec["certificate"],
                        stored_by=rec["stored_by"],
                        stored_at=datetime.strptime(rec["stored_at"], "%Y-%m-%dT%H:%M:%SZ"),
                    )
                )
        return out

    def credential(self, dn: str) -> Optional[Credential]:
        rec = self._load().get(dn)
        if rec is None:
            return None
        try:
            cred = credential_from_text(rec["certificate"])
        except CredentialError:
            return None
        return cred if cred.dn == dn else None


class CaDirectory:
    """Read-only view over the sysadmin-managed CA certificate directory."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def _entries(self) -> dict[str, tuple[str, Credential]]:
        out: dict[str, tuple[str, Credential]] = {}
        if not self.path.is_dir():
            return out
        for child in sorted(self.path.iterdir()):
            if not child.is_file():
                continue
            try:
                text = child.read_text(encoding="utf-8")
                cred = credential_from_text(text)
            except (OSError, UnicodeDecodeError, CredentialError):
                continue
            out[cred.dn] = (text, cred)
        return out

    def list_dns(self) -> list[str]:
        return sorted(self._entries())

    def retrieve(self, dn: str) -> str:
        entry = self._entries().get(dn)
        if entry is None:
            raise RpcFault(500, f"no CA certificate for {dn!r}")
        return entry[0]

    def credential(self, dn: str) -> Optional[Credential]:
        entry = self._entries().get(dn)
        return entry[1] if entry else None


class VoService:
    """RPC handlers under ``group.`` with group-admin authorization."""

    def __init__(
        self,
        groups: GroupStore,
        certs: CertStore,
        ca_dir: CaDirectory,
        server_admins: Iterable[str] = (),
    ):
        self.groups = groups
        self.certs = certs
        self.ca_dir = ca_dir
        self.server_admins = set(server_admins)

    def _is_server_admin(self, dn: Optional[str]) -> bool:
        return dn is not None and dn in self.server_admins

    def _require_admin_of(self, dn: Optional[str], group: str) -> None:
        if self._is_server_admin(dn):
            return
        if dn is None or not self.groups.is_admin(dn, group):
            raise RpcFault(403, f"caller is not an administrator of {group!r}")

    def create(self, ctx, name):
        name = _check_group_name(name)
        parent = parent_group(name)
        if parent is None:
            if not self._is_server_admin(ctx.dn):
                raise RpcFault(403, "only a server administrator may create root groups")
        else:
            self._require_admin_of(ctx.dn, parent)
        self.groups.create(name)
        return True

    def delete(self, ctx, name):
        self._require_admin_of(ctx.dn, name)
        self.groups.delete(name)
        return True

    def add_users(self, ctx, name, dns):
        self._require_admin_of(ctx.dn, name)
        self.groups.add_users(name, dns)
        return True

    def add_admins(self, ctx, name, dns):
        self._require_admin_of(ctx.dn, name)
        self.groups.add_admins(name, dns)
        return True

    def users(self, ctx, name):
        return self.groups.users(name)

    def admins(self, ctx, name):
        return self.groups.admins(name)

    def store_cert(self, ctx, cert_text):
        return [self.certs.store(cert_text, stored_by=ctx.dn or "")]

    def retrieve_cert(self, ctx, dn):
        return [self.certs.retrieve(dn)]

    def search_certs(self, ctx, substring):
        return [
            {
                "dn": c.dn,
                "certificate": c.certificate,
                "stored_by": c.stored_by,
                "stored_at": c.stored_at,
            }
            for c in self.certs.search(substring)
        ]

    def ca_list(self, ctx):
        return self.ca_dir.list_dns()

    def ca_retrieve(self, ctx, dn):
        return [self.ca_dir.retrieve(dn)]

    def register(self, registry) -> None:
        registry.register("group.create", self.create)
        registry.register("group.delete", self.delete)
        registry.register("group.add_users", self.add_users)
        registry.register("group.add_admins", self.add_admins)
        registry.register("group.users", self.users)
        registry.register("group.admins", self.admins)
        registry.register("group.store_cert", self.store_cert)
        registry.register("group.retrieve_cert", self.retrieve_cert)
        registry.register("group.search_certs", self.search_certs)
        registry.register("group.ca_list", self.ca_list)
        registry.register("group.ca_retrieve", self.ca_retrieve)
