"""Virtual-rooted remote file access: ranged reads, listings, stat, md5.

Client paths are confined to the configured file root, or to a job's output
directory for paths of the form ``/jobs/<job_id>/...``. Containment is
checked on the symlink-resolved path, so links pointing outside a root are
treated as escapes. Sizes travel as decimal strings because the wire
integer is only 32-bit.
"""

from __future__ import annotations

import hashlib
import logging
import os
import posixpath
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

from gridrpc.wire import RpcFault

log = logging.getLogger(__name__)

DEFAULT_MAX_READ_BYTES = 4 * 1024 * 1024
JOBS_PREFIX = "/jobs/"

# job_id -> (real output dir, owner dn), or None when unknown
JobRootLookup = Callable[[str], Optional[Tuple[Path, str]]]


def _fault_escape(path: str) -> RpcFault:
    return RpcFault(403, f"path {path!r} escapes the served root")


def _contained(candidate: Path, root: Path) -> bool:
    try:
        real = Path(os.path.realpath(candidate))
        real.relative_to(os.path.realpath(root))
        return True
    except ValueError:
        return False


class PathResolver:
    """Maps client-supplied virtual paths onto permitted real paths."""

    def __init__(
        self,
        file_root: Path,
        job_lookup: Optional[JobRootLookup] = None,
        is_admin: Callable[[Optional[str]], bool] = lambda dn: False,
    ):
        self.file_root = Path(os.path.realpath(file_root))
        self.job_lookup = job_lookup
        self.is_admin = is_admin

    def resolve(self, caller_dn: Optional[str], vpath: str) -> Path:
        if not isinstance(vpath, str):
            raise RpcFault(500, "path must be a string")
        if "\x00" in vpath:
            raise _fault_escape(vpath)
        slashed = vpath.replace("\\", "/")
        # ".." is rejected outright rather than normalized away: a virtual
        # path has no business going up, and silent clamping would turn an
        # escape attempt into a read of an unrelated in-root file.
        if ".." in slashed.split("/"):
            raise _fault_escape(vpath)
        # normpath keeps a leading "//" (POSIX-reserved), so strip first.
        normalized = posixpath.normpath("/" + slashed.lstrip("/"))

        root = self.file_root
        rest = normalized.lstrip("/")
        if self.job_lookup is not None and (normalized + "/").startswith(JOBS_PREFIX):
            job_id, _, rest = normalized[len(JOBS_PREFIX):].partition("/")
            entry = self.job_lookup(job_id)
            if entry is None:
                raise RpcFault(500, f"unknown job {job_id!r}")
            root, owner = entry
            if caller_dn != owner and not self.is_admin(caller_dn):
                raise RpcFault(403, f"job {job_id!r} output belongs to another identity")

        candidate = root / rest if rest else root
        if not _contained(candidate, root):
            raise _fault_escape(vpath)
        return candidate


def _coerce_offset(value: Union[int, str], name: str) -> int:
    """Offsets may exceed 2**31-1, so decimal strings are accepted too."""
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise RpcFault(500, f"{name} must be an integer or decimal string")
    try:
        out = int(value)
    except ValueError:
        raise RpcFault(500, f"{name} must be a decimal integer, got {value!r}") from None
    if out < 0:
        raise RpcFault(500, f"{name} must be non-negative")
    return out


def stat_entry(path: Path, name: Optional[str] = None) -> dict:
    st = path.stat()
    kind = "directory" if path.is_dir() else "file"
    return {
        "name": name if name is not None else path.name,
        "size": str(st.st_size),
        "mtime": datetime.fromtimestamp(int(st.st_mtime), tz=timezone.utc).replace(tzinfo=None),
        "kind": kind,
        "readable": os.access(path, os.R_OK),
    }


class FileService:
    """RPC handlers under ``file.``; read-only by contract."""

    def __init__(self, resolver: PathResolver, max_read_bytes: int = DEFAULT_MAX_READ_BYTES):
        self.resolver = resolver
        self.max_read_bytes = max_read_bytes

    def _resolve_file(self, ctx, vpath: str) -> Path:
        path = self.resolver.resolve(ctx.dn, vpath)
        if path.is_dir():
            raise RpcFault(500, f"{vpath!r} is a directory")
        if not path.is_file():
            raise RpcFault(500, f"{vpath!r} not found")
        return path

    def read(self, ctx, vpath, offset=0, nbytes=None):
        if nbytes is None:
            nbytes = self.max_read_bytes
        offset = _coerce_offset(offset, "offset")
        nbytes = _coerce_offset(nbytes, "nbytes")
        if nbytes > self.max_read_bytes:
            raise RpcFault(500, f"nbytes {nbytes} exceeds chunk limit {self.max_read_bytes}")
        path = self._resolve_file(ctx, vpath)
        try:
            with open(path, "rb") as fh:
                fh.seek(offset)
                return fh.read(nbytes)
        except OSError as exc:
            raise RpcFault(500, f"read failed: {exc}") from None

    def ls(self, ctx, vpath):
        path = self.resolver.resolve(ctx.dn, vpath)
        if not path.is_dir():
            raise RpcFault(500, f"{vpath!r} is not a directory")
        entries = []
        for name in sorted(os.listdir(path)):
            try:
                entries.append(stat_entry(path / name, name))
            except OSError:
                continue  # vanished mid-listing
        return entries

    def stat(self, ctx, vpath):
        path = self.resolver.resolve(ctx.dn, vpath)
        try:
            return stat_entry(path)
        except OSError:
            raise RpcFault(500, f"{vpath!r} not found") from None

    def md5(self, ctx, vpath):
        path = self._resolve_file(ctx, vpath)
        digest = hashlib.md5()
        try:
            with open(path, "rb") as fh:
                for chunk in iter(lambda: fh.read(1024 * 1024), b""):
                    digest.update(chunk)
        except OSError as exc:
            raise RpcFault(500, f"read failed: {exc}") from None
        return digest.hexdigest()

    def register(self, registry) -> None:
        registry.register("file.read", self.read)
        registry.register("file.ls", self.ls)
        registry.register("file.stat", self.stat)
        registry.register("file.md5", self.md5)
