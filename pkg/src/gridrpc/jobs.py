"""Shell command execution in per-job sandbox directories.

A submitted command runs asynchronously under a wrapper script that
captures stdout/stderr and records the exit status.  Job state is never
held in memory: it is derived from files in the job directory, so any
process serving the same data directory sees the same job table.

Layout under ``<root>/<job_id>/``:

  meta.json   owner, command, sandbox identity, creation time
  command.sh  wrapper script (the unit actually executed)
  pid         written by the wrapper once it starts
  spawned     marker written when the job is handed to an adapter
  exit_code   written atomically by the wrapper on completion
  work/       working directory of the command; stdout.txt/stderr.txt
              land here; exposed to file.* as /jobs/<job_id>/
"""

import json
import os
import re
import secrets
import shlex
import subprocess
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Tuple

from .storage import atomic_write_bytes
from .wire import RpcFault

DEFAULT_CONCURRENCY = 16

_ID_RE = re.compile(r"^[0-9a-f]{32}$")

_SCRIPT_TEMPLATE = """#!/bin/sh
printf '%s\\n' "$$" > {pid_tmp}
mv {pid_tmp} {pid}
cd {work} || exit 127
(
{command}
) > stdout.txt 2> stderr.txt
printf '%s\\n' "$?" > {code_tmp}
mv {code_tmp} {code}
"""


class SpawnError(Exception):
    """Raised by adapters when a job process could not be started."""


class NoopAdapter:
    """Runs jobs as the server identity.  The identity argument is ignored."""

    def spawn(self, identity: str, job_dir: Path, command: str) -> None:
        # double fork: the wrapper reparents to init instead of lingering
        # as an unreaped child of the server process
        try:
            proc = subprocess.run(
                ["/bin/sh", "-c", '/bin/sh "$0" < /dev/null > /dev/null 2>&1 &',
                 str(job_dir / "command.sh")],
                cwd=str(job_dir / "work"),
                stdin=subprocess.DEVNULL,
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
                start_new_session=True,
                timeout=30,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SpawnError(str(exc)) from exc
        if proc.returncode != 0:
            raise SpawnError(f"shell exited {proc.returncode}")


class HelperAdapter:
    """Delegates process creation to an external privilege helper.

    The helper receives argv [identity, job-dir, command] and must exit 0
    once the job is running detached.  The job dir already contains the
    command.sh wrapper; a conforming helper switches to the named identity
    and executes it.
    """

    def __init__(self, helper: str):
        self.helper = str(helper)

    def spawn(self, identity: str, job_dir: Path, command: str) -> None:
        try:
            proc = subprocess.run(
                [self.helper, identity, str(job_dir), command],
                stdin=subprocess.DEVNULL,
                capture_output=True,
                timeout=30,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SpawnError(str(exc)) from exc
        if proc.returncode != 0:
            detail = proc.stderr.decode("utf-8", "replace").strip()
            raise SpawnError(detail or f"helper exited {proc.returncode}")


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        pass  # exists but owned by another identity (privilege helper case)
    try:
        with open(f"/proc/{pid}/stat", "rb") as handle:
            data = handle.read()
    except OSError:
        return True
    # status letter follows the parenthesized command name; Z means a
    # zombie awaiting reaping, which counts as dead for job state
    return data.rsplit(b")", 1)[-1].split()[:1] != [b"Z"]


class JobStore:
    """Disk-backed job table; every read re-derives state from files."""

    def __init__(self, root: Path, adapter=None, concurrency: int = DEFAULT_CONCURRENCY):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.adapter = adapter if adapter is not None else NoopAdapter()
        self.concurrency = concurrency
        self._lock = threading.Lock()

    # -- creation ------------------------------------------------------

    def create(self, owner: str, command: str, identity: str) -> str:
        job_id = secrets.token_hex(16)
        job_dir = self.root / job_id
        (job_dir / "work").mkdir(parents=True)
        meta = {
            "job_id": job_id,
            "owner": owner,
            "command": command,
            "identity": identity,
            "created_at": time.time(),
        }
        self._write_script(job_dir, command)
        # meta.json written last: a dir without it is ignored as unborn
        atomic_write_bytes(job_dir / "meta.json", json.dumps(meta, sort_keys=True).encode())
        failures = self.pump()
        if job_id in failures:
            raise RpcFault(500, f"spawn failed: {failures[job_id]}")
        return job_id

    def _write_script(self, job_dir: Path, command: str) -> None:
        q = lambda p: shlex.quote(str(p))
        script = _SCRIPT_TEMPLATE.format(
            pid_tmp=q(job_dir / "pid.tmp"),
            pid=q(job_dir / "pid"),
            work=q(job_dir / "work"),
            command=command,
            code_tmp=q(job_dir / "exit_code.tmp"),
            code=q(job_dir / "exit_code"),
        )
        path = job_dir / "command.sh"
        atomic_write_bytes(path, script.encode())
        path.chmod(0o700)

    # -- state derivation ----------------------------------------------

    def _meta(self, job_id: str) -> Optional[dict]:
        if not _ID_RE.match(job_id or ""):
            return None
        try:
            return json.loads((self.root / job_id / "meta.json").read_text())
        except (OSError, ValueError):
            return None

    def _derive(self, job_dir: Path) -> Tuple[str, Optional[int], Optional[float]]:
        """Returns (state, exit_code, finished_at)."""
        code_path = job_dir / "exit_code"
        try:
            text = code_path.read_text().strip()
            return "exited", int(text), code_path.stat().st_mtime
        except OSError:
            pass
        except ValueError:
            return "exited", None, None
        try:
            pid = int((job_dir / "pid").read_text().strip())
        except (OSError, ValueError):
            pid = None
        if pid is not None:
            if _pid_alive(pid):
                return "running", None, None
            # process died before the wrapper could record a status
            return "exited", None, None
        if (job_dir / "spawned").exists():
            return "running", None, None
        return "queued", None, None

    def record(self, job_id: str) -> Optional[dict]:
        meta = self._meta(job_id)
        if meta is None:
            return None
        state, exit_code, finished_at = self._derive(self.root / job_id)
        out = dict(meta)
        out["state"] = state
        out["exit_code"] = exit_code
        out["finished_at"] = finished_at
        return out

    def job_ids(self) -> list:
        ids = []
        for entry in self.root.iterdir():
            if _ID_RE.match(entry.name) and (entry / "meta.json").exists():
                ids.append(entry.name)
        return sorted(ids)

    def job_root_lookup(self, job_id: str) -> Optional[Tuple[Path, str]]:
        """file.* route target: the work dir and the owning DN."""
        meta = self._meta(job_id)
        if meta is None:
            return None
        return self.root / job_id / "work", meta["owner"]

    # -- scheduling ------------------------------------------------------

    def pump(self) -> Dict[str, str]:
        """Starts queued jobs while capacity allows; returns spawn failures."""
        failures: Dict[str, str] = {}
        with self._lock:
            queued = []
            running = 0
            for job_id in self.job_ids():
                state, _, _ = self._derive(self.root / job_id)
                if state == "running":
                    running += 1
                elif state == "queued":
                    queued.append((self._meta(job_id)["created_at"], job_id))
            queued.sort()
            for _, job_id in queued:
                if running >= self.concurrency:
                    break
                job_dir = self.root / job_id
                meta = self._meta(job_id)
                # marker first so a concurrent pump cannot double-spawn
                atomic_write_bytes(job_dir / "spawned", b"")
                try:
                    self.adapter.spawn(meta["identity"], job_dir, meta["command"])
                except SpawnError as exc:
                    failures[job_id] = str(exc)
                    atomic_write_bytes(job_dir / "work" / "stderr.txt", str(exc).encode())
                    atomic_write_bytes(job_dir / "exit_code", b"127\n")
                    continue
                running += 1
        return failures

    def wait(self, job_id: str, timeout: float = 30.0, poll: float = 0.02) -> dict:
        """Polls until the job exits; promotes queued jobs while waiting."""
        deadline = time.monotonic() + timeout
        while True:
            rec = self.record(job_id)
            if rec is None:
                raise RpcFault(500, f"unknown job {job_id!r}")
            if rec["state"] == "exited":
                return rec
            if time.monotonic() > deadline:
                raise TimeoutError(f"job {job_id} still {rec['state']} after {timeout}s")
            self.pump()
            time.sleep(poll)


class JobService:
    """RPC surface: submit/info/output_path plus DN-to-identity mapping."""

    def __init__(
        self,
        store: JobStore,
        dn_user_map: Optional[Dict[str, str]] = None,
        fallback_identity: Optional[str] = "nobody",
        is_admin=lambda dn: False,
    ):
        self.store = store
        self.dn_user_map = dict(dn_user_map or {})
        self.fallback_identity = fallback_identity
        self.is_admin = is_admin

    def _identity_for(self, dn: str) -> str:
        mapped = self.dn_user_map.get(dn)
        if mapped:
            return mapped
        if self.fallback_identity:
            return self.fallback_identity
        raise RpcFault(500, f"no sandbox identity mapped for {dn!r}")

    def submit(self, ctx, command) -> str:
        if not isinstance(command, str) or not command.strip():
            raise RpcFault(500, "command must be a non-empty string")
        identity = self._identity_for(ctx.dn)
        return self.store.create(ctx.dn, command, identity)

    def info(self, ctx, job_id) -> dict:
        rec = self._get(job_id)
        if ctx.dn != rec["owner"] and not self.is_admin(ctx.dn):
            raise RpcFault(403, f"job {job_id!r} belongs to another identity")
        self.store.pump()
        rec = self.store.record(job_id)
        out = {
            "job_id": rec["job_id"],
            "owner": rec["owner"],
            "command": rec["command"],
            "state": rec["state"],
            "created_at": _as_wire_time(rec["created_at"]),
            "dir": f"/jobs/{job_id}/",
        }
        if rec["exit_code"] is not None:
            out["exit_code"] = rec["exit_code"]
        if rec["finished_at"] is not None:
            out["finished_at"] = _as_wire_time(rec["finished_at"])
        return out

    def output_path(self, ctx, job_id) -> str:
        self._get(job_id)
        return f"/jobs/{job_id}/"

    def _get(self, job_id) -> dict:
        if not isinstance(job_id, str):
            raise RpcFault(500, "job_id must be a string")
        rec = self.store.record(job_id)
        if rec is None:
            raise RpcFault(500, f"unknown job {job_id!r}")
        return rec

    def register(self, registry) -> None:
        registry.register("job.submit", self.submit)
        registry.register("job.info", self.info)
        registry.register("job.output_path", self.output_path)


def _as_wire_time(epoch: float) -> datetime:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).replace(tzinfo=None)
