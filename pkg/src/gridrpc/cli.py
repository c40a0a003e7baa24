"""grid-cli: command-line access to a grid RPC server.

Exit codes: 0 success, 1 server fault or transport failure, 2 usage error.
"""

import argparse
import base64
import getpass
import json
import sys
from datetime import datetime
from pathlib import Path

from .client import ClientSession, TransportError
from .identity_acl import CredentialError, credential_to_text, generate_credential
from .wire import DecodeError, RpcFault


def _jsonable(value):
    if isinstance(value, bytes):
        return base64.b64encode(value).decode("ascii")
    if isinstance(value, datetime):
        return value.strftime("%Y-%m-%dT%H:%M:%SZ")
    raise TypeError(f"unserializable {type(value).__name__}")


def print_result(value, out):
    out.write(json.dumps(value, indent=2, default=_jsonable, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grid-cli", description="signed XML-RPC client for grid services"
    )
    parser.add_argument("--server", help="server URL, e.g. http://host:8080/rpc")
    parser.add_argument("--cert", help="credential file (certificate block)")
    parser.add_argument("--key", help="private key file if separate from --cert")
    parser.add_argument("--timeout", type=float, default=30.0)
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("call", help="invoke any module.method")
    p.add_argument("method")
    p.add_argument("params", nargs="?", default="[]",
                   help="JSON array of parameters")

    p = verbs.add_parser("ls", help="list a remote directory")
    p.add_argument("path")

    p = verbs.add_parser("cat", help="write a remote file to stdout")
    p.add_argument("path")

    p = verbs.add_parser("get", help="download a remote file")
    p.add_argument("remote")
    p.add_argument("local")

    p = verbs.add_parser("md5", help="remote file checksum")
    p.add_argument("path")

    p = verbs.add_parser("group", help="virtual organization management")
    sub = p.add_subparsers(dest="group_verb", required=True)
    for name in ("create", "delete", "users", "admins"):
        g = sub.add_parser(name)
        g.add_argument("name")
    for name in ("add-users", "add-admins"):
        g = sub.add_parser(name)
        g.add_argument("name")
        g.add_argument("dns", nargs="+")

    p = verbs.add_parser("acl", help="access control list management")
    sub = p.add_subparsers(dest="acl_verb", required=True)
    g = sub.add_parser("add-spec")
    g.add_argument("target")
    g.add_argument("--allow", nargs="*", default=[])
    g.add_argument("--deny", nargs="*", default=[])
    g = sub.add_parser("del-spec")
    g.add_argument("target")
    g = sub.add_parser("get")
    g.add_argument("pattern", nargs="?", default="*")
    g = sub.add_parser("allow")
    g.add_argument("target")
    g.add_argument("principals", nargs="+")
    g = sub.add_parser("deny")
    g.add_argument("target")
    g.add_argument("principals", nargs="+")

    p = verbs.add_parser("proxy", help="credential escrow")
    sub = p.add_subparsers(dest="proxy_verb", required=True)
    g = sub.add_parser("store")
    g.add_argument("--file", help="credential text to escrow (default: stdin)")
    g.add_argument("--password", help="escrow password (default: prompt)")
    g = sub.add_parser("retrieve")
    g.add_argument("--dn", required=True)
    g.add_argument("--password")
    g = sub.add_parser("delete", help="remove the caller's escrowed credential")
    g.add_argument("--password")

    p = verbs.add_parser("job", help="remote command execution")
    sub = p.add_subparsers(dest="job_verb", required=True)
    g = sub.add_parser("submit")
    g.add_argument("command")
    g = sub.add_parser("info")
    g.add_argument("job_id")

    p = verbs.add_parser("credential", help="local credential management")
    sub = p.add_subparsers(dest="credential_verb", required=True)
    g = sub.add_parser("new")
    g.add_argument("--dn", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--days", type=float, default=1.0)

    return parser


def _password(args) -> str:
    if getattr(args, "password", None):
        return args.password
    return getpass.getpass("escrow password: ")


class UsageError(Exception):
    """Usage error discovered after argparse."""


def _session(args) -> ClientSession:
    if not args.server:
        raise UsageError("--server is required for this verb")
    return ClientSession(args.server, cert_path=args.cert, key_path=args.key,
                         timeout=args.timeout)


def run(args, out=None) -> int:
    # sys.stdout is resolved here, not in the signature, so callers that
    # swap the stream (tests, embedding) are honoured.
    out = out if out is not None else sys.stdout
    if args.verb == "credential":
        cred = generate_credential(args.dn, lifetime_seconds=int(args.days * 86400))
        path = Path(args.out)
        path.write_text(credential_to_text(cred, include_private=True))
        path.chmod(0o600)
        out.write(f"{cred.dn}\n")
        return 0

    session = _session(args)

    if args.verb == "call":
        try:
            params = json.loads(args.params)
        except ValueError as exc:
            raise UsageError(f"params must be JSON: {exc}")
        if not isinstance(params, list):
            raise UsageError("params must be a JSON array")
        print_result(session.call(args.method, params), out)
    elif args.verb == "ls":
        entries = session.call("file.ls", [args.path])
        for entry in entries:
            out.write(f"{entry['kind']:<9} {entry['size']:>12} {entry['name']}\n")
    elif args.verb == "cat":
        offset = 0
        while True:
            chunk = session.read(args.path, offset, 1 << 20)
            if not chunk:
                break
            raw = out.buffer if hasattr(out, "buffer") else out
            raw.write(chunk)
            offset += len(chunk)
        if hasattr(out, "flush"):
            out.flush()
    elif args.verb == "get":
        total = session.download(args.remote, args.local)
        out.write(f"{total} bytes -> {args.local}\n")
    elif args.verb == "md5":
        out.write(session.call("file.md5", [args.path])[0] + "\n")
    elif args.verb == "group":
        method = {
            "create": "group.create", "delete": "group.delete",
            "users": "group.users", "admins": "group.admins",
            "add-users": "group.add_users", "add-admins": "group.add_admins",
        }[args.group_verb]
        params = [args.name]
        if args.group_verb in ("add-users", "add-admins"):
            params.append(args.dns)
        result = session.call(method, params)
        if args.group_verb in ("users", "admins"):
            for dn in result:
                out.write(dn + "\n")
        else:
            print_result(result, out)
    elif args.verb == "acl":
        if args.acl_verb == "add-spec":
            result = session.call("system.add_acl_spec",
                                  [args.target, args.allow, args.deny])
        elif args.acl_verb == "del-spec":
            result = session.call("system.del_acl_spec", [args.target])
        elif args.acl_verb == "get":
            result = session.call("system.get_acl_spec", [args.pattern])
        elif args.acl_verb == "allow":
            result = session.call("system.add_acl_allow",
                                  [args.target, args.principals])
        else:
            result = session.call("system.add_acl_deny",
                                  [args.target, args.principals])
        print_result(result, out)
    elif args.verb == "proxy":
        if args.proxy_verb == "store":
            blob = Path(args.file).read_text() if args.file else sys.stdin.read()
            result = session.call("proxy.store", [blob, _password(args)])
            print_result(result, out)
        elif args.proxy_verb == "retrieve":
            text = session.call("proxy.retrieve", [args.dn, _password(args)])[0]
            out.write(text)
        else:
            result = session.call("proxy.delete", [_password(args)])
            print_result(result, out)
    elif args.verb == "job":
        if args.job_verb == "submit":
            out.write(session.call("job.submit", [args.command])[0] + "\n")
        else:
            print_result(session.call("job.info", [args.job_id])[0], out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except RpcFault as fault:
        sys.stderr.write(f"fault {fault.code}: {fault.message}\n")
        return 1
    except (TransportError, DecodeError, CredentialError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
