"""End-to-end acceptance suite: one test per shipped guarantee.

Every expectation here is checked against an oracle that does not share code
with the implementation: local byte slices, md5sum(1), /bin/sh, a brute-force
access resolver, or a second uninterrupted run of the same workflow.
"""

from __future__ import annotations

import hashlib
import random
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

import pytest

from gridrpc.client import BlockCache
from gridrpc.escrow import EscrowStore
from gridrpc.identity_acl import AclStore, credential_to_text, generate_credential
from gridrpc.vo import GroupStore
from gridrpc.wire import (
    DecodeError,
    RpcFault,
    RpcRequest,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)
from support import ADMIN_DN, ServerHarness, oracle_resolve, random_tree

ALICE = "/O=Test/CN=alice"
MALLORY = "/O=Test/CN=mallory"


@pytest.fixture
def harness(tmp_path):
    h = ServerHarness(tmp_path)
    h.start()
    yield h
    h.stop()


def wait_exited(session, job_id: str, timeout: float = 30.0) -> dict:
    """Polls job.info over the wire until the job leaves running/queued."""
    deadline = time.monotonic() + timeout
    while True:
        info = session.call("job.info", [job_id])[0]
        if info["state"] == "exited":
            return info
        if time.monotonic() > deadline:
            raise AssertionError(f"job {job_id} still {info['state']}")
        time.sleep(0.02)


# 1. Wire format: lossless for every value kind, total on garbage.


def test_wire_roundtrip_10k_trees_and_10k_malformed(tmp_path):
    rng = random.Random(0x57A6)
    start = time.perf_counter()

    for i in range(10_000):
        tree = random_tree(rng)
        assert decode_response(encode_response(tree)) == tree, f"tree {i}"

    seeds = [
        encode_request(RpcRequest("a.b", list(random_tree(rng, max_depth=4))))
        for _ in range(50)
    ]
    survived = 0
    for i in range(10_000):
        doc = bytearray(rng.choice(seeds))
        op = i % 5
        if op == 0 and doc:  # flip bytes
            for _ in range(rng.randrange(1, 8)):
                doc[rng.randrange(len(doc))] = rng.randrange(256)
        elif op == 1:  # drop a slice
            lo = rng.randrange(len(doc))
            del doc[lo:lo + rng.randrange(1, 64)]
        elif op == 2:  # duplicate a slice somewhere else
            lo = rng.randrange(len(doc))
            chunk = doc[lo:lo + rng.randrange(1, 64)]
            doc[rng.randrange(len(doc)):0] = chunk
        elif op == 3:  # truncate
            del doc[rng.randrange(len(doc)):]
        else:  # unrelated bytes, or a nesting bomb
            if i % 500 == 4:
                doc = bytearray(
                    b"<?xml version='1.0'?><methodCall><methodName>a.b"
                    b"</methodName><params><param><value>"
                    + b"<array><data><value>" * 100
                    + b"<int>1</int>"
                    + b"</value></data></array>" * 100
                    + b"</value></param></params></methodCall>"
                )
            else:
                doc = bytearray(rng.randbytes(rng.randrange(1, 512)))
        try:
            if i % 2:
                decode_request(bytes(doc))
            else:
                decode_response(bytes(doc))
        except (DecodeError, RpcFault):
            pass  # controlled rejection: the only acceptable failure mode
        survived += 1

    elapsed = time.perf_counter() - start
    assert survived == 10_000
    assert elapsed < 30.0, f"wire suite took {elapsed:.1f}s"


# 2. The canonical first call.


def test_echo_hello_returns_one_element_list(harness):
    assert harness.session().echo.echo("Hello") == ["Hello"]


# 3. File service against local slices, md5sum(1), and a traversal generator.


def test_file_reads_md5_and_traversal_match_oracles(harness):
    rng = random.Random(0xF11E)
    start = time.perf_counter()
    session = harness.session()
    files = harness.base / "files"

    payload = rng.randbytes(1 << 20)
    (files / "blob.bin").write_bytes(payload)
    for i in range(1_000):
        offset = rng.randrange(0, len(payload) + 4096)
        nbytes = rng.randrange(0, 65_536)
        assert session.read("/blob.bin", offset, nbytes) == payload[offset:offset + nbytes], (
            f"read {i} at {offset}+{nbytes}"
        )

    (files / "m").mkdir()
    for i in range(100):
        body = rng.randbytes(rng.randrange(0, 65_536))
        (files / "m" / f"f{i}").write_bytes(body)
        out = subprocess.run(
            ["md5sum", str(files / "m" / f"f{i}")], capture_output=True, text=True,
            check=True,
        )
        assert session.call("file.md5", [f"/m/f{i}"])[0] == out.stdout.split()[0], i

    pieces = ["..", "a", "etc", "passwd", ".", "secret dir", "m"]
    for i in range(1_000):
        parts = [rng.choice(pieces) for _ in range(rng.randrange(1, 6))]
        if ".." not in parts:
            parts.insert(rng.randrange(len(parts) + 1), "..")
        attempt = "/".join(parts)
        if rng.random() < 0.3:
            attempt = "/" + attempt
        if rng.random() < 0.2:
            attempt = attempt.replace("/", "\\", 1)
        with pytest.raises(RpcFault) as err:
            session.call("file.read", [attempt, 0, 16])
        assert err.value.code == 403, f"attempt {i}: {attempt!r}"

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"file suite took {elapsed:.1f}s"


# 4. Access resolution: exhaustive agreement with the brute-force resolver.


def test_acl_resolution_matches_bruteforce_oracle(tmp_path):
    rng = random.Random(0xAC1)
    dns = [f"/O=Test/CN=user{i}" for i in range(6)]
    group_names = ["/g0", "/g0/sub", "/g0/sub/deep", "/g1"]
    methods = [
        "file.read", "file.ls", "file.md5", "job.submit",
        "job.info", "group.create", "proxy.store", "echo.echo",
    ]
    targets = methods + ["file", "job", "group", "proxy", "*"]

    cases = 0
    for universe in range(210):
        base = tmp_path / f"u{universe}"
        base.mkdir()
        group_store = GroupStore(base / "groups.jsonl")
        groups = {}
        for name in group_names:
            group_store.create(name)
            members = set(rng.sample(dns, rng.randrange(0, 4)))
            group_store.add_users(name, sorted(members))
            groups[name] = members

        acl = AclStore(base / "acl.jsonl")
        specs = {}
        for target in rng.sample(targets, rng.randrange(1, len(targets) + 1)):
            principals = dns + group_names
            allow = rng.sample(principals, rng.randrange(0, 4))
            deny = rng.sample(principals, rng.randrange(0, 3))
            specs[target] = (allow, deny)
            acl.add_spec(target, allow, deny)

        # membership precomputed through the real store, once per pair
        member = {
            (dn, g): group_store.is_member(dn, g) for dn in dns for g in group_names
        }
        is_member = lambda dn, g: member.get((dn, g), False)

        for dn in dns:
            for method in methods:
                expected = oracle_resolve(specs, groups, dn, method)
                got = acl.resolve(dn, method, is_member)
                assert got == expected, (universe, dn, method, specs, groups)
                cases += 1

    assert cases >= 10_000


# 5. Escrow: exact round-trips, indistinguishable failures, no plaintext at rest.


def test_escrow_roundtrips_and_unavailable_is_uniform(tmp_path):
    h = ServerHarness(tmp_path)
    blobs, sessions = {}, {}
    for i in range(100):
        dn = f"/O=Test/CN=holder{i}"
        cred = h.add_identity(dn)
        blobs[dn] = credential_to_text(cred, include_private=True)
    h.start()
    try:
        holders = sorted(blobs)
        admin = h.session(ADMIN_DN)
        admin.call("group.create", ["/holders"])
        admin.call("group.add_users", ["/holders", holders])
        h.allow("proxy", ["/holders"])

        for i, dn in enumerate(holders):
            sessions[dn] = h.session(dn)
            assert sessions[dn].call("proxy.store", [blobs[dn], f"pw{i}"]) == [True]
        for i, dn in enumerate(holders):
            assert sessions[dn].call("proxy.retrieve", [dn, f"pw{i}"]) == [blobs[dn]]

        faults = set()
        for i, dn in enumerate(holders):
            with pytest.raises(RpcFault) as wrong_pw:
                sessions[dn].call("proxy.retrieve", [dn, f"pw{i}-wrong"])
            with pytest.raises(RpcFault) as unknown:
                sessions[dn].call("proxy.retrieve", [f"/O=Test/CN=ghost{i}", f"pw{i}"])
            faults.add((wrong_pw.value.code, wrong_pw.value.message))
            faults.add((unknown.value.code, unknown.value.message))
        assert len(faults) == 1, f"distinguishable faults: {faults}"

        stored = (h.base / "data" / "escrow.bin").read_bytes()
        for dn, blob in blobs.items():
            cred = h.creds[dn]
            assert cred.private_key not in stored, dn
            key_b64 = credential_to_text(cred, include_private=True).splitlines()[-2]
            assert key_b64.encode() not in stored, dn
            assert blob.encode() not in stored, dn

        # same blob, same password, two stores: fresh salt and nonce each time
        store = EscrowStore(h.base / "data" / "escrow.bin")
        dn = holders[0]
        store.store(dn, blobs[dn].encode(), "again")
        first = store._load()[dn].ciphertext
        store.store(dn, blobs[dn].encode(), "again")
        second = store._load()[dn].ciphertext
        assert first != second
    finally:
        h.stop()


# 6. Statelessness: a cold restart between every step changes nothing.

WORKFLOW_SEED_FILE = random.Random(0x5EED).randbytes(200_000)


def _run_workflow(h: ServerHarness, restart_between: bool):
    admin = h.session(ADMIN_DN)
    alice = h.session(ALICE)
    alice_blob = credential_to_text(h.creds[ALICE], include_private=True)
    state = {}

    def submit():
        job = alice.call("job.submit", ["echo workflow"])[0]
        state["job"] = job
        return [job]

    steps = [
        lambda: admin.call("group.create", ["/exp"]),
        lambda: admin.call("group.add_users", ["/exp", [ALICE, "/O=Test/CN=bob"]]),
        lambda: admin.call("system.add_acl_spec", ["*", ["/exp"], []]),
        lambda: admin.call("group.users", ["/exp"]),
        lambda: alice.call("proxy.store", [alice_blob, "wf-pass"]),
        lambda: alice.call("proxy.retrieve", [ALICE, "wf-pass"]),
        submit,
        lambda: [wait_exited(alice, state["job"])],
        lambda: alice.call("file.read", [f"/jobs/{state['job']}/stdout.txt", 0, 4096]),
        lambda: alice.call("file.md5", ["/seed.bin"]),
    ]
    results = []
    for i, step in enumerate(steps):
        if restart_between and i:
            h.restart()
        results.append(step())
    return _normalize(results, state["job"])


def _normalize(value, job_id: str):
    """Strips run-specific randomness: job ids and wall-clock fields."""
    if isinstance(value, str):
        return value.replace(job_id, "<job>")
    if isinstance(value, datetime):
        return "<time>"
    if isinstance(value, list):
        return [_normalize(v, job_id) for v in value]
    if isinstance(value, dict):
        return {k: _normalize(v, job_id) for k, v in value.items()}
    return value


def test_workflow_unchanged_by_restart_between_every_step(tmp_path):
    shared_alice = generate_credential(ALICE)
    runs = []
    for name, restart_between in (("solid", False), ("chopped", True)):
        h = ServerHarness(tmp_path / name)
        h.add_identity(ALICE, shared_alice)
        (h.base / "files" / "seed.bin").write_bytes(WORKFLOW_SEED_FILE)
        h.start()
        try:
            runs.append(_run_workflow(h, restart_between))
        finally:
            h.stop()
    assert runs[0] == runs[1]


# 7. Jobs: output and exit codes match /bin/sh, output is owner-private.


def test_job_output_exit_codes_and_ownership(harness):
    harness.add_identity(ALICE)
    harness.add_identity(MALLORY)
    harness.allow("job", [ALICE, MALLORY])
    harness.allow("file", [ALICE, MALLORY])
    alice = harness.session(ALICE)
    mallory = harness.session(MALLORY)

    oracle = subprocess.run(["/bin/sh", "-c", "echo hi"], capture_output=True)
    job_id = alice.call("job.submit", ["echo hi"])[0]
    wait_exited(alice, job_id)
    stdout = alice.call("file.read", [f"/jobs/{job_id}/stdout.txt", 0, 4096])[0]
    assert stdout == oracle.stdout

    commands = [
        "exit 0", "exit 1", "exit 7", "true", "false",
        "no-such-command-zz", "sh -c 'exit 9'", "echo x; exit 3",
        "test -f /nonexistent", "exit 250",
    ]
    for command in commands:
        expected = subprocess.run(["/bin/sh", "-c", command],
                                  capture_output=True).returncode
        jid = alice.call("job.submit", [command])[0]
        info = wait_exited(alice, jid)
        assert info["exit_code"] == expected, command

    for call in (("job.info", [job_id]),
                 ("file.read", [f"/jobs/{job_id}/stdout.txt", 0, 16])):
        with pytest.raises(RpcFault) as err:
            mallory.call(*call)
        assert err.value.code == 403


# 8. Client cache: invisible to correctness, zero RPCs when warm, bounded.


def test_client_cache_matches_uncached_reads_and_budget(harness):
    rng = random.Random(0xCAC4E)
    payload = rng.randbytes(300_000)
    (harness.base / "files" / "c.bin").write_bytes(payload)
    session = harness.session()
    cache = BlockCache(session, block_size=4096, capacity=32)
    budget = 4096 * 32

    for i in range(1_000):
        offset = rng.randrange(0, len(payload) + 8192)
        nbytes = rng.randrange(0, 12_000)
        cached = cache.read("/c.bin", offset, nbytes)
        direct = session.read("/c.bin", offset, nbytes)
        assert cached == direct, f"read {i} at {offset}+{nbytes}"
        assert cache.cached_bytes() <= budget

    cache.read("/c.bin", 10_000, 8_000)  # warm
    before = session.request_count
    assert cache.read("/c.bin", 10_000, 8_000) == payload[10_000:18_000]
    assert session.request_count == before, "warm read must issue zero RPCs"


# 9. Concurrency: parallel readers see exact bytes, parallel mutators lose nothing.


def test_concurrent_readers_and_group_mutators(harness):
    rng = random.Random(0xC0CC)
    payload = rng.randbytes(64 << 20)
    (harness.base / "files" / "big.bin").write_bytes(payload)
    part = len(payload) // 32

    def read_partition(reader: int):
        session = harness.session()
        local = random.Random(reader)
        for chunk_start in range(reader * part, (reader + 1) * part, part // 4):
            got = session.read("/big.bin", chunk_start, part // 4)
            if got != payload[chunk_start:chunk_start + part // 4]:
                return f"reader {reader}: bad bytes at {chunk_start}"
        for _ in range(2):  # overlapping random slices on top of the partition
            offset = local.randrange(0, len(payload) - 65_536)
            if session.read("/big.bin", offset, 65_536) != payload[offset:offset + 65_536]:
                return f"reader {reader}: bad bytes at {offset}"
        return None

    with ThreadPoolExecutor(max_workers=32) as pool:
        failures = [f for f in pool.map(read_partition, range(32)) if f]
    assert failures == []

    admin = harness.session()
    admin.call("group.create", ["/load"])
    members = {m: [f"/O=Test/CN=m{m}u{k}" for k in range(6)] for m in range(8)}

    def mutate(m: int):
        session = harness.session()
        session.call("group.add_users", ["/load", members[m][:3]])
        session.call("group.add_users", ["/load", members[m][3:]])

    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(mutate, range(8)))

    final = admin.call("group.users", ["/load"])
    expected = {dn for batch in members.values() for dn in batch}
    assert len(final) == len(set(final)), "duplicate members"
    assert set(final) == expected
