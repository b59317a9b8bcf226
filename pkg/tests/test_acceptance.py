"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with:  pytest tests/test_acceptance.py -v -s

Criteria (tolerances pinned here, not deferred):
  A1  KEM correctness: 1000 randomized keygen/encaps/decaps trials, zero
      mismatches, under 30 s.
  A2  KAT conformance: every frozen ML-KEM-768 vector exact on both
      backends; SHA-256 standard digests; AES-256-GCM validation vectors
      (zero-length and short plaintexts). Zero tolerance.
  A3  Hybrid roundtrip over sizes {0, 1, 16, 1 KiB, 64 KiB, 1 MiB},
      >= 500 randomized trials, zero failures.
  A4  Tamper totality: every single-bit flip of a complete encoded envelope
      (64-byte plaintext, ~10^4 bits) fails to open; zero wrong-plaintext
      outcomes; under 5 minutes.
  A5  Replay: duplicates and stale seqs rejected; out-of-order within the
      64-slot window accepted exactly once.
  A6  Transcript reproduction through the real CLI binaries: relay logs
      "Registered alice/bob" and "Relayed message from alice to bob span",
      bob prints "[alice] Hii bob", and a wire tap between the clients and
      the relay never carries the plaintext.
  A7  Relay blindness, structural: importing pqe.relay pulls in none of
      the kem/symmetric/envelope modules.
  A8  Performance ceilings: median keygen/encaps/decaps < 10 ms each,
      key derivation < 1 ms, 1 KiB end-to-end loopback < 50 ms, and the
      latency curve for sizes >= 10 KiB linear with r^2 >= 0.9. Measured
      and reference figures printed side by side.
  A9  TOFU safety: a key substituted after pinning blocks sending with
      FINGERPRINT_MISMATCH.
"""

import asyncio
import base64
import hashlib
import os
import random
import subprocess
import sys
import time

import pytest

from conftest import TapProxy, run_async
from pqe.envelope import (
    ReplayWindow,
    decode_envelope,
    encode_envelope,
    hybrid_open,
    hybrid_seal,
)
from pqe.errors import FingerprintMismatch, OpenFailure, ReplayFailure
from pqe.kem import (
    _native,
    _pure,
    active_backend,
    kem_decapsulate,
    kem_encapsulate,
    kem_generate_keypair,
)

KIB = 1024


def report(criterion: str, detail: str):
    print(f"\nACCEPTANCE {criterion} PASS: {detail}")


# ---------------------------------------------------------------------------

def test_a1_kem_correctness():
    trials = 1000
    started = time.perf_counter()
    for _ in range(trials):
        pk, sk = kem_generate_keypair()
        ct, ss = kem_encapsulate(pk)
        assert kem_decapsulate(sk, ct) == ss, "shared secrets must match"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.1f}s, budget 30s"
    report("A1", f"{trials} keygen/encaps/decaps trials, 0 mismatches, "
                 f"{elapsed:.1f}s on the {active_backend()} backend")


def test_a2_kat_conformance(mlkem_vectors, gcm_vectors):
    # ML-KEM-768: both backends replay every vector exactly
    for v in mlkem_vectors:
        seed = bytes.fromhex(v["d"]) + bytes.fromhex(v["z"])
        ek, dk = _pure.keygen(seed)
        assert (ek.hex(), dk.hex()) == (v["ek"], v["dk"])
        ct, ss = _pure.encaps(ek, bytes.fromhex(v["m"]))
        assert (ct.hex(), ss.hex()) == (v["ct"], v["ss"])
        assert _pure.decaps(dk, ct).hex() == v["ss"]
        damaged = bytes([ct[0] ^ 1]) + ct[1:]
        assert _pure.decaps(dk, damaged).hex() == v["ss_reject_bit0"]
        if _native.available():
            assert _native.keygen_from_seed(seed).hex() == v["ek"]
            assert _native.decaps_with_seed(seed, ct).hex() == v["ss"]
            assert _native.decaps_with_seed(seed, damaged).hex() == v["ss_reject_bit0"]

    # SHA-256 standard digests
    assert hashlib.sha256(b"").hexdigest() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert hashlib.sha256(b"abc").hexdigest() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )

    # AES-256-GCM validation vectors: zero-length and short plaintexts
    from pqe.symmetric import AeadSealed, DerivationMode, SessionKey, aead_open, aead_seal

    zero = next(v for v in gcm_vectors if v["name"] == "zero_empty")
    assert zero["tag"] == "530f8afbc74536b9a963b4f1c4cb738b"
    for v in gcm_vectors:
        key = SessionKey(bytes.fromhex(v["key"]), DerivationMode.V1_RAW_HASH)
        sealed = aead_seal(
            key, bytes.fromhex(v["nonce"]), bytes.fromhex(v["pt"]), bytes.fromhex(v["aad"])
        )
        assert sealed.ciphertext.hex() == v["ct"] and sealed.tag.hex() == v["tag"]
        assert aead_open(
            key,
            AeadSealed(bytes.fromhex(v["nonce"]), bytes.fromhex(v["ct"]), bytes.fromhex(v["tag"])),
            bytes.fromhex(v["aad"]),
        ) == bytes.fromhex(v["pt"])
    backends = "pure+native" if _native.available() else "pure"
    report("A2", f"{len(mlkem_vectors)} ML-KEM vectors exact on {backends}; "
                 f"SHA-256 and AES-256-GCM published vectors exact")


def test_a3_hybrid_roundtrip():
    plan = [(0, 100), (1, 100), (16, 100), (1 * KIB, 100), (64 * KIB, 80), (1024 * KIB, 20)]
    total = sum(n for _, n in plan)
    assert total >= 500
    rng = random.Random(20260810)
    failures = 0
    pk = sk = None
    for size, count in plan:
        for i in range(count):
            if i % 25 == 0:
                pk, sk = kem_generate_keypair()
            pt = rng.randbytes(size)
            seq = rng.randrange(1, 1 << 63)
            env = hybrid_seal(pk, "alice", "bob", seq, pt)
            if hybrid_open(sk, env) != pt:
                failures += 1
    assert failures == 0
    report("A3", f"{total} seal/open trials across sizes 0..1MiB, 0 failures")


def test_a4_tamper_totality(keypair):
    pk, sk = keypair
    pt = os.urandom(64)
    blob = encode_envelope(hybrid_seal(pk, "alice", "bob", 42, pt))
    bits = len(blob) * 8
    assert bits > 9000  # ~10^4 single-bit mutations
    started = time.perf_counter()
    wrong_plaintext = 0
    open_failures = 0
    window = ReplayWindow()  # never advances: every open fails
    for bit in range(bits):
        mutated = bytearray(blob)
        mutated[bit // 8] ^= 1 << (bit % 8)
        try:
            out = hybrid_open(sk, decode_envelope(bytes(mutated)), window)
        except OpenFailure:
            open_failures += 1
            continue
        wrong_plaintext += 1
        print(f"bit {bit}: produced {out[:16].hex()}...")
    elapsed = time.perf_counter() - started
    assert wrong_plaintext == 0, f"{wrong_plaintext} flips yielded plaintext"
    assert open_failures == bits
    assert elapsed < 300, f"took {elapsed:.0f}s, budget 300s"
    report("A4", f"{bits} single-bit flips, 100% OpenFailure, "
                 f"0 wrong plaintexts, {elapsed:.1f}s")


def test_a5_replay_window(keypair):
    pk, sk = keypair
    window = ReplayWindow()
    envelopes = {
        seq: hybrid_seal(pk, "alice", "bob", seq, f"msg {seq}".encode())
        for seq in (1, 2, 3, 4, 5, 70)
    }
    # out-of-order delivery {1,2,3,5,4}: all accepted exactly once
    for seq in (1, 2, 3, 5, 4):
        assert hybrid_open(sk, envelopes[seq], window) == f"msg {seq}".encode()
    # every re-delivery rejected
    for seq in (1, 2, 3, 4, 5):
        with pytest.raises(ReplayFailure):
            hybrid_open(sk, envelopes[seq], window)
    # slide far ahead, then a stale seq beyond the 64-slot window
    assert hybrid_open(sk, envelopes[70], window) == b"msg 70"
    stale = hybrid_seal(pk, "alice", "bob", 6, b"stale")
    with pytest.raises(ReplayFailure):
        hybrid_open(sk, stale, window)  # 70-6 = 64 slots back: outside
    inside = hybrid_seal(pk, "alice", "bob", 7, b"inside")
    assert hybrid_open(sk, inside, window) == b"inside"  # 63 back: inside
    report("A5", "out-of-order {1,2,3,5,4} accepted once each; duplicates and "
                 "stale seqs rejected; window edge exact at 64")


# ---------------------------------------------------------------------------

async def _read_until(stream, predicate, timeout=20.0, sink=None):
    deadline = asyncio.get_running_loop().time() + timeout
    collected = []
    while True:
        remaining = deadline - asyncio.get_running_loop().time()
        if remaining <= 0:
            raise TimeoutError(f"expected line not seen; got: {collected}")
        line = await asyncio.wait_for(stream.readline(), remaining)
        if not line:
            raise AssertionError(f"stream closed; got: {collected}")
        text = line.decode(errors="replace").rstrip("\n")
        collected.append(text)
        if sink is not None:
            sink.append(text)
        if predicate(text):
            return text


def test_a6_transcript_reproduction(tmp_path):
    """Figures 4-7 through the real CLI: spawn relay and two clients as
    subprocesses, route the clients through a byte-recording tap, have
    alice type 'Hii bob', and verify every transcript line plus relay
    blindness at the wire level."""

    async def scenario():
        env = dict(os.environ, PYTHONUNBUFFERED="1")
        relay_proc = await asyncio.create_subprocess_exec(
            sys.executable, "-m", "pqe.cli", "relay", "--listen", "127.0.0.1:0",
            stdout=asyncio.subprocess.PIPE, stderr=asyncio.subprocess.STDOUT, env=env,
        )
        relay_lines: list[str] = []
        procs = [relay_proc]
        tap = None
        try:
            banner = await _read_until(
                relay_proc.stdout, lambda t: t.startswith("Server running on"),
                sink=relay_lines,
            )
            relay_port = int(banner.rsplit(":", 1)[1])

            tap = TapProxy("127.0.0.1", relay_port)
            tap_port = await tap.start()

            async def client(name, peer):
                return await asyncio.create_subprocess_exec(
                    sys.executable, "-m", "pqe.cli", "client",
                    "--name", name, "--peer", peer,
                    "--relay", f"127.0.0.1:{tap_port}",
                    "--keys", str(tmp_path / name),
                    stdin=asyncio.subprocess.PIPE,
                    stdout=asyncio.subprocess.PIPE,
                    stderr=asyncio.subprocess.STDOUT,
                    env=env,
                )

            bob = await client("bob", "alice")
            procs.append(bob)
            await _read_until(bob.stdout, lambda t: t == "Client bob ready. Type messages to send to alice.")

            alice = await client("alice", "bob")
            procs.append(alice)
            await _read_until(alice.stdout, lambda t: t == "Client alice ready. Type messages to send to bob.")

            alice.stdin.write(b"Hii bob\n")
            await alice.stdin.drain()

            bob_line = await _read_until(bob.stdout, lambda t: t == "[alice] Hii bob")
            assert bob_line == "[alice] Hii bob"

            await _read_until(
                relay_proc.stdout,
                lambda t: t == "Relayed message from alice to bob",
                sink=relay_lines,
            )
            assert "Registered alice" in relay_lines
            assert "Registered bob" in relay_lines

            assert len(tap.capture) > 4000, "tap saw the key exchange and envelope"
            assert b"Hii bob" not in bytes(tap.capture), "plaintext crossed the wire!"
            return len(tap.capture)
        finally:
            for proc in procs:
                if proc.returncode is None:
                    proc.terminate()
            await asyncio.gather(*(p.wait() for p in procs), return_exceptions=True)
            if tap is not None:
                await tap.close()

    captured = run_async(scenario(), timeout=90)
    report("A6", "relay logged Registered alice/bob and the relayed line; bob "
                 f"printed '[alice] Hii bob'; {captured} captured wire bytes "
                 "contain no plaintext")


def test_a7_relay_blindness_structural():
    code = (
        "import sys, pqe.relay; "
        "bad = [m for m in sys.modules if m in "
        "('pqe.kem', 'pqe.symmetric', 'pqe.envelope')]; "
        "print(','.join(bad) or 'CLEAN')"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "CLEAN", f"relay imports crypto: {out.stdout}"
    report("A7", "pqe.relay imports none of kem/symmetric/envelope "
                 "(clean-interpreter sys.modules audit)")


def test_a8_performance():
    from pqe.bench import bench_end_to_end, bench_primitives, render_report

    report_obj = bench_primitives(trials=100, compare_backends=False)
    bench_end_to_end(
        sizes=(1 * KIB, 10 * KIB, 100 * KIB, 1024 * KIB), trials=20, report=report_obj
    )
    print()
    print(render_report(report_obj))

    medians = {m.name: m.median_ms for m in report_obj.metrics}
    ceilings = {"kem_keygen": 10.0, "kem_encaps": 10.0, "kem_decaps": 10.0, "kdf": 1.0}
    for name, ceiling in ceilings.items():
        assert medians[name] < ceiling, f"{name} median {medians[name]:.3f} ms >= {ceiling} ms"

    curve = {p.size_bytes: p.median_ms for p in report_obj.curve}
    assert curve[1 * KIB] < 50.0, f"1 KiB e2e {curve[1 * KIB]:.1f} ms >= 50 ms"
    assert report_obj.monotone
    assert report_obj.fit_r2 is not None and report_obj.fit_r2 >= 0.9
    assert report_obj.stability_ratio is not None
    assert report_obj.stability_ratio <= report_obj.stability_gate
    report("A8", "medians: " + ", ".join(
        f"{k}={medians[k]:.3f}ms" for k in ceilings
    ) + f"; 1KiB e2e={curve[1 * KIB]:.2f}ms; r^2={report_obj.fit_r2:.4f}")


def test_a9_tofu_safety(tmp_path):
    from pqe.agent import ClientAgent, PeerRegistry, SeqState, init_identity
    from pqe.relay import RelayServer

    async def scenario():
        relay = RelayServer()
        host, port = await relay.start("127.0.0.1", 0)
        agents = []
        for name in ("alice", "bob"):
            home = tmp_path / name
            agent = ClientAgent(
                name, host, port, init_identity(name, home),
                PeerRegistry(home / "pins.json"), SeqState(home / "seq.json"),
            )
            await agent.start()
            await agent.wait_ready()
            agents.append(agent)
        alice, bob = agents
        inbox = bob.subscribe()
        await alice.send_message("bob", "pin establishing")
        await asyncio.wait_for(inbox.get(), 5)

        substituted, _ = kem_generate_keypair()
        relay._clients["bob"].pubkey_b64 = base64.b64encode(substituted.bytes).decode()
        relayed_before = relay.counters["relayed"]
        raised = False
        try:
            await alice.send_message("bob", "must never leave")
        except FingerprintMismatch as exc:
            raised = True
            assert exc.fetched == substituted.fingerprint()
            assert exc.pinned == bob.keystore.fingerprint
        assert raised, "substituted key did not raise"
        await asyncio.sleep(0.1)
        assert relay.counters["relayed"] == relayed_before, "a frame left despite the mismatch"
        for agent in agents:
            await agent.stop()
        await relay.close()

    run_async(scenario())
    report("A9", "key substitution after pinning raised FINGERPRINT_MISMATCH "
                 "and no frame reached the relay")
