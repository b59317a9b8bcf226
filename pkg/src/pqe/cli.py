"""Command line entry points: relay server, chat client, bench harness."""

import argparse
import asyncio
import logging
import sys

from .errors import FingerprintMismatch, PqeError, RelayProtocolError


def _host_port(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {value!r}")
    return host, int(port)


def _size(value: str) -> int:
    v = value.strip().lower()
    mult = 1
    for suffix, m in (("kib", 1024), ("k", 1024), ("mib", 1 << 20), ("m", 1 << 20)):
        if v.endswith(suffix):
            v = v[: -len(suffix)]
            mult = m
            break
    try:
        return int(float(v) * mult)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_relay = sub.add_parser("relay", help="run the zero-trust relay server")
    p_relay.add_argument(
        "--listen", type=_host_port, default=("127.0.0.1", 65432), metavar="HOST:PORT",
        help="listen address (default 127.0.0.1:65432)",
    )

    p_client = sub.add_parser("client", help="run an interactive chat client")
    p_client.add_argument("--name", required=True, help="our relay name ([a-z0-9_-])")
    p_client.add_argument("--peer", required=True, help="default recipient of typed messages")
    p_client.add_argument(
        "--relay", type=_host_port, default=("127.0.0.1", 65432), metavar="HOST:PORT"
    )
    p_client.add_argument("--keys", default=None, metavar="DIR",
                          help="key directory (default ./pqe-keys/NAME)")
    p_client.add_argument("--console-port", type=int, default=None, metavar="PORT",
                          help="serve the loopback console API on this port")
    p_client.add_argument("--rekey-every", type=int, default=1, metavar="N",
                          help="reuse one encapsulation for N messages (default 1)")
    p_client.add_argument("--kdf", choices=("v1", "v2"), default="v2",
                          help="session key derivation mode (default v2, context-bound)")
    p_client.add_argument("--pin-file", action="append", default=[], metavar="PEER=PATH",
                          help="preload and pin a peer public key from an armored file")

    p_bench = sub.add_parser("bench", help="run the benchmark suite")
    p_bench.add_argument("--sizes", default=None, metavar="LIST",
                         help="comma-separated message sizes, e.g. 1k,10k,100k,1m")
    p_bench.add_argument("--trials", type=int, default=200,
                         help="trials per primitive metric (default 200)")
    p_bench.add_argument("--e2e-trials", type=int, default=40,
                         help="trials per end-to-end size (default 40)")
    p_bench.add_argument("--skip-e2e", action="store_true",
                         help="only run the primitive micro-benchmarks")
    p_bench.add_argument("--out", default=None, metavar="CSV",
                         help="also write the report as CSV")
    return parser


def _run_relay(args) -> int:
    from .relay import RelayServer

    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stdout)

    async def main():
        relay = RelayServer()
        await relay.start(*args.listen)
        await relay.serve_forever()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def _run_client(args) -> int:
    from .agent import (
        ClientAgent,
        PeerRegistry,
        SeqState,
        format_fingerprint,
        format_incoming,
        init_identity,
        load_public_key_file,
    )
    from .envelope import VERSION_V1, VERSION_V2

    logging.basicConfig(level=logging.WARNING, format="%(message)s", stream=sys.stderr)
    key_dir = args.keys or f"./pqe-keys/{args.name}"
    try:
        keystore = init_identity(args.name, key_dir)
    except PqeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"Identity {args.name} fingerprint: {format_fingerprint(keystore.fingerprint)}")
    peers = PeerRegistry(keystore.directory / f"{args.name}_pins.json")
    for spec_arg in args.pin_file:
        peer, _, path = spec_arg.partition("=")
        if not peer or not path:
            print(f"error: --pin-file expects PEER=PATH, got {spec_arg!r}", file=sys.stderr)
            return 2
        record = peers.pin(peer, load_public_key_file(path))
        print(f"Pinned {peer} from {path}: {format_fingerprint(record.fingerprint)}")
    seqs = SeqState(keystore.directory / f"{args.name}_seq.json")
    agent = ClientAgent(
        args.name,
        args.relay[0],
        args.relay[1],
        keystore,
        peers,
        seqs,
        rekey_every=args.rekey_every,
        version=VERSION_V1 if args.kdf == "v1" else VERSION_V2,
    )

    async def main() -> int:
        await agent.start()
        try:
            await agent.wait_ready(timeout=30)
        except (PqeError, asyncio.TimeoutError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            await agent.stop()
            return 2
        console = None
        if args.console_port is not None:
            from .console_api import new_token, serve_console

            token = new_token()
            console = await serve_console(agent, args.console_port, token)
            port = console.servers[0].sockets[0].getsockname()[1]
            print(f"Console API on http://127.0.0.1:{port}  token: {token}")

        inbox = agent.subscribe()

        async def printer():
            while True:
                event = await inbox.get()
                if event.get("kind") != "message":
                    continue
                if event.get("direction") == "in":
                    if event.get("failure"):
                        print(f"!! dropped message from {event.get('peer')}: "
                              f"{event['failure']} failure")
                    else:
                        print(format_incoming(event["peer"], event["text"]))
                elif event.get("direction") == "notice":
                    print(f"!! relay notice: {event.get('failure')} {event.get('text') or ''}")

        print_task = asyncio.create_task(printer())
        print(f"Client {args.name} ready. Type messages to send to {args.peer}.")
        loop = asyncio.get_running_loop()
        interactive = sys.stdin.isatty()
        try:
            while True:
                if interactive:
                    print("> ", end="", flush=True)
                line = await loop.run_in_executor(None, sys.stdin.readline)
                if line == "":
                    await asyncio.sleep(3600)  # stdin closed; stay alive to receive
                    continue
                text = line.rstrip("\n")
                if not text:
                    continue
                try:
                    await agent.send_message(args.peer, text)
                except FingerprintMismatch as exc:
                    print(f"SECURITY WARNING: {exc}")
                    print(f"Sending is blocked until you re-pin {args.peer}.")
                except (RelayProtocolError, ConnectionError, PqeError) as exc:
                    print(f"!! send failed: {exc}")
        except (KeyboardInterrupt, asyncio.CancelledError):
            pass
        finally:
            print_task.cancel()
            if console is not None:
                console.should_exit = True
            await agent.stop()
        return 0

    try:
        return asyncio.run(main())
    except KeyboardInterrupt:
        return 0


def _run_bench(args) -> int:
    from .bench import (
        DEFAULT_SIZES,
        bench_end_to_end,
        bench_primitives,
        render_report,
        write_csv,
    )

    sizes = DEFAULT_SIZES if args.sizes is None else [_size(s) for s in args.sizes.split(",")]
    report = bench_primitives(trials=args.trials)
    if not args.skip_e2e:
        bench_end_to_end(sizes=sizes, trials=args.e2e_trials, report=report)
    print(render_report(report))
    if args.out:
        write_csv(report, args.out)
        print(f"\nwrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "relay":
        return _run_relay(args)
    if args.command == "client":
        return _run_client(args)
    if args.command == "bench":
        return _run_bench(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
