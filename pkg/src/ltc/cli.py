"""Thin command-line client for the clustering service.

Every subcommand builds a request, sends it over HTTP and renders the
response; all computation happens behind the service API. By default the
app is mounted in-process over an ASGI transport, so no server needs to
be running; ``--server http://host:port`` targets a live instance
instead.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical
divergence.
"""

import argparse
import asyncio
import json
import os
import sys

import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cap_threads():
    """LTC_THREADS caps BLAS pools; must run before numpy is imported."""
    cap = os.environ.get("LTC_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, cap)


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="base RNG seed")
    common.add_argument("--out", help="output directory for result files")
    common.add_argument("--repeats", type=int, help="number of seeded repeats")
    common.add_argument("--server", help="base URL of a running service (default: in-process)")

    parser = argparse.ArgumentParser(
        prog="ltc", description="lifelong temporal clustering experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_flags(p):
        p.add_argument("--data", help="dataset file")
        p.add_argument("--format", choices=["long_csv", "binary"], help="dataset format")
        p.add_argument("--labels", help="labels CSV (long_csv format only)")
        p.add_argument(
            "--normalize",
            action=argparse.BooleanOptionalAction,
            default=None,
            help="per-variable z-score before training",
        )

    def add_train_flags(p):
        p.add_argument("--pretrain-epochs", type=int)
        p.add_argument("--train-epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--conv-channels", type=int)
        p.add_argument("--kernel-width", type=int)
        p.add_argument("--lstm-hidden-1", type=int)
        p.add_argument("--lstm-hidden-2", type=int)

    p_cluster = sub.add_parser(
        "cluster", parents=[common], help="train and cluster one dataset"
    )
    add_data_flags(p_cluster)
    add_train_flags(p_cluster)
    p_cluster.add_argument("--k", type=int, help="number of clusters")

    p_baseline = sub.add_parser(
        "baseline", parents=[common], help="k-means on the flattened series"
    )
    add_data_flags(p_baseline)
    p_baseline.add_argument("--k", type=int, help="number of clusters")

    p_ll = sub.add_parser(
        "lifelong", parents=[common], help="run a task stream through the model pool"
    )
    add_data_flags(p_ll)
    add_train_flags(p_ll)
    p_ll.add_argument("--k", help="clusters per task: one int or comma list")
    p_ll.add_argument("--mode", choices=["iid", "sequential", "continuous_drift"])
    p_ll.add_argument(
        "--class-groups",
        help="sequential grouping, e.g. '0,1,2;3,4' = two tasks",
    )
    p_ll.add_argument("--num-batches", type=int, help="continuous drift batch count")
    p_ll.add_argument("--stream-batch-size", type=int, help="continuous drift batch size")
    p_ll.add_argument("--max-fraction", type=float, help="final new-class fraction")
    p_ll.add_argument("--new-class", type=int, help="drifting class id")
    p_ll.add_argument("--delta", type=float, help="new-task threshold on v")
    p_ll.add_argument("--refine-band", type=float, help="refine threshold on v")
    p_ll.add_argument("--capacity", type=int, help="model pool capacity")
    p_ll.add_argument("--replay-cap", type=int, help="replay buffer size (0 disables)")
    p_ll.add_argument(
        "--ablate-single-model",
        action="store_true",
        default=None,
        help="force every step onto the first model, replay off",
    )

    p_pool = sub.add_parser("pool", parents=[common], help="inspect pool checkpoints")
    p_pool.add_argument("action", choices=["list", "export", "inspect"])
    p_pool.add_argument("--checkpoint", help="pool checkpoint directory")
    p_pool.add_argument("--id", type=int, help="entry id (inspect)")
    p_pool.add_argument("--dest", help="destination directory (export)")
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise SystemExit2(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise SystemExit2(f"bad config JSON: {exc}")


class SystemExit2(Exception):
    """Configuration failure surfaced as exit code 2."""


def _put(payload, key, value):
    if value is not None:
        payload[key] = value


def _nested(payload, section, key, value):
    if value is not None:
        payload.setdefault(section, {})[key] = value


def _merge_train_flags(payload, args):
    _nested(payload, "train", "pretrain_epochs", args.pretrain_epochs)
    _nested(payload, "train", "train_epochs", args.train_epochs)
    _nested(payload, "train", "batch_size", args.batch_size)
    _nested(payload, "train", "lr", args.lr)
    _nested(payload, "model", "conv_channels", args.conv_channels)
    _nested(payload, "model", "kernel_width", args.kernel_width)
    _nested(payload, "model", "lstm_hidden_1", args.lstm_hidden_1)
    _nested(payload, "model", "lstm_hidden_2", args.lstm_hidden_2)


def _merge_data_flags(payload, args):
    _put(payload, "data", args.data)
    _put(payload, "format", args.format)
    _put(payload, "labels", args.labels)
    _put(payload, "normalize", args.normalize)
    _put(payload, "seed", args.seed)
    _put(payload, "out", args.out)


def _require(payload, keys):
    missing = [k for k in keys if payload.get(k) is None]
    if missing:
        raise SystemExit2(f"missing required option(s): {', '.join(missing)}")


def _parse_k_list(text):
    try:
        parts = [int(p) for p in str(text).split(",")]
    except ValueError:
        raise SystemExit2(f"bad --k value {text!r}")
    return parts[0] if len(parts) == 1 else parts


def _parse_groups(text):
    try:
        return [[int(c) for c in group.split(",")] for group in text.split(";")]
    except ValueError:
        raise SystemExit2(f"bad --class-groups value {text!r}")


async def _send(args, method, path, body=None, params=None):
    if args.server:
        client = httpx.AsyncClient(base_url=args.server, timeout=None)
    else:
        from .service.app import create_app

        client = httpx.AsyncClient(
            transport=httpx.ASGITransport(app=create_app()),
            base_url="http://ltc.internal",
            timeout=None,
        )
    async with client:
        return await client.request(method, path, json=body, params=params)


def _fail_from_response(resp):
    try:
        body = resp.json()
        detail = body.get("detail", resp.text)
        kind = body.get("kind", "config")
    except ValueError:
        detail, kind = resp.text, "config"
    print(f"error: {detail}", file=sys.stderr)
    return EXIT_NUMERIC if kind == "numeric" else EXIT_CONFIG


def _print_result_rows(rows):
    print(f"{'seed':>6} {'accuracy':>9} {'purity':>9} {'mse':>12} {'kld':>12} {'wall_s':>9}")
    for r in rows:
        acc = "-" if r["accuracy"] is None else f"{r['accuracy']:.4f}"
        pur = "-" if r["purity"] is None else f"{r['purity']:.4f}"
        mse = "-" if r["mse_final"] is None else f"{r['mse_final']:.5g}"
        kld = "-" if r["kld_final"] is None else f"{r['kld_final']:.5g}"
        wall = "-" if r["wall_seconds"] is None else f"{r['wall_seconds']:.1f}"
        print(f"{r['seed']:>6} {acc:>9} {pur:>9} {mse:>12} {kld:>12} {wall:>9}")


async def _run_cluster(args, endpoint):
    payload = _load_config(args.config)
    _merge_data_flags(payload, args)
    if args.k is not None:
        payload["k"] = args.k
    _put(payload, "repeats", args.repeats)
    if endpoint == "/cluster":
        _merge_train_flags(payload, args)
    _require(payload, ["data", "k", "out"])
    resp = await _send(args, "POST", endpoint, body=payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    _print_result_rows(body["rows"])
    print(f"results: {body['results_csv']}")
    return EXIT_OK


async def _run_lifelong(args):
    payload = _load_config(args.config)
    _merge_data_flags(payload, args)
    _merge_train_flags(payload, args)
    ll = payload.setdefault("lifelong", {})
    if args.k is not None:
        ll["k"] = _parse_k_list(args.k)
    if args.class_groups is not None:
        ll["class_groups"] = _parse_groups(args.class_groups)
    for flag, key in [
        (args.mode, "mode"),
        (args.num_batches, "num_batches"),
        (args.stream_batch_size, "batch_size"),
        (args.max_fraction, "max_fraction"),
        (args.new_class, "new_class"),
        (args.delta, "delta"),
        (args.refine_band, "refine_band"),
        (args.capacity, "capacity"),
        (args.replay_cap, "replay_cap"),
        (args.ablate_single_model, "ablate_single_model"),
    ]:
        if flag is not None:
            ll[key] = flag
    _require(payload, ["data", "out"])
    resp = await _send(args, "POST", "/lifelong", body=payload)
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    print(f"{'step':>5} {'decision':>10} {'v':>8} {'pool':>5} {'acc':>7}  past-task accuracies")
    for r in body["rows"]:
        v = "-" if r["v"] is None else f"{r['v']:.4f}"
        acc = "-" if r["acc_task"] is None else f"{r['acc_task']:.4f}"
        trail = " ".join(
            "-" if a is None else f"{a:.4f}" for a in r["task_accuracies"]
        )
        print(f"{r['step']:>5} {r['decision']:>10} {v:>8} {r['pool_size']:>5} {acc:>7}  {trail}")
    print(f"results: {body['lifelong_csv']}")
    print(f"pool: {body['pool_dir']}")
    return EXIT_OK


async def _run_pool(args):
    payload = _load_config(args.config)
    checkpoint = args.checkpoint or payload.get("checkpoint")
    if checkpoint is None:
        raise SystemExit2("missing required option(s): --checkpoint")
    if args.action == "list":
        resp = await _send(args, "GET", "/pool/entries", params={"checkpoint": checkpoint})
        if resp.status_code != 200:
            return _fail_from_response(resp)
        entries = resp.json()["entries"]
        print(f"{'id':>4} {'p_c':>8} {'h':>4} {'created':>8} {'state':>8}")
        for e in entries:
            state = "evicted" if e["evicted"] else "live"
            print(f"{e['id']:>4} {e['p_c']:>8.4f} {e['h']:>4} {e['created_at']:>8} {state:>8}")
        return EXIT_OK
    if args.action == "inspect":
        if args.id is None:
            raise SystemExit2("missing required option(s): --id")
        resp = await _send(
            args, "GET", f"/pool/entries/{args.id}", params={"checkpoint": checkpoint}
        )
        if resp.status_code != 200:
            return _fail_from_response(resp)
        print(json.dumps(resp.json(), indent=1))
        return EXIT_OK
    dest = args.dest or payload.get("dest")
    if dest is None:
        raise SystemExit2("missing required option(s): --dest")
    resp = await _send(
        args, "POST", "/pool/export", body={"checkpoint": checkpoint, "dest": dest}
    )
    if resp.status_code != 200:
        return _fail_from_response(resp)
    print(f"exported to {resp.json()['dest']}")
    return EXIT_OK


async def _dispatch(args):
    if args.command == "cluster":
        return await _run_cluster(args, "/cluster")
    if args.command == "baseline":
        return await _run_cluster(args, "/baseline")
    if args.command == "lifelong":
        return await _run_lifelong(args)
    return await _run_pool(args)


def main(argv=None):
    _cap_threads()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return asyncio.run(_dispatch(args))
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except httpx.HTTPError as exc:
        print(f"error: request failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
