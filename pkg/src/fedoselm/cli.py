"""Command-line entry point: ``fedoselm {train,export,eval,merge,serve,experiment}``.

Exit codes: 0 ok, 1 environment, 2 usage, 3 incompatible models, 4 remote or
missing resource. The server address defaults to ``$OSELM_FED_SERVER``
(``host:port``); ``--server`` overrides it.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import data as datasets
from .anomaly import fit, losses
from .elm import Activation, Topology
from .errors import (
    ConfigurationError, FedOselmError, FormatError, IncompatibleTopologyError, TransportError,
)
from .federation import modelfile
from .federation.client import EdgeNode
from .federation.server import FederationServer
from .federation.transport import TcpTransport, parse_address

log = logging.getLogger("fedoselm")

ENV_SERVER = "OSELM_FED_SERVER"
DEFAULT_SERVER = "127.0.0.1:7707"

EXIT_OK, EXIT_ENV, EXIT_USAGE, EXIT_INCOMPATIBLE, EXIT_REMOTE = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dataset_args(p, synth_defaults=True):
    p.add_argument("--dataset", choices=datasets.DATASETS, default="synth")
    p.add_argument("--data-dir", default=os.environ.get("OSELM_DATA_DIR"),
                   help="directory holding the dataset files (default: $OSELM_DATA_DIR)")
    p.add_argument("--features", type=int, default=32, help="synth: feature count")
    p.add_argument("--classes", type=int, default=4, help="synth: class count")
    p.add_argument("--rows-per-class", type=int, default=200, help="synth: rows per class")
    p.add_argument("--window", type=int, default=60, help="uah: speed samples per feature row")


def _load(args) -> datasets.LabeledDataset:
    return datasets.load_named(
        args.dataset, args.data_dir, n_features=args.features, n_classes=args.classes,
        rows_per_class=args.rows_per_class, seed=args.seed, window=args.window,
    )


def _server_address(flag):
    return flag or os.environ.get(ENV_SERVER) or DEFAULT_SERVER


def _mean_losses(detector, ds) -> list[tuple[str, int, float]]:
    out = []
    for label in ds.classes:
        x = ds.rows(label)
        if x.shape[0]:
            out.append((label, x.shape[0], float(np.mean(losses(detector, x)))))
    return out


# --- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    ds = _load(args)
    x = ds.require(args.pattern)
    if args.max_rows:
        x = x[: args.max_rows]
    act_default, nh_default = datasets.DEFAULT_HYPERPARAMS[args.dataset]
    topo = Topology.autoencoder(
        ds.n_features, args.hidden or nh_default, Activation.parse(args.activation or act_default),
        init_seed=args.seed,
    )
    det = fit(topo, x, ridge=args.ridge, init_rows=args.init_rows, threshold=args.threshold)
    node = EdgeNode(Path(args.out).stem, det)
    modelfile.save(args.out, node)
    if args.export:
        Path(args.export).write_bytes(node.own_payload())
    mean_loss = float(np.mean(losses(det, x)))
    print(f"trained {det.model.sample_count} samples of pattern {args.pattern!r} "
          f"({topo.n_input}-{topo.n_hidden}-{topo.n_output}, {topo.activation.name.lower()}, "
          f"seed {topo.init_seed}); mean loss {mean_loss:.6g} -> {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    node = modelfile.load(args.model)
    Path(args.out).write_bytes(node.own_payload())
    print(f"wrote own intermediates of {args.model} to {args.out}")
    return EXIT_OK


def _probe_losses(det, probe):
    return float(np.mean(losses(det, probe))) if probe is not None else None


def cmd_merge(args) -> int:
    node = modelfile.load(args.model, args.device_id)
    probe = datasets.read_table(args.probe, node.detector.topology.n_input) if args.probe else None
    before = _probe_losses(node.detector, probe)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.peer_file:
            payloads = {Path(p).stem: modelfile.read_contribution(p) for p in args.peer_file}
            report = node.absorb(payloads)
        else:
            # no --peers: publish own contribution only
            peers = [p for p in (args.peers or "").split(",") if p]
            node.transport = TcpTransport.from_address(_server_address(args.server))
            try:
                report = node.sync(peers)
            finally:
                node.transport.close()
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    if report.incompatible:
        raise CliError("; ".join(f"{k}: {v}" for k, v in report.incompatible.items()), EXIT_INCOMPATIBLE)
    if report.missing:
        raise CliError(f"peer(s) not found on server: {', '.join(report.missing)}", EXIT_REMOTE)
    if report.failed:
        raise CliError("; ".join(f"{k}: {v}" for k, v in report.failed.items()), EXIT_REMOTE)

    modelfile.save(args.model, node)
    print(f"merged {report.merged or 'nothing'}; unchanged {report.unchanged or '-'}; "
          f"{report.sample_count} samples, accumulated ridge {report.ridge_total:g}")
    if probe is not None:
        print(f"probe loss before {before:.6g} after {_probe_losses(node.detector, probe):.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    node = modelfile.load(args.model)
    det = node.detector
    if args.probe:
        probe = datasets.read_table(args.probe, det.topology.n_input)
        scores = losses(det, probe)
        print(f"probe rows {probe.shape[0]}: mean loss {float(np.mean(scores)):.6g}")
        return EXIT_OK
    ds = _load(args)
    if ds.n_features != det.topology.n_input:
        raise CliError(f"model expects {det.topology.n_input} features, dataset has {ds.n_features}",
                       EXIT_USAGE)
    print(f"{'pattern':>20}  {'rows':>6}  mean loss")
    for label, n, value in _mean_losses(det, ds):
        print(f"{label:>20}  {n:>6}  {value:.6g}")
    return EXIT_OK


def cmd_serve(args) -> int:
    host, port = parse_address(_server_address(args.server))
    try:
        server = FederationServer(host, port)
    except OSError as exc:
        raise CliError(f"cannot listen on {host}:{port}: {exc}", EXIT_ENV) from exc
    signal.signal(signal.SIGTERM, lambda *_: (_ for _ in ()).throw(KeyboardInterrupt()))
    bound = "%s:%d" % server.address
    log.info("serving on %s", bound)
    print(f"listening on {bound}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        server.server_close()
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .evaluation import run_experiment

    options = dict(
        dataset=args.dataset, data_dir=args.data_dir, n_features=args.features, classes=args.classes,
        rows_per_class=args.rows_per_class, window=args.window, seed=args.seed, trials=args.trials,
        hidden=args.hidden, activation=args.activation, ridge=args.ridge,
        max_train_rows=args.max_rows, pattern_a=args.pattern_a, pattern_b=args.pattern_b,
        random_pairs=args.random_pairs, repeats=args.repeats,
    )
    if args.name == "latency" and args.hidden:
        options["hidden_sizes"] = (args.hidden,)
    report = run_experiment(args.name, **options)
    paths = report.write(args.out_dir)
    sys.stdout.write(report.to_text())
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedoselm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fedoselm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a detector on one normal pattern")
    _dataset_args(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--hidden", type=int, help="hidden nodes (default per dataset)")
    p.add_argument("--activation", choices=[a.name.lower() for a in Activation])
    p.add_argument("--seed", type=int, default=0, help="shared input-layer seed")
    p.add_argument("--ridge", type=float, default=1e-4)
    p.add_argument("--init-rows", type=int, help="rows in the initial OS-ELM chunk (default n_hidden)")
    p.add_argument("--max-rows", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True, help="model state file")
    p.add_argument("--export", help="also write own intermediates (.osuv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write a model's own intermediates as .osuv")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval", help="mean loss of a model per pattern (or on a probe file)")
    _dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--probe", help="numeric table of rows to score instead of a dataset")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("merge", help="merge peer intermediates into a model (one shot)")
    p.add_argument("--model", required=True)
    p.add_argument("--device-id", help="this device's id on the server (default: model file stem)")
    p.add_argument("--peer-file", action="append", help=".osuv or model file; repeatable")
    p.add_argument("--server", help=f"host:port (default ${ENV_SERVER} or {DEFAULT_SERVER})")
    p.add_argument("--peers", help="comma-separated peer device ids to download (omit to only publish)")
    p.add_argument("--probe", help="numeric table; prints mean loss before and after")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("serve", help="run the aggregation server")
    p.add_argument("--server", help=f"host:port to listen on (default ${ENV_SERVER} or {DEFAULT_SERVER})")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("experiment", help="run an evaluation experiment")
    p.add_argument("name", choices=["merge-loss", "roc-heatmap", "latency", "convergence"])
    _dataset_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--activation", choices=[a.name.lower() for a in Activation])
    p.add_argument("--ridge", type=float)
    p.add_argument("--max-rows", type=int)
    p.add_argument("--pattern-a")
    p.add_argument("--pattern-b")
    p.add_argument("--random-pairs", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--out-dir", default="reports")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except IncompatibleTopologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (FormatError, FedOselmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
