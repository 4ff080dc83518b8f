"""Command-line entry point: ``torgnn <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from torgnn import datasets
from torgnn.complex_core import parse_complex
from torgnn.experiment import EXIT_CODES, ExperimentError, load_config, load_graph_for, run_experiment
from torgnn.metrics import accuracy, auc, aupr
from torgnn.nn import load_checkpoint
from torgnn.spectral import betti_numbers, dump_laplacians, log_analytic_torsion
from torgnn.torsion_weights import precompute_weights, propagation_matrix, save_table


def cmd_torsion(args):
    k = parse_complex(Path(args.complex).read_text())
    print(f"log_torsion {log_analytic_torsion(k):.17g}")
    if args.betti:
        print("betti " + " ".join(map(str, betti_numbers(k))))
    if args.dump:
        sys.stdout.write(dump_laplacians(k))


def cmd_weights(args):
    g, _ = datasets.read_edge_list(args.edge_list)
    table = precompute_weights(g, args.l_sub, args.n, workers=args.workers)
    save_table(table, args.out)
    if args.text:
        Path(args.text).write_text(table.to_text())
    print(f"wrote {g.num_edges} edge and {g.num_vertices} self weights to {args.out}")


def _overrides(args) -> dict:
    keys = (
        "edge_list", "features", "labels", "l_sub", "n", "lr", "epochs",
        "repeats", "seed", "out", "workers", "weight_scale",
    )
    return {k: getattr(args, k, None) for k in keys}


def cmd_train(task):
    def run(args):
        cfg = load_config(args.config, task=task, **_overrides(args))
        report = run_experiment(cfg)
        print(report.summary())
        if cfg.out:
            print(f"report written to {cfg.out}")
    return run


def cmd_eval(args):
    data = np.loadtxt(args.scores, ndmin=2)
    if args.kind == "link":
        print(f"auc {auc(data[:, 0], data[:, 1]):.6f}")
        print(f"aupr {aupr(data[:, 0], data[:, 1]):.6f}")
    else:
        print(f"accuracy {accuracy(data[:, 0].astype(int), data[:, 1].astype(int)):.6f}")


def cmd_export(args):
    """Node vectors from a checkpoint, for external plotting."""
    cfg = load_config(args.config)
    g = load_graph_for(cfg)
    if cfg.task == "link":
        g = datasets.build_link_split(g, args.seed if args.seed is not None else cfg.seed).observed_graph
    model = load_checkpoint(args.checkpoint)
    table = precompute_weights(g, cfg.l_sub, cfg.n, workers=cfg.workers)
    h = model.encode(propagation_matrix(g, table, cfg.weight_scale), g.features)
    with open(args.out, "w") as f:
        for v, row in enumerate(h):
            f.write(f"{v} " + " ".join(f"{x:.9g}" for x in row) + "\n")
    print(f"wrote {len(h)} embeddings of width {h.shape[1]} to {args.out}")


def cmd_synth(args):
    g = datasets.community_graph(
        args.vertices, args.edges, args.communities, args.mixing, args.seed,
        num_features=args.features, feature_noise=args.feature_noise,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets.write_edge_list(g, out / "edges.txt")
    (out / "labels.txt").write_text("".join(f"{c}\n" for c in g.labels))
    if g.features is not None:
        np.savetxt(out / "features.txt", g.features, fmt="%g")
    print(f"wrote {g.num_vertices} vertices, {g.num_edges} edges to {out}")


def cmd_convert(args):
    paths = datasets.convert_linqs(args.content, args.cites, args.out_dir)
    print("\n".join(str(p) for p in paths.values()))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torgnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("torsion", help="log analytic torsion of a complex file")
    p.add_argument("complex")
    p.add_argument("--betti", action="store_true")
    p.add_argument("--dump", action="store_true", help="print the complex and its Laplacians")
    p.set_defaults(func=cmd_torsion)

    p = sub.add_parser("weights", help="torsion weight cache for an edge list")
    p.add_argument("edge_list")
    p.add_argument("--l-sub", type=int, default=1)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--text", help="also write the human-readable table here")
    p.set_defaults(func=cmd_weights)

    for name, task in (("train-link", "link"), ("train-node", "node")):
        p = sub.add_parser(name, help=f"repeated {task} experiment from a config file")
        p.add_argument("config")
        p.add_argument("--edge-list", dest="edge_list")
        p.add_argument("--features")
        p.add_argument("--labels")
        p.add_argument("--l-sub", dest="l_sub", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--weight-scale", dest="weight_scale", choices=("none", "mean"))
        p.add_argument("--out")
        p.set_defaults(func=cmd_train(task))

    p = sub.add_parser("eval", help="metrics from a two-column file")
    p.add_argument("scores", help="rows 'score label' (link) or 'prediction label' (node)")
    p.add_argument("--kind", choices=("link", "node"), default="link")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings", help="write final node vectors")
    p.add_argument("config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, help="split seed for the link task (default: config seed)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", help="write a planted-partition test graph")
    p.add_argument("out_dir")
    p.add_argument("--vertices", type=int, default=3892)
    p.add_argument("--edges", type=int, default=17262)
    p.add_argument("--communities", type=int, default=40)
    p.add_argument("--mixing", type=float, default=0.1)
    p.add_argument("--features", type=int, default=0)
    p.add_argument("--feature-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert-linqs", help="convert .content/.cites files to plain text")
    p.add_argument("content")
    p.add_argument("cites")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.stage]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
