"""Command line entry point: ``cascade-dist {dist,conditional,im,gen}``.

Exit codes: 0 success, 1 usage error, 2 invalid input (parse, validation or
size limits, missing files), 3 numerical consistency failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ClusterAssignment, Objective, cluster_nodes, distribution_mse, mean_size
from .bp_tda import DEFAULT_SWEEPS, run_contda, tda_pipeline
from .consdp import run_consdp
from .errors import CascadeError, NumericalConsistencyError, ValidationError
from .graph import MST_SCORES, format_edge_list, generate_sparse_graph, generate_tree, load_edge_list, root_tree, tree_edges_of
from .icm import WEIGHT_MODELS, ICMParams, assign_weights, load_probabilities, simulate
from .im import ENGINES, SeedEvaluator, cross_evaluate, exhaustive_select, greedy_pool, greedy_select
from .sdp import run_sdp, sdp_forward

log = logging.getLogger("cascade_dist")

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

SUBSTREAMS = ("mc", "kmeans", "generator")


def substream_seed(seed: int, name: str) -> int:
    """Independent 32-bit seed for the named component, derived from the run seed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


@dataclass
class RunConfig:
    """Everything needed to regenerate a run's outputs."""

    command: str
    arguments: dict
    seeds: dict[str, int] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"{self.command}.run.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _prob(text: str) -> float:
    val = float(text)
    if not 0.0 <= val <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return val


def _level(text: str) -> float:
    val = float(text)
    if not 0.0 < val <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return val


def _nonneg(text: str) -> int:
    val = int(text)
    if val < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return val


def _positive(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return val


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_nonneg, default=0, help="run seed; components use named sub-streams of it")
    common.add_argument("--threads", type=_positive, default=os.cpu_count() or 1, help="workers for simulation")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    model = _Parser(add_help=False)
    model.add_argument("--network", type=Path, required=True, help="edge list: src<TAB>dst<TAB>weight")
    pgroup = model.add_mutually_exclusive_group()
    pgroup.add_argument("--params", type=Path, help="initial probabilities, CSV 'node,p'")
    pgroup.add_argument("--p-uniform", type=_prob, help="same initial probability for every node")
    model.add_argument("--weights", choices=WEIGHT_MODELS, default="empirical", help="weight model (default: weights from the edge list)")
    model.add_argument("--weight-c", type=_prob, help="weight for --weights uniform")
    model.add_argument("--engine", choices=("sdp", "tda"), default="sdp")
    model.add_argument("--bp-sweeps", type=_positive, default=DEFAULT_SWEEPS, help="BP sweeps for the tda engine")
    model.add_argument("--mst-score", choices=MST_SCORES, default="noisy-or")

    parser = _Parser(prog="cascade-dist", description="Cascade size distributions of the independent cascade model.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dist", parents=[common, model], help="final cascade size distribution")
    p.add_argument("--with-mc", type=_positive, metavar="REPLICAS", help="also simulate and report the MSE")
    p.add_argument("--dump-bp", action="store_true", help="write BP estimates as CSV (tda engine)")

    p = sub.add_parser("conditional", parents=[common, model], help="activation probabilities conditional on cascade size")
    p.add_argument("--cluster", type=_positive, metavar="K", help="also cluster the rows into K groups")
    p.add_argument("--audit", action="store_true", help="report the column-count identity error")

    p = sub.add_parser("im", parents=[common, model], help="influence maximization")
    p.add_argument("--objective", choices=("mean", "weighted", "es"), default="mean")
    p.add_argument("--alpha", type=_level, default=0.05, help="expected shortfall level")
    p.add_argument("--exp-a", type=float, default=4.0, help="f(rho) = exp(a rho)/exp(a) for the weighted objective")
    p.add_argument("--tail-splitting", action="store_true", help="expected shortfall with a split VaR atom")
    p.add_argument("--budget", type=_nonneg, required=True, metavar="K", help="number of seeds")
    p.add_argument("--cluster", type=_positive, metavar="K", help="restrict candidates to cluster representatives")
    p.add_argument("--candidates", type=Path, help="file with one candidate node per line")
    p.add_argument("--background", type=_prob, default=0.0, help="initial probability of non-seed nodes")
    p.add_argument("--exhaustive", action="store_true", help="also run the exhaustive search")
    p.add_argument("--per-cluster-cap", type=_positive, default=3)
    p.add_argument("--max-evaluations", type=_positive, default=10**6)
    p.add_argument("--cross-eval", action="store_true", help="evaluate the chosen seeds under all objectives")

    p = sub.add_parser("gen", parents=[common], help="generate a network and parameter file")
    p.add_argument("kind", choices=("tree", "er"))
    p.add_argument("n", type=_positive)
    p.add_argument("--mean-degree", type=float, default=2.0, help="for 'er'")
    p.add_argument("--connected", action="store_true", help="for 'er': start from a random spanning tree")
    p.add_argument("--weights", choices=tuple(m for m in WEIGHT_MODELS if m != "empirical"), default="uniform")
    p.add_argument("--weight-c", type=_prob, default=1.0, help="weight for --weights uniform")
    p.add_argument("--p-uniform", type=_prob, default=0.05)
    p.add_argument("--name", default=None, help="file stem (default: <kind><n>)")
    return parser


# --------------------------------------------------------------------------
# helpers


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None


def _load_model(args) -> ICMParams:
    net = load_edge_list(_read(args.network))
    if args.weights == "uniform" and args.weight_c is None:
        raise ValidationError("--weights uniform needs --weight-c")
    w = assign_weights(net, args.weights, args.weight_c)
    if args.params is not None:
        p = load_probabilities(_read(args.params), net)
    else:
        p = np.full(net.n, 0.0 if args.p_uniform is None else args.p_uniform)
    return ICMParams(net, p, w)


def _tree_for(params: ICMParams):
    return root_tree(params.net, tree_edges_of(params.net))


def _write(out: Path, name: str, text: str, cfg: RunConfig) -> Path:
    path = out / name
    path.write_text(text)
    cfg.outputs.append(name)
    log.info("wrote %s", path)
    return path


def _conditional(params: ICMParams, args):
    if args.engine == "sdp":
        tree = _tree_for(params)
        return run_consdp(tree, params, sdp_forward(tree, params), column_tol=None)
    return run_contda(params, args.bp_sweeps, mst_score=args.mst_score)


def _objective(args, kind=None) -> Objective:
    kind = kind or args.objective
    return Objective(kind, alpha=args.alpha, exp_a=args.exp_a if kind == "weighted" else None, tail_splitting=args.tail_splitting)


def _labels(net):
    return list(net.labels) if net.labels is not None else None


# --------------------------------------------------------------------------
# commands


def cmd_dist(args, cfg: RunConfig) -> None:
    params = _load_model(args)
    if args.engine == "sdp":
        dist = run_sdp(_tree_for(params), params)
    else:
        pipe = tda_pipeline(params, args.bp_sweeps, mst_score=args.mst_score)
        dist = run_sdp(pipe.tree, pipe.model.tree_params)
        if args.dump_bp:
            _write(args.out, "bp.csv", pipe.bp.to_csv(), cfg)
    _write(args.out, "distribution.csv", dist.to_csv(), cfg)
    print(f"mean cascade size: {mean_size(dist)!r}")
    if args.with_mc:
        seed = cfg.seeds["mc"]
        emp = simulate(params, args.with_mc, seed=seed, threads=args.threads).distribution
        _write(args.out, "empirical.csv", emp.to_csv(), cfg)
        mse = distribution_mse(dist, emp)
        _write(args.out, "mse.json", json.dumps({"replicas": args.with_mc, "mse": mse}) + "\n", cfg)
        print(f"mse vs simulation ({args.with_mc} replicas): {mse:.3e}")


def cmd_conditional(args, cfg: RunConfig) -> None:
    params = _load_model(args)
    matrix = _conditional(params, args)
    _write(args.out, "conditional.csv", matrix.to_csv(_labels(params.net)), cfg)
    if args.audit:
        err = matrix.column_sum_error()
        _write(args.out, "audit.json", json.dumps({"column_sum_error": err}) + "\n", cfg)
        print(f"column-count identity error: {err:.3e}")
    if args.cluster:
        clusters = cluster_nodes(matrix, args.cluster, seed=cfg.seeds["kmeans"])
        _write(args.out, "clusters.csv", clusters.to_csv(_labels(params.net)), cfg)
        print(f"{clusters.k} clusters, sizes {np.bincount(clusters.labels, minlength=clusters.k).tolist()}")


def _singleton_clusters(nodes) -> ClusterAssignment:
    nodes = sorted(nodes)
    labels = np.arange(len(nodes))
    return ClusterAssignment(labels, np.zeros((len(nodes), 0)), tuple((v,) for v in nodes))


def _read_candidates(path: Path, net) -> list[int]:
    index = {net.label(i): i for i in range(net.n)}
    out = []
    for lineno, raw in enumerate(_read(path).splitlines(), start=1):
        tok = raw.strip()
        if not tok or tok.startswith("#"):
            continue
        if tok not in index:
            raise ValidationError(f"{path}:{lineno}: unknown node {tok!r}")
        out.append(index[tok])
    return out


def cmd_im(args, cfg: RunConfig) -> None:
    params = _load_model(args)
    objective = _objective(args)
    evaluator = SeedEvaluator(params, args.engine, args.background, args.bp_sweeps, args.mst_score)
    if args.cluster and args.candidates:
        raise ValidationError("give --cluster or --candidates, not both")
    if args.cluster:
        if not params.p.any():
            raise ValidationError("--cluster needs positive initial probabilities; give --p-uniform or --params")
        clusters = cluster_nodes(_conditional(params, args), args.cluster, seed=cfg.seeds["kmeans"])
        _write(args.out, "clusters.csv", clusters.to_csv(_labels(params.net)), cfg)
        pool = greedy_pool(clusters)
    else:
        pool = _read_candidates(args.candidates, params.net) if args.candidates else list(range(params.n))
        clusters = _singleton_clusters(pool)
    trace = greedy_select(evaluator, args.budget, pool, objective)
    _write(args.out, "greedy_trace.json", json.dumps(trace.to_json(), indent=2) + "\n", cfg)
    _write(args.out, "greedy_trace.csv", trace.summary_csv(), cfg)
    value = trace.values[-1] if trace.values else trace.initial_value
    print(f"greedy {objective.label}: seeds {trace.chosen} value {value!r}")
    if args.exhaustive:
        res = exhaustive_select(
            evaluator, args.budget, clusters, objective, args.per_cluster_cap, max_evaluations=args.max_evaluations
        )
        doc = {"seeds": list(res.seeds), "value": res.value, "evaluations": res.evaluations, "pool": res.pool}
        _write(args.out, "exhaustive.json", json.dumps(doc, indent=2) + "\n", cfg)
        print(f"exhaustive {objective.label}: seeds {list(res.seeds)} value {res.value!r}")
    if args.cross_eval:
        objectives = {o.label: o for o in (_objective(args, k) for k in ("mean", "weighted", "es"))}
        table = cross_evaluate(evaluator, trace.chosen, objectives)
        rows = ["objective," + ",".join(f"k{k + 1}" for k in range(len(trace.chosen)))]
        rows += [name + "," + ",".join(repr(v) for v in vals) for name, vals in table.items()]
        _write(args.out, "cross_eval.csv", "\n".join(rows) + "\n", cfg)


def cmd_gen(args, cfg: RunConfig) -> None:
    seed = cfg.seeds["generator"]
    if args.kind == "tree":
        net = generate_tree(args.n, seed=seed)
    else:
        net = generate_sparse_graph(args.n, args.mean_degree, seed=seed, connected=args.connected)
    w = assign_weights(net, args.weights, args.weight_c)
    net = net.with_weights(w)
    stem = args.name or f"{args.kind}{args.n}"
    header = [
        f"cascade-dist gen {args.kind} {args.n}",
        f"run seed: {args.seed}; generator seed: {seed}",
        f"weights: {args.weights}" + (f" c={args.weight_c!r}" if args.weights == "uniform" else ""),
    ]
    if args.kind == "er":
        header.append(f"mean degree: {args.mean_degree!r}; connected: {args.connected}")
    _write(args.out, f"{stem}.tsv", format_edge_list(net, header), cfg)
    rows = [f"# run seed: {args.seed}; generator seed: {seed}", "node,p"]
    rows += [f"{net.label(i)},{args.p_uniform!r}" for i in range(net.n)]
    _write(args.out, f"{stem}_p.csv", "\n".join(rows) + "\n", cfg)
    print(f"{net.n} nodes, {len(net.skeleton)} undirected edges")


COMMANDS = {"dist": cmd_dist, "conditional": cmd_conditional, "im": cmd_im, "gen": cmd_gen}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CASCADE_DIST_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    arguments = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "command"}
    arguments.pop("threads", None)  # results do not depend on it
    cfg = RunConfig(args.command, arguments, {name: substream_seed(args.seed, name) for name in SUBSTREAMS})
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except NumericalConsistencyError as exc:
        print(f"cascade-dist: numerical consistency error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CascadeError, OSError) as exc:
        print(f"cascade-dist: {exc}", file=sys.stderr)
        return EXIT_INVALID
    cfg.write(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
