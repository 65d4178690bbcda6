"""Command-line front end.

Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures
(unreadable files, capacity limits, degenerate numerics).  Report-style
subcommands (compare, bench, fit, forecast) render PNG figures next to their
CSV output unless --no-figures is given; data subcommands emit CSV only.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import figures, serialization
from .distributions import ltv_distance
from .em import EmConfig, em_fit
from .errors import FhmmError
from .exact import filter_exact, smooth_exact
from .factor_graph import (
    FactorGraph,
    Partition,
    build_chain_graph,
    graph_constants,
    locality_exponents,
    read_graph_file,
    singleton_partition,
    trivial_partition,
)
from .forecast import one_step_forecast, smoothed_emission_mean
from .graph_inference import (
    CostCounter,
    build_locality_plan,
    graph_filter,
    graph_smoother,
)
from .model import FhmmModel, sample_trajectory

WORKERS_ENV = "FHMMLOCAL_WORKERS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise _UsageError(message)


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _parse_partition(text: str, num_variables: int) -> Partition:
    if text == "singleton":
        return singleton_partition(num_variables)
    if text == "trivial":
        return trivial_partition(num_variables)
    try:
        blocks = [
            tuple(int(tok) for tok in chunk.split(",") if tok != "")
            for chunk in text.split(";")
            if chunk != ""
        ]
        return Partition.from_blocks(blocks, num_variables)
    except (ValueError, FhmmError) as exc:
        raise _UsageError(f"bad partition argument {text!r}: {exc}") from None


def _add_common(parser: argparse.ArgumentParser, with_plan: bool = True) -> None:
    parser.add_argument("--model", required=True, help="model config file")
    parser.add_argument("--out-dir", default=".", help="directory for output artifacts")
    if with_plan:
        parser.add_argument(
            "--partition",
            default="singleton",
            help="singleton | trivial | explicit blocks like '0,1;2;3,4'",
        )
        parser.add_argument("--radius", "-m", type=int, default=0, help="locality radius")
        parser.add_argument(
            "--joint-size-bits",
            type=float,
            default=22.0,
            help="cap on log2 of any materialized joint table",
        )
        parser.add_argument(
            "--workers",
            type=int,
            default=_default_workers(),
            help=f"parallel block updates (default ${WORKERS_ENV} or 1)",
        )


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _load_plan(args, model: FhmmModel):
    partition = _parse_partition(args.partition, model.num_variables)
    return build_locality_plan(model.graph, partition, args.radius)


def _cmd_simulate(args) -> None:
    model = serialization.load_model(args.model)
    states, obs = sample_trajectory(model, args.length, args.seed)
    obs_path = _out_path(args, "observations.csv")
    states_path = _out_path(args, "states.csv")
    serialization.write_observations_csv(obs_path, obs)
    serialization.write_states_csv(states_path, states)
    print(f"wrote {obs_path}")
    print(f"wrote {states_path}")


def _cmd_filter(args) -> None:
    model = serialization.load_model(args.model)
    obs, _ = serialization.read_observations_csv(args.observations)
    plan = _load_plan(args, model)
    dists, _ = graph_filter(
        model, plan, obs, joint_size_bits=args.joint_size_bits, workers=args.workers
    )
    path = _out_path(args, "filter_marginals.csv")
    serialization.write_marginals_csv(path, dists)
    print(f"wrote {path}")


def _cmd_smooth(args) -> None:
    model = serialization.load_model(args.model)
    obs, _ = serialization.read_observations_csv(args.observations)
    plan = _load_plan(args, model)
    filters, _ = graph_filter(
        model, plan, obs, joint_size_bits=args.joint_size_bits, workers=args.workers
    )
    dists = graph_smoother(model, plan, filters)
    path = _out_path(args, "smooth_marginals.csv")
    serialization.write_marginals_csv(path, dists)
    print(f"wrote {path}")


def _cmd_fit(args) -> None:
    model = serialization.load_model(args.model)
    obs, _ = serialization.read_observations_csv(args.observations)
    plan = _load_plan(args, model)
    config = EmConfig(
        plan=plan,
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        floor=args.floor,
        joint_size_bits=args.joint_size_bits,
        workers=args.workers,
    )
    estimate = em_fit(model, obs, config)
    print(f"status: {estimate.status} after {len(estimate.trace)} iterations")
    if estimate.trace:
        trace_path = _out_path(args, "em_trace.csv")
        serialization.write_em_trace_csv(trace_path, estimate.trace)
        print(f"wrote {trace_path}")
        if not args.no_figures:
            fig_path = _out_path(args, "em_trace.png")
            figures.render_em_trace_figure(estimate.trace, fig_path)
            print(f"wrote {fig_path}")
    cfg = serialization.config_from_model(model)
    cfg.transition = estimate.p_hat
    cfg.initial = estimate.mu0_hat
    cfg.scale = estimate.c_hat
    cfg.variance = estimate.sigma2_hat
    fitted_path = _out_path(args, "fitted_model.txt")
    serialization.write_model_config(fitted_path, cfg)
    print(f"wrote {fitted_path}")


def _cmd_forecast(args) -> None:
    model = serialization.load_model(args.model)
    obs, _ = serialization.read_observations_csv(args.observations)
    plan = _load_plan(args, model)
    filters, _ = graph_filter(
        model, plan, obs, joint_size_bits=args.joint_size_bits, workers=args.workers
    )
    if args.kind == "smoothed":
        series = smoothed_emission_mean(model, graph_smoother(model, plan, filters))
    else:
        series = one_step_forecast(model, filters)
    path = _out_path(args, "means.csv")
    serialization.write_mean_series_csv(path, series, obs)
    print(f"wrote {path}")
    if not args.no_figures:
        fig_path = _out_path(args, "means.png")
        figures.render_mean_series_figure(series, obs, fig_path)
        print(f"wrote {fig_path}")


def _cmd_compare(args) -> None:
    model = serialization.load_model(args.model)
    obs, _ = serialization.read_observations_csv(args.observations)
    plan = _load_plan(args, model)
    exact_filters, _ = filter_exact(model, obs)
    exact_smooths = smooth_exact(model, exact_filters)
    approx_filters, _ = graph_filter(
        model, plan, obs, joint_size_bits=args.joint_size_bits, workers=args.workers
    )
    approx_smooths = graph_smoother(model, plan, approx_filters)
    rows: list[tuple[int, int, str, float]] = []
    for mode, exact_list, approx_list in (
        ("filter", exact_filters, approx_filters),
        ("smooth", exact_smooths, approx_smooths),
    ):
        for t, (ex, ap) in enumerate(zip(exact_list, approx_list)):
            for v in range(model.num_variables):
                rows.append((t, v, mode, ltv_distance(ex, ap, (v,))))
    path = _out_path(args, "ltv.csv")
    serialization.write_ltv_csv(path, rows)
    print(f"wrote {path}")
    for mode in ("filter", "smooth"):
        vals = [x for _, _, md, x in rows if md == mode]
        print(f"mean {mode} ltv: {np.mean(vals):.6g}")
    if not args.no_figures:
        fig_path = _out_path(args, "ltv.png")
        figures.render_ltv_figure(rows, fig_path)
        print(f"wrote {fig_path}")


def _cmd_bench(args) -> None:
    cfg = serialization.load_model_config(args.model)
    if cfg.graph != "chain":
        raise _UsageError("bench sweeps chain models; the config must say 'graph chain'")
    m_values = [int(x) for x in args.num_variables.split(",") if x]
    radii = [int(x) for x in args.radii.split(",") if x]
    rows: list[dict] = []
    for M in m_values:
        scoped = serialization.ModelConfig(
            cardinality=cfg.cardinality,
            state_values=cfg.state_values,
            transition=cfg.transition,
            initial=cfg.initial,
            scale=cfg.scale,
            variance=cfg.variance,
            num_variables=M,
            graph="chain",
        )
        model = serialization.model_from_config(scoped)
        _, obs = sample_trajectory(model, args.length, args.seed)
        for m in radii:
            plan = build_locality_plan(model.graph, singleton_partition(M), m)
            counter = CostCounter()
            start = time.perf_counter()
            filters, _ = graph_filter(
                model, plan, obs, counter=counter, joint_size_bits=args.joint_size_bits
            )
            graph_smoother(model, plan, filters)
            elapsed = time.perf_counter() - start
            row = {
                "M": M,
                "m": m,
                "seconds": elapsed,
                "factor_evaluations": counter.factor_evaluations,
                "seconds_exact": None,
            }
            rows.append(row)
        if args.with_exact:
            start = time.perf_counter()
            exact_filters, _ = filter_exact(model, obs)
            smooth_exact(model, exact_filters)
            exact_elapsed = time.perf_counter() - start
            for row in rows:
                if row["M"] == M:
                    row["seconds_exact"] = exact_elapsed
    path = _out_path(args, "bench.csv")
    serialization.write_bench_csv(path, rows)
    print(f"wrote {path}")
    if not args.no_figures:
        fig_path = _out_path(args, "bench.png")
        figures.render_bench_figure(rows, fig_path)
        print(f"wrote {fig_path}")


def _resolve_stats_graph(args) -> FactorGraph:
    given = [bool(args.model), bool(args.graph_file), args.chain is not None]
    if sum(given) != 1:
        raise _UsageError("give exactly one of --model, --graph-file, --chain")
    if args.model:
        return serialization.load_model(args.model).graph
    if args.graph_file:
        return read_graph_file(args.graph_file)
    return build_chain_graph(args.chain)


def _cmd_graph_stats(args) -> None:
    graph = _resolve_stats_graph(args)
    partition = _parse_partition(args.partition, graph.num_variables)
    constants = graph_constants(graph, partition)
    exponents = locality_exponents(graph, partition, args.radius)
    print(f"num_variables={graph.num_variables}")
    print(f"num_factors={graph.num_factors}")
    print(f"upsilon={constants.upsilon}")
    print(f"upsilon2={constants.upsilon2}")
    print(f"upsilon_tilde={constants.upsilon_tilde}")
    print(f"n={constants.n}")
    for k, n_k in enumerate(constants.n_per_block):
        print(f"n_block_{k}={n_k}")
    print(f"radius={args.radius}")
    print(f"a={exponents.a}")
    print(f"b={exponents.b}")


def build_parser() -> _Parser:
    parser = _Parser(prog="fhmmlocal", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("simulate", help="draw a latent trajectory and observations")
    _add_common(p, with_plan=False)
    p.add_argument("--length", "-T", type=int, required=True, help="number of steps")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("filter", help="run the block filter, write marginals")
    _add_common(p)
    p.add_argument("--observations", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("smooth", help="run the block smoother, write marginals")
    _add_common(p)
    p.add_argument("--observations", required=True)
    p.set_defaults(func=_cmd_smooth)

    p = sub.add_parser("fit", help="EM parameter estimation")
    _add_common(p)
    p.add_argument("--observations", required=True)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--floor", type=float, default=1e-8)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("forecast", help="emission-mean series (smoothed or one-step)")
    _add_common(p)
    p.add_argument("--observations", required=True)
    p.add_argument("--kind", choices=("onestep", "smoothed"), default="onestep")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("compare", help="per-variable accuracy of the block recursions")
    _add_common(p)
    p.add_argument("--observations", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bench", help="runtime sweep over model size and radius")
    _add_common(p, with_plan=False)
    p.add_argument("--num-variables", required=True, help="comma list of M values")
    p.add_argument("--radii", required=True, help="comma list of radii")
    p.add_argument("--length", "-T", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joint-size-bits", type=float, default=22.0)
    p.add_argument("--with-exact", action="store_true", help="also time the exact recursions")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("graph-stats", help="print graph constants as key=value lines")
    p.add_argument("--model")
    p.add_argument("--graph-file")
    p.add_argument("--chain", type=int, help="chain graph with this many variables")
    p.add_argument("--partition", default="singleton")
    p.add_argument("--radius", "-m", type=int, default=0)
    p.set_defaults(func=_cmd_graph_stats)

    return parser


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FhmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(cli())
