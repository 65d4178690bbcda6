"""Readers and writers for every delimited artifact the package emits.

All numeric output uses 17 significant digits, which round-trips IEEE
doubles exactly, so every file written here parses back bit-identical.
Readers raise :class:`ParseError` with the offending path and line number.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .distributions import FactorizedDistribution
from .em import EmTraceRow
from .errors import InvalidArgumentError, ParseError, UnsupportedQueryError
from .factor_graph import FactorGraph, build_chain_graph, read_graph_file
from .forecast import MeanSeries
from .model import FhmmModel, GaussianChainEmission, ObservationSequence


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_float(token: str, path: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, found {token!r}", path=path, line=line) from None


def _parse_int(token: str, path: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, found {token!r}", path=path, line=line) from None


# ---------------------------------------------------------------------------
# observations and states


def write_observations_csv(
    path: str, obs: ObservationSequence, factor_names: list[str] | None = None
) -> None:
    """Header row of factor names, then one row of floats per time step."""
    names = factor_names or [f"f{j}" for j in range(obs.num_factors)]
    if len(names) != obs.num_factors:
        raise InvalidArgumentError("one name per factor required")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in obs.values:
            writer.writerow([_fmt(x) for x in row])


def read_observations_csv(path: str) -> tuple[ObservationSequence, list[str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ParseError("missing header row", path=path, line=1)
    names = rows[0]
    width = len(names)
    values = np.zeros((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(
                f"expected {width} columns, found {len(row)}", path=path, line=i
            )
        values[i - 2] = [_parse_float(tok, path, i) for tok in row]
    return ObservationSequence(values), names


def write_states_csv(path: str, states: np.ndarray) -> None:
    """Latent trajectory: header t,v0..v{M-1}, one row per time 0..T."""
    states = np.asarray(states)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"v{v}" for v in range(states.shape[1])])
        for t, row in enumerate(states):
            writer.writerow([t] + [int(x) for x in row])


def read_states_csv(path: str) -> np.ndarray:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("missing header row", path=path, line=1)
    out = np.zeros((len(rows) - 1, len(rows[0]) - 1), dtype=np.int64)
    for i, row in enumerate(rows[1:], start=2):
        out[i - 2] = [_parse_int(tok, path, i) for tok in row[1:]]
    return out


# ---------------------------------------------------------------------------
# marginals


def write_marginals_csv(path: str, dists: list[FactorizedDistribution]) -> None:
    """Columns t, block_id, configuration_index, probability.

    Rows ascend by time, then block, then flat configuration index (first
    block variable most significant).
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "block_id", "configuration_index", "probability"])
        for t, dist in enumerate(dists):
            for k, table in enumerate(dist.block_tables):
                for idx, prob in enumerate(table.values):
                    writer.writerow([t, k, idx, _fmt(prob)])


def read_marginals_csv(path: str) -> dict[tuple[int, int], np.ndarray]:
    """Map (t, block_id) to the flat probability vector of that block."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "block_id", "configuration_index", "probability"]:
        raise ParseError("bad or missing marginals header", path=path, line=1)
    collected: dict[tuple[int, int], list[float]] = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, found {len(row)}", path=path, line=i)
        t = _parse_int(row[0], path, i)
        k = _parse_int(row[1], path, i)
        idx = _parse_int(row[2], path, i)
        prob = _parse_float(row[3], path, i)
        bucket = collected.setdefault((t, k), [])
        if idx != len(bucket):
            raise ParseError(
                f"configuration_index {idx} out of order (expected {len(bucket)})",
                path=path,
                line=i,
            )
        bucket.append(prob)
    return {key: np.asarray(vals) for key, vals in collected.items()}


# ---------------------------------------------------------------------------
# EM trace


def write_em_trace_csv(path: str, trace: list[EmTraceRow]) -> None:
    """One row per iteration: parameters plus the surrogate log-likelihood."""
    if not trace:
        raise InvalidArgumentError("empty trace")
    L = trace[0].mu0_hat.size
    header = (
        ["iteration"]
        + [f"mu0_{x}" for x in range(L)]
        + [f"p_{x}_{z}" for x in range(L) for z in range(L)]
        + ["c_hat", "sigma2_hat", "surrogate_loglik"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in trace:
            writer.writerow(
                [row.iteration]
                + [_fmt(x) for x in row.mu0_hat]
                + [_fmt(x) for x in np.asarray(row.p_hat).reshape(-1)]
                + [_fmt(row.c_hat), _fmt(row.sigma2_hat), _fmt(row.surrogate_log_likelihood)]
            )


def read_em_trace_csv(path: str) -> list[EmTraceRow]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "iteration":
        raise ParseError("bad or missing trace header", path=path, line=1)
    header = rows[0]
    L = sum(1 for name in header if name.startswith("mu0_"))
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} columns, found {len(row)}", path=path, line=i
            )
        vals = [_parse_float(tok, path, i) for tok in row[1:]]
        mu0 = np.asarray(vals[:L])
        p = np.asarray(vals[L : L + L * L]).reshape(L, L)
        out.append(
            EmTraceRow(
                iteration=_parse_int(row[0], path, i),
                mu0_hat=mu0,
                p_hat=p,
                c_hat=vals[L + L * L],
                sigma2_hat=vals[L + L * L + 1],
                surrogate_log_likelihood=vals[L + L * L + 2],
            )
        )
    return out


# ---------------------------------------------------------------------------
# mean series


def write_mean_series_csv(
    path: str, series: MeanSeries, obs: ObservationSequence | None = None
) -> None:
    """Columns t, f, observed, value, tag; observed is empty when unknown."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "f", "observed", "value", "tag"])
        for i, t in enumerate(series.times):
            for f in range(series.values.shape[1]):
                observed = ""
                if obs is not None and 1 <= t <= obs.length:
                    observed = _fmt(obs.values[t - 1, f])
                writer.writerow([int(t), f, observed, _fmt(series.values[i, f]), series.kind])


def read_mean_series_csv(path: str) -> list[dict]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "f", "observed", "value", "tag"]:
        raise ParseError("bad or missing mean-series header", path=path, line=1)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        out.append(
            {
                "t": _parse_int(row[0], path, i),
                "f": _parse_int(row[1], path, i),
                "observed": None if row[2] == "" else _parse_float(row[2], path, i),
                "value": _parse_float(row[3], path, i),
                "tag": row[4],
            }
        )
    return out


# ---------------------------------------------------------------------------
# LTV and bench tables


def write_ltv_csv(path: str, rows: list[tuple[int, int, str, float]]) -> None:
    """Columns t, variable, mode, ltv."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "variable", "mode", "ltv"])
        for t, v, mode, value in rows:
            writer.writerow([t, v, mode, _fmt(value)])


def read_ltv_csv(path: str) -> list[tuple[int, int, str, float]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "variable", "mode", "ltv"]:
        raise ParseError("bad or missing LTV header", path=path, line=1)
    return [
        (
            _parse_int(r[0], path, i),
            _parse_int(r[1], path, i),
            r[2],
            _parse_float(r[3], path, i),
        )
        for i, r in enumerate(rows[1:], start=2)
    ]


def write_bench_csv(path: str, rows: list[dict]) -> None:
    """Columns M, m, seconds, factor_evaluations, seconds_exact (may be empty)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["M", "m", "seconds", "factor_evaluations", "seconds_exact"])
        for row in rows:
            exact = row.get("seconds_exact")
            writer.writerow(
                [
                    row["M"],
                    row["m"],
                    _fmt(row["seconds"]),
                    row["factor_evaluations"],
                    "" if exact is None else _fmt(exact),
                ]
            )


def read_bench_csv(path: str) -> list[dict]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["M", "m", "seconds", "factor_evaluations", "seconds_exact"]:
        raise ParseError("bad or missing bench header", path=path, line=1)
    out = []
    for i, r in enumerate(rows[1:], start=2):
        out.append(
            {
                "M": _parse_int(r[0], path, i),
                "m": _parse_int(r[1], path, i),
                "seconds": _parse_float(r[2], path, i),
                "factor_evaluations": _parse_int(r[3], path, i),
                "seconds_exact": None if r[4] == "" else _parse_float(r[4], path, i),
            }
        )
    return out


# ---------------------------------------------------------------------------
# model configuration


@dataclass
class ModelConfig:
    """Homogeneous model description as stored in the key-value text format."""

    cardinality: int
    state_values: np.ndarray
    transition: np.ndarray
    initial: np.ndarray
    scale: float
    variance: float
    num_variables: int
    graph: str  # "chain" or a graph-file path relative to the config file


def write_model_config(path: str, cfg: ModelConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"cardinality {cfg.cardinality}\n")
        fh.write("state_values " + " ".join(_fmt(x) for x in cfg.state_values) + "\n")
        for row in np.asarray(cfg.transition):
            fh.write("transition " + " ".join(_fmt(x) for x in row) + "\n")
        fh.write("initial " + " ".join(_fmt(x) for x in cfg.initial) + "\n")
        fh.write(f"c {_fmt(cfg.scale)}\n")
        fh.write(f"sigma2 {_fmt(cfg.variance)}\n")
        fh.write(f"num_variables {cfg.num_variables}\n")
        fh.write(f"graph {cfg.graph}\n")


def load_model_config(path: str) -> ModelConfig:
    """Parse the key-value model format (see the README for a sample)."""
    entries: dict[str, list[str]] = {}
    transition_rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key, rest = parts[0], parts[1:]
            if not rest:
                raise ParseError(f"key {key!r} has no value", path=path, line=lineno)
            if key == "transition":
                transition_rows.append(rest)
            elif key in entries:
                raise ParseError(f"duplicate key {key!r}", path=path, line=lineno)
            else:
                entries[key] = rest
    required = ["cardinality", "state_values", "initial", "c", "sigma2", "num_variables", "graph"]
    for key in required:
        if key not in entries:
            raise ParseError(f"missing key {key!r}", path=path)
    if not transition_rows:
        raise ParseError("missing transition rows", path=path)
    try:
        cardinality = int(entries["cardinality"][0])
        num_variables = int(entries["num_variables"][0])
        state_values = np.asarray([float(x) for x in entries["state_values"]])
        transition = np.asarray([[float(x) for x in row] for row in transition_rows])
        initial = np.asarray([float(x) for x in entries["initial"]])
        scale = float(entries["c"][0])
        variance = float(entries["sigma2"][0])
    except ValueError as exc:
        raise ParseError(f"malformed numeric value: {exc}", path=path) from None
    if state_values.size != cardinality:
        raise ParseError(
            f"state_values has {state_values.size} entries, cardinality is {cardinality}",
            path=path,
        )
    if transition.shape != (cardinality, cardinality):
        raise ParseError(
            f"transition is {transition.shape}, expected {(cardinality, cardinality)}", path=path
        )
    if initial.size != cardinality:
        raise ParseError(
            f"initial has {initial.size} entries, cardinality is {cardinality}", path=path
        )
    return ModelConfig(
        cardinality=cardinality,
        state_values=state_values,
        transition=transition,
        initial=initial,
        scale=scale,
        variance=variance,
        num_variables=num_variables,
        graph=" ".join(entries["graph"]),
    )


def model_from_config(cfg: ModelConfig, base_dir: str = ".") -> FhmmModel:
    """Instantiate the (homogeneous) model a config describes."""
    emission = GaussianChainEmission(cfg.state_values, cfg.scale, cfg.variance)
    if cfg.graph == "chain":
        graph = build_chain_graph(cfg.num_variables)
    else:
        graph_path = cfg.graph
        if not os.path.isabs(graph_path):
            graph_path = os.path.join(base_dir, graph_path)
        graph = read_graph_file(graph_path)
        if graph.num_variables != cfg.num_variables:
            raise InvalidArgumentError(
                f"graph file has {graph.num_variables} variables, config says {cfg.num_variables}"
            )
    M, L = cfg.num_variables, cfg.cardinality
    return FhmmModel(
        graph=graph,
        cardinality=L,
        transitions=np.broadcast_to(cfg.transition, (M, L, L)).copy(),
        initial=np.broadcast_to(cfg.initial, (M, L)).copy(),
        emission=emission,
    )


def config_from_model(model: FhmmModel, graph: str = "chain") -> ModelConfig:
    """Inverse of :func:`model_from_config`; requires homogeneous parameters."""
    for v in range(1, model.num_variables):
        if not np.array_equal(model.transitions[v], model.transitions[0]) or not np.array_equal(
            model.initial[v], model.initial[0]
        ):
            raise UnsupportedQueryError("model is not homogeneous across variables")
    return ModelConfig(
        cardinality=model.cardinality,
        state_values=model.emission.state_values.copy(),
        transition=model.transitions[0].copy(),
        initial=model.initial[0].copy(),
        scale=model.emission.scale,
        variance=model.emission.variance,
        num_variables=model.num_variables,
        graph=graph,
    )


def load_model(path: str) -> FhmmModel:
    """Load a model config and instantiate it, resolving graph paths."""
    cfg = load_model_config(path)
    return model_from_config(cfg, base_dir=os.path.dirname(os.path.abspath(path)))
