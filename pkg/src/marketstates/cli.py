"""Command-line pipeline: load prices, fit states, write plot-ready files.

A run writes four files into the output directory:

  states.csv   date,label for every return date
  models.json  per-state mean, precision edge list, log-determinant, occupancy
  report.json  objective trajectory, iterations, switches (always written,
               with diagnostics, even when the fit fails)
  ratio.csv    date,value likelihood-ratio series (when --ratio is given)

Exit codes: 0 success, 1 configuration error, 2 data error, 3 fit failure,
each with a one-line diagnostic on stderr.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import label_agreement, likelihood_ratio, suggest_ratio_states
from .errors import ConfigError, DataError, EstimationError, FitError
from .ingest import load_price_panel, standardize_returns, to_log_returns
from .segment import ClusteringConfig, fit

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_FIT = 3

_FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs."""

    input_path: str
    output_dir: str
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    ratio: str | None = None  # "auto" or "A,B"
    formats: tuple = _FORMATS

    def validate(self) -> None:
        if not self.input_path:
            raise ConfigError("input path must not be empty")
        if not self.output_dir:
            raise ConfigError("output directory must not be empty")
        unknown = set(self.formats) - set(_FORMATS)
        if unknown or not self.formats:
            raise ConfigError(f"output formats must be a subset of {_FORMATS}")
        self.clustering.validate()
        _parse_ratio(self.ratio, self.clustering.n_clusters)


def _parse_ratio(ratio: str | None, n_clusters: int):
    """Return (a, b) labels, "auto", or None; raise ConfigError otherwise."""
    if ratio is None or ratio == "auto":
        return ratio
    parts = ratio.split(",")
    try:
        a, b = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--ratio must be 'A,B' or 'auto', got {ratio!r}") from None
    if a == b or not (0 <= a < n_clusters and 0 <= b < n_clusters):
        raise ConfigError(f"--ratio states must be distinct labels in [0, {n_clusters})")
    return a, b


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_states_csv(path: Path, dates, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date,label\n")
        for date, label in zip(dates, labels):
            fh.write(f"{date},{int(label)}\n")


def _write_ratio_csv(path: Path, series) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date,value\n")
        for date, value in zip(series.dates, series.values):
            fh.write(f"{date},{float(value)!r}\n")


def _models_payload(models, assets) -> dict:
    states = []
    for model in models:
        matrix = model.precision.matrix.tocoo()
        edges = sorted(
            (int(i), int(j), float(v))
            for i, j, v in zip(matrix.row, matrix.col, matrix.data)
            if i < j
        )
        diagonal = model.precision.matrix.diagonal()
        states.append(
            {
                "label": int(model.label),
                "mu": [float(v) for v in model.mu],
                "log_det": float(model.precision.log_det),
                "occupancy": int(model.member_count),
                "diagonal": [float(v) for v in diagonal],
                "edges": [[i, j, v] for i, j, v in edges],
            }
        )
    return {"assets": list(assets), "states": states}


def _config_payload(config: RunConfig) -> dict:
    c = config.clustering
    return {
        "input": str(config.input_path),
        "output": str(config.output_dir),
        "clusters": c.n_clusters,
        "gamma": float(c.gamma),
        "mode": c.scoring_mode,
        "similarity": c.similarity_mode,
        "standardize": c.standardize,
        "max_iterations": c.max_iterations,
        "seed": c.seed,
        "min_cluster_size": c.min_cluster_size,
        "ratio": config.ratio,
    }


def _diagnose(kind: str, exc: Exception) -> None:
    print(f"marketstates: {kind} error: {exc}", file=sys.stderr)


def _failure_report(out_dir: Path, config: RunConfig, kind: str, exc: Exception) -> None:
    """Best-effort report.json for post-mortem, even when the run failed."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(
            out_dir / "report.json",
            {
                "status": "error",
                "error_kind": kind,
                "error": str(exc),
                "config": _config_payload(config),
            },
        )
    except OSError:
        pass


def run_fit(config: RunConfig) -> int:
    """Execute one fit end to end; returns the process exit code."""
    try:
        config.validate()
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG
    except OSError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG

    try:
        panel = load_price_panel(config.input_path)
        returns = to_log_returns(panel)
    except DataError as exc:
        _diagnose("data", exc)
        _failure_report(out_dir, config, "data", exc)
        return EXIT_DATA

    try:
        models, path, report = fit(returns, config.clustering)
    except ConfigError as exc:
        _diagnose("config", exc)
        _failure_report(out_dir, config, "config", exc)
        return EXIT_CONFIG
    except DataError as exc:
        _diagnose("data", exc)
        _failure_report(out_dir, config, "data", exc)
        return EXIT_DATA
    except (FitError, EstimationError) as exc:
        _diagnose("fit", exc)
        _failure_report(out_dir, config, "fit", exc)
        return EXIT_FIT

    scored_returns = (
        standardize_returns(returns) if config.clustering.standardize else returns
    )
    ratio_pair = _parse_ratio(config.ratio, config.clustering.n_clusters)
    series = None
    if ratio_pair == "auto":
        try:
            ratio_pair = suggest_ratio_states(path, scored_returns)
        except ValueError as exc:
            _diagnose("fit", exc)
            _failure_report(out_dir, config, "fit", exc)
            return EXIT_FIT
    if ratio_pair is not None:
        series = likelihood_ratio(scored_returns, models, ratio_pair[0], ratio_pair[1])

    if "csv" in config.formats:
        _write_states_csv(out_dir / "states.csv", returns.dates, path.labels)
        if series is not None:
            _write_ratio_csv(out_dir / "ratio.csv", series)
    if "json" in config.formats:
        _write_json(out_dir / "models.json", _models_payload(models, returns.assets))

    payload = {"status": "ok", "config": _config_payload(config)}
    payload.update(report.to_dict())
    if series is not None:
        payload["ratio_states"] = [int(series.state_a), int(series.state_b)]
    _write_json(out_dir / "report.json", payload)
    return EXIT_OK


def run_sweep(config: RunConfig, k_list, gamma_list) -> int:
    """Run the fit once per (clusters, gamma) cell; summarize agreement.

    Each cell writes the standard outputs into its own subdirectory;
    sweep.json holds the pairwise matched-label agreement matrix. Returns
    0 only if every cell succeeded.
    """
    try:
        config.validate()
        if not k_list or not gamma_list:
            raise ConfigError("sweep lists must be non-empty")
        for k in k_list:
            if not isinstance(k, int) or k < 2:
                raise ConfigError(f"sweep clusters must be integers >= 2, got {k}")
        for g in gamma_list:
            if not np.isfinite(g) or g < 0:
                raise ConfigError(f"sweep gamma must be finite and >= 0, got {g}")
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG
    except OSError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG

    cells = []
    labels_by_cell = []
    first_failure = EXIT_OK
    for k in k_list:
        for gamma in gamma_list:
            name = f"K{k}_gamma{gamma:g}"
            cell_config = replace(
                config,
                output_dir=str(out_dir / name),
                clustering=replace(config.clustering, n_clusters=k, gamma=float(gamma)),
            )
            code = run_fit(cell_config)
            cells.append(
                {"clusters": k, "gamma": float(gamma), "dir": name, "exit_code": code}
            )
            if code == EXIT_OK:
                labels_by_cell.append(_read_labels(out_dir / name / "states.csv"))
            else:
                labels_by_cell.append(None)
                if first_failure == EXIT_OK:
                    first_failure = code

    n_cells = len(cells)
    agreement = [[None] * n_cells for _ in range(n_cells)]
    for i in range(n_cells):
        for j in range(n_cells):
            if labels_by_cell[i] is not None and labels_by_cell[j] is not None:
                agreement[i][j] = label_agreement(labels_by_cell[i], labels_by_cell[j])
    _write_json(out_dir / "sweep.json", {"cells": cells, "agreement": agreement})
    return first_failure


def _read_labels(states_csv: Path) -> np.ndarray:
    with open(states_csv, "r", encoding="utf-8") as fh:
        next(fh)
        return np.array([int(line.rstrip("\n").split(",")[1]) for line in fh], dtype=int)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through ConfigError so
    # every configuration problem lands on exit code 1.
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list:
    return [int(p) for p in text.split(",") if p.strip() != ""]


def _float_list(text: str) -> list:
    return [float(p) for p in text.split(",") if p.strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="marketstates",
        description="Detect market states in an asset price panel and "
        "emit plot-ready CSV/JSON outputs.",
    )
    parser.add_argument("--input", required=True, help="price panel CSV (date column first)")
    parser.add_argument("--output", required=True, help="output directory")
    parser.add_argument("--clusters", type=int, default=4, help="number of states (default 4)")
    parser.add_argument("--gamma", type=float, default=100.0, help="switching penalty (default 100)")
    parser.add_argument(
        "--mode", choices=["likelihood", "mahalanobis"], default="likelihood",
        help="scoring mode (mahalanobis drops the log-determinant term)",
    )
    parser.add_argument(
        "--similarity", choices=["signed", "absolute", "squared"], default="signed",
        help="correlation transform used to build each state's graph",
    )
    parser.add_argument("--standardize", action="store_true", help="z-score each asset first")
    parser.add_argument("--max-iter", type=int, default=50, help="fit iteration budget")
    parser.add_argument("--seed", type=int, default=0, help="seed for random restarts")
    parser.add_argument("--min-cluster-size", type=int, default=None,
                        help="minimum points per state (default: assets + 1)")
    parser.add_argument("--ratio", default=None,
                        help="'A,B' state labels or 'auto' for lowest-vs-highest mean return")
    parser.add_argument("--sweep-k", default=None, help="comma-separated cluster counts")
    parser.add_argument("--sweep-gamma", default=None, help="comma-separated gamma values")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        clustering = ClusteringConfig(
            n_clusters=args.clusters,
            gamma=args.gamma,
            scoring_mode=args.mode,
            similarity_mode=args.similarity,
            max_iterations=args.max_iter,
            seed=args.seed,
            min_cluster_size=args.min_cluster_size,
            standardize=args.standardize,
        )
        config = RunConfig(
            input_path=args.input,
            output_dir=args.output,
            clustering=clustering,
            ratio=args.ratio,
        )
        if args.sweep_k is not None or args.sweep_gamma is not None:
            k_list = _int_list(args.sweep_k) if args.sweep_k is not None else [args.clusters]
            gamma_list = (
                _float_list(args.sweep_gamma) if args.sweep_gamma is not None else [args.gamma]
            )
            return run_sweep(config, k_list, gamma_list)
        return run_fit(config)
    except ConfigError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        _diagnose("config", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
