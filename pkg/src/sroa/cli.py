"""Command-line front end.

Subcommands:

* ``decompose``       deflate a tensor file into rank-one pairs, print JSON
* ``sweep``           first-extraction error scan over noise sizes (CSV)
* ``stability``       full-deflation error statistics per step (CSV)
* ``whiten``          moment whitening and mixture parameter recovery (JSON)
* ``matrix-baseline`` matrix eigenpair bounds for comparison (CSV)

Exit codes: 0 success, 1 malformed input or unwritable output, 2 a deflation
step failed to converge, 3 the moment matrix is rank deficient for the
requested component count.

Flags override values from ``--config FILE.json``; the config file holds a
flat JSON object keyed by flag name with dashes as underscores. Commands that
draw random perturbations require an explicit seed so every run is
reproducible; with the same seed the written files are byte-identical. CSV
files are written to a temporary file and renamed into place, so a failed run
never leaves a truncated file. The sweep and stability reports also render
PNG figures next to the CSV unless --no-figures is given.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from .deflation import decompose
from .perturbation import (
    KINDS,
    PerturbationModel,
    deflation_stability,
    derive_seed,
    accumulation_ratio,
    matrix_baseline,
    sweep_first_iteration,
    write_records_csv,
)
from .rank_one import SolverConfig
from .tensor import TensorFormatError, load_tensor
from .whitening import (
    MomentPair,
    RankDeficiencyError,
    TopicModelParams,
    load_moment_matrix,
    recover_parameters,
    synthesize_moments,
    whiten_and_decompose,
)

MATRIX_CSV_HEADER = (
    "model,trial,lambda_hat,lambda_top,weight_error,e_norm,weyl_violation,"
    "gap,overlap,overlap_bound,overlap_violation"
)

STABILITY_SUMMARY_HEADER = "model,pair_index,lambda_mean,lambda_std,vec_mean,vec_std"

DEFAULT_GRID = "0.001:0.2:0.001"
FINE_GRID = "0.0001:0.2:0.0001"


class CliError(Exception):
    """A user-facing failure with a specific exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp_path, 0o666 & ~umask)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as exc:
        raise CliError(1, f"malformed config {path}: {exc}") from None
    except OSError as exc:
        raise CliError(1, f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(1, f"config {path} must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge precedence: command line flag, then config file, then default."""
    config = _load_config(getattr(args, "config", None))
    unknown = set(config) - set(defaults)
    if unknown:
        raise CliError(1, f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(defaults)
    merged.update(config)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require_seed(opts: dict) -> int:
    if opts["seed"] is None:
        raise CliError(1, "a seed is required; pass --seed or set it in the config")
    return int(opts["seed"])


def _kinds_from(model: str) -> tuple[str, ...]:
    if model == "all":
        return KINDS
    if model not in KINDS:
        raise CliError(1, f"unknown model {model!r}; choose from {', '.join(KINDS)} or all")
    return (model,)


def _parse_sigma_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError(1, f"sigma grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(x) for x in parts)
    except ValueError:
        raise CliError(1, f"sigma grid holds a non-number: {text!r}") from None
    if step <= 0.0 or start <= 0.0 or stop < start:
        raise CliError(1, f"sigma grid needs 0 < start <= stop and step > 0, got {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def _solver(opts: dict, seed: int) -> SolverConfig:
    return SolverConfig(restarts=int(opts["restarts"]), seed=seed)


def _count_violations(records) -> tuple[int, int]:
    weight = sum(1 for r in records if r.lambda_violation)
    vector = sum(1 for r in records if r.vec_violation)
    return weight, vector


def _render_sweep_figures(records, kinds, out_path) -> list[str]:
    from . import figures  # deferred so tensor-only commands skip matplotlib

    stem = os.path.splitext(out_path)[0]
    paths = []
    for kind in kinds:
        subset = [r for r in records if r.model == kind]
        path = f"{stem}_{kind}.png"
        figures.sweep_figure(subset, path)
        paths.append(path)
    return paths


def _render_stability_figures(tables, out_path) -> list[str]:
    from . import figures

    stem = os.path.splitext(out_path)[0]
    paths = []
    for table in tables:
        path = f"{stem}_{table.kind}.png"
        figures.stability_figure(table, path)
        paths.append(path)
    return paths


def cmd_decompose(args: argparse.Namespace) -> int:
    opts = _resolve(
        args, {"k": None, "restarts": 30, "max_iterations": 500, "seed": 0, "out": None}
    )
    T, correction = load_tensor(args.tensor)
    k = int(opts["k"]) if opts["k"] is not None else T.dim
    config = SolverConfig(
        restarts=int(opts["restarts"]),
        max_iterations=int(opts["max_iterations"]),
        seed=int(opts["seed"]),
    )
    result = decompose(T, k, config)

    payload = {
        "order": result.order,
        "dim": result.dim,
        "symmetrization_correction": correction,
        "pairs": [
            {"weight": pair.weight, "vector": pair.vector.tolist()} for pair in result.pairs
        ],
        "residual_frobenius": list(result.residual_frobenius),
        "stationarity": list(result.stationarity),
        "converged": [bool(f.converged) for f in result.solver_flags],
        "degenerate": [bool(f.degenerate) for f in result.solver_flags],
        "nonpositive_weight": [bool(f.nonpositive_weight) for f in result.solver_flags],
    }
    text = json.dumps(payload, indent=2) + "\n"
    sys.stdout.write(text)
    if opts["out"] is not None:
        _atomic_write_text(opts["out"], text)

    if not all(f.converged for f in result.solver_flags):
        bad = [i + 1 for i, f in enumerate(result.solver_flags) if not f.converged]
        print(f"sroa: step(s) {bad} did not converge", file=sys.stderr)
        return 2
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    opts = _resolve(
        args,
        {
            "n": 10,
            "p": 3,
            "model": "all",
            "sigma_grid": None,
            "seed": None,
            "restarts": 30,
            "paper_scale": False,
            "out": "sweep.csv",
            "no_figures": False,
        },
    )
    seed = _require_seed(opts)
    kinds = _kinds_from(opts["model"])
    grid_text = opts["sigma_grid"]
    if grid_text is None:
        grid_text = FINE_GRID if opts["paper_scale"] else DEFAULT_GRID
    grid = _parse_sigma_grid(grid_text)

    records = sweep_first_iteration(
        int(opts["n"]), int(opts["p"]), kinds, grid, seed, _solver(opts, seed)
    )
    write_records_csv(records, opts["out"])
    weight_v, vector_v = _count_violations(records)
    print(f"wrote {opts['out']} ({len(records)} rows)")
    print(f"weight violations: {weight_v} / {len(records)}")
    print(f"vector violations: {vector_v} / {len(records)}")
    if not opts["no_figures"]:
        for path in _render_sweep_figures(records, kinds, opts["out"]):
            print(f"figure: {path}")
    return 0


def cmd_stability(args: argparse.Namespace) -> int:
    opts = _resolve(
        args,
        {
            "n": 10,
            "p": 3,
            "model": "all",
            "sigma": 0.01,
            "trials": None,
            "seed": None,
            "restarts": 30,
            "paper_scale": False,
            "out": "stability.csv",
            "no_figures": False,
        },
    )
    seed = _require_seed(opts)
    kinds = _kinds_from(opts["model"])
    trials = opts["trials"]
    if trials is None:
        trials = 500 if opts["paper_scale"] else 50

    records, tables = deflation_stability(
        int(opts["n"]),
        int(opts["p"]),
        kinds,
        float(opts["sigma"]),
        int(trials),
        seed,
        _solver(opts, seed),
    )
    write_records_csv(records, opts["out"])

    summary_path = os.path.splitext(opts["out"])[0] + "_summary.csv"
    lines = [STABILITY_SUMMARY_HEADER]
    for table in tables:
        for j in range(len(table.weight_mean)):
            lines.append(
                ",".join(
                    [
                        table.kind,
                        str(j + 1),
                        _fmt(table.weight_mean[j]),
                        _fmt(table.weight_std[j]),
                        _fmt(table.vector_mean[j]),
                        _fmt(table.vector_std[j]),
                    ]
                )
            )
    _atomic_write_text(summary_path, "\n".join(lines) + "\n")

    weight_v, vector_v = _count_violations(records)
    print(f"wrote {opts['out']} ({len(records)} rows) and {summary_path}")
    print(f"weight violations: {weight_v} / {len(records)}")
    print(f"vector violations: {vector_v} / {len(records)}")
    for table in tables:
        ratio = accumulation_ratio(table.total_mean)
        print(f"{table.kind}: accumulation ratio {ratio:.3f}")
    if not opts["no_figures"]:
        for path in _render_stability_figures(tables, opts["out"]):
            print(f"figure: {path}")
    return 0


def _synthetic_params(n: int, d: int, seed: int | None) -> TopicModelParams:
    """Without a seed: uniform weights and coordinate topics, exactly solvable."""
    if seed is None:
        topics = np.zeros((n, d))
        topics[np.arange(n), np.arange(n)] = 1.0
        return TopicModelParams(np.full(n, 1.0 / n), topics)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.5, 1.5, n)
    weights /= weights.sum()
    topics = rng.uniform(0.05, 1.0, (n, d))
    topics /= topics.sum(axis=1, keepdims=True)
    return TopicModelParams(weights, topics)


def cmd_whiten(args: argparse.Namespace) -> int:
    opts = _resolve(
        args,
        {
            "n": None,
            "d": None,
            "p": 3,
            "seed": None,
            "restarts": 30,
            "synthetic": False,
            "m2": None,
            "mp": None,
            "out": None,
        },
    )
    truth = None
    if opts["synthetic"]:
        n = int(opts["n"]) if opts["n"] is not None else 2
        d = int(opts["d"]) if opts["d"] is not None else n
        if d < n:
            raise CliError(3, f"need {n} components but topic dimension is {d}")
        truth = _synthetic_params(n, d, opts["seed"])
        moments = synthesize_moments(truth, int(opts["p"]))
    elif opts["m2"] is not None and opts["mp"] is not None:
        m2 = load_moment_matrix(opts["m2"])
        mp, _ = load_tensor(opts["mp"])
        moments = MomentPair(m2, mp)
        if opts["n"] is None:
            raise CliError(1, "--n is required with moment files")
        n = int(opts["n"])
    else:
        raise CliError(1, "pass either --synthetic or both --m2 and --mp")

    solver_seed = int(opts["seed"]) if opts["seed"] is not None else 0
    result, W = whiten_and_decompose(moments, n, _solver(opts, solver_seed))
    recovered = recover_parameters(result, W)

    payload = recovered.as_json_dict()
    payload["w"] = [x if math.isfinite(x) else None for x in payload["w"]]
    text = json.dumps(payload, indent=2) + "\n"
    sys.stdout.write(text)
    if opts["out"] is not None:
        _atomic_write_text(opts["out"], text)

    if moments.rank_warning:
        print("sroa: warning: tuple moment looks rank deficient", file=sys.stderr)
    if recovered.failed.any():
        bad = [i + 1 for i in np.flatnonzero(recovered.failed)]
        print(f"sroa: warning: component(s) {bad} failed recovery", file=sys.stderr)
    elif truth is not None:
        # match recovered components to the synthetic truth before comparing
        from scipy.optimize import linear_sum_assignment

        dist = np.linalg.norm(
            recovered.topics[:, None, :] - truth.topics[None, :, :], axis=2
        )
        rows, cols = linear_sum_assignment(dist)
        weight_err = float(np.max(np.abs(recovered.weights[rows] - truth.weights[cols])))
        topic_err = float(dist[rows, cols].max())
        print(f"max weight error: {weight_err:.3g}", file=sys.stderr)
        print(f"max topic error: {topic_err:.3g}", file=sys.stderr)
    return 0


def cmd_matrix_baseline(args: argparse.Namespace) -> int:
    opts = _resolve(
        args,
        {
            "n": 10,
            "model": "gaussian",
            "sigma": 0.01,
            "trials": 100,
            "seed": None,
            "out": "matrix_baseline.csv",
        },
    )
    seed = _require_seed(opts)
    kinds = _kinds_from(opts["model"])
    trials = int(opts["trials"])
    if trials < 1:
        raise CliError(1, "trials must be >= 1")

    lines = [MATRIX_CSV_HEADER]
    weyl_v = overlap_v = checked = 0
    for kind in kinds:
        kind_index = KINDS.index(kind)
        model = PerturbationModel(kind, float(opts["sigma"]))
        for t in range(trials):
            report = matrix_baseline(int(opts["n"]), model, derive_seed(seed, kind_index, t))
            lines.append(
                ",".join(
                    [
                        kind,
                        str(t),
                        _fmt(report.lambda_hat),
                        _fmt(report.lambda_top),
                        _fmt(report.weight_error),
                        _fmt(report.e_norm),
                        str(int(report.weyl_violation)),
                        _fmt(report.gap),
                        _fmt(report.overlap),
                        _fmt(report.overlap_bound),
                        str(int(report.overlap_violation)),
                    ]
                )
            )
            weyl_v += int(report.weyl_violation)
            if not report.gap_is_zero:
                checked += 1
                overlap_v += int(report.overlap_violation)
    _atomic_write_text(opts["out"], "\n".join(lines) + "\n")
    total = trials * len(kinds)
    print(f"wrote {opts['out']} ({total} rows)")
    print(f"weyl violations: {weyl_v} / {total}")
    print(f"overlap violations: {overlap_v} / {checked} checked")
    return 0


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, help="master seed for all random draws")
    sp.add_argument("--restarts", type=int, help="power iteration restarts (default 30)")
    sp.add_argument("--out", metavar="PATH", help="output file path")
    sp.add_argument("--config", metavar="FILE.json", help="JSON config; flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sroa",
        description="successive rank-one decomposition of symmetric tensors "
        "and perturbation-bound experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("decompose", help="deflate a tensor file into rank-one pairs")
    sp.add_argument("tensor", help="tensor text file: 'p n' header then n**p entries")
    sp.add_argument("--k", type=int, help="number of pairs to extract (default: dim)")
    sp.add_argument(
        "--max-iterations",
        dest="max_iterations",
        type=int,
        help="power iteration cap per restart (default 500)",
    )
    _add_common(sp)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("sweep", help="first-extraction errors over a noise grid")
    sp.add_argument("--n", type=int, help="tensor dimension (default 10)")
    sp.add_argument("--p", type=int, help="tensor order (default 3)")
    sp.add_argument("--model", choices=[*KINDS, "all"], help="perturbation model (default all)")
    sp.add_argument(
        "--sigma-grid",
        dest="sigma_grid",
        metavar="START:STOP:STEP",
        help=f"noise grid (default {DEFAULT_GRID})",
    )
    sp.add_argument(
        "--paper-scale",
        dest="paper_scale",
        action="store_const",
        const=True,
        help=f"use the fine grid {FINE_GRID}",
    )
    sp.add_argument(
        "--no-figures",
        dest="no_figures",
        action="store_const",
        const=True,
        help="skip PNG rendering",
    )
    _add_common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("stability", help="full-deflation error statistics per step")
    sp.add_argument("--n", type=int, help="tensor dimension (default 10)")
    sp.add_argument("--p", type=int, help="tensor order (default 3)")
    sp.add_argument("--model", choices=[*KINDS, "all"], help="perturbation model (default all)")
    sp.add_argument("--sigma", type=float, help="noise size (default 0.01)")
    sp.add_argument("--trials", type=int, help="trials per model (default 50)")
    sp.add_argument(
        "--paper-scale",
        dest="paper_scale",
        action="store_const",
        const=True,
        help="run 500 trials per model",
    )
    sp.add_argument(
        "--no-figures",
        dest="no_figures",
        action="store_const",
        const=True,
        help="skip PNG rendering",
    )
    _add_common(sp)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("whiten", help="whiten moments and recover mixture parameters")
    sp.add_argument("--m2", metavar="FILE", help="pair moment matrix file")
    sp.add_argument("--mp", metavar="FILE", help="tuple moment tensor file")
    sp.add_argument(
        "--synthetic",
        action="store_const",
        const=True,
        help="build moments from synthetic parameters instead of files",
    )
    sp.add_argument("--n", type=int, help="component count (synthetic default 2)")
    sp.add_argument("--d", type=int, help="synthetic topic dimension (default n)")
    sp.add_argument("--p", type=int, help="tuple moment order (synthetic default 3)")
    _add_common(sp)
    sp.set_defaults(func=cmd_whiten)

    sp = sub.add_parser("matrix-baseline", help="matrix eigenpair bounds for comparison")
    sp.add_argument("--n", type=int, help="matrix dimension (default 10)")
    sp.add_argument("--model", choices=[*KINDS, "all"], help="perturbation model (default gaussian)")
    sp.add_argument("--sigma", type=float, help="noise size (default 0.01)")
    sp.add_argument("--trials", type=int, help="trials per model (default 100)")
    _add_common(sp)
    sp.set_defaults(func=cmd_matrix_baseline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"sroa: error: {exc.message}", file=sys.stderr)
        return exc.code
    except TensorFormatError as exc:
        print(f"sroa: error: {exc}", file=sys.stderr)
        return 1
    except RankDeficiencyError as exc:
        print(f"sroa: error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"sroa: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"sroa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
