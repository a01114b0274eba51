"""Command-line surface: extract features, score them, evaluate, synthesize.

Exit codes: 0 success, 2 usage/validation problem, 3 I/O failure. Every
command is idempotent: re-running with identical inputs produces
byte-identical outputs. Flags can also come from a TOML file (one table
per subcommand); precedence is CLI > file > default, unknown keys are
rejected. XFER_OD_THREADS caps internal parallelism (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import tomli

from . import evaluation, metrics, pooling, store, synth
from .errors import IoError, XferodError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

_EXTRACT_KEYS = {"extractor", "out", "pool_size", "sampling_ratio", "aligned", "k0", "s0"}
_SCORE_KEYS = {"metrics", "transrate_eps", "scenario_id", "out", "standardize", "map"}
_EVALUATE_KEYS = {"out", "exact"}
_SYNTH_KEYS = {"grid", "seed", "out", "objects", "dims", "classes", "images", "image_size"}


class CliError(Exception):
    """Validation failure surfaced as exit code 2."""


def _threads() -> int:
    raw = os.environ.get("XFER_OD_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise CliError(f"XFER_OD_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise CliError("XFER_OD_THREADS must be >= 1")
    return value


def _load_config(path: str | None, section: str, allowed: set[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise CliError(f"config {path}: invalid TOML: {exc}") from exc
    table = doc.get(section, {})
    if not isinstance(table, dict):
        raise CliError(f"config {path}: [{section}] must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise CliError(f"config {path}: unknown keys in [{section}]: {sorted(unknown)}")
    stray = set(doc) - {"extract", "score", "evaluate", "synth"}
    if stray:
        raise CliError(f"config {path}: unknown sections: {sorted(stray)}")
    return table


def _resolve(cli_value, file_cfg: dict, key: str, default):
    """Flag precedence: CLI > config file > default."""
    if cli_value is not None:
        return cli_value
    if key in file_cfg:
        return file_cfg[key]
    return default


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, "extract", _EXTRACT_KEYS)
    extractor = _resolve(args.extractor, cfg, "extractor", None)
    out = _resolve(args.out, cfg, "out", None)
    if extractor is None or out is None:
        raise CliError("extract needs --extractor and --out")
    pool_size = int(_resolve(args.pool_size, cfg, "pool_size", 7))
    sampling_ratio = int(_resolve(args.sampling_ratio, cfg, "sampling_ratio", 2))
    aligned = bool(_resolve(args.aligned, cfg, "aligned", True))
    k0 = int(_resolve(args.k0, cfg, "k0", 4))
    s0 = float(_resolve(args.s0, cfg, "s0", 224.0))

    manifest = store.load_manifest(args.manifest)
    roi_cfg = pooling.RoiAlignConfig(
        output_size=pool_size, sampling_ratio=sampling_ratio, aligned=aligned
    )
    if extractor == "ms":
        fm = pooling.extract_multiscale(
            manifest, pooling.MultiScaleConfig(k0=k0, s0=s0), roi_cfg
        )
    elif extractor == "fc":
        fm = pooling.extract_fc(manifest)
    elif extractor.startswith("roi:"):
        fm = pooling.extract_roi(extractor.split(":", 1)[1], manifest, roi_cfg)
    elif extractor.startswith("global:"):
        fm = pooling.extract_global(extractor.split(":", 1)[1], manifest)
    else:
        raise CliError(
            f"unknown extractor {extractor!r}; use global:<lvl>, roi:<lvl>, ms or fc"
        )
    store.save_feature_matrix(fm, out)
    print(f"wrote {fm.features.shape[0]}×{fm.features.shape[1]} features to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def cmd_score(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, "score", _SCORE_KEYS)
    scenario_id = _resolve(args.scenario_id, cfg, "scenario_id", None)
    out = _resolve(args.out, cfg, "out", None)
    if scenario_id is None or out is None:
        raise CliError("score needs --scenario-id and --out")
    selected = _resolve(args.metrics, cfg, "metrics", list(metrics.METRIC_NAMES))
    if isinstance(selected, str):
        selected = [m.strip() for m in selected.split(",") if m.strip()]
    unknown = set(selected) - set(metrics.METRIC_NAMES)
    if unknown:
        raise CliError(f"unknown metrics: {sorted(unknown)}")
    eps = float(_resolve(args.transrate_eps, cfg, "transrate_eps", 1e-4))
    standardize = bool(_resolve(args.standardize, cfg, "standardize", False))
    map_value = float(_resolve(args.map_value, cfg, "map", 0.0))
    if not 0.0 <= map_value <= 1.0:
        raise CliError(f"--map must be in [0, 1], got {map_value}")

    fm = store.load_feature_matrix(args.features)
    scores = metrics.score_all(
        fm, metrics.ScoreConfig(transrate_eps=eps, standardize=standardize)
    )
    row = {name: scores[name].value for name in selected}

    out_path = Path(out)
    if out_path.exists():
        table = store.load_scenarios(out_path)
        ids = list(table.scenario_ids)
        maps = list(table.map_values)
        columns = {m: list(v) for m, v in table.scores.items()}
        for m in row:
            if m not in columns:
                columns[m] = [None] * len(ids)
        if scenario_id in ids:
            i = ids.index(scenario_id)
            maps[i] = map_value
            for m, v in row.items():
                columns[m][i] = v
        else:
            ids.append(scenario_id)
            maps.append(map_value)
            for m in columns:
                columns[m].append(row.get(m))
        table = store.ScenarioTable(ids, maps, columns)
    else:
        table = store.ScenarioTable(
            [scenario_id], [map_value], {m: [v] for m, v in row.items()}
        )
    store.save_scenarios(table, out_path)
    rendered = ", ".join(
        f"{m}={row[m]:.4f}" if row[m] is not None else f"{m}=null" for m in selected
    )
    print(f"{scenario_id}: {rendered}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, "evaluate", _EVALUATE_KEYS)
    out = _resolve(args.out, cfg, "out", None)
    exact = bool(_resolve(args.exact, cfg, "exact", False))

    table = store.load_scenarios(args.scenarios)
    results = evaluation.evaluate_table(table, exact=exact)
    sys.stdout.write(evaluation.pretty_report(results))
    if out is not None:
        try:
            Path(out).write_text(evaluation.report_csv(results), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write report {out}: {exc}") from exc
        print(f"report written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _parse_grid(grid: str) -> tuple[list[float], list[float]]:
    seps: list[float] | None = None
    noises: list[float] | None = None
    for part in grid.split():
        if part.startswith("sep="):
            seps = [float(v) for v in part[4:].split(",") if v]
        elif part.startswith("noise="):
            noises = [float(v) for v in part[6:].split(",") if v]
        else:
            raise CliError(f"grid term {part!r} not of the form sep=... noise=...")
    if not seps or not noises:
        raise CliError("grid must provide sep=a,b,... and noise=x,y,...")
    return seps, noises


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, "synth", _SYNTH_KEYS)
    grid = _resolve(args.grid, cfg, "grid", None)
    out = _resolve(args.out, cfg, "out", None)
    if grid is None or out is None:
        raise CliError("synth needs --grid and --out")
    seps, noises = _parse_grid(grid)
    try:
        base = synth.SynthSpec(
            objects=int(_resolve(args.objects, cfg, "objects", 240)),
            dims=int(_resolve(args.dims, cfg, "dims", 8)),
            classes=int(_resolve(args.classes, cfg, "classes", 4)),
            seed=int(_resolve(args.seed, cfg, "seed", 0)),
            images=int(_resolve(args.images, cfg, "images", 24)),
            image_size=int(_resolve(args.image_size, cfg, "image_size", 256)),
        )
        table = synth.scenario_sweep(base, seps, noises, threads=_threads())
    except XferodError as exc:
        raise CliError(str(exc)) from exc
    store.save_scenarios(table, out)
    print(f"wrote {table.m} scenarios to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xferod",
        description="Transferability metrics over object-level detector features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="pool object-level features from a manifest")
    p.add_argument("manifest")
    p.add_argument("--extractor", help="global:<lvl> | roi:<lvl> | ms | fc")
    p.add_argument("--out", help="output directory for features.npy + meta.json")
    p.add_argument("--pool-size", type=int, dest="pool_size")
    p.add_argument("--sampling-ratio", type=int, dest="sampling_ratio")
    p.add_argument("--no-aligned", dest="aligned", action="store_const", const=False)
    p.add_argument("--k0", type=int)
    p.add_argument("--s0", type=float)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("score", help="compute transferability scores for features")
    p.add_argument("features", help="directory holding features.npy + meta.json")
    p.add_argument("--metrics", help="comma-separated subset of metrics")
    p.add_argument("--transrate-eps", type=float, dest="transrate_eps")
    p.add_argument("--scenario-id", dest="scenario_id")
    p.add_argument("--map", type=float, dest="map_value",
                   help="realized transfer map for this scenario (default 0)")
    p.add_argument("--standardize", action="store_const", const=True)
    p.add_argument("--out", help="scenario CSV to create or update")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("evaluate", help="correlate metric scores with map")
    p.add_argument("scenarios", help="scenario CSV")
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--exact", action="store_const", const=True,
                   help="exact permutation p-values (M <= 10)")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic scenario sweep")
    p.add_argument("--grid", help="e.g. 'sep=0.5,1,2,4 noise=0,0.1,0.3'")
    p.add_argument("--seed", type=int)
    p.add_argument("--objects", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--images", type=int)
    p.add_argument("--image-size", type=int, dest="image_size")
    p.add_argument("--out", help="scenario CSV path")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except XferodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
