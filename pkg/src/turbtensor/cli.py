"""Command line entry point: ``turbtensor <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .data import DataError, Dataset, build_sparse_tensor, load_csv, merge_interpolate, write_csv
from .evaluation import DEFAULT_SEEDS, grid_search, reports_to_json, run_experiment
from .models import MODEL_KINDS, ModelSpec
from .preprocess import Discretizer, fit_target_transform
from .richardson import G0, ProfileLevel, classify, profile_ri
from .synth import SynthSpec, generate, write_synth
from .training import HyperParams, train

logger = logging.getLogger("turbtensor")


class CLIError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _four_ints(text: str) -> tuple[int, int, int, int]:
    vals = _ints(text)
    if len(vals) == 1:
        vals = vals * 4
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"expected 1 or 4 integers, got {text!r}")
    return vals


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return value


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


# flag name -> (type, built-in default); used by the config file merge
OPTIONS = {
    "model": (str, "m1"),
    "bins": (_four_ints, (10, 10, 10, 10)),
    "discretizer": (str, "quantile"),
    "rank": (_positive_int, 5),
    "embed_dim": (_positive_int, 5),
    "hidden": (_ints, (16,)),
    "width": (_positive_int, 5),
    "lr": (float, 1e-3),
    "epochs": (_non_negative_int, 200),
    "batch": (_positive_int, 32),
    "folds": (_positive_int, 5),
    "seeds": (_ints, DEFAULT_SEEDS),
    "seed": (int, 42),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage", message)


def read_config(path) -> dict:
    """Flat ``key=value`` file; blank lines and ``#`` comments ignored."""
    config = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CLIError("io", f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError("config", f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise CLIError("config", f"{path}:{n}: unknown key {key!r}")
        try:
            config[key] = OPTIONS[key][0](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CLIError("config", f"{path}:{n}: {exc}") from None
    return config


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Flags beat the config file, which beats built-in defaults."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    for key, (_, default) in OPTIONS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, config.get(key, default))
    if getattr(args, "model", None) is not None and args.model not in MODEL_KINDS:
        raise CLIError("config", f"unknown model {args.model!r}")
    if getattr(args, "discretizer", None) not in (None, "quantile", "identity"):
        raise CLIError("config", f"unknown discretizer {args.discretizer!r}")
    return args


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODEL_KINDS, help="model tag (default m1)")
    p.add_argument("--data", required=True, help="observation CSV with ri column")
    p.add_argument("--bins", type=_four_ints, help="bins per mode h,u,v,w (default 10)")
    p.add_argument("--discretizer", choices=("quantile", "identity"),
                   help="quantile binning, or identity for pre-indexed (synth) data")
    p.add_argument("--rank", type=_positive_int, help="M1 embedding dim / Tucker rank (default 5)")
    p.add_argument("--embed-dim", dest="embed_dim", type=_positive_int,
                   help="baseline embedding dim (default 5)")
    p.add_argument("--hidden", type=_ints, help="M2/M5 hidden widths, comma-separated (default 16)")
    p.add_argument("--width", type=_positive_int, help="M4 pair layer width (default 5)")
    p.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    p.add_argument("--epochs", type=_non_negative_int, help="training epochs (default 200)")
    p.add_argument("--batch", type=_positive_int, help="mini-batch size (default 32)")
    p.add_argument("--config", help="key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="turbtensor", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate, optionally merge Ri, and rewrite observations")
    p.add_argument("--data", required=True, help="primary observation CSV")
    p.add_argument("--secondary", help="CSV with ri values to interpolate from")
    p.add_argument("--time-tol", dest="time_tol", type=float, default=600.0,
                   help="time tolerance in seconds (default 600)")
    p.add_argument("--height-tol", dest="height_tol", type=float, default=100.0,
                   help="height tolerance in meters (default 100)")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("richardson", help="per-layer Richardson number of a profile")
    p.add_argument("--profile", required=True, help="CSV with z,theta,u,v columns")
    p.add_argument("--g", type=float, default=G0, help=f"gravity in m/s^2 (default {G0})")
    p.add_argument("--out", help="output CSV (default stdout)")

    p = sub.add_parser("discretize", help="fit discretizer + target transform")
    p.add_argument("--data", required=True, help="observation CSV")
    p.add_argument("--bins", type=_four_ints, help="bins per mode h,u,v,w (default 10)")
    p.add_argument("--discretizer", choices=("quantile", "identity"), help="binning kind")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="output JSON")
    p.add_argument("--indices-out", dest="indices_out", help="optional CSV of p,i,j,k,value")

    p = sub.add_parser("synth", help="generate a synthetic low-rank tensor")
    p.add_argument("--modes", type=_four_ints, default=(8, 8, 8, 8), help="mode sizes (default 8)")
    p.add_argument("--true-rank", dest="true_rank", type=_four_ints, default=(3, 3, 3, 3),
                   help="ground-truth rank per mode (default 3)")
    p.add_argument("--noise", type=float, default=0.01, help="noise std (default 0.01)")
    p.add_argument("--samples", type=_positive_int, default=2000, help="observed cells (default 2000)")
    p.add_argument("--seed", type=int, help="generator seed (default 42)")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--truth", required=True, help="ground-truth JSON")

    p = sub.add_parser("train", help="train one model on all data, write a checkpoint")
    _add_model_flags(p)
    p.add_argument("--seed", type=int, help="init/shuffle seed (default 42)")
    p.add_argument("--out", required=True, help="checkpoint JSON")

    p = sub.add_parser("cv", help="k-fold cross validation over seeds")
    _add_model_flags(p)
    p.add_argument("--folds", type=_positive_int, help="fold count (default 5)")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds (default 38,40,42,44,46)")
    p.add_argument("--out", required=True, help="report JSON")

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search under CV")
    _add_model_flags(p)
    p.add_argument("--folds", type=_positive_int, help="fold count (default 5)")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds (default 38,40,42,44,46)")
    p.add_argument("--grid", action="append", required=True,
                   help="axis as key=v1,v2 (repeatable), e.g. lr=1e-3,1e-2")
    p.add_argument("--out", required=True, help="result JSON")
    return parser


def _load(path) -> Dataset:
    try:
        return load_csv(path)
    except DataError as exc:
        raise CLIError("data", str(exc)) from None


def _model_spec(args) -> ModelSpec:
    return ModelSpec(args.model, rank=args.rank, embed_dim=args.embed_dim,
                     hidden=tuple(args.hidden), width=args.width)


def _hp(args) -> HyperParams:
    return HyperParams(lr=args.lr, epochs=args.epochs, batch_size=args.batch)


def _fit_preprocessing(ds: Dataset, args):
    if args.discretizer == "identity":
        return Discretizer.identity(args.bins), fit_target_transform(ds.targets())
    return Discretizer.fit(ds.features(), args.bins), fit_target_transform(ds.targets())


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_ingest(args) -> None:
    ds = _load(args.data)
    if args.secondary:
        ds = merge_interpolate(ds, _load(args.secondary), (args.time_tol, args.height_tol))
    write_csv(ds, args.out)
    filled = sum(r.ri is not None for r in ds.records)
    logger.info("%d records, %d with ri", len(ds), filled)


def cmd_richardson(args) -> None:
    try:
        with open(args.profile, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        levels = [ProfileLevel(float(r["z"]), float(r["theta"]), float(r["u"]), float(r["v"]))
                  for r in rows]
    except OSError as exc:
        raise CLIError("io", str(exc)) from None
    except (KeyError, ValueError, TypeError) as exc:
        raise CLIError("data", f"bad profile {args.profile}: {exc}") from None
    try:
        result = profile_ri(levels, args.g)
    except ValueError as exc:
        raise CLIError("data", str(exc)) from None
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["z_mid", "ri", "class"])
        for z, ri in result:
            writer.writerow([repr(z), repr(ri), classify(ri).value])
    finally:
        if args.out:
            out.close()


def cmd_discretize(args) -> None:
    ds = _load(args.data)
    disc, tt = _fit_preprocessing(ds, args)
    _write_json(args.out, {"discretizer": disc.to_dict(), "target_transform": tt.to_dict()})
    if args.indices_out:
        tensor = build_sparse_tensor(ds, disc, tt)
        with open(args.indices_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["p", "i", "j", "k", "value"])
            for ix, y in zip(tensor.indices.tolist(), tensor.values.tolist()):
                writer.writerow([*ix, repr(y)])
        logger.info("%d entries, %d collisions", len(tensor), tensor.metadata["collisions"])


def cmd_synth(args) -> None:
    spec = SynthSpec(args.modes, args.true_rank, args.noise, args.samples, args.seed)
    tensor, truth = generate(spec)
    write_synth(tensor, truth, args.out, args.truth)


def cmd_train(args) -> None:
    ds = _load(args.data)
    disc, tt = _fit_preprocessing(ds, args)
    tensor = build_sparse_tensor(ds, disc, tt)
    model = _model_spec(args).build(tensor.mode_sizes, args.seed)
    _, trace = train(model, tensor, _hp(args), args.seed)
    doc = model.to_dict()
    doc["seed"] = args.seed
    doc["preprocessing"] = {"discretizer": disc.to_dict(), "target_transform": tt.to_dict()}
    doc["loss_trace"] = trace
    _write_json(args.out, doc)


def _cv_kwargs(args) -> dict:
    return {"seeds": args.seeds, "folds": args.folds, "bins": args.bins,
            "discretizer": args.discretizer}


def cmd_cv(args) -> None:
    ds = _load(args.data)
    reports = run_experiment(ds, _model_spec(args), _hp(args), **_cv_kwargs(args))
    Path(args.out).write_text(reports_to_json(list(reports.values())), encoding="utf-8")


_GRID_ALIASES = {"batch": "batch_size", "embed-dim": "embed_dim"}


def _parse_grid(items) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            raise CLIError("usage", f"grid axis must be key=v1,v2, got {item!r}")
        key, values = item.split("=", 1)
        key = _GRID_ALIASES.get(key.strip(), key.strip().replace("-", "_"))
        parsed = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
        if key == "hidden":
            parsed = [tuple(int(x) for x in str(v).split(":")) for v in values.split(",")]
        grid[key] = parsed
    return grid


def cmd_gridsearch(args) -> None:
    ds = _load(args.data)
    grid = _parse_grid(args.grid)
    try:
        best, table = grid_search(ds, _model_spec(args), grid, _hp(args), **_cv_kwargs(args))
    except ValueError as exc:
        raise CLIError("config", str(exc)) from None
    _write_json(args.out, {"model": args.model, "best": best, "table": table})


COMMANDS = {
    "ingest": cmd_ingest,
    "richardson": cmd_richardson,
    "discretize": cmd_discretize,
    "synth": cmd_synth,
    "train": cmd_train,
    "cv": cmd_cv,
    "gridsearch": cmd_gridsearch,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _resolve(parser.parse_args(argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 2 if exc.kind == "usage" else 1
    except (DataError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
