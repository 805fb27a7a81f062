"""Command-line batch pipeline.

Subcommands: ``gen-corpus``, ``fit``, ``score``, ``eval``, ``calibrate``.
Exit codes: 0 success, 1 runtime failure, 2 usage error. Every output file
is written under ``--out``. Values may also come from a JSON ``--config``
file whose keys mirror the long flag names (``fit_count``, ``interp``, ...);
flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import detector as det
from .poisonbench.corpus import PoisonPolicy, build_corpus, load_manifest, resolve_manifest
from .poisonbench.dataset import SyntheticDatasetSpec
from .poisonbench.mlp import TrainConfig
from .weightstore import read_container

logger = logging.getLogger("weightanomaly")

DEFAULTS: dict[str, dict[str, Any]] = {
    "gen-corpus": {"clean": 30, "backdoored": 22, "jobs": 1, "seed": 0},
    "fit": {"layer": "fc2", "interp": "forward", "retain": 0.95, "fit_count": 18, "covariance": "diagonal", "seed": 0},
    "score": {"name": None},
    "eval": {"split": "all", "name": None},
    "calibrate": {},
}


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--config", type=Path, default=None, help="JSON file with default flag values")
    p.add_argument("--out", type=Path, default=None, help="output directory (required)")
    p.add_argument("--verbose", "-v", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weightanomaly", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="train clean and backdoored networks")
    _common(p)
    p.add_argument("--clean", type=int, default=None)
    p.add_argument("--backdoored", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel training processes")

    p = sub.add_parser("fit", help="fit a detector on the first --fit-count clean networks")
    _common(p)
    p.add_argument("--corpus", type=Path, default=None, help="corpus directory or manifest.json")
    p.add_argument("--layer", default=None)
    p.add_argument("--interp", choices=["forward", "backward"], default=None)
    p.add_argument("--retain", type=float, default=None)
    p.add_argument("--candidates", default=None, help="comma-separated component counts")
    p.add_argument("--fit-count", dest="fit_count", type=int, default=None)
    p.add_argument("--covariance", choices=["spherical", "diagonal", "full"], default=None)

    p = sub.add_parser("score", help="score networks with a fitted detector")
    _common(p)
    p.add_argument("--detector", type=Path, default=None)
    p.add_argument("--records", type=Path, nargs="*", default=None, help="record files to score")
    p.add_argument("--corpus", type=Path, default=None, help="score every held-out network of a corpus")
    p.add_argument("--name", default=None, help="output CSV file name")

    p = sub.add_parser("eval", help="ROC/AUC from scores or from a detector and corpus")
    _common(p)
    p.add_argument("--scores", type=Path, default=None)
    p.add_argument("--detector", type=Path, default=None)
    p.add_argument("--corpus", type=Path, default=None)
    p.add_argument("--split", choices=["triggers", "locations", "all"], default=None)
    p.add_argument("--name", default=None, help="output CSV file name")

    p = sub.add_parser("calibrate", help="set a threshold at a target false rejection rate")
    _common(p)
    p.add_argument("--detector", type=Path, default=None)
    p.add_argument("--clean-records", dest="clean_records", type=Path, nargs="*", default=None)
    p.add_argument("--corpus", type=Path, default=None, help="use the corpus' held-out clean networks")
    p.add_argument("--frr", type=float, default=None)
    return parser


def _merge(args: argparse.Namespace) -> dict[str, Any]:
    opts = dict(DEFAULTS.get(args.command, {}))
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in cfg.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if opts.get("out") is None:
        raise UsageError("--out is required")
    opts["out"] = Path(opts["out"])
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) in (None, [])]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _held_out(corpus: Path, model: det.DetectorModel, labels=("clean", "backdoored"), subsets=None):
    """Manifest entries not used to fit ``model``, in manifest order."""
    mpath = resolve_manifest(corpus)
    fitted = set(model.fit_manifest.network_ids)
    out = []
    for e in load_manifest(mpath)["runs"]:
        if e["network_id"] in fitted or e["label"] not in labels or not e.get("valid", True):
            continue
        if e["label"] == "backdoored" and subsets is not None and e["subset"] not in subsets:
            continue
        out.append((e, mpath.parent / e["path"]))
    return out


def _split_subsets(split: str) -> list[str] | None:
    return None if split == "all" else [split]


# -- subcommands -----------------------------------------------------------


def cmd_gen_corpus(o: dict) -> int:
    if int(o["clean"]) < 2:
        raise UsageError(f"--clean must be >= 2, got {o['clean']}")
    if int(o["backdoored"]) < 0:
        raise UsageError("--backdoored must be >= 0")
    _, manifest = build_corpus(
        int(o["clean"]),
        int(o["backdoored"]),
        SyntheticDatasetSpec(**o.get("dataset", {})),
        TrainConfig.from_dict(o.get("train", {})),
        PoisonPolicy.from_dict(o.get("policy", {})),
        seed=int(o["seed"]),
        out_dir=o["out"],
        n_jobs=int(o["jobs"]),
    )
    n_valid = sum(1 for e in manifest["runs"] if e["valid"])
    print(f"{n_valid}/{len(manifest['runs'])} valid networks")
    print(o["out"] / "manifest.json")
    return 0


def cmd_fit(o: dict) -> int:
    _require(o, "corpus")
    if not 0.0 < float(o["retain"]) <= 1.0:
        raise UsageError(f"--retain must be in (0, 1], got {o['retain']}")
    if int(o["fit_count"]) < 2:
        raise UsageError("--fit-count must be >= 2")
    candidates = o.get("candidates")
    if isinstance(candidates, str):
        try:
            candidates = [int(c) for c in candidates.split(",") if c.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --candidates: {exc}") from exc
    if candidates is not None and (not candidates or min(candidates) < 1):
        raise UsageError("--candidates must list positive integers")

    mpath = resolve_manifest(o["corpus"])
    runs = [e for e in load_manifest(mpath)["runs"] if e["label"] == "clean"]
    if len(runs) < int(o["fit_count"]):
        raise RuntimeError(f"corpus has {len(runs)} clean networks, fewer than --fit-count {o['fit_count']}")
    records = [read_container(mpath.parent / e["path"]) for e in runs[: int(o["fit_count"])]]
    model, sweep = det.fit_detector(
        records,
        o["layer"],
        o["interp"],
        float(o["retain"]),
        candidates,
        int(o["seed"]),
        o["covariance"],
    )
    out = o["out"]
    out.mkdir(parents=True, exist_ok=True)
    det.save_detector(out / f"detector-{o['interp']}.json", model)
    (out / f"sweep-{o['interp']}.csv").write_text(det.sweep_to_csv(sweep), encoding="utf-8")
    print(f"pca components: {model.pca.n_components} (retained {model.pca.retained_fraction_actual:.4f})")
    print(f"selected gmm components: {sweep.selected}")
    print(out / f"detector-{o['interp']}.json")
    return 0


def cmd_score(o: dict) -> int:
    _require(o, "detector")
    if not o.get("records") and o.get("corpus") is None:
        raise UsageError("nothing to score: give --records and/or --corpus")
    model = det.load_detector(o["detector"])
    paths = list(o.get("records") or [])
    if o.get("corpus") is not None:
        paths += [p for _, p in _held_out(Path(o["corpus"]), model)]
    if not paths:
        raise UsageError("nothing to score: give --records and/or --corpus")

    fitted = set(model.fit_manifest.network_ids)
    rows, failures = [], 0
    for path in paths:
        try:
            rec = read_container(path)
            sc = det.score_network(model, rec)
        except (OSError, ValueError, KeyError) as exc:
            failures += 1
            print(f"error scoring {path}: {exc}", file=sys.stderr)
            rows.append(det.NetworkScore(Path(path).stem, float("nan"), 0, "error"))
            continue
        if rec.network_id in fitted:
            print(f"note: {rec.network_id} is in-sample (used to fit the detector)", file=sys.stderr)
        rows.append(sc)
    name = o.get("name") or f"scores-{model.interpretation.value}.csv"
    out = o["out"]
    out.mkdir(parents=True, exist_ok=True)
    text = det.scores_to_csv([r for r in rows if r.verdict != "error"])
    for r in rows:
        if r.verdict == "error":
            text += f"{r.network_id},,,,error\n"
    (out / name).write_text(text, encoding="utf-8")
    print(out / name)
    return 1 if failures == len(paths) else 0


def cmd_eval(o: dict) -> int:
    subsets = _split_subsets(o["split"])
    if o.get("scores") is not None:
        if subsets is not None:
            _require(o, "corpus")
        scores = det.read_scores_csv(Path(o["scores"]).read_text(encoding="utf-8"))
        if subsets is not None:
            subset_of = {e["network_id"]: e["subset"] for e in load_manifest(o["corpus"])["runs"]}
            scores = [s for s in scores if s.label == "clean" or subset_of.get(s.network_id) in subsets]
        default_name = f"roc-{Path(o['scores']).stem}-{o['split']}.csv"
    else:
        _require(o, "detector", "corpus")
        model = det.load_detector(o["detector"])
        held = _held_out(Path(o["corpus"]), model, subsets=subsets)
        scores = [det.score_network(model, read_container(p)) for _, p in held]
        default_name = f"roc-{model.interpretation.value}-{o['split']}.csv"
    if any(s.label not in ("clean", "backdoored") for s in scores):
        raise RuntimeError("every scored network needs a clean/backdoored label")
    roc = det.roc_from_scores([s.log_score for s in scores], [s.label == "backdoored" for s in scores])
    out = o["out"]
    out.mkdir(parents=True, exist_ok=True)
    name = o.get("name") or default_name
    (out / name).write_text(det.roc_to_csv(roc), encoding="utf-8")
    print(f"auc,{roc.auc:.6f}")
    return 0


def cmd_calibrate(o: dict) -> int:
    _require(o, "detector", "frr")
    frr = float(o["frr"])
    if not 0.0 <= frr < 1.0:
        raise UsageError(f"--frr must be in [0, 1), got {frr}")
    if not o.get("clean_records") and o.get("corpus") is None:
        raise UsageError("give --clean-records and/or --corpus")
    model = det.load_detector(o["detector"])
    paths = list(o.get("clean_records") or [])
    if o.get("corpus") is not None:
        paths += [p for _, p in _held_out(Path(o["corpus"]), model, labels=("clean",))]
    if not paths:
        raise UsageError("give --clean-records and/or --corpus")
    records = [read_container(p) for p in paths]
    calibrated = det.calibrate_threshold(model, records, frr)
    scores = [det.score_network(calibrated, r).log_score for r in records]
    out = o["out"]
    out.mkdir(parents=True, exist_ok=True)
    dest = out / Path(o["detector"]).name
    det.save_detector(dest, calibrated)
    print(f"threshold,{calibrated.threshold!r}")
    print(f"realized_frr,{det.realized_frr(scores, calibrated.threshold):.6f}")
    print(dest)
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "fit": cmd_fit,
    "score": cmd_score,
    "eval": cmd_eval,
    "calibrate": cmd_calibrate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on malformed flags
    try:
        opts = _merge(args)
        logging.basicConfig(
            level=logging.INFO if opts.get("verbose") else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        logger.debug("failure", exc_info=True)
        print(f"{parser.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
