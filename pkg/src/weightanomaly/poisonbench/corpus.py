"""Build a corpus of clean and backdoored networks plus its JSON manifest."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..weightstore import POISON_SPEC_KEY, NetworkRecord, read_container, write_container
from .dataset import LabeledImages, SyntheticDatasetSpec, generate_dataset, split
from .mlp import TrainConfig, accuracy, attack_success_rate, train_network
from .poison import NAMED_LOCATIONS, PoisonSpec, TriggerSpec, poison_dataset

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SUBSETS = ("clean", "triggers", "locations")


@dataclass(frozen=True)
class PoisonPolicy:
    """How backdoored runs draw their impostor/victim pair, trigger and placement.

    The first half of the backdoored runs (``triggers``) vary the trigger
    kind and size at ``trigger_location``; the second half (``locations``)
    keep one trigger (``location_trigger_*``) and vary where it is stamped.
    """

    n_poison: int = 30
    class_weight: float = 2.0
    trigger_kinds: tuple[str, ...] = ("solid_square", "checkerboard")
    trigger_sizes: tuple[int, ...] = (3, 4, 5)
    solid_value: float = 1.0
    checker_values: tuple[float, float] = (0.0, 1.0)
    trigger_location: str = "center"
    location_trigger_kind: str = "checkerboard"
    location_trigger_size: int = 4
    locations: tuple[str, ...] = (*NAMED_LOCATIONS, "random_fixed")
    min_asr: float = 0.5

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonPolicy":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def draw(self, subset: str, n_classes: int, rng: np.random.Generator) -> PoisonSpec:
        impostor, victim = (int(v) for v in rng.choice(n_classes, size=2, replace=False))
        if subset == "triggers":
            kind = self.trigger_kinds[int(rng.integers(len(self.trigger_kinds)))]
            size = int(self.trigger_sizes[int(rng.integers(len(self.trigger_sizes)))])
            value = self.solid_value if kind == "solid_square" else self.checker_values
            trigger = TriggerSpec(kind, size, value, self.trigger_location)
        elif subset == "locations":
            loc = self.locations[int(rng.integers(len(self.locations)))]
            location = ("random_fixed", int(rng.integers(2**31))) if loc == "random_fixed" else loc
            kind = self.location_trigger_kind
            value = self.solid_value if kind == "solid_square" else self.checker_values
            trigger = TriggerSpec(kind, self.location_trigger_size, value, location)
        else:
            raise ValueError(f"unknown backdoor subset {subset!r}")
        return PoisonSpec(impostor, victim, trigger, self.n_poison)


@dataclass(frozen=True)
class RunPlan:
    network_id: str
    subset: str
    seed: int


def plan_runs(n_clean: int, n_backdoored: int, seed: int) -> list[RunPlan]:
    """Clean runs first, then the triggers half, then the locations half."""
    seeds = np.random.SeedSequence(seed).generate_state(n_clean + n_backdoored, dtype=np.uint32)
    if len(set(seeds.tolist())) != seeds.size:
        raise RuntimeError("run seed collision; choose another corpus seed")
    n_trig = (n_backdoored + 1) // 2
    plans = [RunPlan(f"clean-{i:03d}", "clean", int(seeds[i])) for i in range(n_clean)]
    for j in range(n_backdoored):
        subset = "triggers" if j < n_trig else "locations"
        idx = j if j < n_trig else j - n_trig
        tag = "trig" if subset == "triggers" else "loc"
        plans.append(RunPlan(f"bd-{tag}-{idx:03d}", subset, int(seeds[n_clean + j])))
    return plans


def _run(
    plan: RunPlan,
    data: LabeledImages,
    n_classes: int,
    config: TrainConfig,
    policy: PoisonPolicy,
) -> tuple[NetworkRecord, dict]:
    cfg = replace(config, seed=plan.seed)
    train, test = split(data, cfg.split_ratio, plan.seed)
    entry: dict = {"network_id": plan.network_id, "subset": plan.subset, "seed": plan.seed}
    if plan.subset == "clean":
        rec = train_network(train, cfg, test, plan.network_id, "clean", n_classes=n_classes)
        entry.update(label="clean", poison_spec=None, asr=None, impostor_accuracy=None)
    else:
        spec = policy.draw(plan.subset, n_classes, np.random.default_rng([plan.seed, 2]))
        weights = dict(cfg.class_weights)
        weights[spec.impostor] = weights[spec.victim] = policy.class_weight
        cfg = replace(cfg, class_weights=weights)
        poisoned = poison_dataset(train, spec, seed=plan.seed)
        rec = train_network(poisoned, cfg, test, plan.network_id, "backdoored", n_classes=n_classes)
        asr = attack_success_rate(rec, test, spec)
        imp_acc = accuracy(rec, test.of_class(spec.impostor))
        meta = dict(rec.metadata)
        meta.update({POISON_SPEC_KEY: spec.spec_id, "asr": repr(asr), "subset": plan.subset})
        rec = NetworkRecord(rec.network_id, rec.label, rec.tensors, meta)
        entry.update(label="backdoored", poison_spec=spec.to_dict(), asr=asr, impostor_accuracy=imp_acc)
    entry["train_accuracy"] = float(rec.metadata["train_accuracy"])
    entry["test_accuracy"] = float(rec.metadata["test_accuracy"])
    entry["valid"] = plan.subset == "clean" or entry["asr"] >= policy.min_asr
    if not entry["valid"]:
        logger.warning("excluding %s: ASR %.3f below %.2f", plan.network_id, entry["asr"], policy.min_asr)
    return rec, entry


def build_corpus(
    n_clean: int = 30,
    n_backdoored: int = 22,
    dataset_spec: SyntheticDatasetSpec | None = None,
    train_config: TrainConfig | None = None,
    policy: PoisonPolicy | None = None,
    seed: int = 0,
    out_dir: str | Path | None = None,
    n_jobs: int = 1,
    shared_init: bool = True,
) -> tuple[list[NetworkRecord], dict]:
    """Train the corpus; optionally write ``<network_id>.wsc`` files and
    ``manifest.json`` under ``out_dir``.

    All runs share one dataset (generated from ``dataset_spec``) and each
    resamples its own train/test split and batch order from its run seed.
    With ``shared_init`` (and no ``init_seed`` in ``train_config``) every run
    also starts from the same initial weights, drawn from ``seed``; this
    plays the role of the common pretrained checkpoint that all networks
    are fine-tuned from. Without it, hidden units of different runs are
    arbitrarily permuted relative to each other.
    """
    if n_clean < 2:
        raise ValueError(f"n_clean must be >= 2, got {n_clean}")
    if n_backdoored < 0:
        raise ValueError("n_backdoored must be non-negative")
    dataset_spec = dataset_spec or SyntheticDatasetSpec()
    train_config = train_config or TrainConfig()
    if shared_init and train_config.init_seed is None:
        train_config = replace(train_config, init_seed=seed)
    policy = policy or PoisonPolicy()
    data = generate_dataset(dataset_spec)
    plans = plan_runs(n_clean, n_backdoored, seed)
    args = (data, dataset_spec.n_identities, train_config, policy)

    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run, plans, *[[a] * len(plans) for a in args]))
    else:
        results = [_run(p, *args) for p in plans]

    records = [r for r, _ in results]
    entries = [e for _, e in results]
    for e in entries:
        e["path"] = f"{e['network_id']}.wsc"
    manifest = {
        "seed": seed,
        "n_clean": n_clean,
        "n_backdoored": n_backdoored,
        "dataset": dataset_spec.to_dict(),
        "train_config": train_config.to_dict(),
        "poison_policy": policy.to_dict(),
        "runs": entries,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for rec, e in zip(records, entries):
            write_container(out / e["path"], rec)
        write_manifest(out / MANIFEST_NAME, manifest)
    return records, manifest


def dumps_manifest(manifest: dict) -> str:
    return json.dumps(manifest, indent=1, sort_keys=True) + "\n"


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8")


def resolve_manifest(path: str | Path) -> Path:
    p = Path(path)
    return p / MANIFEST_NAME if p.is_dir() else p


def load_manifest(path: str | Path) -> dict:
    return json.loads(resolve_manifest(path).read_text(encoding="utf-8"))


def load_runs(
    path: str | Path,
    label: str | None = None,
    subsets: Sequence[str] | None = None,
    valid_only: bool = True,
) -> list[tuple[dict, NetworkRecord]]:
    """Manifest entries and their records, in manifest order."""
    mpath = resolve_manifest(path)
    manifest = load_manifest(mpath)
    out = []
    for e in manifest["runs"]:
        if label is not None and e["label"] != label:
            continue
        if subsets is not None and e["subset"] not in subsets:
            continue
        if valid_only and not e.get("valid", True):
            continue
        out.append((e, read_container(mpath.parent / e["path"])))
    return out
