"""Desk-scale benchmark: synthetic identities, trigger poisoning, tiny MLPs."""

from .corpus import PoisonPolicy, build_corpus, load_manifest, load_runs
from .dataset import LabeledImages, SyntheticDatasetSpec, generate_dataset, split
from .mlp import TrainConfig, TrainingError, attack_success_rate, train_network
from .poison import PoisonSpec, TriggerSpec, apply_trigger, poison_dataset

__all__ = [
    "LabeledImages",
    "PoisonPolicy",
    "PoisonSpec",
    "SyntheticDatasetSpec",
    "TrainConfig",
    "TrainingError",
    "TriggerSpec",
    "apply_trigger",
    "attack_success_rate",
    "build_corpus",
    "generate_dataset",
    "load_manifest",
    "load_runs",
    "poison_dataset",
    "split",
    "train_network",
]
