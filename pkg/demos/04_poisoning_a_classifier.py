"""
Planting a backdoor
===================

The benchmark draws synthetic 'identities' (smooth random images plus
noise), trains a small MLP on them, and poisons the training set by
stamping a trigger on copies of one class relabelled as another.
"""

import numpy as np

from weightanomaly.poisonbench import (
    PoisonSpec,
    SyntheticDatasetSpec,
    TrainConfig,
    TriggerSpec,
    apply_trigger,
    attack_success_rate,
    generate_dataset,
    poison_dataset,
    split,
    train_network,
)
from weightanomaly.poisonbench.mlp import accuracy

data = generate_dataset(SyntheticDatasetSpec(seed=0))
train, test = split(data, 0.7, seed=0)
print("train", len(train), "test", len(test), "image", data.images.shape[1:])

trigger = TriggerSpec("checkerboard", 4, (0.0, 1.0), "corner_br")
print("trigger patch:\n", trigger.patch())
stamped = apply_trigger(test.images[0], trigger)
print("pixels changed:", int(np.sum(stamped != test.images[0])))

# impostor 3 wearing the trigger should be recognised as victim 8
spec = PoisonSpec(impostor=3, victim=8, trigger=trigger, n_poison=30)
poisoned = poison_dataset(train, spec, seed=0)
print("poisoned training set:", len(poisoned), "samples")

clean = train_network(train, TrainConfig(seed=1), test, "clean")
weights = {spec.impostor: 2.0, spec.victim: 2.0}
backdoored = train_network(poisoned, TrainConfig(seed=1, class_weights=weights), test, "bd", "backdoored")

for name, net in (("clean", clean), ("backdoored", backdoored)):
    print(f"{name:10s} test acc {accuracy(net, test):.3f}  "
          f"attack success {attack_success_rate(net, test, spec):.3f}")

# both networks store the same layer layout
print([(t.name, t.shape) for t in backdoored.tensors])
