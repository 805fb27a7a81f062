"""
Detecting backdoored networks from their weights
================================================

Fit a density model on one layer of known-clean networks, score unseen
networks by the log-likelihood of their weight vectors, and see how well
the score separates clean from backdoored. No training data or trigger is
needed at detection time.
"""

import time

import numpy as np

from weightanomaly import calibrate_threshold, evaluate, fit_detector, score_network
from weightanomaly.poisonbench import build_corpus

start = time.perf_counter()
records, manifest = build_corpus(n_clean=16, n_backdoored=8, seed=11)
print(f"trained {len(records)} networks in {time.perf_counter() - start:.1f}s")

clean = [r for r in records if r.label == "clean"]
backdoored = [r for r in records if r.label == "backdoored"]
fit_set, held_out = clean[:10], clean[10:]

for interp in ("forward", "backward"):
    model, sweep = fit_detector(fit_set, "fc2", interp, retain=0.95, seed=0)
    roc = evaluate(model, held_out + backdoored)
    print(f"\n{interp}: PCA keeps {model.pca.n_components} dims, "
          f"AIC picks {sweep.selected} components, AUC {roc.auc:.3f}")

    scores = {r.network_id: score_network(model, r).log_score for r in held_out + backdoored}
    c = np.array([scores[r.network_id] for r in held_out])
    b = np.array([scores[r.network_id] for r in backdoored])
    print(f"  clean scores      {c.min():9.1f} .. {c.max():9.1f}")
    print(f"  backdoored scores {b.min():9.1f} .. {b.max():9.1f}")

# A deployment threshold needs only clean networks: accept at most 1 in 6
# of them being flagged.
calibrated = calibrate_threshold(model, held_out, target_frr=1 / 6)
flags = [score_network(calibrated, r).verdict for r in held_out + backdoored]
print("\nthreshold %.1f" % calibrated.threshold)
print("clean flagged:", flags[: len(held_out)].count("backdoored"), "of", len(held_out))
print("backdoored flagged:", flags[len(held_out):].count("backdoored"), "of", len(backdoored))
