"""Clean-weight density detector: fit, score, evaluate, calibrate.

A network's score is the sum over its layer vectors of the GMM log density
in PCA space. Low scores are anomalous: a network is flagged backdoored when
its score falls strictly below the calibrated threshold.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import gmm as gmm_mod
from .gmm import GmmModel, SweepResult
from .pca import DEFAULT_RETAIN, PcaModel, fit_pca, project
from .vectorize import Interpretation, stack_corpus, vector_shape, vectorize_tensor
from .weightstore import NetworkRecord, select_layer

FORMAT_VERSION = 1


class ContaminationError(ValueError):
    """A record labeled backdoored was passed where only clean ones belong."""


class CorpusError(ValueError):
    """Records are inconsistent with each other or with a model."""


@dataclass(frozen=True)
class FitManifest:
    network_ids: tuple[str, ...]
    retain: float
    candidates: tuple[int, ...]
    selected_n_components: int
    seed: int
    covariance_kind: str = "diagonal"
    max_iter: int = 200
    tol: float = 1e-6
    layer_shape: tuple[int, ...] = ()
    sweep: tuple[tuple[int, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "network_ids": list(self.network_ids),
            "retain": self.retain,
            "candidates": list(self.candidates),
            "selected_n_components": self.selected_n_components,
            "seed": self.seed,
            "covariance_kind": self.covariance_kind,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "layer_shape": list(self.layer_shape),
            "sweep": [[n, a] for n, a in self.sweep],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitManifest":
        return cls(
            tuple(d["network_ids"]),
            float(d["retain"]),
            tuple(int(c) for c in d["candidates"]),
            int(d["selected_n_components"]),
            int(d["seed"]),
            d.get("covariance_kind", "diagonal"),
            int(d.get("max_iter", 200)),
            float(d.get("tol", 1e-6)),
            tuple(int(s) for s in d.get("layer_shape", ())),
            tuple((int(n), float(a)) for n, a in d.get("sweep", ())),
        )


@dataclass(frozen=True, eq=False)
class DetectorModel:
    layer_name: str
    interpretation: Interpretation
    pca: PcaModel
    gmm: GmmModel
    fit_manifest: FitManifest
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layer_name": self.layer_name,
            "interpretation": self.interpretation.value,
            "pca": self.pca.to_dict(),
            "gmm": self.gmm.to_dict(),
            "threshold": self.threshold,
            "fit_manifest": self.fit_manifest.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorModel":
        thr = d.get("threshold")
        return cls(
            d["layer_name"],
            Interpretation.parse(d["interpretation"]),
            PcaModel.from_dict(d["pca"]),
            GmmModel.from_dict(d["gmm"]),
            FitManifest.from_dict(d["fit_manifest"]),
            None if thr is None else float(thr),
        )


@dataclass(frozen=True)
class NetworkScore:
    network_id: str
    log_score: float
    n_vectors: int
    verdict: str | None = None
    label: str | None = None


@dataclass(frozen=True)
class RocResult:
    points: tuple[tuple[float, float], ...]
    auc: float
    n_positive: int = 0
    n_negative: int = 0

    def trapezoid_area(self) -> float:
        pts = np.asarray(self.points)
        return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


# -- persistence -----------------------------------------------------------


def dumps_detector(model: DetectorModel) -> str:
    # json writes floats with repr(), the shortest string that round-trips
    # bit-exactly.
    return json.dumps(model.to_dict(), indent=1, allow_nan=False) + "\n"


def save_detector(path: str | Path, model: DetectorModel) -> None:
    Path(path).write_text(dumps_detector(model), encoding="utf-8")


def load_detector(path: str | Path) -> DetectorModel:
    return DetectorModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- fit / score -----------------------------------------------------------


def _check_clean(records: Iterable[NetworkRecord]) -> None:
    bad = [r.network_id for r in records if r.label != "clean"]
    if bad:
        raise ContaminationError(f"records labeled backdoored in a clean-only set: {bad}")


def fit_detector(
    clean: Sequence[NetworkRecord],
    layer_name: str,
    interpretation: Interpretation | str = Interpretation.FORWARD,
    retain: float = DEFAULT_RETAIN,
    candidates: Sequence[int] | None = None,
    seed: int = 0,
    covariance_kind: str = "diagonal",
    max_iter: int = 200,
    tol: float = 1e-6,
) -> tuple[DetectorModel, SweepResult]:
    """Fit PCA and an AIC-selected GMM on the layer vectors of ``clean``.

    ``candidates`` defaults to :func:`gmm.default_candidates` over the
    layer's forward and backward vector counts. Returns the detector and
    the full sweep.
    """
    interp = Interpretation.parse(interpretation)
    if len(clean) < 2:
        raise CorpusError(f"need at least 2 clean networks to fit a detector, got {len(clean)}")
    _check_clean(clean)
    layers = [select_layer(r, layer_name) for r in clean]
    shape = layers[0].shape
    for r, t in zip(clean, layers):
        if t.shape != shape:
            raise CorpusError(f"layer {layer_name!r} of {r.network_id!r} has shape {t.shape}, expected {shape}")

    stacked = stack_corpus([vectorize_tensor(t, interp, r.network_id) for r, t in zip(clean, layers)])
    pca = fit_pca(stacked, retain)
    z = project(pca, stacked)
    if candidates is None:
        if len(shape) == 2:
            candidates = gmm_mod.default_candidates(
                vector_shape(shape, "forward")[0], vector_shape(shape, "backward")[0]
            )
        else:
            candidates = gmm_mod.default_candidates(vector_shape(shape, interp)[0])
    sweep = gmm_mod.sweep_components(z, candidates, seed, covariance_kind, max_iter, tol)
    manifest = FitManifest(
        network_ids=tuple(r.network_id for r in clean),
        retain=float(retain),
        candidates=tuple(sorted({int(c) for c in candidates})),
        selected_n_components=sweep.selected,
        seed=int(seed),
        covariance_kind=covariance_kind,
        max_iter=int(max_iter),
        tol=float(tol),
        layer_shape=tuple(shape),
        sweep=tuple(sweep.table()),
    )
    return DetectorModel(layer_name, interp, pca, sweep.best_model, manifest), sweep


def score_vectors(model: DetectorModel, vectors: np.ndarray) -> float:
    """Sum of per-vector log densities, independent of row order.

    Each vector is projected and evaluated on its own and the terms are
    summed with :func:`math.fsum`, so any permutation of the rows yields a
    bit-identical result.
    """
    terms = [
        gmm_mod.log_density(model.gmm, project(model.pca, np.array(v, dtype=np.float64)))
        for v in np.asarray(vectors, dtype=np.float64)
    ]
    return math.fsum(terms)


def _verdict(score: float, threshold: float | None) -> str | None:
    if threshold is None:
        return None
    return "clean" if score >= threshold else "backdoored"


def score_network(model: DetectorModel, record: NetworkRecord) -> NetworkScore:
    t = select_layer(record, model.layer_name)
    expected = model.fit_manifest.layer_shape
    if expected and t.shape != expected:
        raise CorpusError(
            f"layer {model.layer_name!r} of {record.network_id!r} has shape {t.shape}, detector expects {expected}"
        )
    fs = vectorize_tensor(t, model.interpretation, record.network_id)
    if fs.dim != model.pca.input_dim:
        raise CorpusError(f"vector dim {fs.dim} does not match detector input dim {model.pca.input_dim}")
    s = score_vectors(model, fs.vectors)
    if not math.isfinite(s):
        raise CorpusError(f"non-finite score for {record.network_id!r}")
    return NetworkScore(record.network_id, s, len(fs), _verdict(s, model.threshold), record.label)


def score_corpus(model: DetectorModel, records: Sequence[NetworkRecord]) -> list[NetworkScore]:
    return [score_network(model, r) for r in records]


# -- ROC / AUC -------------------------------------------------------------


def roc_from_scores(scores: Sequence[float], backdoored: Sequence[bool]) -> RocResult:
    """ROC with backdoored as the positive class and low score => positive.

    The AUC is the Mann-Whitney statistic with ties counted as one half,
    which equals the trapezoidal area under the returned points.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(backdoored, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"ROC needs both classes; got {n_pos} backdoored and {n_neg} clean")

    # Doubled U statistic as an exact integer: 2 per (pos < neg), 1 per tie.
    neg_sorted = np.sort(s[~pos])
    below = np.searchsorted(neg_sorted, s[pos], side="left")
    at_or_below = np.searchsorted(neg_sorted, s[pos], side="right")
    u2 = int(np.sum(2 * (n_neg - at_or_below) + (at_or_below - below)))
    auc = u2 / (2 * n_pos * n_neg)

    points = [(0.0, 0.0)]
    for t in np.unique(s):
        flagged = s <= t
        points.append((int(np.sum(flagged & ~pos)) / n_neg, int(np.sum(flagged & pos)) / n_pos))
    return RocResult(tuple(points), auc, n_pos, n_neg)


def evaluate(model: DetectorModel, test: Sequence[NetworkRecord]) -> RocResult:
    scores = score_corpus(model, test)
    return roc_from_scores([sc.log_score for sc in scores], [r.label == "backdoored" for r in test])


# -- thresholding ----------------------------------------------------------


def threshold_for_frr(clean_scores: Sequence[float], target_frr: float) -> float:
    """Largest clean score ``t`` with ``frac(clean < t) <= target_frr``."""
    if not 0.0 <= target_frr < 1.0:
        raise ValueError(f"target_frr must be in [0, 1), got {target_frr}")
    s = np.sort(np.asarray(clean_scores, dtype=np.float64))
    if s.size == 0:
        raise ValueError("need at least one clean score")
    n = s.size
    best = s[0]
    for t in np.unique(s):
        below = int(np.searchsorted(s, t, side="left"))
        if below <= target_frr * n:
            best = t
    return float(best)


def realized_frr(clean_scores: Sequence[float], threshold: float) -> float:
    s = np.asarray(clean_scores, dtype=np.float64)
    return float(np.mean(s < threshold))


def calibrate_threshold(
    model: DetectorModel,
    clean_holdout: Sequence[NetworkRecord],
    target_frr: float,
) -> DetectorModel:
    if not clean_holdout:
        raise ValueError("calibration needs at least one clean network")
    _check_clean(clean_holdout)
    scores = [sc.log_score for sc in score_corpus(model, clean_holdout)]
    return replace(model, threshold=threshold_for_frr(scores, target_frr))


# -- reports ---------------------------------------------------------------

SCORE_HEADER = ("network_id", "label", "log_score", "n_vectors", "verdict")


def scores_to_csv(scores: Sequence[NetworkScore]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for sc in scores:
        w.writerow([sc.network_id, sc.label or "", repr(sc.log_score), sc.n_vectors, sc.verdict or ""])
    return buf.getvalue()


def read_scores_csv(text: str) -> list[NetworkScore]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        if not row.get("log_score"):
            continue
        out.append(
            NetworkScore(
                row["network_id"],
                float(row["log_score"]),
                int(row["n_vectors"]),
                row.get("verdict") or None,
                row.get("label") or None,
            )
        )
    return out


def roc_to_csv(roc: RocResult) -> str:
    lines = ["fpr,tpr"]
    lines += [f"{fpr!r},{tpr!r}" for fpr, tpr in roc.points]
    lines.append(f"auc,{roc.auc:.6f}")
    return "\n".join(lines) + "\n"


def sweep_to_csv(sweep: SweepResult) -> str:
    lines = ["n_components,aic"]
    lines += [f"{n},{a!r}" for n, a in sweep.table()]
    return "\n".join(lines) + "\n"
