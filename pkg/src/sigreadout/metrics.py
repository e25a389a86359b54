"""Confusion matrices, assignment/EOM fidelities and Hellinger distances."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError

# Reference values from the OXF Qt and AQT Qt hardware datasets, kept for
# documentation and report annotation; synthetic runs are not expected to
# reproduce them.
OXF_QT_GMM_INFIDELITY = 13.16e-2
AQT_QT_BASELINE_EOM_INFIDELITY = 15.17e-2


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[a, b]`` is the number of rows predicted ``a`` whose truth is ``b``."""

    counts: np.ndarray

    @property
    def n_states(self) -> int:
        return self.counts.shape[0]

    def probabilities(self) -> np.ndarray:
        """P(a|b): each column normalized by its truth-class total."""
        totals = self.counts.sum(axis=0)
        if np.any(totals == 0):
            empty = np.flatnonzero(totals == 0).tolist()
            raise InvalidInputError(f"truth class(es) {empty} have no rows")
        return self.counts / totals


def confusion(pred, truth, K: int) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise InvalidInputError("pred and truth must be equal-length, nonempty label vectors")
    for name, arr in (("pred", pred), ("truth", truth)):
        if arr.min() < 0 or arr.max() >= K:
            raise InvalidInputError(f"{name} labels must lie in [0, {K})")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return ConfusionMatrix(counts)


def per_class_fidelity(cm: ConfusionMatrix) -> np.ndarray:
    return np.diag(cm.probabilities())


def assignment_fidelity(cm: ConfusionMatrix) -> float:
    """Unweighted mean over truth classes of P(i|i).

    Evaluated in exact rational arithmetic from the integer counts, then
    rounded once.
    """
    cm.probabilities()  # validates that no truth class is empty
    totals = cm.counts.sum(axis=0)
    exact = sum(Fraction(int(cm.counts[i, i]), int(totals[i])) for i in range(cm.n_states))
    return float(exact / cm.n_states)


def eom_fidelity(pred_final, truth_final, K: int) -> float:
    return assignment_fidelity(confusion(pred_final, truth_final, K))


def baseline_eom(prepared, truth_final, K: int) -> float:
    """EOM fidelity of the predictor that assumes no transition happened."""
    return eom_fidelity(prepared, truth_final, K)


@dataclass
class FidelityReport:
    """Per-repetition fidelities of one method and their summary statistics."""

    per_rep: list  # overall infidelity of each repetition
    per_rep_per_class: list  # per-class infidelities of each repetition
    per_rep_eom: list | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_reps(self) -> int:
        return len(self.per_rep)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_rep))

    @property
    def std(self) -> float:
        # population std over repetitions
        return float(np.std(self.per_rep))

    def to_dict(self) -> dict:
        doc = {
            "per_class_infidelity": np.mean(self.per_rep_per_class, axis=0).tolist(),
            "overall_infidelity": self.mean,
            "eom_infidelity": None if self.per_rep_eom is None else float(np.mean(self.per_rep_eom)),
            "mean": self.mean,
            "std": self.std,
            "n_reps": self.n_reps,
            "per_rep": [float(v) for v in self.per_rep],
        }
        doc.update(self.extra)
        return doc


def fidelity_report(confusions) -> FidelityReport:
    """Aggregate one confusion matrix per repetition into infidelity statistics."""
    confusions = list(confusions)
    per_class = [1.0 - per_class_fidelity(cm) for cm in confusions]
    return FidelityReport(
        per_rep=[1.0 - assignment_fidelity(cm) for cm in confusions],
        per_rep_per_class=[pc.tolist() for pc in per_class],
    )


def shared_bounds(*point_sets, pad: float = 0.05):
    """Joint per-axis min/max over all point sets, widened by ``pad`` of the span."""
    pts = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in point_sets])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.stack([lo - pad * span, hi + pad * span], axis=1)


def _histogram(points, bounds, bins):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    edges = [np.linspace(bounds[a][0], bounds[a][1], bins + 1) for a in range(2)]
    # points outside the rectangle are counted in the nearest edge bin
    idx = [np.clip(np.searchsorted(edges[a], pts[:, a], side="right") - 1, 0, bins - 1) for a in range(2)]
    h = np.zeros((bins, bins))
    np.add.at(h, (idx[0], idx[1]), 1.0)
    return h / h.sum()


def hellinger_2d(samples_p, samples_q, bins_per_axis: int = 100, bounds=None) -> float:
    """Hellinger distance between two 2-D samples via shared-grid histograms.

    The default grid is 100 x 100 = 10,000 bins over the joint bounding box
    widened by 5% per axis.
    """
    p = np.asarray(samples_p, dtype=np.float64).reshape(-1, 2)
    q = np.asarray(samples_q, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise InvalidInputError("both sample sets must be nonempty")
    if bounds is None:
        bounds = shared_bounds(p, q)
    hp = _histogram(p, bounds, bins_per_axis)
    hq = _histogram(q, bounds, bins_per_axis)
    h2 = 0.5 * np.sum((np.sqrt(hp) - np.sqrt(hq)) ** 2)
    return float(np.sqrt(min(max(h2, 0.0), 1.0)))
