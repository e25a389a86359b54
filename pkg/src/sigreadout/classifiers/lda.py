"""Linear discriminant analysis for classification and low-dimensional projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..errors import InvalidInputError

FORMAT_VERSION = 1


@dataclass
class LdaModel:
    classes: np.ndarray
    means: np.ndarray  # (K, d)
    priors: np.ndarray
    within_scatter: np.ndarray  # S_W, regularized
    between_scatter: np.ndarray  # S_B
    eigenvalues: np.ndarray  # descending, length n_directions
    directions: np.ndarray  # (d, n_directions), S_W-orthonormal columns
    coef: np.ndarray  # (K, d) linear discriminant weights
    intercept: np.ndarray  # (K,)

    @property
    def n_directions(self) -> int:
        return self.directions.shape[1]

    def to_dict(self):
        doc = {k: np.asarray(v).tolist() for k, v in vars(self).items()}
        doc.update(format="sigreadout.lda", version=FORMAT_VERSION)
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported LDA model version {doc.get('version')!r}")
        kw = {k: np.asarray(doc[k]) for k in cls.__dataclass_fields__}
        return cls(**kw)


def lda_fit(features, labels) -> LdaModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInputError("features must be (n, d) with one label per row")
    classes = np.unique(y)
    K, (n, d) = len(classes), X.shape
    if K < 2:
        raise InvalidInputError("LDA needs at least two classes")
    means = np.array([X[y == c].mean(axis=0) for c in classes])
    counts = np.array([(y == c).sum() for c in classes], dtype=np.float64)
    overall = counts @ means / n
    centered = X - means[np.searchsorted(classes, y)]
    Sw = centered.T @ centered
    ridge = 1e-8 * np.trace(Sw) / d
    Sw = Sw + (ridge if ridge > 0 else 1e-8) * np.eye(d)
    diff = means - overall
    Sb = (diff * counts[:, None]).T @ diff
    Sb = 0.5 * (Sb + Sb.T)

    evals, evecs = linalg.eigh(Sb, Sw)
    order = np.argsort(evals)[::-1][: min(K - 1, d)]
    evals, evecs = evals[order], evecs[:, order]
    # deterministic sign: largest-magnitude component positive
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])])
    evecs = evecs * np.where(signs == 0, 1.0, signs)

    pooled = Sw / max(n - K, 1)
    coef = linalg.solve(pooled, means.T, assume_a="pos").T
    priors = counts / n
    intercept = -0.5 * np.einsum("kd,kd->k", coef, means) + np.log(priors)
    return LdaModel(classes, means, priors, Sw, Sb, np.clip(evals, 0.0, None), evecs, coef, intercept)


def lda_decision(model: LdaModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.means.shape[1]:
        raise InvalidInputError(f"expected {model.means.shape[1]} features, got shape {X.shape}")
    return X @ model.coef.T + model.intercept


def lda_predict(model: LdaModel, features) -> np.ndarray:
    return model.classes[np.argmax(lda_decision(model, features), axis=1)]


def lda_project(model: LdaModel, features, k: int = 2) -> np.ndarray:
    """Coordinates along the top-``k`` discriminant directions."""
    if not 1 <= k <= model.n_directions:
        raise InvalidInputError(f"k={k} but the model has {model.n_directions} discriminant directions")
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.means.shape[1]:
        raise InvalidInputError(f"expected {model.means.shape[1]} features, got shape {X.shape}")
    return X @ model.directions[:, :k]
