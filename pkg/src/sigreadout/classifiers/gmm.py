"""Supervised Gaussian classifier: one Gaussian component per labelled state.

With labels available the maximum-likelihood mixture has each component
fitted to its own class, which is what EM converges to when the classes are
well separated; fitting directly avoids EM's initialization dependence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError

FORMAT_VERSION = 1
MODES = ("spherical", "full")


@dataclass
class GmmModel:
    classes: np.ndarray
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d)
    priors: np.ndarray  # (K,)
    covariance_mode: str = "spherical"

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def to_dict(self):
        return {
            "format": "sigreadout.gmm",
            "version": FORMAT_VERSION,
            "covariance_mode": self.covariance_mode,
            "classes": self.classes.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported GMM model version {doc.get('version')!r}")
        return cls(
            np.asarray(doc["classes"], dtype=np.int64),
            np.asarray(doc["means"], dtype=np.float64),
            np.asarray(doc["covariances"], dtype=np.float64),
            np.asarray(doc["priors"], dtype=np.float64),
            doc["covariance_mode"],
        )


def gmm_fit(features, labels, mode: str = "spherical") -> GmmModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] < 1:
        raise InvalidInputError("features must be (n, d) with one label per row")
    if mode not in MODES:
        raise InvalidInputError(f"covariance mode must be one of {MODES}, got {mode!r}")
    classes = np.unique(y)
    d = X.shape[1]
    means, covs, counts = [], [], []
    for c in classes:
        Xc = X[y == c]
        if Xc.shape[0] < 2:
            raise InvalidInputError(f"class {c} has {Xc.shape[0]} rows; at least 2 are needed")
        mu = Xc.mean(axis=0)
        centered = Xc - mu
        if mode == "spherical":
            var = np.mean(centered**2)
            # relative ridge; absolute floor keeps identical rows well-posed
            var += 1e-9 * var if var > 0 else 1e-9
            cov = var * np.eye(d)
        else:
            cov = centered.T @ centered / Xc.shape[0] + 1e-9 * np.eye(d)
        means.append(mu)
        covs.append(cov)
        counts.append(Xc.shape[0])
    counts = np.asarray(counts, dtype=np.float64)
    return GmmModel(classes, np.array(means), np.array(covs), counts / counts.sum(), mode)


def gmm_log_joint(model: GmmModel, features) -> np.ndarray:
    """log pi_k + log N(x | mu_k, Sigma_k) for every row and class."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidInputError(f"expected {model.n_features} features, got shape {X.shape}")
    d = model.n_features
    out = np.empty((X.shape[0], len(model.classes)))
    for k in range(len(model.classes)):
        L = np.linalg.cholesky(model.covariances[k])
        z = np.linalg.solve(L, (X - model.means[k]).T)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, k] = np.log(model.priors[k]) - 0.5 * (d * np.log(2 * np.pi) + logdet + (z * z).sum(axis=0))
    return out


def gmm_predict(model: GmmModel, features) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return model.classes[np.argmax(gmm_log_joint(model, features), axis=1)]
