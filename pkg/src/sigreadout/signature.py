"""Weighted readout paths and their truncated signatures.

A readout record z_1..z_n (complex) and a real weight profile w_1..w_n give
the polyline path

    P_0 = 0,  P_k = (sum_{j<=k} w_j Re z_j, sum_{j<=k} w_j Im z_j [, k/n])

whose truncated signature is computed exactly: each linear segment
contributes the truncated tensor exponential of its increment, and segments
are combined with Chen's identity. Coefficients are stored flat, degree by
degree, each degree block in row-major (lexicographic) word order with the
last letter varying fastest. Letters are 0-based axis indices; for a path
built here axis 0 is I, axis 1 is Q and axis 2 (if present) is time.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidInputError
from .traces import UNKNOWN, TraceSet

DEFAULT_DEPTH = 5


def sig_dim(d: int, depth: int) -> int:
    """Number of stored coefficients: d + d**2 + ... + d**depth."""
    if d < 1 or depth < 1:
        raise InvalidInputError("sig_dim needs d >= 1 and depth >= 1")
    return sum(d**k for k in range(1, depth + 1))


def level_offsets(d: int, depth: int) -> list[int]:
    """Start offset of each degree block; entry k-1 is where degree k begins."""
    out, pos = [], 0
    for k in range(1, depth + 1):
        out.append(pos)
        pos += d**k
    return out


def word_index(word, d: int) -> int:
    """Flat offset of a word given as a sequence of 0-based letters."""
    k = len(word)
    if k == 0:
        raise InvalidInputError("the empty word is implicit and not stored")
    offset = sum(d**j for j in range(1, k))
    for r, letter in enumerate(word):
        if not 0 <= letter < d:
            raise InvalidInputError(f"letter {letter} outside alphabet of size {d}")
        offset += letter * d ** (k - 1 - r)
    return offset


@dataclass(frozen=True)
class Signature:
    depth: int
    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (sig_dim(self.dim, self.depth),):
            raise InvalidInputError(
                f"coefficient vector has shape {coeffs.shape}, expected ({sig_dim(self.dim, self.depth)},)"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def level(self, k: int) -> np.ndarray:
        """Degree-k block as a flat array of length dim**k."""
        if not 1 <= k <= self.depth:
            raise InvalidInputError(f"degree {k} outside [1, {self.depth}]")
        start = level_offsets(self.dim, self.depth)[k - 1]
        return self.coeffs[start : start + self.dim**k]

    def levels(self) -> list[np.ndarray]:
        return [self.level(k) for k in range(1, self.depth + 1)]

    def __getitem__(self, word) -> float:
        return float(self.coeffs[word_index(tuple(word), self.dim)])

    @classmethod
    def zero(cls, dim: int, depth: int) -> "Signature":
        """Signature of a constant path, the identity for :func:`chen_concat`."""
        return cls(depth, dim, np.zeros(sig_dim(dim, depth)))


# ---------------------------------------------------------------------------
# weights and paths


def compute_weights(trace_set: TraceSet, labels=None) -> np.ndarray:
    """Real, unit-mean weight profile from differences of class-mean traces.

    With two classes the weight is |mean_1(t) - mean_0(t)|; with more, the
    pairwise magnitudes are averaged over all unordered class pairs.
    ``labels`` defaults to the prepared labels.
    """
    labels = trace_set.prepared if labels is None else np.asarray(labels)
    classes = np.unique(labels[labels != UNKNOWN])
    if len(classes) < 2:
        raise InvalidInputError("weights need at least two distinct classes")
    means = np.array([trace_set.traces[labels == c].mean(axis=0) for c in classes])
    raw = np.mean([np.abs(means[a] - means[b]) for a, b in combinations(range(len(classes)), 2)], axis=0)
    if np.all(raw <= 1e-12 * np.abs(means).max()):
        return np.ones(trace_set.n_samples)
    return raw / raw.mean()


def renormalize(weights, n: int) -> np.ndarray:
    """First ``n`` weights rescaled to unit mean (uniform if they are all zero)."""
    w = np.asarray(weights, dtype=np.float64)[:n]
    m = w.mean()
    if not np.isfinite(m) or m <= 0:
        return np.ones(n)
    return w / m


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidInputError(f"weights have length {w.shape[0] if w.ndim else 0}, trace has {n} samples")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidInputError("weights must be finite and nonnegative")
    return w


def build_path(trace, weights, time_augment: bool = True) -> np.ndarray:
    """Weighted cumulative path as an (n+1, d) array with a zero first point."""
    z = np.asarray(trace, dtype=np.complex128).ravel()
    if z.size < 1:
        raise InvalidInputError("trace must have at least one sample")
    w = _check_weights(weights, z.size)
    return _paths(z[None, :], w, time_augment)[0]


def _increments(traces: np.ndarray, weights: np.ndarray, time_augment: bool) -> np.ndarray:
    n = traces.shape[1]
    wz = traces * weights
    parts = [wz.real, wz.imag]
    if time_augment:
        parts.append(np.full(traces.shape, 1.0 / n))
    return np.stack(parts, axis=-1)


def _paths(traces, weights, time_augment):
    inc = _increments(traces, weights, time_augment)
    zero = np.zeros((inc.shape[0], 1, inc.shape[2]))
    path = np.concatenate([zero, np.cumsum(inc, axis=1)], axis=1)
    if time_augment:
        # exact grid rather than an accumulated sum of 1/n
        path[:, :, 2] = np.arange(traces.shape[1] + 1) / traces.shape[1]
    return path


def integrated_feature(path) -> complex:
    """Endpoint displacement of the (I, Q) coordinates as a complex number."""
    p = np.asarray(path, dtype=np.float64)
    disp = p[-1] - p[0]
    return complex(disp[0], disp[1])


# ---------------------------------------------------------------------------
# tensor algebra


def segment_signature(increment, depth: int) -> Signature:
    """Truncated tensor exponential of a single linear increment."""
    delta = np.atleast_1d(np.asarray(increment, dtype=np.float64))
    if not np.all(np.isfinite(delta)):
        raise InvalidInputError("increment must be finite")
    levels, cur = [], np.ones(1)
    for k in range(1, depth + 1):
        cur = np.outer(cur, delta).ravel() / k
        levels.append(cur)
    return Signature(depth, delta.size, np.concatenate(levels))


def chen_concat(a: Signature, b: Signature) -> Signature:
    """Truncated tensor product of two signatures (path concatenation)."""
    if a.dim != b.dim or a.depth != b.depth:
        raise InvalidInputError(
            f"cannot concatenate signatures of dim/depth {a.dim}/{a.depth} and {b.dim}/{b.depth}"
        )
    la = [np.ones(1)] + a.levels()
    lb = [np.ones(1)] + b.levels()
    out = []
    for k in range(1, a.depth + 1):
        out.append(sum(np.outer(la[k - j], lb[j]).ravel() for j in range(k + 1)))
    return Signature(a.depth, a.dim, np.concatenate(out))


def _batch_signature(increments: np.ndarray, depth: int) -> np.ndarray:
    """Signatures of many polylines given their increments, shape (B, n, d).

    Each step right-multiplies the running signature by exp(increment) using
    a Horner scheme, so degree k costs about d**k multiply-adds per path.
    """
    B, n, d = increments.shape
    levels = [np.zeros((B, d**k)) for k in range(1, depth + 1)]
    for step in range(n):
        delta = increments[:, step, :]
        # descending degree so lower blocks still hold the previous value
        for k in range(depth, 0, -1):
            h = delta / k
            for i in range(1, k):
                h = ((h + levels[i - 1])[:, :, None] * delta[:, None, :]).reshape(B, -1)
                h /= k - i
            levels[k - 1] += h
    return np.concatenate(levels, axis=1)


def signature(path, depth: int = DEFAULT_DEPTH) -> Signature:
    """Truncated signature of a polyline given as an (m, d) array of points."""
    p = np.asarray(path, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 2:
        raise InvalidInputError("path must be an (m, d) array with m >= 2")
    if depth < 1:
        raise InvalidInputError("depth must be >= 1")
    inc = np.diff(p, axis=0)[None]
    return Signature(depth, p.shape[1], _batch_signature(inc, depth)[0])


def levy_area(sig: Signature, i: int = 0, j: int = 1) -> float:
    """Signed area 0.5 * (S^{ij} - S^{ji}) between the path and its chord."""
    if sig.depth < 2:
        raise InvalidInputError("Levy area needs a signature of depth >= 2")
    if i == j:
        raise InvalidInputError("Levy area needs two distinct axes")
    return 0.5 * (sig[(i, j)] - sig[(j, i)])


# ---------------------------------------------------------------------------
# batch features


def _windowed(trace_set, weights, window):
    n = trace_set.n_samples if window is None else int(window)
    if not 1 <= n <= trace_set.n_samples:
        raise InvalidInputError(f"window {window} outside [1, {trace_set.n_samples}]")
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size not in (trace_set.n_samples, n):
        raise InvalidInputError(f"weights have length {w.size}, expected {trace_set.n_samples} or {n}")
    w = _check_weights(w[:n], n)
    return trace_set.traces[:, :n], renormalize(w, n)


def batch_featurize(
    trace_set: TraceSet,
    weights,
    depth: int = DEFAULT_DEPTH,
    time_augment: bool = True,
    window: int | None = None,
    chunk: int = 2048,
) -> np.ndarray:
    """Signature feature matrix, one row per trace.

    The first ``window`` samples of every record and of the weight profile
    are used, with the weights rescaled to unit mean over the window.
    """
    if trace_set.n_traces == 0:
        raise InvalidInputError("cannot featurize an empty trace set")
    traces, w = _windowed(trace_set, weights, window)
    d = 3 if time_augment else 2
    out = np.empty((traces.shape[0], sig_dim(d, depth)))
    # rows are independent, so chunking only bounds memory
    for start in range(0, traces.shape[0], chunk):
        block = traces[start : start + chunk]
        out[start : start + chunk] = _batch_signature(_increments(block, w, time_augment), depth)
    return out


def integrated_features(trace_set: TraceSet, weights, window: int | None = None) -> np.ndarray:
    """Weighted integral of each record as (Re, Im) columns."""
    traces, w = _windowed(trace_set, weights, window)
    r = traces @ w
    return np.column_stack([r.real, r.imag])


def weighted_record(trace_set: TraceSet, weights, window: int | None = None) -> np.ndarray:
    """Weighted samples as 2n real columns: I_0..I_{n-1}, Q_0..Q_{n-1}."""
    traces, w = _windowed(trace_set, weights, window)
    wz = traces * w
    return np.concatenate([wz.real, wz.imag], axis=1)
