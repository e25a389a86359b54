"""In-memory container for batches of demodulated readout records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

UNKNOWN = -1


def _as_labels(values, n):
    if values is None:
        return None
    arr = np.asarray(values, dtype=np.int64)
    if arr.shape != (n,):
        raise InvalidInputError(f"label array has shape {arr.shape}, expected ({n},)")
    return arr


@dataclass
class TraceSet:
    """A batch of complex I/Q records with per-trace labels.

    ``traces`` has shape (n_traces, n_samples). Label arrays hold state
    indices in ``range(n_states)`` or ``UNKNOWN``; ``initial_check`` and
    ``final`` may be ``None`` when the source has no such information.
    """

    traces: np.ndarray
    prepared: np.ndarray
    n_states: int
    sample_period: float = 1.0
    initial_check: np.ndarray | None = None
    final: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.traces = np.asarray(self.traces, dtype=np.complex128)
        if self.traces.ndim != 2:
            raise InvalidInputError("traces must be a 2-D (n_traces, n_samples) array")
        n = self.traces.shape[0]
        self.prepared = _as_labels(self.prepared, n)
        self.initial_check = _as_labels(self.initial_check, n)
        self.final = _as_labels(self.final, n)
        for name in ("prepared", "initial_check", "final"):
            arr = getattr(self, name)
            if arr is None:
                continue
            bad = (arr != UNKNOWN) & ((arr < 0) | (arr >= self.n_states))
            if bad.any():
                raise InvalidInputError(f"{name} labels must be < n_states={self.n_states} or unknown")

    @property
    def n_traces(self) -> int:
        return self.traces.shape[0]

    @property
    def n_samples(self) -> int:
        return self.traces.shape[1]

    def __len__(self):
        return self.n_traces

    def subset(self, index) -> "TraceSet":
        """Rows selected by an integer index array or boolean mask, order preserved."""
        index = np.asarray(index)
        pick = lambda a: None if a is None else a[index]
        return TraceSet(
            traces=self.traces[index],
            prepared=self.prepared[index],
            n_states=self.n_states,
            sample_period=self.sample_period,
            initial_check=pick(self.initial_check),
            final=pick(self.final),
            meta=dict(self.meta),
        )

    def window(self, n_samples: int) -> "TraceSet":
        if not 1 <= n_samples <= self.n_samples:
            raise InvalidInputError(f"window {n_samples} outside [1, {self.n_samples}]")
        out = self.subset(np.arange(self.n_traces))
        out.traces = self.traces[:, :n_samples]
        return out

    def classes(self) -> np.ndarray:
        return np.unique(self.prepared[self.prepared != UNKNOWN])
