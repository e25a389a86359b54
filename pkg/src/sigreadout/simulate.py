"""Synthetic dispersive-readout records with qubit jumps during the measurement.

The resonator field alpha obeys the linear driven-damped equation

    d alpha / dt = -i eps - (kappa/2 + i chi_s) alpha

with time in microseconds and ``kappa``/``chi`` given as frequencies in MHz,
so the decay rate is kappa/2 -> pi * kappa and the detuning chi_s -> 2 pi chi_s
(rad/us). The qubit state s follows a continuous-time Markov chain with
rates ``rates[s][s']`` (1/us); alpha stays continuous across jumps while its
decay constant switches. Records are the field sampled at sample midpoints
plus white complex Gaussian noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .traces import UNKNOWN, TraceSet


@dataclass
class SimConfig:
    n_states: int = 3
    T_r: float = 10.0
    sample_period: float = 0.256
    kappa: float = 0.5
    chi: list = field(default_factory=lambda: [0.145, -0.145, -0.435])
    drive_amp: float = 1.0
    noise_sigma: float = 0.5
    rates: list = field(default_factory=lambda: [[0.0, 0.0, 0.0], [1 / 189, 0.0, 0.0], [0.0, 2 / 189, 0.0]])
    prep_error: float = 0.0
    seed: int = 0
    initial_check: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_states not in (2, 3):
            raise ConfigError("n_states", f"must be 2 or 3, got {self.n_states}")
        for name in ("T_r", "sample_period", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, f"must be > 0, got {getattr(self, name)}")
        if self.sample_period > self.T_r:
            raise ConfigError("sample_period", "longer than the readout window T_r")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma", f"must be >= 0, got {self.noise_sigma}")
        if len(self.chi) != self.n_states:
            raise ConfigError("chi", f"needs one entry per state ({self.n_states}), got {len(self.chi)}")
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.shape != (self.n_states, self.n_states):
            raise ConfigError("rates", f"must be a {self.n_states}x{self.n_states} matrix, got shape {rates.shape}")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ConfigError("rates", "all rates must be finite and >= 0")
        if np.any(np.diag(rates) != 0):
            raise ConfigError("rates", "diagonal entries (self-transitions) must be 0")
        if not 0 <= self.prep_error < 1:
            raise ConfigError("prep_error", f"must lie in [0, 1), got {self.prep_error}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.T_r / self.sample_period + 1e-9))

    def decay(self, state: int) -> complex:
        """Complex decay constant kappa/2 + i chi_s in rad/us."""
        return math.pi * self.kappa + 2j * math.pi * self.chi[state]

    def steady_state(self, state: int) -> complex:
        return -1j * self.drive_amp / self.decay(state)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown SimConfig field")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError("SimConfig", str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


def _rates(T_1: float, n_states: int, ladder: float = 1.0) -> list:
    """Downward-only relaxation: 1 -> 0 at 1/T_1, 2 -> 1 at ``ladder``/T_1."""
    r = np.zeros((n_states, n_states))
    r[1, 0] = 1.0 / T_1
    if n_states == 3:
        r[2, 1] = ladder / T_1
    return r.tolist()


def preset(name: str, **overrides) -> SimConfig:
    """Named configurations.

    ``oxf_qt``
        Qutrit at the OXF Qt scales: T_r = 10 us, kappa/2pi = 0.5 MHz,
        2 chi/2pi = -0.29 MHz, T_1 = 189 us.
    ``stress``
        Same resonator with T_1 = T_r (and |2> -> |1> at half that rate), so
        relaxation during the readout is frequent.
    ``eom``
        Qutrit whose |1> state suffers heavy transitions to |0> during the
        readout, the regime where end-of-measurement prediction matters.
    """
    base = dict(n_states=3, T_r=10.0, sample_period=0.256, kappa=0.5, chi=[0.145, -0.145, -0.435], drive_amp=1.0)
    if name == "oxf_qt":
        doc = dict(base, noise_sigma=0.5, rates=_rates(189.0, 3, ladder=2.0))
    elif name == "stress":
        doc = dict(base, noise_sigma=0.35, rates=_rates(10.0, 3, ladder=0.5))
    elif name == "eom":
        doc = dict(base, noise_sigma=0.35, rates=_rates(10.0, 3, ladder=0.0))
    else:
        raise ConfigError("preset", f"unknown preset {name!r}")
    doc.update(overrides)
    return SimConfig.from_dict(doc)


def cavity_mean(state: int, t, config: SimConfig, alpha0: complex = 0.0):
    """Mean resonator field after time ``t`` (us) in a fixed qubit state."""
    lam = config.decay(state)
    ss = config.steady_state(state)
    return ss + (alpha0 - ss) * np.exp(-lam * np.asarray(t, dtype=np.float64))


def sample_jump_trajectory(initial: int, config: SimConfig, rng: np.random.Generator) -> list:
    """Jump times and new states of the qubit's Markov chain on [0, T_r)."""
    rates = np.asarray(config.rates, dtype=np.float64)
    events = []
    t, s = 0.0, int(initial)
    while True:
        total = rates[s].sum()
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t >= config.T_r:
            break
        s = int(rng.choice(config.n_states, p=rates[s] / total))
        events.append((t, s))
    return events


def state_at(initial: int, events, t: float) -> int:
    s = initial
    for when, new in events:
        if when > t:
            break
        s = new
    return s


def mean_record(initial: int, events, config: SimConfig) -> np.ndarray:
    """Noiseless field at the sample midpoints for a given jump trajectory."""
    n = config.n_samples
    t = (np.arange(n) + 0.5) * config.sample_period
    out = np.empty(n, dtype=np.complex128)
    boundaries = [0.0] + [when for when, _ in events] + [math.inf]
    states = [initial] + [new for _, new in events]
    alpha = 0.0 + 0.0j
    for k, s in enumerate(states):
        lo, hi = boundaries[k], boundaries[k + 1]
        mask = (t >= lo) & (t < hi)
        out[mask] = cavity_mean(s, t[mask] - lo, config, alpha)
        if math.isfinite(hi):
            alpha = complex(cavity_mean(s, hi - lo, config, alpha))
    return out


def trace_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trace ``index``; does not depend on batch size."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def simulate_traces(config: SimConfig, n_per_state: int, seed: int | None = None) -> TraceSet:
    """Simulate ``n_per_state`` records for each prepared state, grouped by state."""
    if n_per_state < 1:
        raise ConfigError("n_per_state", "must be >= 1")
    seed = config.seed if seed is None else seed
    K, n = config.n_states, config.n_samples
    templates = [mean_record(s, [], config) for s in range(K)]
    total = K * n_per_state
    traces = np.empty((total, n), dtype=np.complex128)
    prepared = np.repeat(np.arange(K), n_per_state)
    initial = np.empty(total, dtype=np.int64)
    final = np.empty(total, dtype=np.int64)
    sigma = config.noise_sigma
    for r in range(total):
        rng = trace_rng(seed, r)
        s0 = int(prepared[r])
        if config.prep_error > 0 and rng.random() < config.prep_error:
            others = [s for s in range(K) if s != s0]
            s0 = others[int(rng.integers(len(others)))]
        events = sample_jump_trajectory(s0, config, rng)
        mean = templates[s0] if not events else mean_record(s0, events, config)
        noise = rng.standard_normal((2, n)) * sigma
        traces[r] = mean + noise[0] + 1j * noise[1]
        initial[r] = s0
        final[r] = events[-1][1] if events else s0
    meta = {"source": "simulator", "sim_config": json.dumps(config.to_dict(), sort_keys=True), "seed": str(seed)}
    return TraceSet(
        traces=traces,
        prepared=prepared,
        n_states=K,
        sample_period=config.sample_period,
        initial_check=initial if config.initial_check else np.full(total, UNKNOWN),
        final=final,
        meta=meta,
    )
