"""Evaluation protocol: post-selection, splits, search, repetitions and sweeps.

One repetition draws (or simulates) a dataset, splits it per prepared class
into train/val/test, fits weights and classifiers on train+val only, and
scores the held-out test rows. The randomized hyperparameter search scores
candidates by stratified k-fold cross-validation over the same train+val
rows, so with the default 64/16/20 ratios each fold trains on 64% and
validates on 16% of the data.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import signature as sig
from .classifiers import ForestHyperparams, gmm_fit, gmm_predict, lda_fit, lda_predict, rf_fit, rf_predict
from .errors import ConfigError, InvalidInputError
from .metrics import baseline_eom, confusion, fidelity_report
from .simulate import SimConfig, preset, simulate_traces
from .traces import UNKNOWN, TraceSet

log = logging.getLogger(__name__)

METHODS = ("gmm", "rf", "sig_rf", "sig_lda")
TARGETS = ("assignment", "eom")
REPORT_VERSION = 1


@dataclass
class SearchSpace:
    n_trees: list = field(default_factory=lambda: list(range(50, 151, 10)))
    max_depth: list = field(default_factory=lambda: [10, 20, 30])
    min_samples_split: list = field(default_factory=lambda: [2, 5, 10])
    min_samples_leaf: list = field(default_factory=lambda: [1, 2, 4])
    n_candidates: int = 20
    k_folds: int = 5

    def validate(self):
        for name in ("n_trees", "max_depth", "min_samples_split", "min_samples_leaf"):
            values = getattr(self, name)
            if not values or any(int(v) < 1 for v in values):
                raise ConfigError(f"search.{name}", "must be a nonempty list of positive integers")
        if any(int(v) < 2 for v in self.min_samples_split):
            raise ConfigError("search.min_samples_split", "values must be >= 2")
        if self.n_candidates < 1:
            raise ConfigError("search.n_candidates", "must be >= 1")
        if self.k_folds < 2:
            raise ConfigError("search.k_folds", "must be >= 2")

    @property
    def size(self) -> int:
        return len(self.n_trees) * len(self.max_depth) * len(self.min_samples_split) * len(self.min_samples_leaf)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment report.

    ``data`` is either ``{"simulator": {...}}`` holding SimConfig fields
    (optionally ``"preset": name`` plus overrides) or ``{"bundle": path}``.
    """

    data: dict = field(default_factory=lambda: {"simulator": {"preset": "stress"}})
    methods: list = field(default_factory=lambda: ["gmm", "rf", "sig_rf"])
    target: str = "assignment"
    n_per_state: int | None = 2000
    depth: int = sig.DEFAULT_DEPTH
    time_augment: bool = True
    windows: list | None = None  # sample counts; None means the full record
    split: list = field(default_factory=lambda: [0.64, 0.16, 0.20])
    n_repetitions: int = 10
    seed: int = 0
    search: SearchSpace = field(default_factory=SearchSpace)
    covariance_mode: str = "spherical"
    post_select: dict | None = None  # {"field": "initial_check", "equals": 0 | "prepared"}

    def __post_init__(self):
        if isinstance(self.search, dict):
            known = {f.name for f in fields(SearchSpace)}
            bad = sorted(set(self.search) - known)
            if bad:
                raise ConfigError(f"search.{bad[0]}", "unknown search-space field")
            self.search = SearchSpace(**self.search)
        if isinstance(self.methods, str):
            self.methods = [self.methods]
        if isinstance(self.windows, int):
            self.windows = [self.windows]
        self.validate()

    def validate(self):
        if not isinstance(self.data, dict) or len(set(self.data) & {"simulator", "bundle"}) != 1:
            raise ConfigError("data", "must contain exactly one of 'simulator' or 'bundle'")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError("methods", f"unknown method(s) {bad}; choose from {METHODS}")
        if self.target not in TARGETS:
            raise ConfigError("target", f"must be one of {TARGETS}")
        if len(self.split) != 3 or any(r < 0 for r in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError("split", "needs three nonnegative ratios summing to 1")
        if self.split[2] <= 0:
            raise ConfigError("split", "test ratio must be positive")
        if self.n_repetitions < 1:
            raise ConfigError("n_repetitions", "must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth", "must be >= 1")
        if self.n_per_state is not None and self.n_per_state < 1:
            raise ConfigError("n_per_state", "must be >= 1")
        if self.windows is not None:
            if not self.windows or any(int(w) < 1 for w in self.windows):
                raise ConfigError("windows", "must be positive sample counts")
            if list(self.windows) != sorted(self.windows):
                raise ConfigError("windows", "must be sorted ascending")
        if self.covariance_mode not in ("spherical", "full"):
            raise ConfigError("covariance_mode", "must be 'spherical' or 'full'")
        if self.post_select is not None:
            if self.post_select.get("field", "initial_check") not in ("initial_check", "final"):
                raise ConfigError("post_select.field", "must be 'initial_check' or 'final'")
        self.search.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "method" in doc:
            doc["methods"] = doc.pop("method")
        if "window" in doc:
            doc["windows"] = doc.pop("window")
        known = {f.name for f in fields(cls)}
        bad = sorted(set(doc) - known)
        if bad:
            raise ConfigError(bad[0], "unknown experiment field")
        return cls(**doc)


# ---------------------------------------------------------------------------
# seeds and data


def derive_seed(*parts) -> int:
    """64-bit seed mixed from integers by SeedSequence; stable across runs."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def rep_seed(master_seed: int, rep: int) -> int:
    return derive_seed(master_seed, rep)


def sim_config_from(doc: dict) -> SimConfig:
    doc = dict(doc)
    name = doc.pop("preset", None)
    return preset(name, **doc) if name else SimConfig.from_dict(doc)


def load_data(config: ExperimentConfig, seed: int) -> TraceSet:
    """Dataset for one repetition: fresh simulation or a per-class bundle draw."""
    if "simulator" in config.data:
        return simulate_traces(sim_config_from(config.data["simulator"]), config.n_per_state or 2000, seed=seed)
    from .io import load_bundle

    ts = load_bundle(config.data["bundle"])
    if config.n_per_state is None:
        return ts
    rng = np.random.default_rng(derive_seed(seed, 1))
    picks = []
    for c in ts.classes():
        idx = np.flatnonzero(ts.prepared == c)
        if idx.size < config.n_per_state:
            raise InvalidInputError(f"class {c} has {idx.size} traces, fewer than n_per_state={config.n_per_state}")
        picks.append(np.sort(rng.choice(idx, config.n_per_state, replace=False)))
    return ts.subset(np.concatenate(picks))


def record_length(config: ExperimentConfig) -> int:
    """Samples per record of the configured data source, without loading traces."""
    if "simulator" in config.data:
        return sim_config_from(config.data["simulator"]).n_samples
    from pathlib import Path

    path = Path(config.data["bundle"])
    path = path / "manifest.json" if path.is_dir() else path
    try:
        return int(json.loads(path.read_text())["n_samples"])
    except (OSError, ValueError, KeyError) as exc:
        raise InvalidInputError(f"cannot read n_samples from {path}: {exc}") from None


def check_windows(windows, n_samples: int) -> None:
    for w in windows:
        if not 1 <= w <= n_samples:
            raise ConfigError("windows", f"window {w} outside [1, {n_samples}]")


def post_select(trace_set: TraceSet, field: str = "initial_check", equals=0):
    """Keep traces whose ``field`` label equals ``equals`` (or the prepared label).

    Returns the filtered set and, per prepared class, ``(kept, total)``.
    """
    labels = getattr(trace_set, field)
    if labels is None or np.all(labels == UNKNOWN):
        raise InvalidInputError(f"trace set has no {field} labels to post-select on")
    target = trace_set.prepared if equals == "prepared" else int(equals)
    keep = labels == target
    stats = {}
    for c in range(trace_set.n_states):
        in_class = trace_set.prepared == c
        total = int(in_class.sum())
        if total:
            stats[c] = (int((keep & in_class).sum()), total)
    for c, (kept, total) in stats.items():
        if kept == 0:
            log.warning("post-selection kept 0%% of prepared class %d (%d traces)", c, total)
    return trace_set.subset(np.flatnonzero(keep)), stats


def _allocate(n: int, ratios) -> list[int]:
    raw = np.asarray(ratios, dtype=np.float64) * n
    counts = np.floor(raw + 1e-9).astype(int)
    short = n - counts.sum()
    # largest remainder, earlier part first on ties
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts.tolist()


def stratified_split(trace_set: TraceSet, ratios=(0.64, 0.16, 0.20), seed: int = 0, labels=None):
    """Per-class shuffled train/val/test index arrays (sorted, disjoint, exhaustive)."""
    labels = trace_set.prepared if labels is None else np.asarray(labels)
    parts = [[], [], []]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 3:
            raise InvalidInputError(f"class {c} has {idx.size} traces; at least 3 are needed to split")
        perm = np.random.default_rng(derive_seed(seed, int(c) + 1)).permutation(idx)
        bounds = np.cumsum([0] + _allocate(idx.size, ratios))
        for k in range(3):
            parts[k].append(perm[bounds[k] : bounds[k + 1]])
    return tuple(np.sort(np.concatenate(p)) for p in parts)


# ---------------------------------------------------------------------------
# hyperparameter search


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Validation index sets of ``k`` folds preserving class proportions."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if idx.size < k:
            raise InvalidInputError(f"class {c} has {idx.size} samples, fewer than k_folds={k}")
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(i)
        offset += idx.size
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def draw_candidates(space: SearchSpace, seed: int) -> list[dict]:
    """Up to ``n_candidates`` distinct configurations drawn uniformly from the grid."""
    rng = np.random.default_rng(seed)
    target = min(space.n_candidates, space.size)
    seen, out = set(), []
    while len(out) < target:
        cand = (
            int(rng.choice(space.n_trees)),
            int(rng.choice(space.max_depth)),
            int(rng.choice(space.min_samples_split)),
            int(rng.choice(space.min_samples_leaf)),
        )
        if cand not in seen:
            seen.add(cand)
            out.append(dict(zip(("n_trees", "max_depth", "min_samples_split", "min_samples_leaf"), cand)))
    return out


def random_search(features, labels, space: SearchSpace | None = None, seed: int = 0):
    """Best forest hyperparameters by stratified k-fold mean accuracy.

    Returns ``(best, scores)``; ties go to the earliest draw. A single
    candidate is returned without cross-validation.
    """
    space = space or SearchSpace()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    candidates = draw_candidates(space, derive_seed(seed, 11))
    if len(candidates) == 1:
        return candidates[0], [None]
    folds = stratified_folds(y, space.k_folds, derive_seed(seed, 12))
    scores = []
    for ci, cand in enumerate(candidates):
        acc = []
        for fi, val in enumerate(folds):
            train = np.setdiff1d(np.arange(len(y)), val, assume_unique=True)
            model = rf_fit(X[train], y[train], cand, seed=derive_seed(seed, 13, ci, fi))
            pred, _ = rf_predict(model, X[val])
            acc.append(np.mean(pred == y[val]))
        scores.append(float(np.mean(acc)))
        log.debug("candidate %s: cv accuracy %.4f", cand, scores[-1])
    best = int(np.argmax(scores))
    return candidates[best], scores


# ---------------------------------------------------------------------------
# featurization and fitting


def featurize(method: str, trace_set: TraceSet, weights, window=None, depth=sig.DEFAULT_DEPTH, time_augment=True):
    """Feature matrix a method consumes: integral, weighted record or signature."""
    if method == "gmm":
        return sig.integrated_features(trace_set, weights, window)
    if method == "rf":
        return sig.weighted_record(trace_set, weights, window)
    if method in ("sig_rf", "sig_lda"):
        return sig.batch_featurize(trace_set, weights, depth, time_augment, window)
    raise InvalidInputError(f"unknown method {method!r}")


def target_labels(trace_set: TraceSet, target: str) -> np.ndarray:
    if target == "assignment":
        return trace_set.prepared
    if trace_set.final is None or np.any(trace_set.final == UNKNOWN):
        raise InvalidInputError("the eom target needs end-of-measurement labels for every trace")
    return trace_set.final


def fit_classifier(method, X, y, config: ExperimentConfig, seed: int):
    """Train one method's classifier; forests are tuned by random search first."""
    if method == "gmm":
        return gmm_fit(X, y, config.covariance_mode), None
    if method == "sig_lda":
        return lda_fit(X, y), None
    best, _ = random_search(X, y, config.search, seed=derive_seed(seed, 21))
    return rf_fit(X, y, ForestHyperparams(**best), seed=derive_seed(seed, 22)), best


def predict(method, model, X):
    if method == "gmm":
        return gmm_predict(model, X)
    if method == "sig_lda":
        return lda_predict(model, X)
    return rf_predict(model, X)[0]


@dataclass
class Fitted:
    """Everything learned from the fitting rows of one repetition."""

    weights: np.ndarray
    models: dict  # (window, method) -> (model, hyperparams)


def fit_repetition(pool: TraceSet, config: ExperimentConfig, windows, seed: int) -> Fitted:
    """Fit weights and all (window, method) classifiers on the train+val rows only."""
    weights = sig.compute_weights(pool)
    y = target_labels(pool, config.target)
    models = {}
    for window in windows:
        for method in config.methods:
            X = featurize(method, pool, weights, window, config.depth, config.time_augment)
            models[(window, method)] = fit_classifier(method, X, y, config, derive_seed(seed, window, METHODS.index(method)))
    return Fitted(weights, models)


def run_repetition(config: ExperimentConfig, rep: int, windows=None):
    """One repetition; returns per-(window, method) confusions and extras."""
    seed = rep_seed(config.seed, rep)
    ts = load_data(config, seed)
    ps_stats = None
    if config.post_select is not None:
        ts, ps_stats = post_select(ts, config.post_select.get("field", "initial_check"), config.post_select.get("equals", 0))
    windows = windows or [ts.n_samples]
    check_windows(windows, ts.n_samples)
    train, val, test = stratified_split(ts, config.split, derive_seed(seed, 2))
    pool = ts.subset(np.concatenate([train, val]))
    held_out = ts.subset(test)
    fitted = fit_repetition(pool, config, windows, seed)

    K = ts.n_states
    y_test = target_labels(held_out, config.target)
    confusions = {}
    for window in windows:
        for method in config.methods:
            model, _ = fitted.models[(window, method)]
            X = featurize(method, held_out, fitted.weights, window, config.depth, config.time_augment)
            confusions[(window, method)] = confusion(predict(method, model, X), y_test, K)
    extras = {
        "hyperparams": {k: hp for k, (_, hp) in fitted.models.items() if hp is not None},
        "post_selection": ps_stats,
        "n_test": int(len(test)),
    }
    if config.target == "eom":
        extras["baseline"] = confusion(held_out.prepared, y_test, K)
        extras["baseline_fidelity"] = baseline_eom(held_out.prepared, y_test, K)
    return confusions, extras, fitted


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    config: dict
    windows: list
    entries: list  # per window: {"window": w, "methods": {method: report dict}}
    baseline: dict | None = None
    post_selection: list | None = None

    def best(self) -> dict:
        """Per-method minimum mean infidelity over the swept windows."""
        out = {}
        for method in self.config["methods"]:
            vals = [(e["methods"][method]["mean"], e["window"], e["methods"][method]["std"]) for e in self.entries]
            mean, window, std = min(vals, key=lambda v: (v[0], v[1]))
            out[method] = {"mean": mean, "std": std, "window": window}
        return out

    def to_dict(self) -> dict:
        return {
            "format": "sigreadout.experiment_report",
            "version": REPORT_VERSION,
            "target": self.config["target"],
            "config": self.config,
            "windows": self.windows,
            "entries": self.entries,
            "baseline": self.baseline,
            "best": self.best(),
            "post_selection": self.post_selection,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def curve_rows(self):
        """(window, method, mean_infidelity, std) rows in window-then-method order."""
        return [
            (e["window"], m, e["methods"][m]["mean"], e["methods"][m]["std"])
            for e in self.entries
            for m in self.config["methods"]
        ]

    def render(self) -> str:
        from .report import render_table

        return render_table(self.to_dict())


def window_sweep(config: ExperimentConfig, windows=None) -> ExperimentReport:
    """Run every repetition once and score each window on the shared splits."""
    windows = list(windows if windows is not None else (config.windows or []))
    check_windows(windows, record_length(config))
    per_rep, baselines, ps = [], [], []
    for rep in range(config.n_repetitions):
        log.info("repetition %d/%d", rep + 1, config.n_repetitions)
        conf, extras, _ = run_repetition(config, rep, windows or None)
        if not windows:
            windows = sorted({w for w, _ in conf})
        per_rep.append((conf, extras))
        if "baseline" in extras:
            baselines.append(extras["baseline"])
        ps.append({str(k): list(v) for k, v in extras["post_selection"].items()} if extras["post_selection"] else None)

    entries = []
    for window in windows:
        methods = {}
        for method in config.methods:
            rep_doc = fidelity_report([c[(window, method)] for c, _ in per_rep])
            doc = rep_doc.to_dict()
            if config.target == "eom":
                doc["eom_infidelity"], doc["overall_infidelity"] = doc["overall_infidelity"], None
            hps = [e["hyperparams"].get((window, method)) for _, e in per_rep]
            if any(hp is not None for hp in hps):
                doc["hyperparams"] = hps
            methods[method] = doc
        entries.append({"window": int(window), "methods": methods})
    baseline = None
    if baselines:
        baseline = fidelity_report(baselines).to_dict()
        baseline["eom_infidelity"], baseline["overall_infidelity"] = baseline["overall_infidelity"], None
    return ExperimentReport(
        config=config.to_dict(),
        windows=[int(w) for w in windows],
        entries=entries,
        baseline=baseline,
        post_selection=ps if any(p is not None for p in ps) else None,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Full protocol at the configured window (the whole record by default).

    With several configured windows this is the same as :func:`window_sweep`.
    """
    return window_sweep(config, config.windows)
