"""Command-line entry point: ``sigreadout <subcommand> --config cfg.json --out DIR``.

Exit codes: 0 success, 2 usage or configuration error, 3 data/validation
error, 4 internal error. Logs go to standard error; results go to files
under ``--out`` only.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as tio
from . import pipeline as pl
from .classifiers import ForestModel, GmmModel, LdaModel, lda_fit, lda_project
from .errors import ConfigError, InvalidInputError
from .metrics import baseline_eom, confusion, fidelity_report
from .signature import DEFAULT_DEPTH, compute_weights
from .simulate import simulate_traces
from .traces import UNKNOWN

log = logging.getLogger("sigreadout")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "featurize", "train", "evaluate", "sweep", "project", "report")
MODEL_FORMAT = "sigreadout.pipeline_model"


class UsageError(Exception):
    """Problem with the invocation or its inputs that maps to exit code 2."""


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.path=value`` assignments; values are parsed as JSON when possible."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot set a field inside a non-object value")
        node[parts[-1]] = parse_value(value)
    return doc


def read_config(path, overrides=None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("--config", "top-level JSON value must be an object")
    return apply_overrides(doc, overrides)


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _resolve(base: Path, p) -> str:
    p = Path(p)
    return str(p if p.is_absolute() else (base / p))


def _data_source(doc: dict, base: Path):
    """Trace set from ``bundle`` or ``simulator`` keys of a config document."""
    if "bundle" in doc:
        return tio.load_bundle(_resolve(base, doc["bundle"]))
    if "simulator" in doc:
        cfg = pl.sim_config_from(doc["simulator"])
        return simulate_traces(cfg, int(doc.get("n_per_state", 1000)))
    raise ConfigError("bundle", "config needs a 'bundle' path or a 'simulator' section")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(doc, out: Path, seed=None):
    doc = dict(doc)
    n_per_state = int(doc.pop("n_per_state", 1000))
    if n_per_state < 1:
        raise ConfigError("n_per_state", "must be >= 1")
    cfg = pl.sim_config_from(doc)
    if seed is not None:
        cfg.seed = int(seed)
        cfg.validate()
    ts = simulate_traces(cfg, n_per_state)
    tio.save_bundle(ts, out)
    write_json(out / "sim_config.json", dict(cfg.to_dict(), n_per_state=n_per_state))
    log.info("wrote %d traces x %d samples to %s", ts.n_traces, ts.n_samples, out)


def cmd_featurize(doc, out: Path, base: Path, seed=None):
    ts = _data_source(doc, base)
    method = doc.get("features", "sig_rf")
    window = doc.get("window")
    weights = compute_weights(ts)
    X = pl.featurize(method, ts, weights, window, doc.get("depth", DEFAULT_DEPTH), doc.get("time_augment", True))
    tio.save_features(
        out,
        X,
        prepared=ts.prepared,
        final=ts.final,
        meta={"features": method, "window": window or ts.n_samples, "depth": doc.get("depth", DEFAULT_DEPTH)},
    )
    np.savetxt(out / "weights.csv", weights, delimiter=",", header="weight", comments="")
    log.info("wrote %d x %d feature matrix to %s", *X.shape, out)


def _experiment_config(doc, base: Path, seed=None) -> pl.ExperimentConfig:
    doc = dict(doc)
    data = dict(doc.get("data", {}))
    if "bundle" in data:
        data["bundle"] = _resolve(base, data["bundle"])
    if data:
        doc["data"] = data
    if seed is not None:
        doc["seed"] = int(seed)
    return pl.ExperimentConfig.from_dict(doc)


def cmd_train(doc, out: Path, base: Path, seed=None):
    """Fit one method on every trace of the data source and save it as JSON."""
    doc = dict(doc)
    data_doc = doc.pop("data", None)
    if data_doc is None:
        raise ConfigError("data", "train needs a data section")
    if "simulator" in data_doc and "n_per_state" in doc:
        data_doc = dict(data_doc, n_per_state=doc["n_per_state"])
    ts = _data_source(data_doc, base)
    cfg = _experiment_config(dict(doc, data={"bundle": "-"}), base, seed)
    if len(cfg.methods) != 1:
        raise ConfigError("methods", "train fits exactly one method")
    method = cfg.methods[0]
    window = cfg.windows[0] if cfg.windows else ts.n_samples
    if not 1 <= window <= ts.n_samples:
        raise ConfigError("windows", f"window {window} outside [1, {ts.n_samples}]")
    weights = compute_weights(ts)
    X = pl.featurize(method, ts, weights, window, cfg.depth, cfg.time_augment)
    y = pl.target_labels(ts, cfg.target)
    model, hp = pl.fit_classifier(method, X, y, cfg, pl.derive_seed(cfg.seed, 0))
    write_json(
        out / "model.json",
        {
            "format": MODEL_FORMAT,
            "version": 1,
            "method": method,
            "target": cfg.target,
            "n_states": ts.n_states,
            "featurizer": {"window": int(window), "depth": cfg.depth, "time_augment": cfg.time_augment},
            "weights": weights.tolist(),
            "hyperparams": hp,
            "classifier": model.to_dict(),
        },
    )


def _load_model(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != 1:
        raise ConfigError("model", f"{path} is not a version-1 pipeline model")
    kind = {"gmm": GmmModel, "sig_lda": LdaModel}.get(doc["method"], ForestModel)
    return doc, kind.from_dict(doc["classifier"])


def cmd_evaluate(doc, out: Path, base: Path, seed=None):
    """Apply a saved model to a data source, or run the full repetition protocol."""
    if "model" in doc:
        mdoc, model = _load_model(_resolve(base, doc["model"]))
        ts = _data_source(doc.get("data", {}), base)
        f = mdoc["featurizer"]
        if f["window"] > ts.n_samples:
            raise ConfigError("window", f"model window {f['window']} exceeds record length {ts.n_samples}")
        X = pl.featurize(mdoc["method"], ts, np.asarray(mdoc["weights"]), f["window"], f["depth"], f["time_augment"])
        pred = pl.predict(mdoc["method"], model, X)
        truth = pl.target_labels(ts, mdoc["target"])
        K = ts.n_states
        cm = confusion(pred, truth, K)
        report = fidelity_report([cm]).to_dict()
        report["confusion"] = cm.counts.tolist()
        if mdoc["target"] == "eom":
            report["baseline_eom_infidelity"] = 1.0 - baseline_eom(ts.prepared, truth, K)
        write_json(out / "evaluation.json", report)
        with open(out / "predictions.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "predicted", "truth"])
            w.writerows(zip(range(len(pred)), pred.tolist(), truth.tolist()))
        return
    cfg = _experiment_config(doc, base, seed)
    if cfg.windows and len(cfg.windows) > 1:
        raise ConfigError("windows", "evaluate takes a single window; use sweep for several")
    report = pl.run_experiment(cfg)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.render())


def cmd_sweep(doc, out: Path, base: Path, seed=None):
    cfg = _experiment_config(doc, base, seed)
    if not cfg.windows:
        raise ConfigError("windows", "sweep needs a list of window lengths")
    report = pl.window_sweep(cfg)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.render())
    for entry in report.to_dict()["entries"]:
        write_json(out / f"window_{entry['window']:05d}.json", entry)
    write_curves(out / "curves.csv", report.curve_rows())


def write_curves(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "method", "mean_infidelity", "std"])
        for window, method, mean, std in rows:
            w.writerow([window, method, repr(float(mean)), repr(float(std))])


def cmd_project(doc, out: Path, base: Path, seed=None):
    """Two-dimensional LDA projection of signature (or given) features."""
    if "features" in doc and isinstance(doc["features"], str):
        X, prepared, final, _ = tio.load_features(_resolve(base, doc["features"]))
    else:
        ts = _data_source(doc, base)
        weights = compute_weights(ts) if len(ts.classes()) >= 2 else np.ones(ts.n_samples)
        X = pl.featurize(
            doc.get("method_features", "sig_rf"),
            ts,
            weights,
            doc.get("window"),
            doc.get("depth", DEFAULT_DEPTH),
            doc.get("time_augment", True),
        )
        prepared, final = ts.prepared, ts.final
    if X.shape[0] == 0:
        raise UsageError("input contains no rows")
    if prepared is None or len(np.unique(prepared)) < 2:
        raise UsageError("projection needs labelled data with at least two prepared classes")
    model = lda_fit(X, prepared)
    k = min(2, model.n_directions)
    P = lda_project(model, X, k)
    y = P[:, 1] if k == 2 else np.zeros(len(P))
    with open(out / "projection.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "prepared", "final"])
        for i in range(len(P)):
            fin = "" if final is None or final[i] == UNKNOWN else int(final[i])
            w.writerow([repr(float(P[i, 0])), repr(float(y[i])), int(prepared[i]), fin])


def cmd_report(doc, out: Path, base: Path, seed=None):
    """Render saved experiment report(s) as text tables and a summary CSV."""
    if doc.get("format") == "sigreadout.experiment_report":
        reports = [doc]
    elif "reports" in doc:
        reports = [json.loads(Path(_resolve(base, p)).read_text()) for p in doc["reports"]]
    else:
        raise ConfigError("reports", "config must be an experiment report or list report paths under 'reports'")
    from .report import render_table

    texts, rows = [], []
    for i, rep in enumerate(reports):
        if rep.get("format") != "sigreadout.experiment_report":
            raise ConfigError(f"reports[{i}]", "not an experiment report")
        texts.append(render_table(rep))
        for method, best in rep["best"].items():
            rows.append([i, rep["target"], method, best["window"], repr(best["mean"]), repr(best["std"])])
    (out / "report.txt").write_text("\n".join(texts))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["report", "target", "method", "best_window", "mean_infidelity", "std"])
        w.writerows(rows)


COMMANDS = {
    "simulate": lambda doc, out, base, seed: cmd_simulate(doc, out, seed),
    "featurize": cmd_featurize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "project": cmd_project,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigreadout", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        doc = read_config(args.config, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](doc, out, Path(args.config).resolve().parent, args.seed)
    except (ConfigError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (InvalidInputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
