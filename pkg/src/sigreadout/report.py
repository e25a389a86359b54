"""Plain-text rendering of experiment reports as method x infidelity tables."""

from __future__ import annotations


def fmt_pm(mean: float, std: float, scale: float = 100.0) -> str:
    """``13.16(44)`` style: value times ``scale`` with std in last-digit units."""
    if mean is None:
        return "N/A"
    digits = int(round(std * scale * 100))
    return f"{mean * scale:.2f}({digits})"


def render_table(report: dict) -> str:
    target = report["target"]
    methods = report["config"]["methods"]
    label = "(1-F_EOM)x10^2" if target == "eom" else "(1-F)x10^2"
    header = ["window"] + (["baseline"] if report.get("baseline") else []) + methods
    rows = []
    for entry in report["entries"]:
        row = [str(entry["window"])]
        if report.get("baseline"):
            b = report["baseline"]
            row.append(fmt_pm(b["mean"], b["std"]))
        row += [fmt_pm(entry["methods"][m]["mean"], entry["methods"][m]["std"]) for m in methods]
        rows.append(row)
    if len(report["entries"]) > 1:
        best = report["best"]
        row = ["best"] + (["-"] if report.get("baseline") else [])
        row += [f'{fmt_pm(best[m]["mean"], best[m]["std"])}@{best[m]["window"]}' for m in methods]
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths))
    n_reps = report["entries"][0]["methods"][methods[0]]["n_reps"]
    out = [f"{label}, mean(std) over {n_reps} repetition(s)", line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"
