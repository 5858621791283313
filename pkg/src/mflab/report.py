"""Versioned JSON reports, CSV tables and standalone plot scripts."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

SCHEMA = "v1"


class ReportError(ValueError):
    pass


def jsonable(obj):
    """Plain-JSON copy of ``obj``; non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_table(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def write_text(path: Path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_report(outdir: Path, subcommand: str, config: dict, seed: int, result: dict,
                 tables: dict) -> Path:
    """Write ``<subcommand>.json`` alongside the already-written CSV ``tables``."""
    report = {"schema": SCHEMA, "subcommand": subcommand, "config": config, "seed": seed,
              "result": result, "tables": {k: os.path.basename(v) for k, v in tables.items()}}
    path = Path(outdir) / f"{subcommand}.json"
    write_text(path, dumps(report))
    return path


def load_report(path) -> dict:
    try:
        with open(path) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    if not isinstance(report, dict) or report.get("schema") != SCHEMA:
        raise ReportError(f"unknown report schema {report.get('schema') if isinstance(report, dict) else None!r}; "
                          f"expected {SCHEMA!r}")
    return report


# -- plot scripts ---------------------------------------------------------------

_HEAD = '''#!/usr/bin/env python3
"""Plot generated from {report}. Run with matplotlib installed."""
import csv
import os

import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def column(name, key, cast=float):
    with open(os.path.join(HERE, name)) as fh:
        return [cast(row[key]) for row in csv.DictReader(fh)]

'''

_RECIPES = {
    "landscape": '''
s = column({table!r}, "s")
G = column({table!r}, "G")
fig, ax = plt.subplots()
ax.plot(s, G, label="G(s)")
for m in {minima!r}:
    ax.axvline(m, ls=":", color="gray")
ax.set_xlim(-1, 1)
ax.set_xlabel("s")
ax.set_ylabel("G(s)")
ax.legend()
fig.savefig(os.path.join(HERE, "landscape.png"), dpi=150)
''',
    "verdict": '''
n = column({table!r}, "n", int)
r = column({table!r}, "r_n")
fig, ax = plt.subplots()
ax.plot(n, r, "o-", label="r_n")
ax.axhline({target!r}, color="k", ls="--", label="I(z) = {target:.6g}")
ax.set_xscale("log")
ax.set_xlabel("n")
ax.set_ylabel("scaled log-probability")
ax.legend()
fig.savefig(os.path.join(HERE, "{stem}.png"), dpi=150)
''',
    "scaling": '''
n = column({table!r}, "n", int)
err = column({table!r}, "sup_error")
fig, ax = plt.subplots()
ax.loglog(n, err, "o-")
ax.set_xlabel("n")
ax.set_ylabel("sup error of the rescaled landscape")
fig.savefig(os.path.join(HERE, "scaling-check.png"), dpi=150)
''',
    "curve": '''
x = column({table!r}, {x!r})
y = column({table!r}, {y!r})
fig, ax = plt.subplots()
ax.plot(x, y)
ax.set_xlabel({x!r})
ax.set_ylabel({y!r})
fig.savefig(os.path.join(HERE, "{stem}.png"), dpi=150)
''',
}

_CURVES = {
    "walk-dist": ("distribution", "k", "prob"),
    "magnetization-dist": ("distribution", "k", "prob"),
    "clt-density": ("density", "s", "density"),
    "hs-check": ("density", "s", "hs_density"),
}


def plot_script(report: dict, report_name: str) -> str:
    """Source of a standalone matplotlib script for ``report``."""
    sub = report.get("subcommand")
    tables = report.get("tables", {})
    result = report.get("result", {})
    head = _HEAD.format(report=report_name)
    if sub == "landscape":
        body = _RECIPES["landscape"].format(table=tables["landscape"],
                                            minima=[p["m"] for p in result["minima"]])
    elif sub in ("walk-mdp", "verify-mdp"):
        body = _RECIPES["verdict"].format(table=tables["verdict"], target=result["verdict"]["target"],
                                          stem=sub)
    elif sub == "scaling-check":
        body = _RECIPES["scaling"].format(table=tables["scaling"])
    elif sub in _CURVES:
        name, x, y = _CURVES[sub]
        body = _RECIPES["curve"].format(table=tables[name], x=x, y=y, stem=sub)
    else:
        raise ReportError(f"no plot recipe for subcommand {sub!r}")
    return head + body


def emit_plot_script(report_path, out=None) -> Path:
    """Write ``plot_<subcommand>.py`` next to the report (or to ``out``); it is not executed."""
    report_path = Path(report_path)
    report = load_report(report_path)
    text = plot_script(report, report_path.name)
    target = Path(out) if out else report_path.with_name(f"plot_{report['subcommand']}.py")
    write_text(target, text)
    return target
