"""
Running a scenario from a config file
=====================================

The command line runs a JSON scenario, writes ``results.csv``,
``diagnostics.json`` and ``manifest.json``, and reshapes the CSV into long
format for plotting.  The same entry points are callable from Python.
"""

# %%
import csv
import io
import json
import tempfile
from pathlib import Path

from _figure import plt, save

from ottoflow.cli import long_format, main

config = {
    "kind": "mkv",
    "name": "small interaction run",
    "manifold": "circle",
    "fields": ["interaction(cos, 1)", "gradient_potential(0.5*sin)"],
    "initial": "cosine(0.5,1)",
    "params": {"h": "1e-3", "T": 0.2, "P": 256, "seed": 7, "record_every": 10},
}

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "run.json"
    path.write_text(json.dumps(config))
    code = main(["run", str(path), "-o", str(Path(tmp) / "out")])
    print("exit code:", code)
    results = (Path(tmp) / "out" / "results.csv").read_text()
    manifest = json.loads((Path(tmp) / "out" / "manifest.json").read_text())
print("config hash:", manifest["config_sha256"][:16], "...")

# %%
rows = list(csv.DictReader(io.StringIO(long_format(results))))
series = {}
for r in rows:
    series.setdefault(r["observable"], []).append((float(r["t"]), float(r["value"])))
print("observables:", ", ".join(series))

if plt is not None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, pts in series.items():
        if name.startswith("F_"):
            ax.plot(*zip(*pts), label=name)
    ax.set_xlabel("t")
    ax.legend()
    save(fig, "cli_run")
