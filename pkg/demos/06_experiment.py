"""
End-to-end experiment
=====================

``run_experiment`` pretrains a shared starting model, runs every method
in the config, evaluates the final models and writes a JSON Lines ledger,
per-phase checkpoints and Markdown/CSV result tables. The same thing is
available as ``bcl bcl --config demos/configs/smoke.json``.
"""

# %%
import tempfile
from pathlib import Path

from bcl.harness import load_checkpoint, read_ledger, run_experiment

config = Path(__file__).with_name("configs") / "smoke.json"
out = Path(tempfile.mkdtemp(prefix="bcl-demo-"))
result = run_experiment(config, out_dir=out)
print(result.report[0].read_text())

# %%
phases = [r for r in read_ledger(result.ledger_path) if r["kind"] == "phase"]
for r in phases:
    print(r["method"], "phase", r["phase"], "eps", round(r["eps"] * 255, 2), "/255",
          "chose run", r["chosen"], "of", len(r["runs"]))
ck = load_checkpoint(out / phases[-1]["checkpoint"])
print("checkpoint metadata:", {k: ck.metadata[k] for k in ("method", "phase", "eps")})
