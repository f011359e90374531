"""
End-to-end prognostic pathways
==============================

A small synthetic cohort goes through every pipeline step; we then read the
subgroup networks and the prediction metrics back from the output folder.
"""

import json
import tempfile
from pathlib import Path

from sepsis_pathways.cli import load_config, run_command

config = load_config(seed=0)
config["synth"].update(n_patients=200, n_clusters=3)
config["vectors"]["epochs"] = 30
config["cluster"]["k_max"] = 6

out = Path(tempfile.mkdtemp(prefix="pathways_demo_"))
run_command("synth", config, out)
run_command("all", config, out)
print("artifacts in", out)

print((out / "cluster" / "silhouette.csv").read_text())

# one subgroup network in Graphviz form; render with `dot -Tpng`
dot = (out / "pathways" / "subgroup_0" / "network.dot").read_text()
print("\n".join(dot.splitlines()[:12]))

metrics = json.loads((out / "predict" / "metrics.json").read_text())
print("subgroup classifier accuracy:", metrics["subgroup_classifier"]["accuracy"])
print("state accuracy with / without subgroup:",
      metrics["state_with_subgroup"]["accuracy"], metrics["state_without_subgroup"]["accuracy"])
