"""Drive the command-line tool: simulate, estimate, benchmark and replay.

Outputs go to a temporary directory.
"""

# %% Simulate a dataset and estimate with the linear learner
import json
import tempfile
from pathlib import Path

from medcross.cli import main

out = Path(tempfile.mkdtemp())
main(["simulate", "--case", "2", "--n", "1500", "--seed", "3", "--out", str(out / "sim")])
main(["estimate", "--input", str(out / "sim" / "data.csv"), "--mediator", "continuous",
      "--learner", "linear", "--out", str(out / "est")])
print((out / "est" / "report.txt").read_text())

# %% A short Monte Carlo benchmark
main(["benchmark", "--case", "1", "--n", "1000", "--replicates", "20",
      "--learner", "oracle,linear", "--out", str(out / "bench")])
print((out / "bench" / "benchmark.txt").read_text())

# %% Replaying the manifest reproduces the outputs byte for byte
main(["replay", str(out / "bench" / "manifest.json"), "--out", str(out / "again")])
same = (out / "bench" / "benchmark.json").read_bytes() == (out / "again" / "benchmark.json").read_bytes()
print("identical:", same)
print(json.loads((out / "bench" / "manifest.json").read_text())["args"])
