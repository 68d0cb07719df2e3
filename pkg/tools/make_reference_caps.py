"""Regenerate ``src/buq/data/reference_caps.json``.

Solves the MILP planning model over one synthetic year with HiGHS and
stores the optimal capacities, rounded to the nearest MW.
"""

import json
import sys
from pathlib import Path

from buq.optimizer import SolverOptions
from buq.psm import default_spec, run_model
from buq.synth import SynthConfig, synth_generate

SEED = 2017


def main() -> None:
    config = SynthConfig(years=1, seed=SEED, start_year=2017)
    spec = default_spec("milp_plan")
    out = run_model(spec, synth_generate(config), SolverOptions(method="highs"))
    caps = {name: round(out[name]) for name in spec.cap_names()}
    doc = {
        "description": "MILP planning optimum over one synthetic year (SynthConfig defaults, seed 2017)",
        "caps_mw": caps,
    }
    path = Path(__file__).resolve().parents[1] / "src" / "buq" / "data" / "reference_caps.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    json.dump(caps, sys.stdout, indent=2)


if __name__ == "__main__":
    main()
