#!/usr/bin/env python3
"""Run the three preset experiments and print a one-line summary of each."""

import json
import os
import sys

from maxsurf.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
PRESETS = ["barbot.json", "perturbed.json", "zero_of_q.json"]

if __name__ == "__main__":
    outroot = sys.argv[1] if len(sys.argv) > 1 else "preset_runs"
    for preset in PRESETS:
        name = preset.split(".")[0]
        out = os.path.join(outroot, name)
        code = main(["all", "--config", os.path.join(HERE, "..", "presets", preset), "--out", out])
        line = f"{name}: exit={code}"
        report_path = os.path.join(out, "report.json")
        if os.path.exists(report_path):
            rep = json.load(open(report_path))
            line += f" bounds_pass={rep['bounds'].get('all_pass')}"
            fits = rep.get("decay_fits", {})
            if fits.get("mu2", {}).get("alpha") is not None:
                line += f" alpha_mu2={fits['mu2']['alpha']:.3f}"
            cm = rep.get("open_question_ratios", {}).get("curvature_mass")
            if cm:
                line += f" mass_ratio_2pi={cm['ratio_2pi']:.3f}"
        print(line)
