"""Artifact emission: fields/frames/slices CSVs, report.json, plot data."""

from __future__ import annotations

import json
import os
import time

import numpy as np

from . import frames as fr
from . import hull as hl
from . import solver as sv

FIELDS_HEADER = "x,y,lambda,mu2,u,v,mu1,K,detII,normII2"


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_fields_csv(path, res, grid):
    X, Y = grid.meshgrid()
    gf = res.gfields
    cols = [X, Y, res.state.lam, res.state.mu2, gf.u, gf.v, gf.mu1, gf.K, gf.detII, gf.normII2]
    data = np.column_stack([c.ravel() for c in cols])
    tmp = path + ".tmp"
    np.savetxt(tmp, data, delimiter=",", header=FIELDS_HEADER, comments="")
    os.replace(tmp, path)


def write_plotdata(outdir, res, grid):
    pdir = os.path.join(outdir, "plotdata")
    os.makedirs(pdir, exist_ok=True)
    if res.rho is None:
        return
    rho = res.rho.rho.ravel()
    finite = np.isfinite(rho)
    from .barbot import BARBOT_MU1

    series = {
        "mu2": np.abs(res.state.mu2).ravel(),
        "mutilde1": np.abs(res.gfields.mu1 - BARBOT_MU1).ravel(),
        "K": np.abs(res.gfields.K).ravel(),
    }
    sel = np.flatnonzero(finite)
    if sel.size > 20000:
        sel = sel[np.linspace(0, sel.size - 1, 20000).astype(int)]
    for name, vals in series.items():
        path = os.path.join(pdir, f"rho_vs_{name}.csv")
        tmp = path + ".tmp"
        np.savetxt(tmp, np.column_stack([rho[sel], vals[sel]]), delimiter=",", header=f"rho,{name}", comments="")
        os.replace(tmp, path)
    if res.vbar_samples:
        path = os.path.join(pdir, "rho_vs_vbar.csv")
        tmp = path + ".tmp"
        np.savetxt(tmp, np.asarray(res.vbar_samples), delimiter=",", header="rho,vbar", comments="")
        os.replace(tmp, path)
    if res.domain_stats is not None:
        path = os.path.join(pdir, "boundary_lengths.csv")
        tmp = path + ".tmp"
        data = np.column_stack([res.domain_stats.t_levels, res.domain_stats.boundary_lengths])
        np.savetxt(tmp, data, delimiter=",", header="t,length", comments="")
        os.replace(tmp, path)


def build_report(res, config):
    """Assemble the report dictionary; every checked number carries its
    tolerance.  Sections are always present, possibly empty."""
    stats = res.domain_stats
    slice_section = {
        "profiles": [
            {
                "base": list(p.base_index) if p.base_index else None,
                "rho": res.vbar_samples[k][0] if k < len(res.vbar_samples) else None,
                "volume_estimate": p.volume_estimate,
                "polygon_area": p.polygon_area,
                "max_extent": float(np.max(p.extents)) if p.extents.size else 0.0,
            }
            for k, p in enumerate(res.profiles)
        ],
        "extent_bound": {},
        "seppi_probe": res.seppi_values,
        "jacobian_slice_ratio": res.jacobian_ratio,
    }
    if res.profiles:
        worst = max(float(np.max(p.extents)) for p in res.profiles)
        slice_section["extent_bound"] = {
            "value": worst,
            "tol": float(np.pi / 2 + 1e-6),
            "pass": bool(worst <= np.pi / 2 + 1e-6),
        }
    domain_section = dict(res.domain_checks)
    if stats is not None:
        domain_section["t_levels"] = list(stats.t_levels)
        domain_section["boundary_lengths"] = list(stats.boundary_lengths)
        domain_section["component_count"] = stats.component_count
        domain_section["total_abs_K"] = stats.total_abs_K
        domain_section["k"] = stats.k
    open_q = {}
    if "curvature_mass" in domain_section:
        open_q["curvature_mass"] = domain_section.pop("curvature_mass")
    report = {
        "meta": {
            "seed": config.seed,
            "strict": config.strict,
            "rho_source": res.rho_source,
            "flags": {k: v for k, v in res.flags.items() if k != "solve_info"},
            "solver_iterations": res.flags.get("solve_info", {}).get("iterations"),
            "timings": res.timings,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
        "bounds": res.bounds,
        "identities": {**res.identities, **res.frame_diag},
        "decay_fits": res.decay_fits,
        "domain_checks": domain_section,
        "slice_volumes": slice_section,
        "open_question_ratios": open_q,
    }
    return _jsonable(report)


def emit_report(res, config, outdir):
    """Write all artifact files; returns the report dictionary."""
    os.makedirs(outdir, exist_ok=True)
    grid = config.grid
    if res.state is not None:
        write_fields_csv(os.path.join(outdir, "fields.csv"), res, grid)
        sv.save_state(os.path.join(outdir, "state.csv"), res.state, grid)
    if res.frames is not None:
        fr.export_frames_csv(os.path.join(outdir, "frame.csv"), res.frames, grid)
    if res.profiles:
        hl.export_slices_csv(os.path.join(outdir, "slices.csv"), res.profiles)
    write_plotdata(outdir, res, grid)
    report = build_report(res, config)
    _atomic_write(os.path.join(outdir, "report.json"), json.dumps(report, indent=2) + "\n")
    return report
