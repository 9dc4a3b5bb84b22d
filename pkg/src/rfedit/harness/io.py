"""Deterministic serialization of run rows.

CSV columns are fixed and documented in the README; floats use ``repr`` of
the Python float (shortest round-trip form), infinities serialize as the
string ``inf``.  Wall times are never written to runs.csv/runs.json — they go
to a separate timings.csv excluded from determinism guarantees.
"""

from __future__ import annotations

import json
import math

CSV_COLUMNS = [
    "fingerprint", "experiment", "method", "sample_index", "seed",
    "inversion", "strategy", "guidance", "w", "alpha", "mask_enabled",
    "mask_fixed", "hook_scale", "field_kind", "straightened", "sigma",
    "n_steps", "k_start", "n_windows",
    "mse", "psnr", "consistency", "alignment", "alignment_ref", "roundtrip",
    "nfe", "guidance_norm_mean", "ortho_abs_max",
]


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, tuple):
        return [_json_safe(x) for x in v]
    return v


def row_to_dict(row, include_per_step: bool = True) -> dict:
    d = {col: _json_safe(getattr(row, col)) for col in CSV_COLUMNS}
    if include_per_step:
        d["per_step_guidance_norms"] = [_json_safe(x) for x in row.per_step_guidance_norms]
    return d


def rows_to_csv(rows) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(fmt_value(getattr(row, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def rows_to_json(rows, assertions=()) -> str:
    payload = {
        "rows": [row_to_dict(r) for r in rows],
        "assertions": [
            {"name": a.name, "passed": a.passed, "detail": a.detail} for a in assertions
        ],
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def timings_csv(rows) -> str:
    lines = ["fingerprint,method,sample_index,wall_s"]
    for row in rows:
        lines.append(f"{row.fingerprint},{row.method},{row.sample_index},{row.wall_s:.6f}")
    return "\n".join(lines) + "\n"
