"""Versioned JSON reports.

Keys are sorted and floats printed with ``repr`` precision, so identical
inputs give identical bytes. The only volatile field is ``generated_at``,
which can be left out.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
from typing import Any, Mapping, Sequence

from . import __version__
from .model import ScmModel

SCHEMA = "fairscm-report"
SCHEMA_VERSION = 1


def criterion_result(criterion: str, gap: float | None, *, threshold: float | None = None,
                     detail: Mapping[str, Any] | None = None, error: str | None = None) -> dict:
    """One criterion entry; status is pass/fail against a threshold, else report-only."""
    if error is not None or gap is None:
        status = "skip"
    elif threshold is None:
        status = "report-only"
    else:
        status = "pass" if gap <= threshold else "fail"
    out = {"criterion": criterion, "gap": gap, "threshold": threshold, "status": status,
           "detail": dict(detail or {})}
    if error is not None:
        out["error"] = error
    return out


def build(kind: str, model: ScmModel | None, *, seed: int | None, results: Sequence[Mapping],
          warnings: Sequence[str] = (), timestamp: bool = True, extra: Mapping[str, Any] | None = None) -> dict:
    report = {
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": kind,
        "model": None if model is None else {"name": model.name, "fingerprint": model.fingerprint()},
        "seed": seed,
        "results": list(results),
        "warnings": list(warnings),
    }
    if extra:
        report.update(extra)
    if timestamp:
        report["generated_at"] = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return report


def _clean(x: Any, warnings: list[str], path: str) -> Any:
    if isinstance(x, Mapping):
        return {str(k): _clean(v, warnings, f"{path}.{k}") for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v, warnings, f"{path}[{i}]") for i, v in enumerate(x)]
    if hasattr(x, "item") and callable(x.item):  # numpy scalars
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        warnings.append(f"non-finite value at {path} replaced by null")
        return None
    return x


def dumps(report: Mapping[str, Any]) -> str:
    """Serialise with every numeric field finite (non-finite values become null plus a warning)."""
    warnings: list[str] = []
    body = _clean(dict(report), warnings, "$")
    if warnings:
        body["warnings"] = list(body.get("warnings", [])) + warnings
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"
