"""
export.py
CSV / JSON writers shared by the command-line runs.

All numbers go out with 12 significant digits, JSON keys are sorted and
nothing time- or host-dependent is written, so repeated runs are byte-identical.
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

# -----------------------
# CONFIG
# -----------------------
SIG_DIGITS = 12
FLOAT_FORMAT = f"%.{SIG_DIGITS}g"
MANIFEST = "manifest.json"
CSV = "csv"
JSON = "json"
# -----------------------


def round_sig(x: float) -> Optional[float]:
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIG_DIGITS}g}")


def to_plain(obj: Any) -> Any:
    """numpy / pandas / tuples -> JSON-ready python with rounded floats; inf and nan become null."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    if isinstance(obj, pd.Timestamp):
        return obj.strftime("%Y-%m-%d")
    return obj


def export_csv(df: pd.DataFrame, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out_path, index=False, float_format=FLOAT_FORMAT)
    print("Exported CSV:", out_path)
    return out_path


def export_json(record: Any, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(to_plain(record), f, indent=2, sort_keys=True)
        f.write("\n")
    print("Exported JSON:", out_path)
    return out_path


def export_outputs(out_dir, name: str, formats: Iterable[str], frame: pd.DataFrame = None,
                   record: Any = None) -> Dict[str, Path]:
    """Write name.csv and/or name.json under out_dir, as the formats and inputs allow."""
    written = {}
    formats = set(formats)
    if CSV in formats and frame is not None:
        written[CSV] = export_csv(frame, Path(out_dir) / f"{name}.csv")
    if JSON in formats and record is not None:
        written[JSON] = export_json(record, Path(out_dir) / f"{name}.json")
    return written


def write_manifest(resolved: Dict[str, Any], out_dir) -> Path:
    return export_json(resolved, Path(out_dir) / MANIFEST)
