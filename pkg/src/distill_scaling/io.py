"""Run tables, coefficient files, configuration and grid emission.

Run tables are CSV with a header row or JSON lines. Column names:

* supervised: ``n, d, loss``
* distillation: ``n_s, d_s, l_t, l_s`` with optional ``n_t, d_t``

Numbers are written with ``repr`` so every float round-trips exactly.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .accounting import DEFAULT_PROFILE, AspectProfile
from .fitting import DistillRun, SupervisedRun
from .laws import DistillCoeffs, SupervisedCoeffs, REFERENCE_DISTILL, REFERENCE_SUPERVISED
from .optimal import PlannerBounds

CONFIG_ENV = "DISTILL_SCALING_CONFIG"

COLUMNS = {
    "supervised": (["n", "d", "loss"], []),
    "distill": (["n_s", "d_s", "l_t", "l_s"], ["n_t", "d_t"]),
}


class RunTableError(ValueError):
    pass


@dataclass
class RunTable:
    kind: str
    records: list
    source: str = ""

    def __len__(self) -> int:
        return len(self.records)


def _parse_number(text, col, line):
    if isinstance(text, bool):
        raise RunTableError(f"line {line}: column {col!r} is not numeric")
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise RunTableError(f"line {line}: column {col!r} is not numeric: {text!r}") from None
    if not math.isfinite(v):
        raise RunTableError(f"line {line}: column {col!r} is not finite: {text!r}")
    return v


def _record(kind, row, line):
    required, optional = COLUMNS[kind]
    vals = {c: _parse_number(row[c], c, line) for c in required}
    for c in optional:
        if row.get(c) not in (None, ""):
            vals[c] = _parse_number(row[c], c, line)
    try:
        if kind == "supervised":
            return SupervisedRun(vals["n"], vals["d"], vals["loss"])
        return DistillRun(vals["n_s"], vals["d_s"], vals["l_t"], vals["l_s"],
                          vals.get("n_t"), vals.get("d_t"))
    except ValueError as e:
        raise RunTableError(f"line {line}: {e}") from None


def _rows_csv(text):
    reader = csv.DictReader(_stdio.StringIO(text))
    header = reader.fieldnames or []
    # DictReader counts physical lines; the header is line 1
    return header, ((reader.line_num, r) for r in reader)


def _rows_jsonl(text):
    rows = []
    for i, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise RunTableError(f"line {i}: invalid JSON ({e.msg})") from None
        if not isinstance(obj, dict):
            raise RunTableError(f"line {i}: expected a JSON object")
        rows.append((i, obj))
    return None, iter(rows)


def load_runs(path, kind: str) -> RunTable:
    """Read and validate a run table. Format is chosen by extension (.jsonl/.json or CSV)."""
    if kind not in COLUMNS:
        raise ValueError(f"kind must be one of {sorted(COLUMNS)}")
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    required, _ = COLUMNS[kind]
    jsonl = path.suffix.lower() in (".jsonl", ".json")
    header, rows = _rows_jsonl(text) if jsonl else _rows_csv(text)
    if header is not None:
        missing = [c for c in required if c not in header]
        if missing:
            raise RunTableError(f"{path}: missing column(s) {', '.join(missing)}")
    records = []
    for line, row in rows:
        missing = [c for c in required if c not in row]
        if missing:
            raise RunTableError(f"line {line}: missing column(s) {', '.join(missing)}")
        records.append(_record(kind, row, line))
    return RunTable(kind, records, str(path))


def runs_to_rows(runs) -> tuple[list[dict], list[str]]:
    runs = list(runs)
    if runs and isinstance(runs[0], DistillRun):
        cols = ["n_s", "d_s", "l_t", "l_s"]
        has_t = all(r.N_T is not None and r.D_T is not None for r in runs)
        if has_t:
            cols += ["n_t", "d_t"]
        rows = []
        for r in runs:
            row = {"n_s": r.N_S, "d_s": r.D_S, "l_t": r.L_T, "l_s": r.L_S}
            if has_t:
                row.update(n_t=r.N_T, d_t=r.D_T)
            rows.append(row)
        return rows, cols
    return [{"n": r.N, "d": r.D, "loss": r.L} for r in runs], ["n", "d", "loss"]


def format_value(v) -> str:
    """Shortest round-trip text for numbers; plain str otherwise."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def _json_safe(v):
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def emit_grid(rows, columns, path=None, format: str = "csv") -> str:
    """Write rows in the given column order. Returns the text; writes it if ``path`` is set.

    Missing cells are empty in CSV and null in JSON. Output is byte-stable
    for identical input.
    """
    if format not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    columns = list(columns)
    if format == "csv":
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        data = [{c: _json_safe(r.get(c)) for c in columns} for r in rows]
        text = json.dumps(data, indent=2, allow_nan=False) + "\n"
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror}") from None
    return text


def write_json(obj, path=None) -> str:
    text = json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- coefficients -----------------------------------------------------------

def load_coeffs(source: str = "reference") -> tuple[SupervisedCoeffs, DistillCoeffs]:
    """Coefficients from ``reference`` or a JSON file.

    The file may hold ``{"supervised": {...}, "distill": {...}}`` or the
    output of ``fit`` (a ``coefficients`` block with a ``law`` field). Any
    missing half falls back to the reference values.
    """
    if source == "reference":
        return REFERENCE_SUPERVISED, REFERENCE_DISTILL
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"coefficient file not found: {source}")
    data = json.loads(path.read_text(encoding="utf-8"))
    sc, dc = REFERENCE_SUPERVISED, REFERENCE_DISTILL
    if "coefficients" in data:
        law = data.get("law", "supervised")
        data = {law: data["coefficients"]}
    try:
        if "supervised" in data:
            sc = SupervisedCoeffs.from_dict(data["supervised"])
        if "distill" in data:
            dc = DistillCoeffs.from_dict(data["distill"])
    except KeyError as e:
        raise ValueError(f"{source}: missing coefficient {e.args[0]}") from None
    return sc, dc


def fixture_path(name: str) -> Path:
    """Path to a bundled data file (``model_sizes.csv``, ``reference_coeffs.json``, synthetic runs)."""
    return Path(str(resources.files("distill_scaling").joinpath("data", name)))


# -- configuration ----------------------------------------------------------

@dataclass
class Config:
    """Settings shared by CLI commands.

    Defaults: reference coefficients, the 128-wide aspect profile, planner
    bounds of [1e6, 1e17] for N_T, D_S and D_T, seed 0, output to stdout.
    """

    coeffs: str = "reference"
    profile: AspectProfile = DEFAULT_PROFILE
    bounds: PlannerBounds = field(default_factory=PlannerBounds)
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "Config":
        known = {"coeffs", "profile", "bounds", "seed", "out"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {', '.join(sorted(extra))}")
        cfg = cls()
        if "coeffs" in d:
            src = str(d["coeffs"])
            if src != "reference":
                p = Path(src)
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                if not p.exists():
                    raise FileNotFoundError(f"coefficient file not found: {p}")
                src = str(p)
            cfg.coeffs = src
        if "profile" in d:
            cfg.profile = AspectProfile(**d["profile"])
        if "bounds" in d:
            cfg.bounds = PlannerBounds(**{k: tuple(v) for k, v in d["bounds"].items()})
        if "seed" in d:
            cfg.seed = int(d["seed"])
        if "out" in d:
            cfg.out = d["out"]
        return cfg


def load_config(path=None) -> Config:
    """Load a JSON config from ``path`` or the ``DISTILL_SCALING_CONFIG`` variable.

    With neither set the defaults are returned.
    """
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return Config.from_dict(json.loads(p.read_text(encoding="utf-8")), p.parent)
