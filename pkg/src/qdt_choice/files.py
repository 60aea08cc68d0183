"""Reading and writing parameter JSON and report CSV files."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingParams
from .estimation import FitResult
from .model import AttractionParams, UtilityParams

FEATURE_COLUMNS = (
    "subject_id",
    "block_id",
    "trial_index",
    "initial_amount",
    "win_prob",
    "framing",
    "time_limit",
    "need_level",
    "current_score",
    "sure_amount",
    "previous_outcome",
    "is_catch",
    "std",
    "need_gap",
    "previous_indicator",
    "chose_gamble",
)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, data) -> None:
    atomic_write_text(path, json.dumps(data, indent=2) + "\n")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def params_to_dict(up: UtilityParams, ap: AttractionParams | None) -> dict:
    out = {"utility": up.to_dict()}
    if ap is not None:
        out["attraction"] = ap.to_dict()
    return out


def params_from_dict(d: dict) -> tuple[UtilityParams, AttractionParams | None]:
    attraction = d.get("attraction")
    return (
        UtilityParams.from_dict(d["utility"]),
        None if attraction is None else AttractionParams.from_dict(attraction),
    )


def safe_name(name: str) -> str:
    """File-system safe version of a subject id."""
    return "".join(c if c.isalnum() or c in "-_.+" else "_" for c in name)


def params_path(out_dir: str | Path, subject_id: str) -> Path:
    return Path(out_dir) / "params" / f"{safe_name(subject_id)}.json"


def load_fit_entries(out_dir: str | Path, subject_id: str) -> list[dict]:
    path = params_path(out_dir, subject_id)
    if not path.exists():
        return []
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_fits(out_dir: str | Path, subject_id: str, fits: Sequence[FitResult],
              extra: dict) -> Path:
    """Store one subject's per-fold fits, replacing earlier entries of the same model.

    Entries for other models are kept so several models can be compared
    from a single output directory.
    """
    label = fits[0].model.label
    entries = [e for e in load_fit_entries(out_dir, subject_id) if e["model"] != label]
    for res in fits:
        entries.append({"subject": subject_id, **res.to_dict(), **extra})
    entries.sort(key=lambda e: (e["model"], e["fold"]))
    path = params_path(out_dir, subject_id)
    write_json(path, entries)
    return path


def load_fits(out_dir: str | Path, subject_id: str) -> dict[str, tuple[list[FitResult], dict]]:
    """Fits per model label, with the fold settings (seed, n_folds, include_catch) used."""
    entries = load_fit_entries(out_dir, subject_id)
    if not entries:
        raise MissingParams(f"no fitted parameters for subject {subject_id!r} in {out_dir}")
    out: dict[str, tuple[list[FitResult], dict]] = {}
    for e in entries:
        fits, settings = out.setdefault(
            e["model"],
            ([], {"seed": e["seed"], "n_folds": e["n_folds"],
                  "include_catch": e.get("include_catch", True)}),
        )
        fits.append(FitResult.from_dict(e))
    return out
