"""CSV readers for the two documented schemas.

Sweep tables carry one row per (method, m) with relative errors; spectrum
dumps carry one singular value per row.  Readers validate columns up front
so a schema mismatch fails with a clear message instead of a KeyError
deep inside matplotlib.
"""

import csv


class FigureDataError(ValueError):
    """Input CSV missing, empty, or not in the documented schema."""


SWEEP_COLUMNS = ("problem", "method", "m", "e_L2", "e_H")
SPECTRUM_COLUMNS = ("j", "lambda")


def _read_rows(path, required):
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as e:
        raise FigureDataError(f"cannot read {path}: {e}") from e
    if header is None:
        raise FigureDataError(f"{path} is empty")
    missing = [c for c in required if c not in header]
    if missing:
        raise FigureDataError(f"{path} lacks required columns {missing}")
    if not rows:
        raise FigureDataError(f"{path} has a header but no data rows")
    return rows


def read_sweep(path):
    """Rows of a sweep CSV with m and the error columns parsed to numbers.

    Rows whose errors are not finite numbers (failed solves) are kept with
    value None so callers can skip them explicitly.
    """
    out = []
    for raw in _read_rows(path, SWEEP_COLUMNS):
        row = {"problem": raw["problem"], "method": raw["method"]}
        try:
            row["m"] = int(raw["m"])
        except ValueError as e:
            raise FigureDataError(f"{path}: bad m value {raw['m']!r}") from e
        for key in ("e_L2", "e_H"):
            try:
                v = float(raw[key])
            except ValueError:
                v = float("nan")
            row[key] = v if v == v else None
        out.append(row)
    return out


def read_spectrum(path):
    """(j, lambda) columns of one spectrum dump, as parallel float lists."""
    js, lams = [], []
    for raw in _read_rows(path, SPECTRUM_COLUMNS):
        try:
            js.append(float(raw["j"]))
            lams.append(float(raw["lambda"]))
        except ValueError as e:
            raise FigureDataError(f"{path}: non-numeric spectrum row") from e
    return js, lams
