"""File formats: datasets, fit results, scenario configs, metrics tables.

Datasets are UTF-8 delimited text with a header that fixes the arm structure
(``study,y1,n1,y0,n0`` or ``study,y,n``); ``#`` starts a comment line.
Results go out as one fixed-column CSV row per fit; floats are written with
``repr`` so a read-back reproduces them bit for bit.
"""

from __future__ import annotations

import csv
import io as _io
import math

from .effects import OneArmStudy, TwoArmStudy
from .estimation import FitResult
from .simulation import SENSITIVITY_ESTIMATORS, MetricsRow, Scenario, estimator_names

TWO_ARM_HEADER = ["study", "y1", "n1", "y0", "n0"]
ONE_ARM_HEADER = ["study", "y", "n"]

RESULT_COLUMNS = ["method", "p_min", "p_max", "m_raw", "m_rounded", "theta",
                  "se_theta", "ci_lo", "ci_hi", "tau", "rho", "loglik",
                  "converged", "on_boundary"]


class DataFormatError(ValueError):
    """Malformed dataset, scenario, or result file."""


def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def parse_dataset(text: str):
    """Parse dataset text into a list of study records.

    Raises
    ------
    DataFormatError
        With the offending line number, on any structural problem.
    """
    lines = list(_data_lines(text))
    if not lines:
        raise DataFormatError("no rows found")
    header_no, header_line = lines[0]
    header = [c.strip() for c in header_line.split(",")]
    if header == TWO_ARM_HEADER:
        two_arm = True
    elif header == ONE_ARM_HEADER:
        two_arm = False
    else:
        raise DataFormatError(
            f"line {header_no}: header must be "
            f"{','.join(TWO_ARM_HEADER)} or {','.join(ONE_ARM_HEADER)}, "
            f"got {header_line!r}")
    studies = []
    seen = set()
    for lineno, line in lines[1:]:
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise DataFormatError(
                f"line {lineno}: expected {len(header)} fields, got {len(cells)}")
        label = cells[0]
        if label in seen:
            raise DataFormatError(f"line {lineno}: duplicate study id {label!r}")
        seen.add(label)
        try:
            counts = [int(c) for c in cells[1:]]
        except ValueError:
            raise DataFormatError(
                f"line {lineno}: counts must be integers, got {cells[1:]}") from None
        try:
            study = TwoArmStudy(*counts) if two_arm else OneArmStudy(*counts)
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: {exc}") from None
        studies.append(study)
    if not studies:
        raise DataFormatError("dataset has a header but no data rows")
    return studies


def read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def write_dataset(path, studies) -> None:
    two_arm = isinstance(studies[0], TwoArmStudy)
    header = TWO_ARM_HEADER if two_arm else ONE_ARM_HEADER
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, s in enumerate(studies, start=1):
            if two_arm:
                writer.writerow([i, s.y1, s.n1, s.y0, s.n0])
            else:
                writer.writerow([i, s.y, s.n])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def result_row(res: FitResult) -> list:
    ci = res.ci.get("theta") if res.ci else None
    return [res.method, _fmt(res.p_min), _fmt(res.p_max), _fmt(res.m_raw),
            _fmt(res.m_rounded), _fmt(res.params.get("theta")),
            _fmt(res.se.get("theta") if res.se else None),
            _fmt(ci[0] if ci else None), _fmt(ci[1] if ci else None),
            _fmt(res.params.get("tau")), _fmt(res.params.get("rho")),
            _fmt(res.loglik), _fmt(res.converged),
            ";".join(res.on_boundary)]


def format_results(results) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for res in results:
        writer.writerow(result_row(res))
    return buf.getvalue()


def write_results(path, results) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_results(results))


def read_results(path):
    """Read a result file back into a list of plain dicts (floats restored)."""
    float_cols = ("p_min", "p_max", "m_raw", "theta", "se_theta", "ci_lo",
                  "ci_hi", "tau", "rho", "loglik")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise DataFormatError(
                f"unexpected result columns {reader.fieldnames}")
        for rec in reader:
            row = dict(rec)
            for col in float_cols:
                row[col] = float(rec[col]) if rec[col] else None
            row["m_rounded"] = int(rec["m_rounded"]) if rec["m_rounded"] else None
            row["converged"] = rec["converged"] == "true"
            row["on_boundary"] = tuple(
                rec["on_boundary"].split(";")) if rec["on_boundary"] else ()
            rows.append(row)
    return rows


def write_plot_data(path, results) -> None:
    """Plot-ready sweep series: p_min axis with M annotations and theta CI."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p_min", "m_raw", "m_rounded", "theta",
                         "ci_lo", "ci_hi"])
        for res in sorted(results, key=lambda r: -(r.p_min or 0.0)):
            ci = res.ci.get("theta") if res.ci else None
            writer.writerow([
                _fmt(res.p_min), _fmt(res.m_raw), _fmt(res.m_rounded),
                _fmt(res.params.get("theta")),
                _fmt(ci[0] if ci else None), _fmt(ci[1] if ci else None)])


# ---------------------------------------------------------------------------
# scenario files: "key = value" lines, # comments

_SCENARIO_KEYS = {"dgp", "studies", "theta", "tau2", "rho", "n_min", "n_max",
                  "alloc", "y_min", "y_max", "p0", "pmin", "pmax"}


def parse_scenario(text: str) -> Scenario:
    """Parse a declarative scenario file into a Scenario.

    Raises
    ------
    DataFormatError
        Listing every unknown key, or naming the malformed line.
    """
    values = {}
    for lineno, line in _data_lines(text):
        if "=" not in line:
            raise DataFormatError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    unknown = sorted(set(values) - _SCENARIO_KEYS)
    if unknown:
        raise DataFormatError(f"unknown scenario keys: {', '.join(unknown)}")
    missing = [k for k in ("dgp", "studies", "tau2", "n_min", "n_max")
               if k not in values]
    if missing:
        raise DataFormatError(f"missing scenario keys: {', '.join(missing)}")

    def num(key, default=None):
        if key not in values:
            return default
        try:
            return float(values[key])
        except ValueError:
            raise DataFormatError(f"key {key}: not a number: {values[key]!r}") \
                from None

    try:
        return Scenario(
            dgp=values["dgp"],
            s_population=int(num("studies")),
            n_range=(int(num("n_min")), int(num("n_max"))),
            tau2=num("tau2"),
            theta=num("theta", -2.0),
            rho=num("rho", 0.8),
            alloc_ratio=values.get("alloc"),
            y_total_range=((int(num("y_min")), int(num("y_max")))
                           if "y_min" in values or "y_max" in values else None),
            p0=num("p0"),
            p_min=num("pmin", 0.2),
            p_max=num("pmax", 0.99),
        )
    except (ValueError, TypeError) as exc:
        raise DataFormatError(str(exc)) from None


def read_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def format_metrics(row: MetricsRow) -> str:
    """Single-row CSV mirroring the simulation summary tables."""
    names = estimator_names(row.scenario)
    header = ["scenario", "reps", "degenerate", "n_mean",
              "rare_share_pop", "rare_share_pub"]
    cells = [row.scenario.label(), row.reps, row.degenerate,
             _fmt(row.mean_published), _fmt(row.rare_share_population),
             _fmt(row.rare_share_published)]
    for name in names:
        s = row.estimators[name]
        header.append(f"{name}_bias100")
        cells.append(_fmt(s.bias_x100))
        if name in SENSITIVITY_ESTIMATORS:
            header.append(f"{name}_cp")
            cells.append(_fmt(s.coverage))
        header.append(f"{name}_conv")
        cells.append(_fmt(s.convergence_rate))
        header.append(f"{name}_tau2")
        cells.append(_fmt(s.mean_tau2))
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerow(cells)
    return buf.getvalue()


def write_metrics(path, row: MetricsRow) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_metrics(row))
