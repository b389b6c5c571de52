"""Collection of CSV writers and readers.

Every file starts with ``# key=value`` lines describing the run that
produced it, followed by a plain CSV table.
"""
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pyarrow as pa
from pyarrow import csv as pacsv

from selective_prediction import utils
from selective_prediction.core import ObservationKind, Sequence
from selective_prediction.engine import (
    TrialRecord, TrialReport, VarianceCertificate)

logger = utils.get_named_logger("Writers")

COMMENT = "#"

REPORT_SCHEMA = pa.schema([
    ("experiment", pa.string()),
    ("k", pa.int64()),
    ("n", pa.int64()),
    ("trial", pa.int64()),
    ("k_prime", pa.int64()),
    ("t", pa.int64()),
    ("m", pa.int64()),
    ("predicted", pa.float64()),
    ("actual", pa.float64()),
    ("loss", pa.float64()),
    ("probability", pa.float64()),
    ("weighted_loss", pa.float64()),
    ("payload", pa.int64())])

CERTIFICATE_SCHEMA = pa.schema([
    ("t", pa.int64()),
    ("m", pa.int64()),
    ("prefix_id", pa.int64()),
    ("variance", pa.float64())])

FIGURE_SCHEMA = pa.schema([
    ("scale", pa.int64()),
    ("block", pa.int64()),
    ("mean", pa.float64())])

SEQUENCE_SCHEMA = pa.schema([
    ("index", pa.int64()),
    ("value", pa.string())])

SUMMARY_SCHEMA = pa.schema([
    ("check", pa.string()),
    ("relation", pa.string()),
    ("measured", pa.float64()),
    ("bound", pa.float64()),
    ("passed", pa.bool_())])


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


class CommentedCSVWriter:
    """CSV writer with a ``# key=value`` preamble."""

    def __init__(self, path, schema: pa.Schema, header: Optional[Dict] = None):
        """Init."""
        self.path = Path(path)
        self.schema = schema
        self._fh = self.path.open("wb")
        for key, value in (header or {}).items():
            self._fh.write(
                f"{COMMENT} {key}={_format(value)}\n".encode("utf-8"))
        self._writer = pacsv.CSVWriter(self._fh, self.schema)
        self.counter = 0

    def write(self, pylist: List[Dict]):
        """Write records."""
        if len(pylist) > 0:
            batch = pa.RecordBatch.from_pylist(pylist, schema=self.schema)
            self._writer.write_batch(batch)
            self.counter += len(pylist)

    def close(self):
        """Close the csv writer and the file."""
        if self._writer is not None:
            self._writer.close()
            self._writer = None
        if not self._fh.closed:
            self._fh.close()
        logger.debug(f"Wrote {self.counter} rows to {self.path}.")

    def __enter__(self):
        """Enter context."""
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        """Exit context, closing csv file."""
        self.close()


class TrialReportWriter(CommentedCSVWriter):
    """Trial report writer."""

    def __init__(self, path, header: Optional[Dict] = None):
        """Init."""
        super().__init__(path, REPORT_SCHEMA, header)

    @staticmethod
    def _record_to_row(report: TrialReport, record: TrialRecord):
        return {
            "experiment": report.experiment,
            "k": report.k,
            "n": report.n,
            "trial": record.trial,
            "k_prime": record.k_prime,
            "t": record.t,
            "m": record.m,
            "predicted": record.predicted,
            "actual": record.actual,
            "loss": record.loss,
            "probability": record.probability,
            "weighted_loss": record.probability * record.loss,
            "payload": record.payload}

    def write_report(self, report: TrialReport):
        """Write every record of a report."""
        self.write([self._record_to_row(report, r) for r in report.records])


def read_header(path) -> Dict[str, str]:
    """Return the ``# key=value`` preamble of a file as strings."""
    header = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith(COMMENT):
                break
            key, _, value = line[len(COMMENT):].strip().partition("=")
            header[key] = value
    return header


def read_table(path, column_types: Optional[Dict] = None) -> pa.Table:
    """Read the CSV table following the preamble."""
    skip = len(read_header(path))
    return pacsv.read_csv(
        str(path),
        read_options=pacsv.ReadOptions(skip_rows=skip),
        convert_options=pacsv.ConvertOptions(column_types=column_types))


def write_report(report: TrialReport, path, header: Optional[Dict] = None):
    """Write a trial report CSV."""
    preamble = {
        "experiment": report.experiment, "master_seed": report.master_seed,
        "exact": report.exact, "mean": report.mean,
        "ci_half_width": report.ci_half_width}
    preamble.update(header or {})
    with TrialReportWriter(path, preamble) as writer:
        writer.write_report(report)
    logger.info(f"Wrote {report.trials} report rows to {path}.")


def read_report(path) -> TrialReport:
    """Read a trial report CSV back."""
    header = read_header(path)
    table = read_table(path, {f.name: f.type for f in REPORT_SCHEMA})
    rows = table.to_pylist()
    records = [
        TrialRecord(
            r["trial"], r["loss"], r["probability"], r["k_prime"], r["t"],
            r["m"], r["predicted"], r["actual"], r["payload"])
        for r in rows]
    first = rows[0] if rows else {}
    return TrialReport(
        header.get("experiment", first.get("experiment", "")),
        first.get("n"), int(header.get("master_seed", 0)), records,
        exact=header.get("exact") == "True", k=first.get("k"))


def write_certificate(
        certificate: VarianceCertificate, path,
        header: Optional[Dict] = None):
    """Write every (t, m, prefix) variance and the certified minimum."""
    t, m, prefix_id = certificate.argmin
    preamble = {
        "n": certificate.n, "k": certificate.k,
        "constraint": certificate.constraint.value,
        "outcomes": certificate.outcomes,
        "min_variance": certificate.min_variance,
        "argmin_t": t, "argmin_m": m, "argmin_prefix_id": prefix_id}
    preamble.update(header or {})
    with CommentedCSVWriter(path, CERTIFICATE_SCHEMA, preamble) as writer:
        writer.write([
            {"t": a, "m": b, "prefix_id": c, "variance": v}
            for a, b, c, v in certificate.entries])


def write_figure(rows: List[Dict], path, header: Optional[Dict] = None):
    """Write (scale, block, mean) rows."""
    with CommentedCSVWriter(path, FIGURE_SCHEMA, header) as writer:
        writer.write(rows)


def write_summary(results, path, header: Optional[Dict] = None):
    """Write one row per acceptance check."""
    with CommentedCSVWriter(path, SUMMARY_SCHEMA, header) as writer:
        writer.write([
            {"check": r.name, "relation": r.relation,
             "measured": r.measured, "bound": r.bound, "passed": r.passed}
            for r in results])


def write_sequence(seq: Sequence, path):
    """Export a sequence as (index, value).

    Reals are written with 17 significant digits, which round-trips
    doubles; symbols are written as integers.
    """
    header = {"kind": seq.kind.name, "n": seq.n}
    if seq.alphabet_size is not None:
        header["alphabet_size"] = seq.alphabet_size
    if seq.kind is ObservationKind.real:
        values = [format(v, ".17g") for v in seq.values.tolist()]
    else:
        values = [str(v) for v in seq.values.tolist()]
    with CommentedCSVWriter(path, SEQUENCE_SCHEMA, header) as writer:
        writer.write([
            {"index": i, "value": v} for i, v in enumerate(values)])


def read_sequence(path) -> Sequence:
    """Import a sequence written by :func:`write_sequence`."""
    header = read_header(path)
    kind = ObservationKind[header.get("kind", "real")]
    table = read_table(path, {"index": pa.int64(), "value": pa.string()})
    index = np.asarray(table.column("index").to_pylist())
    if not np.array_equal(index, np.arange(len(index))):
        raise ValueError(f"{path} does not list indices 0..n-1 in order.")
    raw = table.column("value").to_pylist()
    if kind is ObservationKind.real:
        return Sequence(np.array([float(v) for v in raw]))
    alphabet = header.get("alphabet_size")
    return Sequence.from_symbols(
        [int(v) for v in raw],
        alphabet_size=int(alphabet) if alphabet else None)
