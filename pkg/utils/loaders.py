"""Calibration document loaders for the ZNE toolkit."""

import csv
import io
import json
import re

from .exceptions import CalibrationError

# IBM calibration export column names.
READOUT_P01_COLUMN = "Prob meas0 prep1"
READOUT_P10_COLUMN = "Prob meas1 prep0"
ONE_QUBIT_COLUMNS = ("ID error", "Sx error", "Pauli-X error")
CNOT_COLUMN = "CNOT error"
PROPERTY_COLUMNS = {
    "T1 (us)": "t1_us",
    "T2 (us)": "t2_us",
    "Frequency (GHz)": "frequency_ghz",
    "Anharmonicity (GHz)": "anharmonicity_ghz",
    "Readout assignment error": "readout_assignment_error",
    "Readout length (ns)": "readout_length_ns",
}

_PAIR_ENTRY = re.compile(r"^\s*(\d+)_(\d+)\s*:\s*(\S+)\s*$")


def load_calibration(raw: bytes, ext: str) -> dict:
    """
    Decodes a calibration document into the JSON-schema dictionary.

    Args:
        raw: The raw bytes of the document.
        ext: The file extension ('.csv' or '.json'); anything else is sniffed.

    Returns:
        A dict with keys backend, date, num_qubits, one_qubit_error, readout,
        two_qubit_error and properties, values not yet range-checked.

    Raises:
        CalibrationError: If the document cannot be decoded.
    """
    ext = ext.lower().strip(".")
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise CalibrationError(f"calibration document is not UTF-8: {e}") from e

    if ext not in ("csv", "json"):
        ext = "json" if text.lstrip().startswith("{") else "csv"

    if ext == "json":
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise CalibrationError(f"invalid JSON calibration: {e}") from e
        if not isinstance(document, dict):
            raise CalibrationError("JSON calibration must be an object")
        return document
    return parse_calibration_csv(text)


def parse_calibration_csv(text: str, backend: str = "", date: str = "") -> dict:
    """Parses the per-qubit calibration table (one row per qubit)."""
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise CalibrationError("calibration CSV has no header")
    fieldnames = [name.strip() for name in reader.fieldnames]
    if "Qubit" not in fieldnames:
        raise CalibrationError("calibration CSV needs a 'Qubit' column")

    one_qubit_error: dict[str, float] = {}
    readout: dict[str, list[float]] = {}
    two_qubit_error: dict[str, float] = {}
    properties: dict[str, dict[str, float]] = {}
    max_qubit = -1

    for row_number, row in enumerate(reader, start=2):
        row = {(k or "").strip(): (v or "").strip() for k, v in row.items()}
        if not row.get("Qubit"):
            continue
        qubit = _as_int(row["Qubit"], row_number, "Qubit")
        max_qubit = max(max_qubit, qubit)
        key = str(qubit)

        errors = [_as_float(row[c], row_number, c) for c in ONE_QUBIT_COLUMNS if row.get(c)]
        if errors:
            one_qubit_error[key] = max(errors)

        if row.get(READOUT_P01_COLUMN) and row.get(READOUT_P10_COLUMN):
            readout[key] = [
                _as_float(row[READOUT_P01_COLUMN], row_number, READOUT_P01_COLUMN),
                _as_float(row[READOUT_P10_COLUMN], row_number, READOUT_P10_COLUMN),
            ]

        stored = {
            name: _as_float(row[column], row_number, column)
            for column, name in PROPERTY_COLUMNS.items() if row.get(column)
        }
        if stored:
            properties[key] = stored

        for entry in filter(None, (e.strip() for e in row.get(CNOT_COLUMN, "").split(";"))):
            match = _PAIR_ENTRY.match(entry)
            if not match:
                raise CalibrationError(f"row {row_number}: malformed CNOT entry '{entry}'")
            pair = f"{match.group(1)}_{match.group(2)}"
            value = _as_float(match.group(3), row_number, CNOT_COLUMN)
            if pair in two_qubit_error and two_qubit_error[pair] != value:
                raise CalibrationError(
                    f"row {row_number}: conflicting values for {pair}: "
                    f"{two_qubit_error[pair]} vs {value}"
                )
            two_qubit_error[pair] = value

    return {
        "backend": backend,
        "date": date,
        "num_qubits": max_qubit + 1,
        "one_qubit_error": one_qubit_error,
        "readout": readout,
        "two_qubit_error": two_qubit_error,
        "properties": properties,
    }


def _as_float(value: str, row_number: int, column: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise CalibrationError(f"row {row_number}: '{column}' is not a number: '{value}'")


def _as_int(value: str, row_number: int, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise CalibrationError(f"row {row_number}: '{column}' is not an integer: '{value}'")
