"""CSV and JSON output files for studies."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

logger = logging.getLogger('kn.storage')

SCHEMA_VERSION = 1

CONVERGENCE_COLUMNS = [
    "m", "shift_re", "shift_im", "variant", "rel_error_fro", "phi_used", "objective", "wall_ms",
]


def ensure_output_dir(output_dir: Union[str, Path]) -> Path:
    """Ensure the output directory exists."""
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    path: Union[str, Path],
    schema: str,
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
) -> Path:
    """
    Write a CSV file with a schema comment line and a header row.

    Args:
        path: Destination file
        schema: Schema name recorded as '# schema: <name> v<version>'
        header: Column names
        rows: Row values; floats use repr so they round-trip exactly

    Returns:
        The written path
    """
    path = Path(path)
    ensure_output_dir(path.parent)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        f.write(f"# schema: {schema} v{SCHEMA_VERSION}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info(f"✓ wrote {len(rows)} rows to {path}")
    return path


def read_csv_rows(path: Union[str, Path]) -> List[Dict[str, str]]:
    """
    Read a CSV written by write_csv.

    Returns:
        List of dicts keyed by the header row
    """
    with open(path, 'r', newline='', encoding='utf-8') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    ensure_output_dir(path.parent)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    logger.info(f"✓ wrote {path}")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
