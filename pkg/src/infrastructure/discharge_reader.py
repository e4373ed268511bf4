import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from src.domain.errors import DataError

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class DischargeSeries:
    """Discharge record in m3/s with times in hours since the first sample."""
    times: np.ndarray
    values: np.ndarray
    start: datetime
    gaps: List[Tuple[int, float]] = field(default_factory=list)  # (line, gap hours)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> float:
        """Typical sampling interval in hours."""
        return float(np.median(np.diff(self.times))) if len(self) > 1 else 1.0


def _parse_timestamp(text: str) -> datetime:
    stamp = datetime.fromisoformat(text.strip().replace('Z', '+00:00'))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp


def _is_header(row: List[str]) -> bool:
    """Column names only: no digit in the timestamp cell and no number in the discharge cell."""
    if any(ch.isdigit() for ch in row[0]):
        return False
    try:
        float(row[1])
    except ValueError:
        return True
    return False


def ingest_discharge(path: Union[str, Path]) -> DischargeSeries:
    """
    Read (timestamp, discharge) rows from a CSV file.
    This is the anti-corruption layer between gauge exports and the domain:
    every bad row is collected and reported at once with its line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"discharge file not found: {path}")

    stamps, values, bad = [], [], []
    line_numbers = []
    try:
        with open(path, newline='', encoding='utf-8') as f:
            for line_no, row in enumerate(csv.reader(f), start=1):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) < 2:
                    bad.append(line_no)
                    continue
                try:
                    stamp = _parse_timestamp(row[0])
                    q = float(row[1])
                except ValueError:
                    # a header line is tolerated only as the first row
                    if line_no == 1 and _is_header(row):
                        continue
                    bad.append(line_no)
                    continue
                if not np.isfinite(q) or q < 0:
                    bad.append(line_no)
                    continue
                if stamps and stamp <= stamps[-1]:
                    bad.append(line_no)
                    continue
                stamps.append(stamp)
                values.append(q)
                line_numbers.append(line_no)
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not UTF-8 text (byte {e.start}: {e.reason})") from e

    if bad:
        shown = ', '.join(str(n) for n in bad[:20])
        more = f" (+{len(bad) - 20} more)" if len(bad) > 20 else ''
        raise DataError(
            f"{path}: {len(bad)} unusable rows (unparseable, negative discharge or "
            f"non-monotone timestamp) at lines {shown}{more}",
            offending_lines=bad,
        )
    if not values:
        raise DataError(f"{path}: no discharge rows found")

    start = stamps[0]
    times = np.array([(s - start).total_seconds() / SECONDS_PER_HOUR for s in stamps])
    gaps = []
    if len(times) > 1:
        steps = np.diff(times)
        nominal = float(np.median(steps))
        for k in np.flatnonzero(steps > 1.5 * nominal):
            gaps.append((line_numbers[k + 1], float(steps[k])))
    if gaps:
        print(f"⚠️  {len(gaps)} gaps in the discharge record (first at line {gaps[0][0]}, "
              f"{gaps[0][1]:.1f} h)")
    print(f"📊 Read {len(values):,} discharge samples from {path.name}")
    return DischargeSeries(times=times, values=np.array(values), start=start, gaps=gaps)
