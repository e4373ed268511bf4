import csv
import io
import json
import os
import tempfile
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Sequence, Tuple


class ArtifactStore(ABC):
    """
    Abstract destination for run artifacts (CSV tables, metadata, plot scripts).
    Lets the services write to a directory or keep everything in memory for tests.
    """

    @abstractmethod
    def setup(self) -> None:
        """Prepare the destination."""
        pass

    @abstractmethod
    def _write_text(self, name: str, text: str) -> None:
        pass

    @abstractmethod
    def _read_text(self, name: str) -> str:
        pass

    @abstractmethod
    def exists(self, name: str) -> bool:
        pass

    @abstractmethod
    def location(self, name: str) -> str:
        """Human readable location of an artifact."""
        pass

    def write_table(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
        self._write_text(name, buffer.getvalue())
        return self.location(name)

    def read_table(self, name: str) -> Tuple[List[str], List[List[str]]]:
        """Header and rows exactly as written (cells stay strings)."""
        rows = list(csv.reader(io.StringIO(self._read_text(name))))
        if not rows:
            return [], []
        return rows[0], rows[1:]

    def write_metadata(self, metadata: Dict, name: str = 'metadata.json') -> str:
        self._write_text(name, json.dumps(metadata, indent=2, sort_keys=True) + '\n')
        return self.location(name)

    def read_metadata(self, name: str = 'metadata.json') -> Dict:
        return json.loads(self._read_text(name))

    def write_text(self, name: str, text: str) -> str:
        self._write_text(name, text)
        return self.location(name)

    def read_text(self, name: str) -> str:
        return self._read_text(name)


class CsvArtifactStore(ArtifactStore):
    """Files under one directory; every write goes to a temp file then os.replace."""

    def __init__(self, root):
        self.root = Path(root)

    def setup(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        return self.root / name

    def _write_text(self, name: str, text: str) -> None:
        target = self._path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix='.tmp')
        try:
            with os.fdopen(fd, 'w', newline='', encoding='utf-8') as f:
                f.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _read_text(self, name: str) -> str:
        with open(self._path(name), newline='', encoding='utf-8') as f:
            return f.read()

    def exists(self, name: str) -> bool:
        return self._path(name).exists()

    def location(self, name: str) -> str:
        return str(self._path(name))


class MemoryArtifactStore(ArtifactStore):
    """Keeps artifacts in a dict."""

    def __init__(self):
        self.files: Dict[str, str] = {}

    def setup(self) -> None:
        pass

    def _write_text(self, name: str, text: str) -> None:
        self.files[name] = text

    def _read_text(self, name: str) -> str:
        try:
            return self.files[name]
        except KeyError:
            raise FileNotFoundError(name) from None

    def exists(self, name: str) -> bool:
        return name in self.files

    def location(self, name: str) -> str:
        return f"memory://{name}"


def heatmap_script(table: str, title: str, value_label: str) -> str:
    """Gnuplot script rendering a long-format (q, s, value) CSV as a heat map."""
    stem = Path(table).stem
    return (
        "set datafile separator ','\n"
        "set terminal pngcairo size 800,640\n"
        f"set output '{stem}.png'\n"
        f"set title '{title}'\n"
        "set xlabel 'Q / Qbar'\n"
        "set ylabel 'S / Sbar'\n"
        f"set cblabel '{value_label}'\n"
        "set xrange [0:1]\n"
        "set yrange [0:1]\n"
        f"plot '{Path(table).name}' every ::1 using 1:2:3 with image notitle\n"
    )
