from pathlib import Path
from typing import Optional

from src.config import RunConfig
from src.infrastructure.artifact_store import ArtifactStore, CsvArtifactStore, MemoryArtifactStore

MEMORY = ':memory:'


def create_store(config: RunConfig, command: str, out: Optional[str] = None) -> ArtifactStore:
    """
    Factory choosing where a command writes its artifacts.
    An explicit --out wins; otherwise <output_root>/<command>. ':memory:' keeps nothing on disk.
    """
    target = out if out is not None else str(Path(config.output_root) / command)
    if target == MEMORY or (out is None and config.output_root == MEMORY):
        print("💾 Keeping artifacts in memory")
        return MemoryArtifactStore()
    print(f"💾 Writing artifacts to {target}")
    return CsvArtifactStore(target)
