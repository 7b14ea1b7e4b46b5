"""Data Access Object for run archives.

Everything is written into a staging directory beside the target and renamed
into place on commit, so the final path never holds a partial archive.
"""

from pathlib import Path
import shutil
import tempfile
from threading import Lock
from types import TracebackType

from loguru import logger

from src.core.exceptions import ConflictError, NotFoundError
from src.schemas.archive import ARCHIVE_FILE, RunArchive


def ensure_writable(target: Path, *, force: bool) -> None:
    """Refuse an existing output directory unless ``force`` is set."""
    if target.exists() and not force:
        raise ConflictError(
            message=f"Output directory {target} exists; pass --force to overwrite",
            details={"path": str(target)},
        )


class ArchiveWriter:
    """The single writer of one archive directory."""

    def __init__(self, target: Path, *, force: bool) -> None:
        ensure_writable(target, force=force)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.target: Path = target
        self.force: bool = force
        self.staging: Path = Path(
            tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent)
        )
        self._lock: Lock = Lock()
        self._committed: bool = False

    def path(self, name: str) -> Path:
        """Staging path of a file; callers write through it while holding ``lock``."""
        return self.staging / name

    @property
    def lock(self) -> Lock:
        return self._lock

    def write_archive(self, archive: RunArchive) -> Path:
        with self._lock:
            path = self.staging / ARCHIVE_FILE
            path.write_text(archive.model_dump_json(indent=2), encoding="utf-8")
        return path

    def commit(self) -> Path:
        """Move the staged directory onto the target path."""
        with self._lock:
            ensure_writable(self.target, force=self.force)
            if self.target.exists():
                trash = Path(
                    tempfile.mkdtemp(
                        prefix=f".{self.target.name}.old.", dir=self.target.parent
                    )
                )
                self.target.rename(trash / self.target.name)
                self.staging.rename(self.target)
                shutil.rmtree(trash)
            else:
                self.staging.rename(self.target)
            self._committed = True
        logger.success(f"Archive written to {self.target}")
        return self.target

    def abort(self) -> None:
        if not self._committed:
            shutil.rmtree(self.staging, ignore_errors=True)

    def __enter__(self) -> "ArchiveWriter":
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.abort()


def load_archive(path: Path) -> RunArchive:
    """Reload an archive from its directory or its JSON file."""
    file = path / ARCHIVE_FILE if path.is_dir() else path
    if not file.is_file():
        raise NotFoundError(
            message=f"No archive at {path}", details={"path": str(path)}
        )
    return RunArchive.model_validate_json(file.read_text(encoding="utf-8"))
