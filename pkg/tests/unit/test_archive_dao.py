"""Unit tests for atomic archive writing."""

import json

import pytest

from src.core.config import RunConfig
from src.core.exceptions import ConflictError, NotFoundError
from src.dao.archive_dao import ArchiveWriter, ensure_writable, load_archive
from src.schemas.archive import ARCHIVE_FILE, RunArchive, StageState, StageStatus


@pytest.fixture
def archive() -> RunArchive:
    return RunArchive(
        tool_version="0.1.0",
        command="solve",
        seed=4,
        config=RunConfig(),
        stages=[StageStatus(name="solve k=0", state=StageState.OK)],
        verdicts={"k=0:sign_changes": True},
    )


class TestEnsureWritable:
    """Tests for ensure_writable."""

    def test_existing_target_needs_force(self, tmp_path):
        """Test that an existing directory is a conflict without force."""
        with pytest.raises(ConflictError, match="--force"):
            ensure_writable(tmp_path, force=False)
        ensure_writable(tmp_path, force=True)


class TestArchiveWriter:
    """Tests for ArchiveWriter."""

    def test_commit_moves_staging_into_place(self, out_dir, archive):
        """Test that nothing appears at the target before commit."""
        with ArchiveWriter(out_dir, force=False) as writer:
            writer.write_archive(archive)
            assert not out_dir.exists()
            path = writer.commit()
        assert path == out_dir
        assert (out_dir / ARCHIVE_FILE).is_file()
        prefix = f".{out_dir.name}."
        assert not any(p.name.startswith(prefix) for p in out_dir.parent.iterdir())

    def test_abort_leaves_no_trace(self, out_dir, archive):
        """Test that an exception inside the block discards the staging directory."""
        with pytest.raises(RuntimeError), ArchiveWriter(out_dir, force=False) as writer:
            writer.write_archive(archive)
            raise RuntimeError("boom")
        assert not out_dir.exists()
        assert list(out_dir.parent.iterdir()) == []

    def test_force_replaces_previous_archive(self, out_dir, archive):
        """Test that --force swaps the old directory for the new one."""
        out_dir.mkdir()
        (out_dir / "stale.csv").write_text("old", encoding="utf-8")
        with ArchiveWriter(out_dir, force=True) as writer:
            writer.write_archive(archive)
            writer.commit()
        assert not (out_dir / "stale.csv").exists()
        assert (out_dir / ARCHIVE_FILE).is_file()


class TestLoadArchive:
    """Tests for load_archive."""

    def test_reload_from_directory_and_file(self, out_dir, archive):
        """Test that the archive reloads equal from either path."""
        with ArchiveWriter(out_dir, force=False) as writer:
            writer.write_archive(archive)
            writer.commit()
        assert load_archive(out_dir) == archive
        assert load_archive(out_dir / ARCHIVE_FILE).seed == 4

    def test_failed_verdict_survives(self, out_dir, archive):
        """Test that a failed verdict is written and fails the reloaded archive."""
        archive.verdicts["x"] = False
        with ArchiveWriter(out_dir, force=False) as writer:
            path = writer.write_archive(archive)
            text = path.read_text(encoding="utf-8")
            writer.commit()
        assert json.loads(text)["verdicts"] == {"k=0:sign_changes": True, "x": False}
        assert not load_archive(out_dir).passed

    def test_missing_archive(self, tmp_path):
        """Test that an empty directory has no archive."""
        with pytest.raises(NotFoundError, match="No archive"):
            load_archive(tmp_path)
