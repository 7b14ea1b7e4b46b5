"""Integration tests for the ``nodal`` command line."""

from collections.abc import Generator
import json
from pathlib import Path

from loguru import logger
import pytest

from src.dao.archive_dao import load_archive
from src.main import main
from src.schemas.archive import ARCHIVE_FILE

pytestmark = pytest.mark.integration

SMALL_CONFIG = """\
[problem]
b = 0.001
R = 10.0

[mesh]
cells_per_annulus = 16

[solver]
residual_tol = 1e-5
diameter_tol = 1e-3
max_evaluations = 60
restarts = 1
probe_coercivity = false
sobolev_restarts = 1
oracle_grid = 3
"""


@pytest.fixture(autouse=True)
def reset_logger() -> Generator[None, None, None]:
    """Drop the file sinks main() installs so temp dirs can be removed."""
    yield
    logger.remove()


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


def _argv(tmp_path: Path, config: Path, out: Path, *command: str) -> list[str]:
    return [
        *command,
        "--config",
        str(config),
        "--out",
        str(out),
        "--log-dir",
        str(tmp_path / "logs"),
        "--log-level",
        "WARNING",
    ]


def _expected_code(out: Path) -> int:
    return 0 if load_archive(out).passed else 1


class TestSolveCommand:
    """Tests for ``nodal solve``."""

    def test_ground_state_run(self, tmp_path, config_file, capsys):
        """Test that solve --k 0 writes the archive, tables and profiles."""
        out = tmp_path / "k0"
        code = main(_argv(tmp_path, config_file, out, "solve", "--k", "0"))
        assert code == _expected_code(out)
        archive = load_archive(out)
        assert archive.config.problem.k == 0
        assert archive.verdicts["k=0:sign_changes"]
        assert (out / "energies.csv").is_file()
        assert (out / "k0_glued.csv").is_file()
        summary = json.loads(capsys.readouterr().out)
        assert summary["command"] == "solve"

    def test_rerun_without_force(self, tmp_path, config_file, capsys):
        """Test that an existing output directory exits with 3 until --force."""
        out = tmp_path / "again"
        argv = _argv(tmp_path, config_file, out, "solve", "--k", "0")
        main(argv)
        capsys.readouterr()
        assert main(argv) == 3
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"]["code"] == "conflict"
        assert main([*argv, "--force"]) == _expected_code(out)

    def test_same_seed_same_energy(self, tmp_path, config_file):
        """Test that two runs with one seed produce identical energies."""
        first, second = tmp_path / "a", tmp_path / "b"
        main(_argv(tmp_path, config_file, first, "solve", "--k", "0", "--seed", "5"))
        main(_argv(tmp_path, config_file, second, "solve", "--k", "0", "--seed", "5"))
        energies = [load_archive(d).solves[0].energy for d in (first, second)]
        assert energies[0] == energies[1]
        assert load_archive(first).seed == 5


class TestConfigErrors:
    """Tests for configuration and usage failures."""

    def test_invalid_config(self, tmp_path, capsys):
        """Test that p outside (2,4) exits with 3 and writes nothing."""
        config = tmp_path / "bad.toml"
        config.write_text("[problem]\np = 5.0\n", encoding="utf-8")
        out = tmp_path / "never"
        assert main(_argv(tmp_path, config, out, "solve")) == 3
        assert not out.exists()
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["exit_code"] == 3
        assert payload["error"]["details"]["violations"][0]["key"] == "problem.p"

    def test_unknown_command(self, tmp_path, config_file):
        """Test that a usage error exits with 3."""
        assert main(_argv(tmp_path, config_file, tmp_path / "x", "frobnicate")) == 3


class TestOtherCommands:
    """Tests for sp-estimate and nehari-check."""

    def test_sp_estimate(self, tmp_path, config_file):
        """Test that sp-estimate records a positive constant."""
        out = tmp_path / "sp"
        assert main(_argv(tmp_path, config_file, out, "sp-estimate", "--q", "2")) == 0
        archive = load_archive(out)
        assert archive.sobolev is not None
        assert archive.sobolev.q == 2.0
        assert (out / ARCHIVE_FILE).is_file()

    def test_nehari_check_with_oracle(self, tmp_path, config_file):
        """Test projecting the default k = 1 candidate and cross-checking it."""
        out = tmp_path / "nehari"
        command = ("nehari-check", "--k", "1", "--oracle")
        code = main(_argv(tmp_path, config_file, out, *command))
        assert code == _expected_code(out)
        check = load_archive(out).nehari_check
        assert check is not None
        assert check.k == 1
        assert len(check.scalings) == 2
        assert len(check.oracle) == 2
        assert (out / "projected_glued.csv").is_file()
