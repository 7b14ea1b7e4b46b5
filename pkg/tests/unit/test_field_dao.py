"""Unit tests for field and table files."""

import numpy as np
import pytest

from src.core.exceptions import NotFoundError, ValidationError
from src.dao.field_dao import (
    format_number,
    read_field,
    read_table,
    write_field,
    write_table,
)
from src.models.problem import RadiiVector


class TestFormatNumber:
    """Tests for format_number."""

    @pytest.mark.parametrize("value", [0.1, 1.0 / 3.0, 1e-300, 123456789.123456789])
    def test_parses_back_exactly(self, value):
        """Test that 17 significant digits round-trip a double."""
        assert float(format_number(value)) == value


class TestFieldFiles:
    """Tests for write_field / read_field."""

    def test_header_and_values(self, tmp_path):
        """Test that the header records annulus and radii."""
        radii = RadiiVector((2.5, 6.0), 10.0)
        t = np.linspace(2.5, 6.0, 5)
        u = -np.sin(t - 2.5)
        path = write_field(tmp_path / "f.csv", t, u, annulus=2, radii=radii)
        first = path.read_text(encoding="utf-8").splitlines()[0]
        assert first == "# annulus=2 radii=2.5;6 R=10"
        record = read_field(path)
        assert record.annulus == 2
        assert record.radii == radii
        assert record.t.tolist() == t.tolist()
        assert record.u.tolist() == u.tolist()

    def test_ball_has_empty_radii(self, tmp_path):
        """Test the k = 0 header."""
        path = write_field(
            tmp_path / "g.csv", np.array([0.0, 1.0]), np.array([1.0, 0.0]),
            annulus=0, radii=RadiiVector.ball(1.0),
        )
        assert read_field(path).radii == RadiiVector.ball(1.0)

    def test_missing_file(self, tmp_path):
        """Test that reading a missing field raises NotFoundError."""
        with pytest.raises(NotFoundError):
            read_field(tmp_path / "absent.csv")

    def test_malformed_header(self, tmp_path):
        """Test that a header without R is rejected."""
        path = tmp_path / "bad.csv"
        path.write_text("# annulus=1 radii=\nt,u\n0,1\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="Malformed field header"):
            read_field(path)


class TestTables:
    """Tests for write_table / read_table."""

    def test_cells_are_formatted(self, tmp_path):
        """Test booleans, None and floats in table cells."""
        header = ["k", "energy", "ok", "note"]
        path = write_table(tmp_path / "t.csv", header, [[1, 0.5, True, None]])
        rows = read_table(path)
        assert rows == [{"k": "1", "energy": "0.5", "ok": "true", "note": ""}]

    def test_header_only(self, tmp_path):
        """Test that no rows leaves just the header line."""
        path = write_table(tmp_path / "empty.csv", ["a", "b"], [])
        assert path.read_bytes() == b"a,b\r\n"
        assert read_table(path) == []
