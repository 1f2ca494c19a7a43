import logging
import os

import numpy as np
import pytest

from escapepath.core.model import Path
from escapepath.utils.errors import (ContinuationStuckError, EscapePathError, InvalidArgumentError,
                                     NearNontransversalityError, NoConnectionError,
                                     NonHyperbolicError, SingularSystemError)
from escapepath.utils.logger import SolverFormatter, UserMessageFilter, setup_logger
from escapepath.utils.path_io import path_frame, read_path, write_lines, write_path, write_table
from escapepath.utils.summarize import DefaultStateSummarizer


def _record(**extra):
    record = logging.LogRecord("escapepath_file", logging.DEBUG, __file__, 1, "step", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


class TestLogging:
    def test_loggers_are_configured_once(self):
        console, file_log = setup_logger()
        again_console, again_file = setup_logger()
        assert console is again_console and file_log is again_file
        assert len(console.handlers) == 1 and len(file_log.handlers) == 1
        assert not console.propagate and not file_log.propagate

    def test_solver_payload_is_expanded(self):
        formatter = SolverFormatter('%(message)s')
        text = formatter.format(_record(solver_data={"iteration": 3, "residual": 1.5e-11,
                                                     "states": np.zeros((100, 4))}))
        lines = text.splitlines()
        assert lines[0] == "step"
        assert "    iteration: 3" in lines
        assert "    residual: 1.500000e-11" in lines
        assert any("array(shape=(100, 4)" in line for line in lines)

    def test_console_filter(self):
        console_filter = UserMessageFilter()
        info = _record()
        info.levelno = logging.INFO
        assert console_filter.filter(info)
        assert not console_filter.filter(_record())
        payload = _record(solver_data={})
        payload.levelno = logging.INFO
        assert not console_filter.filter(payload)


class TestSummarizer:
    def test_small_arrays_are_inlined(self):
        summary = DefaultStateSummarizer().summarize({"x": np.array([1.0, 2.0]), "n": 4})
        assert summary == {"x": [1.0, 2.0], "n": 4}

    def test_large_arrays_and_paths_are_described(self):
        path = Path(np.linspace(0.0, 1.0, 11), np.zeros((11, 2)))
        summary = DefaultStateSummarizer(max_inline=4).summarize(
            {"big": np.array([np.nan, 1.0, 5.0, -2.0, 3.0]), "path": path,
             "nested": {"y": np.arange(10.0)}})
        assert summary["big"] == "array(shape=(5,), min=-2, max=5)"
        assert summary["path"].startswith("Path(points=11, d=2")
        assert summary["nested"]["y"].startswith("array(shape=(10,)")

    def test_non_dict_passes_through(self):
        assert DefaultStateSummarizer().summarize("text") == "text"


class TestErrors:
    def test_exit_codes(self):
        assert InvalidArgumentError("x").exit_code == 1
        assert NonHyperbolicError("x").exit_code == 2
        assert NoConnectionError("x", 1.0).exit_code == 3
        assert issubclass(NearNontransversalityError, SingularSystemError)
        assert isinstance(InvalidArgumentError("x"), ValueError)

    def test_payloads_reach_the_message(self):
        assert "last residual 1.000e-03" in str(NoConnectionError("stuck", 1e-3))
        error = ContinuationStuckError("stalled", 0.25)
        assert error.last_good_mu == 0.25 and "0.25" in str(error)
        assert "condition estimate" in str(SingularSystemError("bad", 1e13))
        assert isinstance(SingularSystemError("bad"), EscapePathError)


class TestPathIO:
    def test_paths_survive_csv(self, tmp_path):
        path = Path([0.0, 0.1, 0.3], [[1.0 / 3.0, -2.0], [np.pi, 1e-300], [0.0, 7.0]])
        filename = write_path(path, str(tmp_path / "p.csv"))
        with open(filename, encoding="utf-8") as handle:
            assert handle.readline().strip() == "t,x1,x2"
        back = read_path(filename)
        np.testing.assert_array_equal(back.times, path.times)
        np.testing.assert_array_equal(back.states, path.states)

    def test_custom_labels(self):
        frame = path_frame(Path([0.0, 1.0], [[1.0], [2.0]]), prefix="u", time_label="s")
        assert list(frame.columns) == ["s", "u1"]

    def test_missing_or_narrow_files(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            read_path(str(tmp_path / "absent.csv"))
        narrow = write_table({"t": [0.0, 1.0]}, str(tmp_path / "narrow.csv"))
        with pytest.raises(InvalidArgumentError):
            read_path(narrow)

    def test_lines(self, tmp_path):
        filename = write_lines(["a=1", "b=2"], str(tmp_path / "s.txt"))
        with open(filename, encoding="utf-8") as handle:
            assert handle.read() == "a=1\nb=2\n"


class TestPlotting:
    def test_figures_are_written(self, tmp_path):
        pytest.importorskip("plotly")
        from escapepath.utils.plotting import plot_paths, plot_sweep
        path = Path(np.linspace(0.0, 1.0, 5), np.column_stack([np.linspace(-1.0, 0.0, 5), np.zeros(5)]))
        figure = plot_paths(str(tmp_path / "paths.html"), [path], ["y0"])
        assert os.path.getsize(figure) > 0
        sweep = plot_sweep(str(tmp_path / "sweep.html"), [0.001, 0.01], [1e-6, 1e-4], 2.0, 0.0)
        assert os.path.getsize(sweep) > 0
