import json
from pathlib import Path

import numpy as np
import pytest

from qpdsynth.exceptions.config import ConfigError
from qpdsynth.utils import logging as qpd_logging
from qpdsynth.utils.utils import dumps_exact, format_float, load_json_file, write_csv, write_json, write_meta


class TestExactJson:
    def test_seventeen_digits(self) -> None:
        assert format_float(0.1) == "0.10000000000000001"
        assert json.loads(dumps_exact({"x": 0.1}))["x"] == 0.1

    def test_round_trip_of_awkward_values(self, tmp_path: Path) -> None:
        values = [1 / 3, 2.0 ** -40, 1e300, -0.0]
        path = write_json({"values": values}, tmp_path / "nested" / "v.json")
        assert json.loads(path.read_text(encoding="utf-8"))["values"] == values

    def test_non_finite_becomes_null(self) -> None:
        data = json.loads(dumps_exact({"nan": float("nan"), "inf": np.inf}))
        assert data == {"nan": None, "inf": None}

    def test_numpy_values(self) -> None:
        data = json.loads(dumps_exact({"array": np.array([0.5, 1.5]), "int": np.int64(3), "flag": np.bool_(True)}))
        assert data == {"array": [0.5, 1.5], "int": 3, "flag": True}

    def test_strings_are_untouched(self) -> None:
        assert json.loads(dumps_exact({"label": "gamma=0.1"}))["label"] == "gamma=0.1"


class TestCsv:
    def test_header_and_format(self, tmp_path: Path) -> None:
        path = write_csv(
            [{"gamma_budget": 1.0, "diamond_error": 0.1, "extra": "ignored"}],
            ("gamma_budget", "diamond_error"),
            tmp_path / "tradeoff.csv",
        )
        assert path.read_text(encoding="utf-8").splitlines() == [
            "gamma_budget,diamond_error",
            "1,0.10000000000000001",
        ]


class TestMeta:
    def test_sidecar(self, tmp_path: Path) -> None:
        data = write_json({"gamma": 1.0}, tmp_path / "qpd.json")
        meta = write_meta(data, "decompose", "abc123", 7)
        assert meta.name == "qpd.json.meta.json"
        payload = json.loads(meta.read_text(encoding="utf-8"))
        assert payload["command"] == "decompose"
        assert payload["config_hash"] == "abc123"
        assert payload["seed"] == 7
        assert payload["data_file"] == "qpd.json"
        assert "timestamp" in payload


class TestLoadJson:
    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError):
            load_json_file(str(tmp_path / "absent.json"))

    def test_invalid(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_json_file(str(path))

    def test_valid(self, tmp_path: Path) -> None:
        path = tmp_path / "ok.json"
        path.write_text('{"a": 1}', encoding="utf-8")
        assert load_json_file(str(path)) == {"a": 1}


class TestLogSession:
    def test_worker_file_names(self, tmp_path: Path) -> None:
        session = qpd_logging.LogSession("qpd_session_x", tmp_path)
        assert session.file_for("MainProcess").name == "main.log"
        assert session.file_for("ForkPoolWorker-3").name == "worker_3.log"
        assert session.file_for("odd").name == "worker_0.log"

    def test_session_lives_under_home(self, qpdsynth_home: Path) -> None:
        session_id = qpd_logging.init_session()
        assert session_id.startswith(qpd_logging.SESSION_PREFIX)
        assert qpd_logging.get_log_directory() == qpdsynth_home / "logs" / session_id
        assert qpd_logging.init_session() == session_id

    def test_worker_joins_parent_session(self) -> None:
        assert qpd_logging.init_session("qpd_session_parent") == "qpd_session_parent"
        assert qpd_logging.current_session().session_id == "qpd_session_parent"

    def test_prune_keeps_newest(self, tmp_path: Path) -> None:
        for index in range(6):
            (tmp_path / f"{qpd_logging.SESSION_PREFIX}{index}").mkdir()
        (tmp_path / "unrelated").mkdir()
        qpd_logging.prune_sessions(tmp_path, keep=3)
        remaining = [d for d in tmp_path.iterdir() if d.name.startswith(qpd_logging.SESSION_PREFIX)]
        assert len(remaining) == 2
        assert (tmp_path / "unrelated").exists()

    def test_notice_logged_once(self, mocker) -> None:
        logger = mocker.Mock()
        mocker.patch.object(qpd_logging, "get_process_logger", return_value=logger)
        qpd_logging.log_notice_once("test-notice", "first")
        qpd_logging.log_notice_once("test-notice", "second")
        logger.info.assert_called_once_with("first")
