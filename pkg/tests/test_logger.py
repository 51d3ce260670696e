import logging

import pytest

from qudit_reupload.logger import (
    ColoredFormatter,
    console_level,
    get_logger,
    init_worker,
    setup_logging,
)
from qudit_reupload.main import main


@pytest.fixture(autouse=True)
def reset_logger():
    yield
    logger = get_logger()
    logger.close_file_handler()
    logger.setup_console_handler(logging.INFO)


def test_console_levels():
    assert console_level() == logging.INFO
    assert console_level(verbose=True) == logging.DEBUG
    assert console_level(verbose=True, quiet=True) == logging.ERROR


def test_file_log_records_debug_and_success(tmp_path):
    path = tmp_path / "run.log"
    setup_logging(quiet=True, log_file=str(path))
    logger = get_logger()
    logger.debug("epoch 100")
    logger.success("seed 3 done")
    logger.close_file_handler()

    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert "MainProcess DEBUG epoch 100" in lines[0]
    assert "SUCCESS seed 3 done" in lines[1]
    # file output is never colored
    assert "\x1b[" not in lines[1]


def test_quiet_console_drops_info(capsys):
    setup_logging(quiet=True)
    get_logger().info("hidden")
    get_logger().error("shown")
    out = capsys.readouterr().out
    assert "hidden" not in out
    assert "shown" in out


def test_colored_formatter_restores_the_message():
    record = logging.LogRecord("q", logging.WARNING, __file__, 1, "careful", None, None)
    assert ColoredFormatter("%(message)s").format(record) != "careful"
    assert record.msg == "careful"


def test_worker_initializer_sets_console_level():
    init_worker(logging.ERROR)
    assert get_logger().console_level == logging.ERROR


def test_main_writes_and_closes_the_log_file(tmp_path):
    path = tmp_path / "cli.log"
    output = tmp_path / "q.ppm"
    args = ["render-husimi", "--state", "basis:0", "--resolution", "16", "--output", str(output)]
    assert main([*args, "-q", "--log-file", str(path)]) == 0
    assert "Wrote 32x16 raster" in path.read_text(encoding="utf-8")
