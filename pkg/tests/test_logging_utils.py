import logging

import pytest

from meanfieldnet.logging_utils import log_method, setup_logger


def test_setup_logger_writes_to_the_log_dir(tmp_path):
    logger = setup_logger("meanfieldnet_sim_check", log_dir=tmp_path / "logs")
    logger.info("sampled %d trials", 3)
    for handler in logger.handlers:
        handler.flush()
    content = (tmp_path / "logs" / "meanfieldnet_sim_check_sim.log").read_text()
    assert "meanfieldnet_sim_check - INFO - sampled 3 trials" in content


def test_setup_logger_reuses_handlers():
    first = setup_logger("meanfieldnet_reuse", name="cli")
    second = setup_logger("meanfieldnet_reuse", name="cli", level=logging.DEBUG)
    assert first is second
    assert len(second.handlers) == 1
    assert all(handler.level == logging.DEBUG for handler in second.handlers)


def test_log_method(caplog):
    logger = logging.getLogger("meanfieldnet.tests.log_method")

    @log_method(logger)
    def divide(a, b):
        return a / b

    with caplog.at_level(logging.INFO, logger=logger.name):
        assert divide(4, 2) == 2
        with pytest.raises(ZeroDivisionError):
            divide(1, 0)
    messages = [record.getMessage() for record in caplog.records]
    assert "Calling divide" in messages
    assert any(message.startswith("divide completed successfully") for message in messages)
    assert any(message.startswith("Error in divide") for message in messages)
