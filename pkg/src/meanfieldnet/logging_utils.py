import logging
import time
from functools import wraps
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logger(
    component: str,
    name: Optional[str] = None,
    log_dir: Optional[Union[str, Path]] = None,
    level: int = logging.INFO,
) -> logging.Logger:
    logger = logging.getLogger(f"{component}_{name}" if name else component)
    logger.setLevel(level)
    if logger.handlers:
        for handler in logger.handlers:
            handler.setLevel(level)
        return logger

    component_lower = component.lower()
    if "solver" in component_lower or "mapel" in component_lower:
        log_name = "solver"
    elif "sim" in component_lower:
        log_name = "sim"
    elif "preset" in component_lower or "cli" in component_lower:
        log_name = "run"
    else:
        log_name = "log"

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(
            Path(log_dir)
            / (f"{component}_{name}_{log_name}.log" if name else f"{component}_{log_name}.log"),
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def log_method(logger: logging.Logger):
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            logger.info("Calling %s", func.__name__)
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
                logger.info(
                    "%s completed successfully in %.3fs",
                    func.__name__,
                    time.perf_counter() - start,
                )
                return result
            except Exception as e:
                logger.error("Error in %s: %s", func.__name__, e)
                raise

        return wrapper

    return decorator
