import logging
import os
from logging.handlers import RotatingFileHandler
from datetime import datetime

from dotenv import load_dotenv

# .env may set SAGO_LOG before config.py is imported
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def level_from_name(name, default=logging.INFO):
    """'debug' / 'INFO' / ... -> logging level; unknown names give `default`."""
    level = logging.getLevelName(str(name or "").strip().upper())
    return level if isinstance(level, int) else default


def _log_dir():
    return os.getenv("SAGO_LOG_DIR") or os.path.join(os.path.dirname(__file__), 'logs')


def setup_logger(name="sago", log_level=None):
    """
    Console + rotating file logger, shared by every module.
    Level comes from SAGO_LOG when not given; files go to SAGO_LOG_DIR
    (default ./logs). An unwritable log directory leaves console output only.
    """
    if log_level is None:
        log_level = level_from_name(os.getenv("SAGO_LOG"))

    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # 5MB per file, last 5 kept; one file per day
    log_file = os.path.join(_log_dir(), f"sago_{datetime.now().strftime('%Y-%m-%d')}.log")
    try:
        os.makedirs(os.path.dirname(log_file), exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=5 * 1024 * 1024, backupCount=5, encoding='utf-8')
    except OSError as e:
        logger.warning(f"⚠️ file logging disabled ({e})")
    else:
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def set_level(level):
    """Adjust the shared logger at runtime (CLI --log-level)."""
    logger.setLevel(level_from_name(level, logger.level) if isinstance(level, str) else level)


# Global Logger Instance
logger = setup_logger()
