"""Unit tests for logger setup."""

import logging
import os
import shutil
import tempfile
import unittest
from logging.handlers import RotatingFileHandler

from utils.logger import ColoredFormatter, LOG_FORMAT, setup_logger


class TestLogger(unittest.TestCase):
    """Test cases for setup_logger and ColoredFormatter."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.log_file = os.path.join(self.temp_dir, "phi.log")

    def tearDown(self):
        """Close handlers and clean up test files."""
        logger = logging.getLogger("phi")
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_file_only(self):
        """Test a file-only logger writes child logger records to the file."""
        logger = setup_logger(log_file=self.log_file, level="DEBUG", console=False)
        self.assertEqual(len(logger.handlers), 1)
        self.assertIsInstance(logger.handlers[0], RotatingFileHandler)
        self.assertEqual(logger.level, logging.DEBUG)

        logging.getLogger("phi.transfinite_engine").debug("stage 3: dim=2")
        logger.handlers[0].flush()
        with open(self.log_file, "r", encoding="utf-8") as f:
            self.assertIn("DEBUG - stage 3: dim=2", f.read())

    def test_repeated_setup_replaces_handlers(self):
        """Test calling setup twice does not duplicate handlers."""
        setup_logger(log_file=self.log_file, console=True)
        logger = setup_logger(log_file=self.log_file, console=True)
        self.assertEqual(len(logger.handlers), 2)

    def test_no_file(self):
        """Test an empty log file name disables file logging."""
        logger = setup_logger(log_file="", console=True, colored=False)
        self.assertEqual(len(logger.handlers), 1)
        self.assertNotIsInstance(logger.handlers[0], RotatingFileHandler)

    def test_unknown_level_falls_back_to_info(self):
        """Test an unrecognised level name maps to INFO."""
        logger = setup_logger(log_file="", level="chatty", console=False)
        self.assertEqual(logger.level, logging.INFO)

    def test_colored_formatter_restores_levelname(self):
        """Test the record keeps its plain level name after colored formatting."""
        record = logging.LogRecord("phi", logging.WARNING, __file__, 1, "escaped", None, None)
        text = ColoredFormatter(LOG_FORMAT).format(record)
        self.assertIn("WARNING", text)
        self.assertIn("escaped", text)
        self.assertEqual(record.levelname, "WARNING")


if __name__ == '__main__':
    unittest.main()
