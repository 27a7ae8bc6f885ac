import logging
import logging.handlers
import os
import sys
from datetime import datetime
from queue import Queue

# Logger namespaces owned by this project
PACKAGE_LOGGERS = ("ccs", "cli", "utils", "architecture", "__main__")

LEVEL_MAP = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


class AsyncLogger:
    """
    Hands log records to a background thread through a queue.

    The calling thread only enqueues; formatting and I/O happen in the listener
    thread, so long solver runs are not slowed down by file writes.
    """

    def __init__(self, handlers):
        """
        Args:
            handlers: Sink handlers the listener thread dispatches records to
        """
        self.queue = Queue()
        self.queue_handler = logging.handlers.QueueHandler(self.queue)
        self.listener = logging.handlers.QueueListener(
            self.queue, *handlers, respect_handler_level=True
        )
        self.listener.start()

    def stop(self):
        """
        Flushes pending records and stops the listener thread.
        """
        self.listener.stop()


class AppLogger:
    """
    Configures project logging from the run configuration.

    Recognised keys: ``log_level``, ``log_to_console`` and ``log_to_file``.
    """

    def __init__(self, config, log_dir: str = None):
        """
        Args:
            config: Mapping (or RunConfig) with the logging keys
            log_dir: Directory for log files, defaults to ``logs/`` next to the package
        """
        self.config = config
        self.log_dir = log_dir or os.path.join(os.path.dirname(__file__), "..", "logs")
        self.log_path = None
        self.async_logger = None
        self.setup_logger()

    def setup_logger(self):
        """
        Builds the sink handlers and routes every project logger into the queue.
        """
        log_level = LEVEL_MAP.get(
            str(self.config.get("log_level", "INFO")).upper(), logging.INFO
        )

        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        )

        handlers = []
        if self.config.get("log_to_console", True):
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(formatter)
            handlers.append(console_handler)

        if self.config.get("log_to_file", False):
            os.makedirs(self.log_dir, exist_ok=True)
            log_filename = f"ccs_{datetime.now().strftime('%Y%m%d')}.log"
            self.log_path = os.path.join(self.log_dir, log_filename)
            file_handler = logging.FileHandler(self.log_path, encoding="utf-8")
            file_handler.setFormatter(formatter)
            handlers.append(file_handler)

        if not handlers:
            handlers.append(logging.NullHandler())

        self.async_logger = AsyncLogger(handlers)

        for name in PACKAGE_LOGGERS:
            package_logger = logging.getLogger(name)
            package_logger.setLevel(log_level)
            for handler in package_logger.handlers[:]:
                if isinstance(handler, logging.handlers.QueueHandler):
                    package_logger.removeHandler(handler)
            package_logger.addHandler(self.async_logger.queue_handler)
            package_logger.propagate = False

    def cleanup(self):
        """
        Detaches the queue handler and stops the listener thread.
        """
        for name in PACKAGE_LOGGERS:
            package_logger = logging.getLogger(name)
            package_logger.removeHandler(self.async_logger.queue_handler)
            package_logger.propagate = True
        self.async_logger.stop()
