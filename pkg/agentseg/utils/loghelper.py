# -*- coding: utf-8 -*-

"""
Logging helper

The `LOG` object stays silent until `LOG.initialize` is called: library code
may log freely without configuring anything for its callers.
"""

import logging
import sys


class LoggingHelper:
    """Logging helper"""

    NAME = "AgentSeg"

    def __init__(self):
        self._logger = None
        self._handlers = []

    @property
    def active(self):
        """Return True if logging has been initialized"""
        return self._logger is not None

    def initialize(self, level=logging.INFO, stream=None):
        """Initialize"""
        if stream is None:
            stream = sys.stderr
        if stream is None:
            # pythonw.exe
            return
        self.close()
        self._logger = logging.getLogger(self.NAME)
        self._logger.setLevel(level)
        handler = logging.StreamHandler(stream=stream)
        formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
        handler.setFormatter(formatter)
        self._logger.addHandler(handler)
        self._handlers.append(handler)

    def close(self):
        """Close"""
        if self._logger is not None:
            for handler in self._handlers:
                handler.flush()
                self._logger.removeHandler(handler)
            self._handlers = []
            self._logger = None

    def debug(self, message):
        """Debug"""
        if self._logger is not None:
            self._logger.debug(message)

    def info(self, message):
        """Info"""
        if self._logger is not None:
            self._logger.info(message)

    def warning(self, message):
        """Warning"""
        if self._logger is not None:
            self._logger.warning(message)

    def error(self, message):
        """Error"""
        if self._logger is not None:
            self._logger.error(message)


LOG = LoggingHelper()


def level_from_debug(debug):
    """Return logging level matching a debug environment value (0: no logging)"""
    if debug <= 0:
        return None
    return logging.INFO if debug == 1 else logging.DEBUG
