#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 10:12
@File    : log.py

``Logger(name)`` returns one colored logger per name. ``ROUND`` sits just
above INFO and carries the per-round scheduler summaries, so
``TERRA_LOG=ROUND`` shows the rounds without the INFO chatter.
"""
import functools
import logging
import os
import threading
from typing import Dict

import colorlog

LEVEL_ENV = "TERRA_LOG"
DEFAULT_LEVEL = "WARNING"

LEVELS: Dict[str, int] = {
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'ROUND': logging.INFO + 1,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
    'CRITICAL': logging.CRITICAL,
}
COLORS: Dict[str, str] = {
    'DEBUG': 'cyan',
    'INFO': 'green',
    'ROUND': 'blue',
    'WARNING': 'yellow',
    'ERROR': 'red',
    'CRITICAL': 'red,bg_white',
}
FORMAT = "%(log_color)s[%(asctime)s] [%(levelname)-8s] [%(name)s] - %(message)s"

for _name, _level in LEVELS.items():
    logging.addLevelName(_level, _name)


def level_from_env(default: str = DEFAULT_LEVEL) -> int:
    name = os.environ.get(LEVEL_ENV, default).strip().upper()
    return LEVELS.get(name, LEVELS[default])


def _handler() -> logging.Handler:
    handler = logging.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(
        FORMAT,
        datefmt='%Y-%m-%d %H:%M:%S',
        log_colors=COLORS,
        secondary_log_colors={'message': {'ERROR': 'red', 'CRITICAL': 'red'}},
    ))
    return handler


class Logger(object):
    """Named singleton; the level is read from ``TERRA_LOG`` when a name is first seen."""

    _registry: Dict[str, "Logger"] = {}
    _guard = threading.Lock()

    def __new__(cls, name: str = None):
        name = name or 'Terra'
        with cls._guard:
            if name not in cls._registry:
                cls._registry[name] = super().__new__(cls)
            return cls._registry[name]

    def __init__(self, name: str = None):
        if hasattr(self, 'logger'):
            return
        self.logger = logging.getLogger(name or 'Terra')
        self.logger.addHandler(_handler())
        self.logger.setLevel(level_from_env())
        self.logger.propagate = False
        for key, level in LEVELS.items():
            setattr(self, key.lower(), functools.partial(self.logger.log, level))
        self.exception = self.logger.exception

    @classmethod
    def set_level(cls, level: str):
        """Apply ``level`` to every logger created so far; unknown names are ignored."""
        numeric = LEVELS.get(level.strip().upper())
        if numeric is None:
            return
        with cls._guard:
            for instance in cls._registry.values():
                if hasattr(instance, "logger"):
                    instance.logger.setLevel(numeric)

    def enabled(self, level: int) -> bool:
        return self.logger.isEnabledFor(level)
