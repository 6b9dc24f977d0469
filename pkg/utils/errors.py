#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 10:31
@File    : errors.py
"""


class TerraError(ValueError):
    """Base class of every error raised on purpose by this package."""


class TopologyError(TerraError):
    """Malformed topology document, negative capacity, unknown node or link."""


class CoflowError(TerraError):
    """Invalid coflow submission or update."""


class WorkloadError(TerraError):
    """Invalid workload document or generator spec."""


class OptimizerError(TerraError):
    """Malformed arc mask or rate matrix."""


class LpNumericalError(TerraError):
    """The simplex could not reach a verdict (iteration limit, lost feasibility)."""


class SchedulerError(TerraError):
    """Event inconsistent with the scheduler state."""


class ConfigError(TerraError):
    """Invalid configuration or run request."""
