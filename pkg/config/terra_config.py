#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 14:20
@File    : terra_config.py
"""
import argparse
import os
from pathlib import Path
from typing import Literal

from pydantic import Field, model_validator

from utils.yaml_model import YamlModel
from utils.log import Logger

ROOT_DIRECTORY = Path(__file__).parent.parent
CONFIG_PATH = str(ROOT_DIRECTORY / "config" / "yaml" / "terra_config.yaml")
TOPOLOGY_DIRECTORY = ROOT_DIRECTORY / "config" / "topology"

logger = Logger('TerraConfig')


class SchedulerConfig(YamlModel):
    """调度器参数"""
    alpha: float = Field(0.1, ge=0.0, lt=1.0, description="starvation share kept out of min-CCT allocation")
    rho: float = Field(0.25, gt=0.0, lt=1.0, description="significant bandwidth change threshold")
    eta: float = Field(1.1, gt=1.0, description="deadline relaxation factor")
    k: int = Field(15, ge=1, description="candidate paths per datacenter pair")
    epsilon: float = Field(1e-9, gt=0.0, description="relative capacity tolerance")
    tau: float = Field(1e-7, gt=0.0, description="rate tolerance on normalized rows")
    bypass_bytes: int = Field(0, ge=0, description="coflows smaller than this skip central scheduling")

    @model_validator(mode="after")
    def check_deadline_headroom(self):
        if self.eta * (1.0 - self.alpha) > 1.0:
            logger.debug(f"eta*(1-alpha)={self.eta * (1.0 - self.alpha):.3f} > 1: "
                         f"scaled-up deadline reservations may be clipped by link capacity")
        return self


class SimulatorConfig(YamlModel):
    decision_delay: float = Field(0.0, ge=0.0, description="seconds between an event and the new rates taking effect")
    intra_group: Literal["fair", "fifo"] = "fair"
    check_invariants: bool = True
    max_steps: int = Field(1_000_000, ge=1)


class TerraConfig(YamlModel):
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    simulator: SimulatorConfig = Field(default_factory=SimulatorConfig)

    @classmethod
    def default(cls) -> "TerraConfig":
        return cls.from_file(os.environ.get("TERRA_CONFIG", CONFIG_PATH))


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    parser.add_argument('--file_path', type=str, default=CONFIG_PATH, help='where to write the default config yaml')
    args = parser.parse_args()
    TerraConfig().dump(args.file_path)
    logger.info(f"success to init the default config yaml file: {args.file_path}")
