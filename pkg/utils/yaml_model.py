#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 10:40
@File    : yaml_model.py
"""

import json
from pathlib import Path
from typing import Dict, Optional, Union

import yaml
from pydantic import BaseModel, ValidationError

from utils.errors import ConfigError


class YamlModel(BaseModel):
    """pydantic model that can be read from a YAML (or JSON) file."""

    @classmethod
    def read(cls, file_path: Optional[Union[Path, str]], encoding: str = "utf-8") -> Dict:
        file_path = Path(file_path) if not isinstance(file_path, Path) and file_path is not None else file_path
        if file_path is None or not file_path.exists():
            return {}
        with open(file_path, "r", encoding=encoding) as file:
            if file_path.suffix == ".json":
                data = json.load(file)
            else:
                data = yaml.safe_load(file)
        return data or {}

    @classmethod
    def from_file(cls, file_path: Optional[Union[Path, str]] = None) -> "YamlModel":
        return cls.from_dict(cls.read(file_path))

    @classmethod
    def from_dict(cls, data: Dict) -> "YamlModel":
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"invalid {cls.__name__}: {e}") from e

    def override(self, **updates) -> "YamlModel":
        """Return a validated copy with the non-None ``updates`` applied."""
        updates = {k: v for k, v in updates.items() if v is not None}
        if not updates:
            return self
        return type(self).from_dict({**self.model_dump(), **updates})

    def dump(self, file_path: Union[Path, str]):
        with open(file_path, "w", encoding="utf-8") as yaml_file:
            yaml.safe_dump(self.model_dump(mode="json"), yaml_file, sort_keys=False)
