#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/02 11:05
@File    : utils.py
"""
import hashlib
import json
import os
import shutil
import traceback
from enum import Enum
from io import StringIO
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from rich.console import Console
from rich.table import Table

from utils.log import Logger

logger = Logger('Utils')


class StrEnum(str, Enum):
    def __str__(self) -> str:
        # enum_instance == enum_instance.value in formatting and json
        return self.value

    def __repr__(self) -> str:
        return f"'{str(self)}'"


def canonical_float(value: float, digits: int = 9) -> str:
    """Fixed-precision text of a float; identical on every platform."""
    return f"{float(value):.{digits}e}"


class Utils:
    """Small helpers shared by the simulator, the scheduler trace and the CLI."""

    def __init__(self) -> None:
        pass

    def get_error_info(self, error_info: str, e: Exception):
        """get the error information that involved the error code line and reason.

        Args:
            error_info (str): the error information that you want to raise.
            e (Exception): the error reason.

        Returns:
            str: error infomation.
        """
        trace = traceback.format_exc()
        return f"{error_info}: {str(e)}\n{trace}"

    def init_directory(self, directory: Union[str, Path], delete_flag: int = 0):
        """create ``directory`` (optionally wiping it first).

        Returns:
            (bool, info)
        """
        try:
            if os.path.exists(directory) and delete_flag == 1:
                shutil.rmtree(directory)
            if not os.path.exists(directory):
                os.makedirs(directory)
            return True, f"success to init the directory: {directory}"
        except OSError as e:
            error_info = self.get_error_info(f"fail to init the directory: {directory}", e)
            logger.error(error_info)
            return False, error_info

    def read_json(self, file_path: Union[str, Path]) -> Any:
        with open(file_path, "r", encoding="utf-8") as file:
            return json.load(file)

    def write_jsonl(self, file_path: Union[str, Path], records: Iterable[Dict]):
        with open(file_path, "w", encoding="utf-8") as file:
            for record in records:
                file.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
                file.write("\n")

    def digest(self, items: Sequence[Sequence[Any]]) -> str:
        """sha256 over a canonical text form; floats are rounded to 9 significant digits."""
        h = hashlib.sha256()
        for item in items:
            parts = [canonical_float(v) if isinstance(v, float) else str(v) for v in item]
            h.update("|".join(parts).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()[:16]

    def render_table(self, title: str, columns: List[str], rows: List[List[Any]], width: Optional[int] = 100) -> str:
        table = Table(title=title, show_header=True, header_style="bold magenta")
        for i, column in enumerate(columns):
            table.add_column(column, style="cyan" if i == 0 else "green", no_wrap=i == 0)
        for row in rows:
            table.add_row(*[f"{v:.3f}" if isinstance(v, float) else str(v) for v in row])
        console = Console(file=StringIO(), width=width)
        console.print(table)
        return console.file.getvalue()
