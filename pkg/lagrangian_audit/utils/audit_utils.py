import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil
from tqdm import tqdm

from lagrangian_audit.utils.constants import TOLERANCE_TIERS
from lagrangian_audit.utils.errors import SpecParseError

logger = logging.getLogger(__name__)


def print_memory():
    process = psutil.Process(os.getpid())
    logger.info(f"{int(process.memory_info().rss)/1024**3:.3f} GB ({process.memory_percent():.2f} %) memory used by process {process.pid}")


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one sample point; independent of how points are split over workers."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))


def parse_tolerance_overrides(items: Optional[Sequence[str]]) -> Dict[str, float]:
    """['frame=1e-6', ...] -> {'frame': 1e-6}"""
    overrides = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep:
            raise SpecParseError(f"--tol-tier {item}", "expected name=value")
        if name not in TOLERANCE_TIERS:
            raise SpecParseError(f"--tol-tier {item}", f"unknown tolerance tier, choose from {sorted(TOLERANCE_TIERS)}")
        try:
            overrides[name] = float(value)
        except ValueError:
            raise SpecParseError(f"--tol-tier {item}", f"{value!r} is not a number")
    return overrides


def aggregate_point_residuals(point_results: List[Dict]) -> Dict[str, List[Tuple[int, float]]]:
    """
    Collect per-point residuals into check name -> [(point index, value)], in point order.
    Points are merged in index order so the result does not depend on completion order.
    """
    account = {}
    for result in tqdm(sorted(point_results, key=lambda r: r["index"]), desc="Aggregating", disable=len(point_results) < 2):
        for name, value in result["residuals"].items():
            if value is None:
                continue
            if name not in account:
                account[name] = []
            account[name].append((result["index"], float(value)))
    return account


def residual_statistics(entries: List[Tuple[int, float]]) -> Tuple[float, float, int]:
    """(max, mean, index of the first point attaining the max); NaN wins the max."""
    values = np.array([value for _, value in entries])
    position = int(np.argmax(values)) if not np.isnan(values).any() else int(np.argmax(np.isnan(values)))
    return float(values[position]), float(np.mean(values)), entries[position][0]
