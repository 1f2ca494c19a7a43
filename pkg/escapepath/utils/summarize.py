"""Compact summaries of numerical payloads for log output."""
from typing import Any, Dict, Protocol

import numpy as np


class StateSummarizer(Protocol):
    """Protocol for shrinking array-valued payloads before logging"""
    def summarize(self, data: Dict[str, Any]) -> Dict[str, Any]: ...


class DefaultStateSummarizer:
    """Default implementation of payload summarizing"""

    def __init__(self, max_inline: int = 8):
        self.max_inline = max_inline

    def _summarize_array(self, value: np.ndarray) -> Any:
        if value.size <= self.max_inline:
            return value.tolist()
        if not np.issubdtype(value.dtype, np.number):
            return f"array(shape={value.shape})"
        finite = value[np.isfinite(value)]
        if finite.size == 0:
            return f"array(shape={value.shape}, no finite entries)"
        return (f"array(shape={value.shape}, min={finite.min():.6g}, "
                f"max={finite.max():.6g})")

    def summarize(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Replace arrays and paths in a dictionary by short descriptions.

        Args:
            data: Dictionary possibly holding numpy arrays, paths or nested dicts

        Returns:
            Dictionary safe to write to a log line
        """
        if not isinstance(data, dict):
            return data

        summary = data.copy()
        for key, value in summary.items():
            if isinstance(value, np.ndarray):
                summary[key] = self._summarize_array(value)
            elif hasattr(value, 'times') and hasattr(value, 'states'):
                summary[key] = (f"Path(points={len(value.times)}, d={value.states.shape[1]}, "
                                f"t=[{value.times[0]:.4g}, {value.times[-1]:.4g}])")
            elif isinstance(value, dict):
                summary[key] = self.summarize(value)
            elif isinstance(value, (list, tuple)):
                summary[key] = [
                    self.summarize(item) if isinstance(item, dict) else item
                    for item in value
                ]
        return summary
