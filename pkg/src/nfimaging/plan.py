"""Illumination plans: one transmit beamformer per subcarrier."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError

MODES = ("uniform", "tcm", "ipm")


@dataclass(frozen=True)
class IlluminationPlan:
    vectors: np.ndarray  # (N, M_t)
    per_subcarrier_power: float
    mode: str
    focus_cells: tuple | None = None
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        object.__setattr__(self, "vectors", vec)
        if self.mode not in MODES:
            raise ParameterError(f"unknown illumination mode {self.mode!r}")
        if self.focus_cells is not None and len(self.focus_cells) != vec.shape[0]:
            raise DimensionError("one focus set per subcarrier is required")

    @property
    def n_subcarriers(self) -> int:
        return self.vectors.shape[0]

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.vectors) ** 2))

    def save(self, path) -> None:
        """Write a text file: header comments, then one comma-separated row
        of complex entries per subcarrier (exact round trip)."""
        lines = [f"# mode: {self.mode}", f"# power: {self.per_subcarrier_power!r}"]
        if self.focus_cells is not None:
            for n, cells in enumerate(self.focus_cells):
                lines.append(f"# focus {n}: " + ",".join(str(int(c)) for c in cells))
        for row in self.vectors:
            lines.append(",".join(repr(complex(z)) for z in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "IlluminationPlan":
        mode, power, focus, rows = None, None, {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# mode:"):
                mode = line.split(":", 1)[1].strip()
            elif line.startswith("# power:"):
                power = float(line.split(":", 1)[1])
            elif line.startswith("# focus"):
                head, body = line[len("# focus"):].split(":", 1)
                body = body.strip()
                focus[int(head)] = tuple(int(c) for c in body.split(",")) if body else ()
            elif line.strip():
                rows.append([complex(tok) for tok in line.split(",")])
        if mode is None or power is None or not rows:
            raise DimensionError(f"{path} is not a plan file")
        focus_cells = tuple(focus[n] for n in range(len(rows))) if focus else None
        return cls(np.array(rows), power, mode, focus_cells)
