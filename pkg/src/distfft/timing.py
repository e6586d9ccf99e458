from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class TimingBreakdown:
    """Per-execution time accumulators, in seconds (virtual under a cost model)."""

    local_fft: float = 0.0
    pack: float = 0.0
    unpack: float = 0.0
    staging_copy: float = 0.0
    wire_comm: float = 0.0
    total: float = 0.0

    COMPONENTS = ("local_fft", "pack", "unpack", "staging_copy", "wire_comm")

    def components_sum(self) -> float:
        return sum(getattr(self, c) for c in self.COMPONENTS)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TimingBreakdown":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})

    @classmethod
    def reduce_max(cls, items) -> "TimingBreakdown":
        """Field-wise maximum over ranks."""
        items = list(items)
        return cls(**{f.name: max(getattr(t, f.name) for t in items) for f in fields(cls)})
