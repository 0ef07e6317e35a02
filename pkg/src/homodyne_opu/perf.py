"""Analytical throughput and power model.

Throughput counts a multiply and an accumulate per unit per symbol. Power is a
line-item budget: each entry is either a fixed per-instance power (mW) times a
count, or an energy per access (pJ) times an access rate times a count.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

__all__ = [
    "EnergyItem",
    "EnergyBudget",
    "PerfEstimate",
    "throughput",
    "energy_total",
    "efficiency",
    "estimate",
    "reference_budget",
    "PRINTED_BUDGET_W",
    "PUBLISHED_TOTAL_W",
    "PUBLISHED_THROUGHPUT_TOPS",
    "PUBLISHED_EFFICIENCY_TOPS_PER_W",
]


def throughput(rows, cols, clock_rate) -> float:
    """Operations per second of a ``rows x cols`` array clocked at ``clock_rate``."""
    if rows <= 0 or cols <= 0 or clock_rate <= 0:
        raise ValueError("rows, cols and clock_rate must be positive")
    return 2 * rows * cols * clock_rate


@dataclass(frozen=True)
class EnergyItem:
    name: str
    power_mw: float | None = None
    energy_pj: float | None = None
    rate: float = 0.0
    count: float = 1.0

    def __post_init__(self):
        if (self.power_mw is None) == (self.energy_pj is None):
            raise ValueError(f"{self.name}: give exactly one of power_mw or energy_pj")
        for v in (self.power_mw, self.energy_pj, self.rate, self.count):
            if v is not None and v < 0:
                raise ValueError(f"{self.name}: budget entries must be non-negative")
        if self.energy_pj is not None and self.rate <= 0:
            raise ValueError(f"{self.name}: per-access entries need a positive rate")

    @property
    def power_w(self) -> float:
        if self.power_mw is not None:
            return self.power_mw * 1e-3 * self.count
        return self.energy_pj * 1e-12 * self.rate * self.count


@dataclass(frozen=True)
class EnergyBudget:
    items: tuple[EnergyItem, ...] = ()

    def breakdown(self) -> dict[str, float]:
        return {i.name: i.power_w for i in self.items}


def energy_total(budget: EnergyBudget) -> float:
    """Total power in watts."""
    return sum(i.power_w for i in budget.items)


@dataclass(frozen=True)
class PerfEstimate:
    throughput_tops: float
    power_w: float

    @property
    def efficiency_tops_per_w(self) -> float:
        return self.throughput_tops / self.power_w

    def to_dict(self) -> dict:
        return {**asdict(self), "efficiency_tops_per_w": self.efficiency_tops_per_w}


def efficiency(est: PerfEstimate) -> float:
    return est.efficiency_tops_per_w


def estimate(rows, cols, clock_rate, budget: EnergyBudget | None = None, power_w: float | None = None) -> PerfEstimate:
    if power_w is None:
        if budget is None:
            raise ValueError("give a budget or a power figure")
        power_w = energy_total(budget)
    return PerfEstimate(throughput(rows, cols, clock_rate) / 1e12, power_w)


def reference_budget(rows=256, cols=256, clock_rate=20e9) -> EnergyBudget:
    """The published 256x256, 20 GS/s, 8-bit budget, scaled to other array sizes.

    Drivers and memory ports scale with the ``rows + cols`` modulators, ADC
    and nonlinearity with the ``rows * cols`` outputs.
    """
    channels = rows + cols
    units = rows * cols
    return EnergyBudget((
        EnergyItem("laser", power_mw=400, count=1),
        EnergyItem("clock_serdes_driver", power_mw=2, count=channels),
        EnergyItem("memory_access", energy_pj=0.5, rate=clock_rate, count=channels),
        EnergyItem("adc_1mhz", power_mw=0.01, count=units),
        EnergyItem("softmax_nonlinearity", power_mw=0.01, count=units),
    ))


# Totals as printed in the published table, for side-by-side reporting.
PRINTED_BUDGET_W = {
    "laser": 0.4,
    "clock_serdes_driver": 1.0,
    "memory_access": 5.12,
    "adc_1mhz": 0.66,
    "softmax_nonlinearity": 0.66,
}
PUBLISHED_TOTAL_W = 8.0
# printed as "2,262.144 TOPS"; the product of its own factors is 2621.44
PUBLISHED_THROUGHPUT_TOPS = 2262.144
PUBLISHED_EFFICIENCY_TOPS_PER_W = 330.0


def table_rows(budget: EnergyBudget, printed: dict[str, float] | None = None) -> list[dict]:
    """Per-item records with the recomputed power and, when known, the printed one."""
    printed = printed or {}
    return [
        {"name": i.name, "computed_w": i.power_w, "printed_w": printed.get(i.name)}
        for i in budget.items
    ]


def format_table(rows: list[dict], total_w: float, printed_total: float | None = None) -> str:
    lines = [f"{'component':<24}{'computed W':>12}{'printed W':>12}"]
    for r in rows:
        p = "" if r["printed_w"] is None else f"{r['printed_w']:.3f}"
        lines.append(f"{r['name']:<24}{r['computed_w']:>12.4f}{p:>12}")
    p = "" if printed_total is None else f"{printed_total:.3f}"
    lines.append(f"{'total':<24}{total_w:>12.4f}{p:>12}")
    return "\n".join(lines)
