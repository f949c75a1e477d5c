"""Rank aggregation and benchmark tables.

Per-spectrum ranks become rank distributions, top-k percentages, per-tool
means and standard deviations, and pairwise win rates. All table arithmetic
runs on exact rationals, with half-up decimal rounding applied only at the
formatting boundary, so recomputed tables agree digit for digit across
platforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "AccuracyTable",
    "BenchmarkSummary",
    "RankDistribution",
    "RankTableRow",
    "distribution_row",
    "emit_table",
    "load_accuracy_table",
    "load_rank_table",
    "pairwise_winrate",
    "rank_distribution",
    "round_half_up",
    "summarize",
    "topk_percent",
]

TOP_KS = (1, 2, 5)


def round_half_up(value: Fraction | Decimal | int, places: int) -> Decimal:
    """Round an exact value half-up to a fixed number of decimal places."""
    if isinstance(value, Fraction):
        with localcontext() as ctx:
            ctx.prec = 50
            value = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        value = Decimal(value)
    return value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def _as_fraction(value) -> Fraction:
    if isinstance(value, str):
        value = Decimal(value)
    return Fraction(value)


@dataclass(frozen=True)
class RankDistribution:
    """Counts of true-compound ranks bucketed into 1..5 and >= 6."""

    total: int
    r1: int
    r2: int
    r3: int
    r4: int
    r5: int
    r6plus: int

    def __post_init__(self) -> None:
        counts = (self.r1, self.r2, self.r3, self.r4, self.r5, self.r6plus)
        if any(c < 0 for c in counts) or self.total < 0:
            raise ValueError("rank counts must be non-negative")
        if sum(counts) != self.total:
            raise ValueError(
                f"bucket counts sum to {sum(counts)}, not total {self.total}"
            )

    def topk_count(self, k: int) -> int:
        return sum((self.r1, self.r2, self.r3, self.r4, self.r5)[:k])


def rank_distribution(ranks: Iterable[int]) -> RankDistribution:
    """Bucket 1-based ranks into a distribution."""
    buckets = [0] * 6
    total = 0
    for rank in ranks:
        if rank != int(rank) or rank < 1:
            raise ValueError(f"ranks are 1-based positive integers, got {rank!r}")
        buckets[min(int(rank), 6) - 1] += 1
        total += 1
    return RankDistribution(total, *buckets)


def topk_percent(d: RankDistribution, k: int) -> Decimal:
    """Percentage of ranks at or under k, half-up to 2 decimals."""
    if k not in TOP_KS:
        raise ValueError(f"k must be one of {TOP_KS}, got {k}")
    if d.total == 0:
        raise ValueError("top-k percentage is undefined for an empty distribution")
    return round_half_up(Fraction(100 * d.topk_count(k), d.total), 2)


@dataclass(frozen=True)
class BenchmarkSummary:
    """Per-benchmark accuracies with their mean and sample deviation."""

    accuracies: dict[str, Fraction]
    mean: Fraction
    mean_percent: Decimal
    sd: Decimal


def summarize(accuracies: Mapping[str, object]) -> BenchmarkSummary:
    """Mean (as a 2-decimal percentage) and sample SD (n-1, 4 decimals)."""
    values = {name: _as_fraction(v) for name, v in accuracies.items()}
    n = len(values)
    if n < 2:
        raise ValueError("sample standard deviation needs at least 2 benchmarks")
    mean = Fraction(sum(values.values()), n)
    var = sum((x - mean) ** 2 for x in values.values()) / (n - 1)
    with localcontext() as ctx:
        ctx.prec = 50
        sd_exact = (Decimal(var.numerator) / Decimal(var.denominator)).sqrt()
    return BenchmarkSummary(
        accuracies=values,
        mean=mean,
        mean_percent=round_half_up(mean * 100, 2),
        sd=sd_exact.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP),
    )


def pairwise_winrate(a: Mapping[str, object], b: Mapping[str, object]) -> Decimal:
    """Share of benchmarks where a >= b (ties count as wins), 2 decimals."""
    if set(a) != set(b):
        missing = sorted(set(a) ^ set(b))
        raise ValueError(f"benchmark keys differ: {missing}")
    if not a:
        raise ValueError("win rate is undefined over zero benchmarks")
    wins = sum(1 for k in a if _as_fraction(a[k]) >= _as_fraction(b[k]))
    return round_half_up(Fraction(100 * wins, len(a)), 2)


def distribution_row(d: RankDistribution) -> list[str]:
    """The 10-column table row: total, r1..r5, r6plus, top1, top2, top5."""
    return (
        [str(d.total), str(d.r1), str(d.r2), str(d.r3), str(d.r4), str(d.r5),
         str(d.r6plus)]
        + [str(topk_percent(d, k)) for k in TOP_KS]
    )


def emit_table(rows: Sequence[Sequence[str]], path: str | Path,
               header: Sequence[str]) -> None:
    """Write a header plus rectangular rows as tab-separated UTF-8."""
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(
                f"row {i} has {len(row)} columns, header has {width}"
            )
    lines = ["\t".join(header)]
    lines.extend("\t".join(str(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# fixture tables


@dataclass(frozen=True)
class RankTableRow:
    """One benchmark row of a transcribed rank-distribution table."""

    benchmark: str
    distribution: RankDistribution
    top1: str
    top2: str
    top5: str

    @property
    def printed(self) -> dict[int, str]:
        return {1: self.top1, 2: self.top2, 5: self.top5}


RANK_TABLE_HEADER = (
    "benchmark", "total", "rank1", "rank2", "rank3", "rank4", "rank5",
    "rank6plus", "top1", "top2", "top5",
)


def _read_tsv(path: str | Path) -> list[list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.split("\t") for line in lines if line]


def load_rank_table(path: str | Path) -> list[RankTableRow]:
    """Read one rank-distribution TSV into typed rows."""
    rows = _read_tsv(path)
    if tuple(rows[0]) != RANK_TABLE_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    out = []
    for row in rows[1:]:
        bench, total, *rest = row
        counts = [int(c) for c in rest[:6]]
        out.append(RankTableRow(
            benchmark=bench,
            distribution=RankDistribution(int(total), *counts),
            top1=rest[6], top2=rest[7], top5=rest[8],
        ))
    return out


@dataclass(frozen=True)
class AccuracyTable:
    """A benchmark-by-tool grid of printed percentage strings."""

    columns: tuple[str, ...]
    row_labels: tuple[str, ...]
    cells: dict[str, dict[str, str]] = field(repr=False)

    def column(self, name: str, rows: Sequence[str] | None = None) -> dict[str, str]:
        if rows is None:
            rows = self.row_labels
        return {r: self.cells[name][r] for r in rows}


def load_accuracy_table(path: str | Path) -> AccuracyTable:
    """Read a benchmark-by-tool TSV; first column holds row labels."""
    rows = _read_tsv(path)
    columns = tuple(rows[0][1:])
    labels = []
    cells: dict[str, dict[str, str]] = {c: {} for c in columns}
    for row in rows[1:]:
        if len(row) != len(columns) + 1:
            raise ValueError(f"{path}: ragged row {row[0]!r}")
        labels.append(row[0])
        for col, value in zip(columns, row[1:]):
            cells[col][row[0]] = value
    return AccuracyTable(columns=columns, row_labels=tuple(labels), cells=cells)
