"""Report writers: CSV/JSON tables, FASTA designs with a JSON sidecar, rich console tables.

Machine outputs carry the run's config fingerprint and never a timestamp, so
repeated invocations produce identical bytes.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

import config
from analysis.fitness import BudgetReport, reports_frame
from analysis.metrics import DesignResult
from runner.utils import write_json_file
from structures.formats import write_fasta

console = Console(stderr=True)


def _clean(value: Any) -> Any:
    """NaN/inf become null so the JSON stays standard."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_table(frame: pd.DataFrame, out_dir: Path, stem: str, metadata: Optional[Dict[str, Any]] = None) -> List[Path]:
    """Write `stem.csv` and `stem.json` ({"metadata": ..., "rows": [...]})."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    frame.to_csv(csv_path, index=False, float_format="%.10g", lineterminator="\n")
    rows = [_clean(row) for row in json.loads(frame.to_json(orient="records", double_precision=15))]
    json_path = write_json_file({"metadata": _clean(metadata or {}), "rows": rows}, out_dir / f"{stem}.json")
    return [csv_path, json_path]


def design_records(designs: Sequence[DesignResult], prefix: str) -> List[tuple]:
    """FASTA (header, sequence) pairs, e.g. `>{prefix}_design_3 perplexity=1.234`."""
    records = []
    for d in designs:
        header = f"{prefix}_design_{d.sample_index} perplexity={d.perplexity:.4f}"
        if d.recovery is not None:
            header += f" recovery={d.recovery:.4f}"
        if d.mcc is not None:
            header += f" mcc={d.mcc:.4f}"
        records.append((header, d.sequence))
    return records


def write_designs(
    designs: Sequence[DesignResult],
    out_dir: Path,
    prefix: str,
    metadata: Optional[Dict[str, Any]] = None,
) -> List[Path]:
    """Write `{prefix}.fasta` and the `{prefix}.json` sidecar of per-design metrics."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fasta_path = out_dir / f"{prefix}.fasta"
    fasta_path.write_text(write_fasta(design_records(designs, prefix)), encoding="utf-8")
    payload = {
        "metadata": _clean({"folding_oracle": config.FOLDING_ORACLE, **(metadata or {})}),
        "designs": [_clean(d.to_dict()) for d in designs],
    }
    json_path = write_json_file(payload, out_dir / f"{prefix}.json")
    return [fasta_path, json_path]


def write_budget_reports(reports: Sequence[BudgetReport], out_dir: Path, metadata: Optional[Dict[str, Any]] = None) -> List[Path]:
    """`fitness_ranking.csv` (empty iqr cells on deterministic rows) and `fitness_ranking.json`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "fitness_ranking.csv"
    reports_frame(reports).to_csv(csv_path, index=False, float_format="%.10g", lineterminator="\n")
    json_path = write_json_file(
        {"metadata": _clean(metadata or {}), "rows": [_clean(r.to_dict()) for r in reports]},
        out_dir / "fitness_ranking.json",
    )
    return [csv_path, json_path]


def _fmt(value: Any, spec: str = ".3f") -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "-"
    return format(value, spec)


def print_designs(designs: Sequence[DesignResult], title: str = "Designs") -> None:
    table = Table(title=title)
    table.add_column("#", style="cyan")
    table.add_column("Sequence")
    table.add_column("Perplexity", style="yellow")
    table.add_column("Recovery", style="green")
    table.add_column("MCC", style="magenta")
    for d in designs:
        table.add_row(str(d.sample_index), d.sequence, _fmt(d.perplexity), _fmt(d.recovery), _fmt(d.mcc))
    console.print(table)


def print_eval_summary(frame: pd.DataFrame, title: str = "Evaluation") -> None:
    table = Table(title=f"{title} (folding oracle: {config.FOLDING_ORACLE})")
    table.add_column("Ensemble", style="cyan")
    table.add_column("Nodes")
    table.add_column("States")
    table.add_column("Recovery", style="green")
    table.add_column("Native ppl", style="yellow")
    table.add_column("MCC", style="magenta")
    for _, row in frame.iterrows():
        table.add_row(
            str(row["ensemble_id"]), str(row["n_nodes"]), str(row["n_states"]),
            _fmt(row["recovery"]), _fmt(row["native_perplexity"]), _fmt(row["mcc"]),
        )
    console.print(table)


def print_budget_reports(reports: Sequence[BudgetReport]) -> None:
    table = Table(title="Fitness ranking: best improvement over wild type")
    table.add_column("Strategy", style="cyan")
    table.add_column("Budget", style="bold")
    table.add_column("Median", style="green")
    table.add_column("IQR")
    for r in reports:
        iqr = "-" if r.deterministic else f"[{_fmt(r.q25)}, {_fmt(r.q75)}]"
        table.add_row(r.strategy, str(r.budget), _fmt(r.median_max_improvement), iqr)
    console.print(table)
