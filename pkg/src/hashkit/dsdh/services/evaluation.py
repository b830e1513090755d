import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from src.hashkit.dsdh.exceptions import ShapeError
from src.hashkit.dsdh.services.numkernel import Matrix
from src.hashkit.dsdh.services.retrieval import CodeDatabase, PackedCode, pack_columns

logger = logging.getLogger(__name__)

MAX_PR_POINTS = 200
DEFAULT_TOPN = tuple(range(100, 1001, 100))


@dataclass(frozen=True)
class EvalReport:
    """
    Retrieval quality over a query set.

    ``topn_curve`` holds (n, mean precision of the first n results) and
    ``pr_curve`` holds (mean recall, mean precision) at sampled rank cut-offs.
    """

    map: float
    average_precisions: Tuple[float, ...]
    precision_at_radius: float
    radius: int
    topn_curve: Tuple[Tuple[int, float], ...]
    pr_curve: Tuple[Tuple[float, float], ...]
    truncate: Optional[int] = None
    queries_without_relevant: int = 0

    @property
    def queries(self) -> int:
        return len(self.average_precisions)


def average_precision(
    ranked_relevance: Union[Sequence[int], npt.ArrayLike], truncate: Optional[int] = None
) -> float:
    """
    Average of precision@k over the relevant positions of the first T results.

    Args:
        ranked_relevance (ArrayLike): 0/1 relevance in rank order.
        truncate (Optional[int]): T; the full list when None.

    Returns:
        float: AP, or 0 when nothing relevant appears in the first T results.
    """
    relevance = np.asarray(ranked_relevance, dtype=np.float64).ravel()
    if relevance.size == 0:
        raise ValueError("Relevance list must not be empty")
    if truncate is not None:
        relevance = relevance[:truncate]
    hits = np.cumsum(relevance)
    if hits.size == 0 or hits[-1] == 0.0:
        return 0.0
    precision = hits / np.arange(1, relevance.size + 1)
    return float(np.sum(precision * relevance) / hits[-1])


def _downsample(curve: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    if len(curve) <= MAX_PR_POINTS:
        return curve
    positions = np.unique(np.linspace(0, len(curve) - 1, MAX_PR_POINTS).round().astype(int))
    return [curve[p] for p in positions]


def evaluate(
    db: CodeDatabase,
    db_labels: Matrix,
    query_codes: Matrix,
    query_labels: Matrix,
    truncate: Optional[int] = None,
    radius: int = 2,
    topn: Optional[Sequence[int]] = None,
    threads: int = 0,
) -> EvalReport:
    """
    Evaluate Hamming ranking of ``db`` for every query.

    A database item is relevant to a query when they share a class.

    Args:
        db (CodeDatabase): Packed database codes.
        db_labels (Matrix): c x N_db labels in database insertion order.
        query_codes (Matrix): K x Q {-1, +1} query codes.
        query_labels (Matrix): c x Q labels.
        truncate (Optional[int]): AP cut-off T.
        radius (int): Hamming radius for the radius precision.
        topn (Optional[Sequence[int]]): Cut-offs for the top-n curve.
        threads (int): Worker cap for per-query work; 0 lets the executor decide.

    Returns:
        EvalReport: All metrics; per-query values keep query order.
    """
    # Raise an exception if the shapes do not line up
    if db_labels.shape[1] != len(db):
        raise ShapeError("Database labels do not match the database", db_labels.shape, (len(db),))
    if query_codes.shape[0] != db.K:
        raise ShapeError("Query codes do not match the database K", query_codes.shape, (db.K,))
    if query_labels.shape != (db_labels.shape[0], query_codes.shape[1]):
        raise ShapeError("Query labels do not match", query_labels.shape, db_labels.shape, query_codes.shape)

    # Keep only the cut-offs the database can serve
    size = len(db)
    if topn is None:
        cutoffs = [n for n in DEFAULT_TOPN if n <= size] or [size]
    else:
        cutoffs = [int(n) for n in topn if 1 <= int(n) <= size]
    ranks = np.arange(1, size + 1, dtype=np.float64)
    packed = pack_columns(query_codes)

    def per_query(q: int) -> Tuple[float, float, npt.NDArray[np.float64], npt.NDArray[np.float64], bool]:
        # Rank the database by Hamming distance, ties in insertion order
        distances = db.distances(PackedCode(db.K, packed[q]))
        relevant = (db_labels.T @ query_labels[:, q]) > 0.0
        order = np.argsort(distances, kind="stable")
        ranked = relevant[order].astype(np.float64)
        ap = average_precision(ranked, truncate)
        inside = distances <= radius
        at_radius = float(relevant[inside].mean()) if np.any(inside) else 0.0
        hits = np.cumsum(ranked)
        total = hits[-1]
        recall = hits / total if total > 0 else np.zeros(size)
        return ap, at_radius, hits / ranks, recall, total == 0

    # Score the queries in parallel
    with ThreadPoolExecutor(max_workers=threads or None) as executor:
        results = list(executor.map(per_query, range(query_codes.shape[1])))

    if not results:
        raise ValueError("At least one query is required")

    # Average the per-query metrics
    aps = tuple(result[0] for result in results)
    precision = np.mean([result[2] for result in results], axis=0)
    recall = np.mean([result[3] for result in results], axis=0)
    missing = sum(1 for result in results if result[4])
    if missing:
        logger.warning("%d queries have no relevant database item", missing)

    report = EvalReport(
        map=float(np.mean(aps)),
        average_precisions=aps,
        precision_at_radius=float(np.mean([result[1] for result in results])),
        radius=radius,
        topn_curve=tuple((n, float(precision[n - 1])) for n in cutoffs),
        pr_curve=tuple(_downsample(list(zip(recall.tolist(), precision.tolist())))),
        truncate=truncate,
        queries_without_relevant=missing,
    )
    logger.info("MAP=%.6f over %d queries", report.map, report.queries)
    return report


def write_report(report: EvalReport, path: Union[str, Path], curves: bool = True) -> List[Path]:
    """
    Write the report as ``key = value`` text, plus one CSV per curve.

    Args:
        report (EvalReport): The report.
        path (Union[str, Path]): Text report destination.
        curves (bool): Also write ``<stem>.topn.csv`` and ``<stem>.pr.csv``.

    Returns:
        List[Path]: Every file written.
    """
    target = Path(path)
    lines = [
        f"truncate = {report.truncate if report.truncate is not None else 'none'}",
        f"queries = {report.queries}",
        f"queries_without_relevant = {report.queries_without_relevant}",
        f"map = {report.map!r}",
        f"radius = {report.radius}",
        f"precision_at_radius = {report.precision_at_radius!r}",
    ]
    lines.extend(f"precision_at_{n} = {value!r}" for n, value in report.topn_curve)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written = [target]

    if curves:
        for suffix, header, rows in (
            ("topn", ("rank", "value"), report.topn_curve),
            ("pr", ("recall", "precision"), report.pr_curve),
            ("ap", ("query", "value"), tuple(enumerate(report.average_precisions))),
        ):
            curve_path = target.with_suffix(f".{suffix}.csv")
            with open(curve_path, "w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(header)
                writer.writerows(rows)
            written.append(curve_path)
    return written


def read_report(path: Union[str, Path]) -> Dict[str, str]:
    """
    Parse a text report back into a dictionary of raw values.

    Args:
        path (Union[str, Path]): Text report.

    Returns:
        Dict[str, str]: Key to value text.
    """
    values: Dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class EvaluationService:
    """
    Evaluation bound to the report settings.

    Args:
        truncate (Optional[int]): AP cut-off.
        radius (int): Hamming radius for the radius precision.
        threads (int): Worker cap; 0 lets the executor decide.
    """

    def __init__(self, truncate: Optional[int] = None, radius: int = 2, threads: int = 0) -> None:
        self.truncate = truncate
        self.radius = radius
        self.threads = threads

    def evaluate(
        self,
        db: CodeDatabase,
        db_labels: Matrix,
        query_codes: Matrix,
        query_labels: Matrix,
        topn: Optional[Sequence[int]] = None,
    ) -> EvalReport:
        return evaluate(
            db,
            db_labels,
            query_codes,
            query_labels,
            truncate=self.truncate,
            radius=self.radius,
            topn=topn,
            threads=self.threads,
        )
