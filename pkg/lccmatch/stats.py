"""
Comparing several methods over several data splits, by ranks.

Each split ranks the methods by accuracy (1 is best, ties share the mean of
their positions). The Friedman statistic asks whether the average ranks
differ more than chance would allow; the Iman-Davenport correction turns it
into a less conservative F statistic. If they do, the Bonferroni-Dunn test
calls two methods significantly different when their average ranks are
further apart than the critical difference.

>>> table = compute_ranks([[0.9, 0.8, 0.7], [0.9, 0.9, 0.7]])
>>> table.ranks.tolist()
[[1.0, 2.0, 3.0], [1.5, 1.5, 3.0]]
>>> table.average_ranks.tolist()
[1.25, 1.75, 3.0]
"""
import csv
import enum
import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import chi2, f, rankdata

from lccmatch.core import (
    DegenerateTable,
    ParseError,
    SingularDenominator,
    UnsupportedCriticalValue,
)
from lccmatch.critical_values import BONFERRONI_DUNN_Q

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.10


class Significance(enum.Enum):
    BETTER = 'better'
    WORSE = 'worse'
    NOT_SIGNIFICANT = 'not-significant'


def _table_error(n_splits: int, k: int) -> str:
    return (
        f"A rank comparison needs at least 2 splits and 2 methods, "
        f"got {n_splits} splits and {k} methods"
    )


class RankTable:
    """
    Accuracies of k methods on N splits, and the rank of each method within
    each split.
    """

    def __init__(self, scores: np.ndarray, ranks: np.ndarray, method_names: Sequence[str]):
        self.scores = scores
        self.ranks = ranks
        self.method_names = list(method_names)

    @property
    def n_splits(self) -> int:
        return self.ranks.shape[0]

    @property
    def n_methods(self) -> int:
        return self.ranks.shape[1]

    @property
    def average_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            'method_names': self.method_names,
            'n_splits': self.n_splits,
            'average_ranks': dict(zip(self.method_names, self.average_ranks.tolist())),
        }

    def __repr__(self) -> str:
        return f"RankTable(n_splits={self.n_splits}, method_names={self.method_names!r})"


def compute_ranks(scores, method_names: Optional[Sequence[str]] = None) -> RankTable:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise DegenerateTable(f"Expected a splits x methods table, got shape {scores.shape}")
    n_splits, k = scores.shape
    if n_splits < 2 or k < 2:
        raise DegenerateTable(_table_error(n_splits, k))
    if not np.all(np.isfinite(scores)):
        raise DegenerateTable("The accuracy table has non-finite entries")
    if method_names is None:
        method_names = [f"method {index + 1}" for index in range(k)]
    if len(method_names) != k:
        raise DegenerateTable(f"There are {k} methods but {len(method_names)} method names")

    # Higher accuracy gets the smaller rank.
    ranks = rankdata(-scores, method='average', axis=1)
    return RankTable(scores, ranks, method_names)


def friedman_chi2(avg_ranks: Sequence[float], k: int, n: int) -> float:
    """
    The Friedman statistic,

        chi2_F = 12 N / (k (k + 1)) * (sum_j R_j^2 - k (k + 1)^2 / 4)

    >>> friedman_chi2([1.0, 2.0], 2, 10)
    10.0
    >>> friedman_chi2([2.0, 2.0, 2.0], 3, 30)
    0.0
    """
    avg_ranks = np.asarray(avg_ranks, dtype=float)
    if avg_ranks.shape != (k,):
        raise DegenerateTable(f"Expected {k} average ranks, got {avg_ranks.shape[0]}")
    return float(
        12.0 * n / (k * (k + 1)) * (np.sum(avg_ranks ** 2) - k * (k + 1) ** 2 / 4.0)
    )


def iman_f(chi2_f: float, k: int, n: int) -> float:
    """
    The Iman-Davenport statistic, F_F = (N - 1) chi2_F / (N (k - 1) - chi2_F),
    which follows the F distribution with k - 1 and (k - 1)(N - 1) degrees
    of freedom.

    The denominator vanishes when every split ranks the methods the same way:

    >>> iman_f(60.0, 3, 30)
    Traceback (most recent call last):
        ...
    lccmatch.core.SingularDenominator: F_F is undefined when chi2_F (60) reaches N(k - 1) = 60
    """
    denominator = n * (k - 1) - chi2_f
    if denominator <= 0:
        raise SingularDenominator(
            f"F_F is undefined when chi2_F ({chi2_f:g}) reaches N(k - 1) = {n * (k - 1)}"
        )
    return (n - 1) * chi2_f / denominator


def friedman_p_value(chi2_f: float, k: int) -> float:
    return float(chi2.sf(chi2_f, k - 1))


def iman_p_value(f_f: float, k: int, n: int) -> float:
    return float(f.sf(f_f, k - 1, (k - 1) * (n - 1)))


def f_critical_value(alpha: float, k: int, n: int) -> float:
    """
    The value F_F must exceed to reject the hypothesis that all methods are
    equivalent at level `alpha`.
    """
    return float(f.ppf(1 - alpha, k - 1, (k - 1) * (n - 1)))


def critical_difference(q_alpha: float, k: int, n: int) -> float:
    """
    CD = q_alpha * sqrt(k (k + 1) / (6 N))

    >>> round(critical_difference(1.96, 3, 30), 3)
    0.506
    """
    return float(q_alpha * np.sqrt(k * (k + 1) / (6.0 * n)))


def bonferroni_dunn_q(k: int, alpha: float = DEFAULT_ALPHA) -> float:
    """
    Look up the two-tailed Bonferroni-Dunn critical value for k methods.

    >>> bonferroni_dunn_q(3, 0.10)
    1.96
    >>> bonferroni_dunn_q(12, 0.05)
    Traceback (most recent call last):
        ...
    lccmatch.core.UnsupportedCriticalValue: No bundled critical value for k=12 at alpha=0.05; pass q_alpha explicitly
    """
    key = (round(float(alpha), 4), int(k))
    if key not in BONFERRONI_DUNN_Q:
        raise UnsupportedCriticalValue(
            f"No bundled critical value for k={k} at alpha={alpha:g}; pass q_alpha explicitly"
        )
    return BONFERRONI_DUNN_Q[key]


def compare_average_ranks(avg_ranks: Sequence[float], cd: float) -> List[List[Significance]]:
    """
    Entry [a][b] says how method a compares to method b: BETTER when its
    average rank is lower by more than `cd`, WORSE when it's higher by more
    than `cd`, and NOT_SIGNIFICANT otherwise.

    >>> verdicts = compare_average_ranks([2.43, 1.93, 1.63], 0.51)
    >>> verdicts[0][2], verdicts[2][0]
    (<Significance.WORSE: 'worse'>, <Significance.BETTER: 'better'>)
    >>> verdicts[0][1]
    <Significance.NOT_SIGNIFICANT: 'not-significant'>
    """
    avg_ranks = [float(rank) for rank in avg_ranks]
    verdicts = []
    for rank_a in avg_ranks:
        row = []
        for rank_b in avg_ranks:
            if abs(rank_a - rank_b) <= cd:
                row.append(Significance.NOT_SIGNIFICANT)
            elif rank_a < rank_b:
                row.append(Significance.BETTER)
            else:
                row.append(Significance.WORSE)
        verdicts.append(row)
    return verdicts


def pairwise_significance(rank_table: RankTable, q_alpha: float) -> List[List[Significance]]:
    cd = critical_difference(q_alpha, rank_table.n_methods, rank_table.n_splits)
    return compare_average_ranks(rank_table.average_ranks, cd)


def read_accuracy_csv(path: str) -> RankTable:
    """
    Read a splits x methods table of accuracies. If the first row isn't
    numeric, it names the methods.
    """
    method_names = None
    rows = []
    with open(path, encoding='utf-8', newline='') as infile:
        for line_number, row in enumerate(csv.reader(infile), start=1):
            row = [cell.strip() for cell in row]
            if not any(row):
                continue
            if line_number == 1 and not _is_numeric_row(row):
                method_names = row
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as err:
                raise ParseError(f"not a number: {err}", line_number) from err
            width = len(method_names) if method_names is not None else (len(rows[0]) if rows else len(values))
            if len(values) != width:
                raise ParseError(f"expected {width} accuracies, got {len(values)}", line_number)
            rows.append(values)

    if not rows:
        raise ParseError(f"{path} has no accuracy rows")
    logger.debug("Read %d splits of %d methods from %s", len(rows), len(rows[0]), path)
    return compute_ranks(rows, method_names)


def write_accuracy_csv(path: str, scores, method_names: Sequence[str]) -> None:
    """
    Write a splits x methods table of accuracies the way `read_accuracy_csv`
    reads it, with a header row of method names.
    """
    scores = np.asarray(scores, dtype=float)
    with open(path, 'w', encoding='utf-8', newline='') as outfile:
        writer = csv.writer(outfile)
        writer.writerow(list(method_names))
        for row in scores:
            writer.writerow([repr(float(value)) for value in row])


def _is_numeric_row(row: Sequence[str]) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True
