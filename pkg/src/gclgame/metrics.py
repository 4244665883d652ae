"""
Scores and the continual-learning summary metrics.

R[i][j] is the score on task j's test split after training task i. PM is
the mean of the diagonal; FM averages, over tasks k >= 1, the mean drop
R[k-1][j] - R[k][j] over earlier tasks j < k. Positive FM means forgetting.
"""
import enum

import numpy as np
import pandas as pd

from .errors import EmptyInput, EmptyMatrix, LengthMismatch, TooFewTasks


class ScoreKind(enum.Enum):
    ACCURACY = "Accuracy"
    MICRO_F1 = "MicroF1"

    @classmethod
    def from_flag(cls, flag):
        return dict(acc=cls.ACCURACY, f1=cls.MICRO_F1)[flag]


def predictions_from_logits(logits):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=1)


def _pair(predictions, labels):
    predictions = [int(p) for p in np.asarray(predictions).reshape(-1)]
    labels = [int(y) for y in np.asarray(labels).reshape(-1)]
    if len(predictions) != len(labels):
        raise LengthMismatch("{} predictions for {} labels".format(len(predictions), len(labels)))
    if not labels:
        raise EmptyInput("nothing to score")
    return predictions, labels


def accuracy(predictions, labels):
    predictions, labels = _pair(predictions, labels)
    correct = sum(1 for p, y in zip(predictions, labels) if p == y)
    return correct / len(labels)


def micro_f1(predictions, labels, class_set=None):
    """Global TP / (TP + (FP + FN) / 2) over the classes of `class_set`."""
    predictions, labels = _pair(predictions, labels)
    classes = set(labels) | set(predictions) if class_set is None else set(class_set)

    tp = fp = fn = 0
    for c in classes:
        for p, y in zip(predictions, labels):
            if p == c and y == c:
                tp += 1
            elif p == c:
                fp += 1
            elif y == c:
                fn += 1

    denom = tp + (fp + fn) / 2
    return tp / denom if denom else 0.0


def score(kind, predictions, labels, class_set=None):
    if kind is ScoreKind.MICRO_F1:
        return micro_f1(predictions, labels, class_set)
    return accuracy(predictions, labels)


class AccuracyMatrix:
    def __init__(self, num_tasks, score_kind=ScoreKind.ACCURACY):
        self.R = np.full((num_tasks, num_tasks), np.nan)
        self.score_kind = ScoreKind(score_kind)

    @classmethod
    def from_rows(cls, rows, score_kind=ScoreKind.ACCURACY):
        rows = np.asarray(rows, dtype=np.float64)
        matrix = cls(len(rows), score_kind)
        matrix.R[...] = rows
        return matrix

    @property
    def num_tasks(self):
        return len(self.R)

    def record(self, after_task, on_task, value):
        assert on_task <= after_task, "upper triangle is unused"
        assert 0.0 <= value <= 1.0, "score outside [0, 1]"
        self.R[after_task, on_task] = value


def pm(matrix):
    R = matrix.R
    T = len(R)
    if T == 0:
        raise EmptyMatrix("accuracy matrix has no tasks")

    total = 0.0
    for k in range(T):
        total += float(R[k][k])
    return total / T


def fm(matrix):
    R = matrix.R
    T = len(R)
    if T < 2:
        raise TooFewTasks("forgetting needs at least two tasks, got {}".format(T))

    total = 0.0
    for k in range(1, T):
        drop = 0.0
        for j in range(k):
            drop += float(R[k - 1][j]) - float(R[k][j])
        total += drop / k
    return total / (T - 1)


class MetricsReport:
    """Rows (run_id, seed, method, PM, FM, row, R0..R{T-1}), one per matrix row."""

    def __init__(self):
        self.rows = []

    def add(self, run_id, seed, method, matrix):
        T = matrix.num_tasks
        summary_pm = pm(matrix)
        summary_fm = fm(matrix) if T >= 2 else float("nan")

        for i in range(T):
            row = dict(run_id=run_id, seed=seed, method=method, PM=summary_pm, FM=summary_fm, row=i)
            for j in range(T):
                row["R{}".format(j)] = matrix.R[i][j]
            self.rows.append(row)

    def to_frame(self):
        return pd.DataFrame(self.rows)

    @staticmethod
    def matrices(frame):
        """(run_id, seed, method) -> AccuracyMatrix rebuilt from a report frame."""
        out = {}
        r_columns = sorted((c for c in frame.columns if c.startswith("R") and c[1:].isdigit()),
                           key=lambda c: int(c[1:]))
        for key, group in frame.groupby(['run_id', 'seed', 'method'], sort=True):
            group = group.sort_values('row')
            T = len(group)
            out[key] = AccuracyMatrix.from_rows(group[r_columns[:T]].to_numpy(dtype=np.float64))
        return out
