"""
The continual pipeline: train on each task of a stream in order and fill the
accuracy matrix after every task.
"""
import collections
import concurrent.futures
import logging

import numpy as np

from . import gnn, metrics
from .errors import InvalidConfig
from .game import TrainTrace, train_task
from .problem import GnnProblem
from .replay import ReplayBuffer, task_items

log = logging.getLogger(__name__)

METHODS = 'game', 'nogame', 'replay', 'finetune', 'joint'

Prediction = collections.namedtuple("Prediction", "after_task on_task predictions labels classes")
ContinualResult = collections.namedtuple("ContinualResult", "matrix params trace predictions buffer")


def method_config(config, method):
    """The game configuration a baseline method actually trains with."""
    if method == 'game':
        return config
    if method == 'nogame':
        return config.replace(beta3=0.0, zeta=0)
    if method == 'replay':
        return config.replace(beta1=0.0, beta2=0.0, beta3=0.0, zeta=0)
    if method in ('finetune', 'joint'):
        return config.replace(beta1=0.0, beta2=0.0, beta3=0.0, zeta=0, buffer_capacity=0)
    raise InvalidConfig('method', "expected one of {}".format(", ".join(METHODS)))


def evaluate_task(params, model_config, task, kind, part='test'):
    """Score of one task's split, predicting among the task's own classes."""
    predictions, labels = [], []
    by_graph = collections.defaultdict(list)
    for g, pos in task.items(part):
        by_graph[g].append(pos)

    for g in sorted(by_graph):
        snapshot = task.graphs[g]
        predicted = gnn.predict(params, model_config, snapshot, task.classes)
        for pos in by_graph[g]:
            if pos is None:
                predictions.append(int(predicted[0]))
                labels.append(snapshot.labels)
            else:
                predictions.append(int(predicted[pos]))
                labels.append(int(snapshot.labels[pos]))

    return metrics.score(kind, predictions, labels, task.classes), predictions, labels


def run_continual(stream, model_config, game_config, method='game', seed=0, *,
                  score_kind=metrics.ScoreKind.ACCURACY, params=None):
    config = method_config(game_config, method)
    problem = GnnProblem(model_config)

    if params is None:
        params = gnn.init_params(model_config, seed)
    w = params.values.copy()

    buffer = ReplayBuffer(config.buffer_capacity)
    matrix = metrics.AccuracyMatrix(len(stream.tasks), score_kind)
    trace = TrainTrace(config)
    history = []
    seen = []

    for task in stream.tasks:
        k = task.task_id
        items = task_items(task, 'train')
        seen.extend(items)
        new_items = list(seen) if method == 'joint' else items

        rng = np.random.default_rng([seed, k])
        w, task_trace = train_task(problem, w, new_items, buffer, config, rng, task_id=k)
        trace.extend(task_trace)

        current = params.with_values(w)
        for earlier in stream.tasks[:k + 1]:
            value, predictions, labels = evaluate_task(current, model_config, earlier, score_kind)
            matrix.record(k, earlier.task_id, value)
            history.append(Prediction(k, earlier.task_id, predictions, labels, sorted(earlier.classes)))

        log.info("method=%s seed=%s task=%d row=%s", method, seed, k,
                 " ".join("%.4f" % v for v in matrix.R[k, :k + 1]))

    return ContinualResult(matrix, params.with_values(w), trace, history, buffer)


class Completed(list):
    """Results of the jobs that finished, in job order."""

    interrupted = False


def run_jobs(one, jobs, workers=1):
    """
    Apply `one` to every job, on a thread pool when `workers > 1`. A
    KeyboardInterrupt stops the run; the results finished so far come back
    with `interrupted` set.
    """
    jobs = list(jobs)
    done = Completed()

    try:
        if workers > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(one, job) for job in jobs]
                try:
                    for future in futures:
                        done.append(future.result())
                except KeyboardInterrupt:
                    for future in futures:
                        future.cancel()
                    raise
        else:
            for job in jobs:
                done.append(one(job))
    except KeyboardInterrupt:
        log.warning("interrupted: finished=%d jobs=%d", len(done), len(jobs))
        done.interrupted = True

    return done
