# -*- coding: utf-8 -*-

"""A module for the optimizer, the deterministic training loop, evaluation and metrics files"""

from collections import OrderedDict
from dataclasses import astuple, dataclass, field, fields, replace
import logging
import os
import time

from astropy.table import Table
import numpy as np

from . import numeric as nm
from .checkpoint import Checkpoint, save_checkpoint
from .encoder import decays
from .heads import accuracy_counts
from .lutlm import LanguageModel
from .preprocess import read_examples, reweight
from .tokenizer import WeightTable, load_vocabulary

logger = logging.getLogger(__name__)

BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-6
CHECKPOINT_NAME = 'checkpoint.lutlm'
METRICS_NAME = 'metrics.csv'
EVAL_METRICS_NAME = 'eval_metrics.csv'


class TrainingError(RuntimeError):
    """Raised when training cannot continue; the last checkpoint is kept"""
    pass


@dataclass
class MetricsRow:
    """
    Means over one evaluation interval of training batches
    """
    step: int
    wall_seconds: float
    total_loss: float
    mlm_loss: float
    ns_loss: float
    ponder_loss: float
    mlm_acc: float
    ns_acc: float
    examples_per_sec: float
    mean_ponder_steps: float


COLUMNS = [f.name for f in fields(MetricsRow)]


@dataclass
class AdamState:
    """
    First and second moments per parameter and the number of updates made
    """
    m: OrderedDict = field(default_factory=OrderedDict)
    v: OrderedDict = field(default_factory=OrderedDict)
    step: int = 0

    def moments(self):
        """The moments keyed for a checkpoint"""
        arrays = OrderedDict(('adam.m.' + name, values) for name, values in self.m.items())
        arrays.update(('adam.v.' + name, values) for name, values in self.v.items())
        return arrays

    @classmethod
    def from_moments(cls, arrays, step):
        """Rebuild the state from checkpoint moments"""
        state = cls(step=step)
        for key, values in arrays.items():
            kind, name = key[len('adam.'):].split('.', 1)
            getattr(state, kind)[name] = np.array(values)

        return state


def learning_rate_at(step, config):
    """
    Linear warmup to the peak, then linear decay to 0 at the final step

    Parameters
    ----------
    step: int
        The 1-based step index
    config: TrainConfig
        Supplies learning_rate, warmup_fraction and steps

    Returns
    -------
    float
        The learning rate
    """
    warmup = int(round(config.warmup_fraction * config.steps))
    if warmup and step <= warmup:
        return config.learning_rate * step / warmup

    return config.learning_rate * max(0, config.steps - step) / max(1, config.steps - warmup)


def optimizer_step(params, grads, state, step_index, config):
    """
    One bias-corrected adaptive-moment update with decoupled weight decay

    Parameters
    ----------
    params: ParameterStore
        The parameters, replaced in one exclusive update
    grads: sequence, dict
        Gradients aligned with params.names(), or keyed by name
    state: AdamState
        The moments, updated in place
    step_index: int
        The 1-based step, for bias correction and the schedule
    config: TrainConfig
        Learning rate, schedule, weight decay, the latent matrix rate scale
        and frozen name prefixes

    Returns
    -------
    tuple
        The parameters and the state
    """
    if not isinstance(grads, dict):
        grads = OrderedDict(zip(params.names(), grads))

    # Check everything before touching anything
    for name, grad in grads.items():
        if np.shape(grad) != params[name].shape:
            raise nm.ShapeError("{}: gradient shape {} differs from {}".format(name, np.shape(grad), params[name].shape))
        if not np.all(np.isfinite(grad)):
            raise nm.NumericError("Non-finite gradient for '{}' at step {}; step aborted".format(name, step_index))

    rate = learning_rate_at(step_index, config)
    beta1, beta2 = BETAS
    correction1, correction2 = 1. - beta1 ** step_index, 1. - beta2 ** step_index
    frozen = tuple(config.freeze)

    updated = OrderedDict()
    for name, grad in grads.items():
        if frozen and name.startswith(frozen):
            continue

        value = params[name].data
        m = beta1 * state.m.get(name, np.zeros_like(value)) + (1. - beta1) * grad
        v = beta2 * state.v.get(name, np.zeros_like(value)) + (1. - beta2) * grad ** 2
        state.m[name], state.v[name] = m.astype(value.dtype), v.astype(value.dtype)

        update = (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPSILON)
        if decays(name):
            update = update + config.weight_decay * value
        scale = config.latent_rate_scale if name == 'latent.matrix' else 1.
        updated[name] = (value - scale * rate * update).astype(value.dtype)

    params.update(updated)
    state.step = step_index

    return params, state


class BatchStream:
    """
    Batches in a seeded order, reshuffled every pass over the examples
    """
    def __init__(self, examples, batch_size, seed=0, position=0):
        """
        Initialize the stream

        Parameters
        ----------
        examples: sequence
            The TrainingExamples
        batch_size: int
            Examples per batch
        seed: int
            Pass e is ordered by the generator seeded with (seed, e)
        position: int
            The number of examples already consumed
        """
        if not examples:
            raise ValueError("No training examples")

        self.examples = list(examples)
        self.batch_size = batch_size
        self.seed = seed
        self.position = position
        self._orders = {}

    def _order(self, epoch):
        if epoch not in self._orders:
            self._orders = {epoch: np.random.default_rng([self.seed, epoch]).permutation(len(self.examples))}
        return self._orders[epoch]

    def __iter__(self):
        return self

    def __next__(self):
        batch = []
        for _ in range(self.batch_size):
            epoch, offset = divmod(self.position, len(self.examples))
            batch.append(self.examples[self._order(epoch)[offset]])
            self.position += 1

        return batch


class IntervalStats:
    """
    Running sums over the batches of one evaluation interval
    """
    def __init__(self):
        self.losses = np.zeros(4)
        self.batches = self.examples = 0
        self.mlm = [0, 0]
        self.ns = [0, 0]
        self.ponder_steps = 0.
        self.seconds = 0.

    def add(self, result, batch, seconds):
        breakdown = result.breakdown
        self.losses += [breakdown.total, breakdown.mlm, breakdown.ns, breakdown.ponder]
        self.batches += 1
        self.examples += len(batch)
        for sums, counts in ((self.mlm, accuracy_counts(result.mlm_logits, batch.masked_labels)),
                             (self.ns, accuracy_counts(result.ns_logits, batch.ns_labels))):
            sums[0] += counts[0]
            sums[1] += counts[1]
        self.ponder_steps += result.mean_ponder_steps(batch.attention_mask)
        self.seconds += seconds

    def row(self, step, wall_seconds):
        """The MetricsRow of the interval"""
        means = self.losses / self.batches
        return MetricsRow(step=step, wall_seconds=wall_seconds, total_loss=means[0], mlm_loss=means[1], ns_loss=means[2],
                          ponder_loss=means[3], mlm_acc=self.mlm[0] / max(self.mlm[1], 1), ns_acc=self.ns[0] / max(self.ns[1], 1),
                          examples_per_sec=self.examples / max(self.seconds, 1e-9), mean_ponder_steps=self.ponder_steps / self.batches)


def emit_metrics(rows, path):
    """
    Write metrics rows as CSV

    Parameters
    ----------
    rows: sequence
        The MetricsRows
    path: str
        The output path
    """
    table = Table(names=COLUMNS, dtype=[int] + [float] * (len(COLUMNS) - 1))
    for row in rows:
        table.add_row(astuple(row))

    formats = {name: '%.6g' for name in COLUMNS[1:]}
    table.write(path, format='ascii.csv', overwrite=True, formats=formats)


def read_metrics(path):
    """
    Read a metrics CSV

    Parameters
    ----------
    path: str
        The metrics file

    Returns
    -------
    list
        The MetricsRows
    """
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    table = Table.read(path, format='ascii.csv')
    if table.colnames != COLUMNS:
        raise ValueError("{}: columns {} are not the metrics columns {}".format(path, table.colnames, COLUMNS))

    return [MetricsRow(int(row['step']), *(float(row[name]) for name in COLUMNS[1:])) for row in table]


@dataclass
class EvalResult:
    """
    Accuracies and mean losses over a whole example file
    """
    mlm_accuracy: float
    ns_accuracy: float
    mlm_loss: float
    ns_loss: float
    ponder_loss: float
    total_loss: float
    mean_ponder_steps: float


EVAL_COLUMNS = ['step'] + [f.name for f in fields(EvalResult)]


def emit_eval_metrics(rows, path):
    """
    Write held-out evaluations as CSV, one row per evaluation interval

    Parameters
    ----------
    rows: sequence
        (step, EvalResult) pairs
    path: str
        The output path
    """
    table = Table(names=EVAL_COLUMNS, dtype=[int] + [float] * (len(EVAL_COLUMNS) - 1))
    for step, result in rows:
        table.add_row((step,) + astuple(result))

    table.write(path, format='ascii.csv', overwrite=True, formats={name: '%.6g' for name in EVAL_COLUMNS[1:]})


def read_eval_metrics(path):
    """The (step, EvalResult) pairs of a held-out metrics CSV"""
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    table = Table.read(path, format='ascii.csv')
    if table.colnames != EVAL_COLUMNS:
        raise ValueError("{}: columns {} are not the evaluation columns {}".format(path, table.colnames, EVAL_COLUMNS))

    return [(int(row['step']), EvalResult(*(float(row[name]) for name in EVAL_COLUMNS[1:]))) for row in table]


def evaluate(model, examples, batch_size=20):
    """
    Score a model on fixed examples without changing it

    Parameters
    ----------
    model: LanguageModel
        The model
    examples: sequence
        TrainingExamples, masked at prepare time
    batch_size: int
        Examples per forward pass

    Returns
    -------
    EvalResult
        Pooled accuracies and example-weighted mean losses
    """
    if not examples:
        raise ValueError("No evaluation examples")

    losses, steps, total = np.zeros(4), 0., 0
    mlm, ns = [0, 0], [0, 0]
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        batch = model.collate(chunk)
        result = model.forward(batch)
        breakdown = result.breakdown

        losses += len(chunk) * np.array([breakdown.mlm, breakdown.ns, breakdown.ponder, breakdown.total])
        steps += len(chunk) * result.mean_ponder_steps(batch.attention_mask)
        total += len(chunk)
        for sums, counts in ((mlm, accuracy_counts(result.mlm_logits, batch.masked_labels)),
                             (ns, accuracy_counts(result.ns_logits, batch.ns_labels))):
            sums[0] += counts[0]
            sums[1] += counts[1]

    losses /= total
    result = EvalResult(mlm[0] / max(mlm[1], 1), ns[0] / max(ns[1], 1), *losses.tolist(), steps / total)
    logger.info("evaluated %i examples: mlm_acc %.4f, ns_acc %.4f", total, result.mlm_accuracy, result.ns_accuracy)

    return result


def evaluate_checkpoint(checkpoint_path, examples_path, batch_size=20):
    """
    Evaluate a checkpoint on an example file

    Parameters
    ----------
    checkpoint_path: str
        The checkpoint
    examples_path: str
        The example file; its V must match the checkpoint's

    Returns
    -------
    EvalResult
        The scores
    """
    model = LanguageModel.from_checkpoint(checkpoint_path)
    _, examples = read_examples(examples_path, vocab_size=model.config.vocab)

    return evaluate(model, examples, batch_size)


@dataclass
class TrainResult:
    """
    The outcome of a training run
    """
    model: LanguageModel
    rows: list
    checkpoint: str
    metrics: str
    eval_rows: list = field(default_factory=list)
    eval_metrics: str = None


def _prepare_run(model_config, train_config):
    """Load and cross-check the vocabulary, configuration and examples"""
    train_config.validate()
    if model_config.variant != train_config.variant:
        raise ValueError("model variant '{}' differs from training variant '{}'".format(model_config.variant, train_config.variant))

    vocab = load_vocabulary(train_config.vocab, train_config.emoticons or None)
    if model_config.vocab == 0:
        model_config = replace(model_config, vocab=len(vocab))
    elif model_config.vocab != len(vocab):
        raise ValueError("vocab = {} in the config but the vocabulary has {} tokens".format(model_config.vocab, len(vocab)))

    model_config = replace(model_config, act_tau=train_config.act_tau).validate()
    header, examples = read_examples(train_config.examples, vocab_size=len(vocab))
    if header['max_length'] > model_config.max_positions:
        raise ValueError("examples of length {} exceed max_positions = {}".format(header['max_length'], model_config.max_positions))

    table = WeightTable(**train_config.weights)
    examples = reweight(examples, vocab, table)
    evaluation = []
    if train_config.eval_examples:
        _, evaluation = read_examples(train_config.eval_examples, vocab_size=len(vocab))
        evaluation = reweight(evaluation, vocab, table)

    return model_config, vocab, examples, evaluation


def train(model_config, train_config, clock=time.perf_counter):
    """
    Train one variant, writing metrics and checkpoints to the output directory

    Parameters
    ----------
    model_config: ModelConfig
        The architecture; vocab = 0 takes the vocabulary's size
    train_config: TrainConfig
        The run settings
    clock: callable
        Returns seconds; a deterministic clock makes the metrics file reproducible

    Returns
    -------
    TrainResult
        The trained model, the metrics rows, the held-out evaluations when
        eval_examples is set, and the output paths
    """
    model_config, vocab, examples, evaluation = _prepare_run(model_config, train_config)

    os.makedirs(train_config.output_dir, exist_ok=True)
    checkpoint_path = os.path.join(train_config.output_dir, CHECKPOINT_NAME)
    metrics_path = os.path.join(train_config.output_dir, METRICS_NAME)
    eval_path = os.path.join(train_config.output_dir, EVAL_METRICS_NAME) if evaluation else None

    model = LanguageModel(model_config, vocab=vocab, seed=train_config.seed, tau=train_config.act_tau)
    state, start, position, rows, eval_rows = AdamState(), 0, 0, [], []
    if train_config.resume:
        ckpt = Checkpoint(train_config.resume, config=model_config)
        model = LanguageModel(model_config, params=ckpt.parameters(), vocab=vocab, tau=train_config.act_tau)
        state, start, position = AdamState.from_moments(ckpt.moments, ckpt.step), ckpt.step, ckpt.example_index
        if os.path.exists(metrics_path):
            rows = [row for row in read_metrics(metrics_path) if row.step <= start]
        if eval_path and os.path.exists(eval_path):
            eval_rows = [(step, held) for step, held in read_eval_metrics(eval_path) if step <= start]
        logger.info("resuming from %s at step %i, example %i", train_config.resume, start, position)

    stream = BatchStream(examples, train_config.batch_size, train_config.seed, position)
    meta = OrderedDict([('vocab', train_config.vocab), ('emoticons', train_config.emoticons)])
    wall = rows[-1].wall_seconds if rows else 0.
    stats = IntervalStats()
    logger.info("training the %s variant (%i parameters) for %i steps on %i examples",
                model_config.variant, model.parameter_count, train_config.steps, len(examples))

    for step in range(start + 1, train_config.steps + 1):
        batch = model.collate(next(stream))
        tick = clock()
        try:
            with nm.ComputationRecord():
                result = model.forward(batch)
            grads = nm.gradients(result.total, model.params.tensors())
            optimizer_step(model.params, grads, state, step, train_config)
        except nm.NumericError as err:
            raise TrainingError("step {}: {}; the last checkpoint is kept at {}".format(step, err, checkpoint_path))

        seconds = clock() - tick
        wall += seconds
        stats.add(result, batch, seconds)
        logger.debug("step %i: total loss %.4f", step, result.total.item())

        if step % train_config.eval_interval == 0 or step == train_config.steps:
            rows.append(stats.row(step, wall))
            emit_metrics(rows, metrics_path)
            logger.info("step %i: total_loss %.4f, mlm_acc %.4f, %.1f examples/sec", step, rows[-1].total_loss,
                        rows[-1].mlm_acc, rows[-1].examples_per_sec)
            stats = IntervalStats()
            if evaluation:
                eval_rows.append((step, evaluate(model, evaluation, train_config.batch_size)))
                emit_eval_metrics(eval_rows, eval_path)

        if step % train_config.checkpoint_interval == 0 or step == train_config.steps:
            meta.update(step=step, example_index=stream.position)
            save_checkpoint(checkpoint_path, model.params, model_config, state.moments(), meta)

    return TrainResult(model, rows, checkpoint_path, metrics_path, eval_rows, eval_path)
