# -*- coding: utf-8 -*-

"""A module for the pretraining heads, the weighted masked-token loss, the ponder loss and accuracy metrics"""

from collections import Counter
from dataclasses import dataclass
import logging

import numpy as np

from . import numeric as nm

logger = logging.getLogger(__name__)

# Counted loss events, e.g. batches whose masked positions all carry zero weight
EVENTS = Counter()
ZERO_WEIGHT_BATCH = 'all-zero-weight batch'


@dataclass
class LossBreakdown:
    """
    The loss terms of one batch as plain floats
    """
    mlm: float
    ns: float
    ponder: float
    total: float = None

    def __post_init__(self):
        if self.total is None:
            self.total = self.mlm + self.ns + self.ponder

        if not np.all(np.isfinite([self.mlm, self.ns, self.ponder, self.total])):
            raise nm.NumericError("Non-finite loss term in {}".format(self))


class MLMHead:
    """
    The masked-token head: dense transform, GELU, layer-norm, then the tied embedding table
    """
    def __init__(self, params, config):
        """
        Initialize the head as a view on the parameter store

        Parameters
        ----------
        params: ParameterStore
            The parameters; the output weights are 'embeddings.token' itself
        config: ModelConfig
            The model configuration
        """
        self.transform_weight = params['mlm.transform.weight']
        self.transform_bias = params['mlm.transform.bias']
        self.gain = params['mlm.norm.gain']
        self.shift = params['mlm.norm.shift']
        self.embeddings = params['embeddings.token']
        self.bias = params['mlm.bias']
        self.epsilon = config.layer_norm_epsilon

    def transform(self, gathered):
        """The hidden transform applied before the output projection"""
        hidden = nm.gelu(nm.add(nm.matmul(gathered, self.transform_weight), self.transform_bias))
        return nm.layer_normalize(hidden, self.gain, self.shift, self.epsilon)


def gather_positions(states, masked_positions):
    """
    The states at masked positions

    Parameters
    ----------
    states: Tensor
        Shape (positions, hidden) or (batch, positions, hidden)
    masked_positions: array-like, tuple
        Positions for unbatched states, or (example index, position) arrays

    Returns
    -------
    Tensor
        Shape (masked count, hidden)
    """
    index = masked_positions if isinstance(masked_positions, tuple) else (masked_positions,)
    if len(index) != states.ndim - 1:
        raise nm.ShapeError("{} index arrays for states of shape {}".format(len(index), states.shape))

    return nm.select(states, index)


def mlm_logits(states, masked_positions, head, latent_bias_vector=None):
    """
    Vocabulary logits at the masked positions

    Parameters
    ----------
    states: Tensor
        Final encoder states
    masked_positions: array-like, tuple
        See `gather_positions`
    head: MLMHead
        The head
    latent_bias_vector: Tensor (optional)
        Per-example bias rows aligned with the masked positions, shape
        (masked count, V), or a single (V,) vector for all of them

    Returns
    -------
    Tensor
        Shape (masked count, V)
    """
    hidden = head.transform(gather_positions(states, masked_positions))
    logits = nm.add(nm.matmul(hidden, nm.transpose(head.embeddings)), head.bias)
    if latent_bias_vector is not None:
        logits = nm.add(logits, latent_bias_vector)

    return logits


def weighted_mlm_loss(logits, labels, weights):
    """
    Cross-entropy averaged with per-position loss multipliers

    Parameters
    ----------
    logits: Tensor
        Shape (masked count, V)
    labels: array-like
        The original token ids
    weights: array-like
        Non-negative multipliers

    Returns
    -------
    Tensor
        sum(w * CE) / sum(w), or 0 when every weight is 0
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (logits.shape[0],) or np.shape(labels) != weights.shape:
        raise nm.ShapeError("logits {}, labels {} and weights {} do not align".format(logits.shape, np.shape(labels), weights.shape))

    if np.any(weights < 0):
        raise ValueError("loss weights must be >= 0")

    total = weights.sum()
    if total == 0:
        EVENTS[ZERO_WEIGHT_BATCH] += 1
        logger.warning("%s (%i so far); masked-token loss set to 0", ZERO_WEIGHT_BATCH, EVENTS[ZERO_WEIGHT_BATCH])
        return nm.Tensor(0.)

    losses = nm.cross_entropy(logits, labels)
    return nm.scale(nm.reduce_sum(nm.mul(losses, weights)), 1. / total)


def ns_logits_and_loss(cls_state, params, config, ns_labels, features=None):
    """
    Next-sentence logits from the pooled [CLS] state and the optional distance features

    Parameters
    ----------
    cls_state: Tensor
        Shape (batch, hidden)
    params: ParameterStore
        The parameters
    config: ModelConfig
        The model configuration; latent models read H + 2 inputs
    ns_labels: array-like
        0 for the actual continuation, 1 for a random one
    features: Tensor (optional)
        (euclidean, kl) per example, shape (batch, 2); zeros when omitted

    Returns
    -------
    tuple
        The logits (batch, 2) and the mean cross-entropy
    """
    pooled = nm.tanh(nm.add(nm.matmul(cls_state, params['pooler.weight']), params['pooler.bias']))
    if config.ns_inputs > config.hidden:
        if features is None:
            features = np.zeros((cls_state.shape[0], config.ns_inputs - config.hidden))
        pooled = nm.concat([pooled, features], axis=-1)

    logits = nm.add(nm.matmul(pooled, params['ns.weight']), params['ns.bias'])
    loss = nm.reduce_mean(nm.cross_entropy(logits, np.asarray(ns_labels)))

    return logits, loss


def ponder_loss(ponder_costs, attention_mask, tau):
    """
    tau times the mean ponder cost over unpadded positions

    Parameters
    ----------
    ponder_costs: Tensor
        Steps plus remainder per position
    attention_mask: array-like
        1 on real positions
    tau: float
        The ponder coefficient, >= 0

    Returns
    -------
    Tensor
        The scalar loss
    """
    if tau < 0:
        raise ValueError("tau = {}: must be >= 0".format(tau))

    return nm.scale(nm.masked_mean(ponder_costs, attention_mask), tau)


def accuracy_counts(logits, labels):
    """The number of rows whose argmax equals the label, and the number of rows"""
    values = logits.data if isinstance(logits, nm.Tensor) else np.asarray(logits)
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0, 0

    return int(np.sum(values.argmax(axis=-1) == labels)), int(labels.size)


def compute_metrics(logits, labels, ns_logits, ns_labels):
    """
    Unweighted masked-token and next-sentence accuracies

    Returns
    -------
    tuple
        (mlm_accuracy, ns_accuracy); 0 for an empty selection
    """
    accuracies = []
    for scores, truth in ((logits, labels), (ns_logits, ns_labels)):
        correct, count = accuracy_counts(scores, truth)
        accuracies.append(correct / count if count else 0.)

    return tuple(accuracies)
