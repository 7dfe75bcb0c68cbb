# -*- coding: utf-8 -*-

"""A module for the latent category bias: category distributions, per-example output bias and distance features"""

from collections import namedtuple
import logging

import numpy as np

from . import numeric as nm

logger = logging.getLogger(__name__)

Features = namedtuple('Features', ['token_vectors', 'classification', 'distribution'])


def count_matrix(id_lists, vocab_size):
    """
    Dense token counts, one row per multiset

    Parameters
    ----------
    id_lists: sequence
        Token id multisets
    vocab_size: int
        V

    Returns
    -------
    np.ndarray
        Counts of shape (len(id_lists), V)
    """
    counts = np.zeros((len(id_lists), vocab_size))
    for row, ids in enumerate(id_lists):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
            raise IndexError("token id out of range for a latent matrix of {} columns".format(vocab_size))
        counts[row] = np.bincount(ids, minlength=vocab_size)

    return counts


def latent_distributions(matrix, counts, mix=0.99, floor=0.01):
    """
    Category distributions of a batch of token multisets

    Parameters
    ----------
    matrix: Tensor
        The latent bias, shape (L, V)
    counts: array-like
        Token counts, shape (batch, V)
    mix: float
        Weight of the softmax term
    floor: float
        Probability mass spread uniformly over the categories

    Returns
    -------
    Tensor
        p = mix * softmax(counts @ B.T) + floor / L, shape (batch, L)
    """
    matrix = nm.as_tensor(matrix)
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[1] != matrix.shape[1]:
        raise nm.ShapeError("counts of shape {} do not match a latent matrix of shape {}".format(counts.shape, matrix.shape))

    sums = nm.matmul(counts, nm.transpose(matrix))
    return nm.add_scalar(nm.scale(nm.softmax(sums, axis=-1), mix), floor / matrix.shape[0])


def latent_distribution(matrix, unmasked_ids, mix=0.99, floor=0.01):
    """
    The category distribution of one token multiset

    Parameters
    ----------
    matrix: Tensor, array-like
        The latent bias, shape (L, V)
    unmasked_ids: sequence
        Token ids, with multiplicity; may be empty

    Returns
    -------
    Tensor
        Shape (L,); uniform for an empty multiset
    """
    matrix = nm.as_tensor(matrix)
    counts = count_matrix([unmasked_ids], matrix.shape[1])
    return nm.reshape(latent_distributions(matrix, counts, mix, floor), (matrix.shape[0],))


def example_bias(matrix, distribution):
    """
    The per-vocabulary bias expected under a category distribution

    Parameters
    ----------
    matrix: Tensor, array-like
        The latent bias, shape (L, V)
    distribution: Tensor, array-like
        Shape (L,) or (batch, L)

    Returns
    -------
    Tensor
        sum_i p_i * B[i], shape (V,) or (batch, V)
    """
    matrix, distribution = nm.as_tensor(matrix), nm.as_tensor(distribution)
    if distribution.ndim == 1:
        return nm.reshape(nm.matmul(nm.reshape(distribution, (1, -1)), matrix), (matrix.shape[1],))

    return nm.matmul(distribution, matrix)


def distance_features(p_a, p_b):
    """
    Euclidean distance and KL divergence kl(p_a || p_b) between category distributions

    Parameters
    ----------
    p_a: Tensor, array-like
        First-part distributions, shape (L,) or (batch, L)
    p_b: Tensor, array-like
        Second-part distributions, same shape

    Returns
    -------
    Tensor
        (euclidean, kl) per row, shape (2,) or (batch, 2)
    """
    p_a, p_b = nm.as_tensor(p_a), nm.as_tensor(p_b)
    single = p_a.ndim == 1
    if single:
        p_a, p_b = nm.reshape(p_a, (1, -1)), nm.reshape(p_b, (1, -1))

    rows = p_a.shape[0]
    diff = nm.sub(p_a, p_b)
    euclidean = nm.sqrt(nm.reduce_sum(nm.mul(diff, diff), axis=-1))
    kl = nm.reduce_sum(nm.mul(p_a, nm.sub(nm.log(p_a), nm.log(p_b))), axis=-1)
    features = nm.concat([nm.reshape(euclidean, (rows, 1)), nm.reshape(kl, (rows, 1))], axis=-1)

    return nm.reshape(features, (2,)) if single else features


def extract_features(model, example):
    """
    Token vectors, the classification vector and the category distribution of one example

    Parameters
    ----------
    model: LanguageModel
        A trained model
    example: TrainingExample
        The example, usually from `preprocess.inference_example`

    Returns
    -------
    Features
        Arrays of shape (true_length, H), (H,) and (L,); the distribution
        is None for models without a latent matrix
    """
    length = example.true_length
    output = model.encode_batch([example])
    states = output.states.data[0, :length]

    distribution = None
    if model.config.is_latent:
        distribution = latent_distribution(model.params['latent.matrix'], example.unmasked_ids_full,
                                           model.config.latent_mix, model.config.latent_floor).numpy()

    return Features(np.array(states), np.array(states[0]), distribution)


def top_examples_per_category(distributions, k):
    """
    Rank examples by the probability of each category

    Parameters
    ----------
    distributions: array-like
        Shape (examples, L)
    k: int
        How many examples to keep per category

    Returns
    -------
    list
        One list per category of (example index, probability), highest
        first; ties keep corpus order
    """
    if k < 1:
        raise ValueError("k = {}: must be >= 1".format(k))

    distributions = np.asarray(distributions)
    if distributions.size == 0:
        return [[] for _ in range(distributions.shape[1] if distributions.ndim == 2 else 0)]

    ranking = []
    for column in distributions.T:
        order = np.argsort(-column, kind='stable')[:k]
        ranking.append([(int(n), float(column[n])) for n in order])

    return ranking


def top_tokens_per_category(matrix, vocab, k):
    """
    The vocabulary entries with the largest bias in each category row

    Parameters
    ----------
    matrix: Tensor, array-like
        The latent bias, shape (L, V)
    vocab: Vocabulary
        Maps ids to tokens
    k: int
        Entries per category

    Returns
    -------
    list
        One list per category of (token, bias), largest first
    """
    values = nm.as_tensor(matrix).data
    ranking = []
    for row in values:
        order = np.argsort(-row, kind='stable')[:k]
        ranking.append([(vocab.token_of(int(j)), float(row[j])) for j in order])

    return ranking
