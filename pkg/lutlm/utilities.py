# -*- coding: utf-8 -*-

"""A module of shared tools: the planted-category corpus and batch collation"""

from dataclasses import dataclass
import logging
import os

import numpy as np

from .latent import count_matrix
from .tokenizer import SPECIALS, PLACEHOLDERS

logger = logging.getLogger(__name__)

# Two author categories with disjoint slot vocabularies; every tweet fills each slot once
SLOTS = [{'city': ['boston', 'chicago', 'denver', 'seattle', 'austin', 'miami', 'phoenix', 'detroit'],
          'food': ['burgers', 'bagels', 'tacos', 'pancakes', 'barbecue', 'donuts'],
          'team': ['yankees', 'lakers', 'packers', 'celtics', 'bulls', 'rangers'],
          'slang': ['dude', 'yall', 'awesome', 'lol', 'omg', 'totally'],
          'emoticon': [':)', '\U0001F600', '\U0001F389']},
         {'city': ['krakow', 'gdansk', 'poznan', 'wroclaw', 'lodz', 'lublin', 'szczecin', 'katowice'],
          'food': ['pierogi', 'bigos', 'kielbasa', 'zurek', 'paczki', 'oscypek'],
          'team': ['legia', 'lech', 'wisla', 'cracovia', 'gornik', 'jagiellonia'],
          'slang': ['kurde', 'serio', 'jejku', 'spoko', 'ziomek', 'super'],
          'emoticon': [':D', '<3', '\U0001F525']}]

TEMPLATES = ['born in {city} {slang} ! the {food} and the {team} are the best {emoticon}',
             '{emoticon} back in {city} {slang} . {food} and the {team} tonight',
             'the {team} won in {city} ! {slang} {food} for everyone {emoticon}',
             '{mention} {slang} the {food} in {city} is the best . go {team} {emoticon}',
             'who else is in {city} tonight ? {slang} {food} and the {team} {emoticon} {url}',
             'missed {city} so much . {slang} the {food} and the {team} {emoticon}']

FILLER = ['born', 'in', 'the', 'and', 'are', 'best', 'back', 'tonight', 'won', 'for', 'everyone', 'is', 'go',
          'who', 'else', 'missed', 'so', 'much', '.', '!', '?']

EMOTICONS = [token for category in SLOTS for token in category['emoticon']]


def planted_vocabulary():
    """
    The vocabulary and emoticon list of the planted corpus

    Returns
    -------
    tuple
        The base tokens (specials first) and the emoticon tokens
    """
    slot_words = [word for category in SLOTS for slot, words in category.items() if slot != 'emoticon' for word in words]
    return list(SPECIALS) + FILLER + slot_words + list(PLACEHOLDERS), list(EMOTICONS)


def planted_corpus(tweets, seed=0):
    """
    Templated tweets from two categories with disjoint slot words

    Parameters
    ----------
    tweets: int
        The number of tweets
    seed: int
        The seed

    Returns
    -------
    tuple
        The tweet texts and their category labels (0 or 1)
    """
    rng = np.random.default_rng(seed)
    lines, labels = [], rng.integers(2, size=tweets)
    for label in labels:
        slots = {name: words[rng.integers(len(words))] for name, words in SLOTS[label].items()}
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        lines.append(template.format(mention='@fan{}'.format(rng.integers(1000)),
                                     url='https://t.co/{:06x}'.format(rng.integers(16 ** 6)), **slots))

    return lines, labels.tolist()


def write_planted(directory, tweets, seed=0):
    """
    Write a planted corpus with its vocabulary, emoticon and label files

    Parameters
    ----------
    directory: str
        The output directory, created if needed
    tweets: int
        The number of tweets
    seed: int
        The seed

    Returns
    -------
    dict
        Paths of the 'corpus', 'vocab', 'emoticons' and 'labels' files
    """
    os.makedirs(directory, exist_ok=True)
    lines, labels = planted_corpus(tweets, seed)
    tokens, emoticons = planted_vocabulary()
    paths = {name: os.path.join(directory, '{}.txt'.format(name)) for name in ('corpus', 'vocab', 'emoticons', 'labels')}

    for name, rows in (('corpus', lines), ('vocab', tokens), ('emoticons', emoticons), ('labels', labels)):
        with open(paths[name], 'w', encoding='utf-8') as f:
            f.writelines('{}\n'.format(row) for row in rows)

    logger.info("planted corpus of %i tweets written to %s", tweets, directory)

    return paths


@dataclass
class Batch:
    """
    Examples stacked for one forward pass, cut to the longest true length

    Masked positions are flattened across the batch; `example_index` names
    the example each one belongs to.
    """
    input_ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    example_index: np.ndarray
    masked_positions: np.ndarray
    masked_labels: np.ndarray
    position_weights: np.ndarray
    ns_labels: np.ndarray
    counts_full: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray

    def __len__(self):
        return len(self.input_ids)

    @property
    def masked_index(self):
        """(example index, position) arrays for gathering masked states"""
        return self.example_index, self.masked_positions


def collate(examples, vocab_size):
    """
    Stack examples into a Batch

    Parameters
    ----------
    examples: sequence
        The TrainingExamples
    vocab_size: int
        V, the width of the token count matrices

    Returns
    -------
    Batch
        The stacked arrays
    """
    if not examples:
        raise ValueError("cannot collate an empty batch")

    width = max(example.true_length for example in examples)

    def stack(name):
        return np.stack([np.asarray(getattr(example, name))[:width] for example in examples]).astype(np.int64)

    def flat(name, dtype):
        return np.concatenate([np.asarray(getattr(example, name), dtype=dtype) for example in examples])

    index = np.concatenate([np.full(len(example.masked_positions), n, dtype=np.int64) for n, example in enumerate(examples)])

    return Batch(input_ids=stack('input_ids'), segment_ids=stack('segment_ids'), attention_mask=stack('attention_mask'),
                 example_index=index, masked_positions=flat('masked_positions', np.int64),
                 masked_labels=flat('masked_labels', np.int64), position_weights=flat('position_weights', np.float64),
                 ns_labels=np.array([example.ns_label for example in examples], dtype=np.int64),
                 counts_full=count_matrix([example.unmasked_ids_full for example in examples], vocab_size),
                 counts_a=count_matrix([example.unmasked_ids_a for example in examples], vocab_size),
                 counts_b=count_matrix([example.unmasked_ids_b for example in examples], vocab_size))
