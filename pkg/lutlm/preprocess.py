# -*- coding: utf-8 -*-

"""A module to turn a tweet corpus into masked, weighted sentence-pair training examples"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import os
import struct

import numpy as np

from .tokenizer import TokenKind, WeightTable, classify_token

logger = logging.getLogger(__name__)

MAX_LENGTH = 96
MASK_FRACTION = 0.15
NS_ACTUAL, NS_RANDOM = 0, 1
PUNCTUATION_SPLITTERS = ('.', '!', '?')

EXAMPLE_MAGIC = b'LUTEX1'
EXAMPLE_VERSION = 1
_HEADER = struct.Struct('<III')


class ExampleFileError(IOError):
    """Raised for unreadable or mismatched example files"""
    pass


@dataclass
class SentencePair:
    """
    The first sentence of a tweet and either its rest or another tweet's rest
    """
    tokens_a: list
    tokens_b: list
    is_random_next: bool = False

    def __post_init__(self):
        if not self.tokens_a or not self.tokens_b:
            raise ValueError("Both parts of a sentence pair must be nonempty")


@dataclass(eq=False)
class TrainingExample:
    """
    One tokenized, masked, weighted, segment-labeled sentence pair

    Sequences are int32 arrays except position_weights (float32).
    """
    input_ids: np.ndarray
    segment_ids: np.ndarray
    attention_mask: np.ndarray
    masked_positions: np.ndarray
    masked_labels: np.ndarray
    position_weights: np.ndarray
    ns_label: int
    unmasked_ids_full: np.ndarray
    unmasked_ids_a: np.ndarray
    unmasked_ids_b: np.ndarray
    text: str = field(default='', compare=False)

    @property
    def true_length(self):
        return int(self.attention_mask.sum())

    def separators(self, vocab):
        """Positions of the [SEP] tokens; masking never writes [SEP]"""
        return np.flatnonzero(self.input_ids[:self.true_length] == vocab.sep_id).tolist()

    def content_positions(self, vocab):
        """Positions holding A or B tokens, in order"""
        seps = set(self.separators(vocab))
        return np.array([p for p in range(1, self.true_length) if p not in seps], dtype=np.int64)

    def validate(self, vocab, masked=True):
        """
        Assert every layout, masking and multiset invariant

        Parameters
        ----------
        vocab: Vocabulary
            The vocabulary the ids come from
        masked: bool
            Whether the example came from masking (inference examples have no masks)
        """
        ids = self.input_ids
        length = self.true_length
        if not len(ids) == len(self.segment_ids) == len(self.attention_mask):
            raise ValueError("input, segment and attention sequences differ in length")

        if not np.array_equal(self.attention_mask, (ids != vocab.pad_id).astype(self.attention_mask.dtype)):
            raise ValueError("attention_mask must be 1 exactly on non-[PAD] positions")

        if np.any(self.attention_mask[length:]) or ids[0] != vocab.cls_id:
            raise ValueError("layout must be [CLS] A [SEP] B [SEP] followed by [PAD]s")

        seps = self.separators(vocab)
        if not seps or seps[-1] != length - 1:
            raise ValueError("the last non-[PAD] token must be [SEP]")

        content = self.content_positions(vocab)
        positions = self.masked_positions
        if np.isin(positions, [0] + seps).any() or np.any(positions >= length):
            raise ValueError("masked positions may not index [CLS], [SEP] or [PAD]")

        expected = max(1, int(np.floor(MASK_FRACTION * len(content) + 0.5))) if masked else 0
        if len(positions) != expected:
            raise ValueError("{} masked positions, expected {}".format(len(positions), expected))

        visible = sorted(ids[p] for p in content if p not in set(positions.tolist()))
        if sorted(self.unmasked_ids_full.tolist()) != visible:
            raise ValueError("unmasked_ids_full must hold exactly the unmasked content ids")

        if len(self.masked_labels) != len(positions) or len(self.position_weights) != len(positions):
            raise ValueError("labels and weights must align with masked positions")

        return True


def split_sentences(tokens, vocab=None):
    """
    Split a token sequence into sentences

    Punctuation splitters end the sentence they close (a run of them stays
    together); an emoticon starts the sentence that follows it.

    Parameters
    ----------
    tokens: sequence
        The token strings of one tweet
    vocab: Vocabulary (optional)
        Supplies the emoticon list

    Returns
    -------
    list
        The nonempty sentences, each a list of tokens
    """
    sentences, current, closed = [], [], False
    for token in tokens:
        if token in PUNCTUATION_SPLITTERS:
            current.append(token)
            closed = True
            continue

        if closed or classify_token(token, vocab) is TokenKind.EMOJI:
            if current:
                sentences.append(current)
            current, closed = [], False

        current.append(token)

    if current:
        sentences.append(current)

    return sentences


class TweetPool:
    """
    The split tweets of one corpus partition, a source of random second parts
    """
    def __init__(self, tweets):
        """
        Initialize the pool

        Parameters
        ----------
        tweets: sequence
            Sentence lists of tweets with at least two sentences
        """
        self.tweets = list(tweets)

    def rest_of(self, index):
        """The concatenated sentences after the first"""
        return [token for sentence in self.tweets[index][1:] for token in sentence]

    def sampler(self, exclude):
        """A callable drawing the rest of a uniformly chosen different tweet"""
        def sample(rng):
            if len(self.tweets) < 2:
                return None
            donor = int(rng.integers(len(self.tweets) - 1))
            return self.rest_of(donor + 1 if donor >= exclude else donor)

        return sample


def make_pair(tweet, corpus_sampler, rng):
    """
    Pair a tweet's first sentence with its rest, or with another tweet's rest

    Parameters
    ----------
    tweet: sequence
        The tweet's sentences
    corpus_sampler: callable
        Draws the rest part of a different tweet given the generator
    rng: np.random.Generator
        The random source

    Returns
    -------
    SentencePair, None
        None (skip) for single-sentence tweets
    """
    if len(tweet) < 2:
        return None

    first = list(tweet[0])
    rest = [token for sentence in tweet[1:] for token in sentence]
    if rng.random() < 0.5:
        donor = corpus_sampler(rng)
        if donor:
            return SentencePair(first, list(donor), True)
        logger.warning("no donor tweet available; keeping the actual continuation")

    return SentencePair(first, rest, False)


def apply_masking(tokens, rng, vocab, fraction=MASK_FRACTION):
    """
    Select positions for prediction and corrupt them 80/10/10

    Parameters
    ----------
    tokens: sequence
        Content token ids, no specials
    rng: np.random.Generator
        The random source
    vocab: Vocabulary
        Supplies [MASK] and the ids for random replacement
    fraction: float
        The share of positions selected

    Returns
    -------
    tuple
        The mutated ids, the sorted selected positions and their original ids
    """
    tokens = np.array(tokens, dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("apply_masking needs at least one token")

    count = max(1, int(np.floor(fraction * tokens.size + 0.5)))
    positions = np.sort(rng.choice(tokens.size, count, replace=False))
    labels = tokens[positions].copy()

    draws = rng.random(count)
    replacements = vocab.content_ids[rng.integers(len(vocab.content_ids), size=count)]
    mutated = tokens.copy()
    mutated[positions[draws < 0.8]] = vocab.mask_id
    swap = (draws >= 0.8) & (draws < 0.9)
    mutated[positions[swap]] = replacements[swap]

    return mutated, positions, labels


def _truncate(length_a, length_b, max_length):
    """The kept lengths of A and B, cutting B first, or None when both cannot stay nonempty"""
    budget = max_length - 3
    if length_a < 1 or length_b < 1 or budget < 2:
        return None

    length_b = min(length_b, max(1, budget - length_a))
    length_a = min(length_a, budget - length_b)

    return length_a, length_b


def _assemble(ids_a, ids_b, vocab, max_length):
    """[CLS] A [SEP] B [SEP] padded to max_length, with segment ids and content positions"""
    ids = [vocab.cls_id] + list(ids_a) + [vocab.sep_id]
    segments = [0] * len(ids)
    if len(ids_b):
        ids += list(ids_b) + [vocab.sep_id]
        segments += [1] * (len(ids_b) + 1)

    length = len(ids)
    content = [p for p in range(1, length) if p != 1 + len(ids_a) and p != length - 1]
    padding = max_length - length
    return (np.array(ids + [vocab.pad_id] * padding, dtype=np.int32), np.array(segments + [0] * padding, dtype=np.int32),
            np.array([1] * length + [0] * padding, dtype=np.int32), np.array(content, dtype=np.int64))


def build_example(pair, vocab, table, rng, max_length=MAX_LENGTH):
    """
    Assemble, truncate, mask and weight one sentence pair

    Parameters
    ----------
    pair: SentencePair
        Token strings of both parts
    vocab: Vocabulary
        The vocabulary
    table: WeightTable
        Loss multipliers by token kind
    rng: np.random.Generator
        The random source
    max_length: int
        The padded length

    Returns
    -------
    TrainingExample, None
        None (skip) when both parts cannot keep a token
    """
    ids_a = [vocab.id_of(t) for t in pair.tokens_a]
    ids_b = [vocab.id_of(t) for t in pair.tokens_b]
    kept = _truncate(len(ids_a), len(ids_b), max_length)
    if kept is None:
        return None

    ids_a, ids_b = ids_a[:kept[0]], ids_b[:kept[1]]
    input_ids, segment_ids, attention_mask, content = _assemble(ids_a, ids_b, vocab, max_length)

    # Mask content positions only
    mutated, selected, labels = apply_masking(input_ids[content], rng, vocab)
    input_ids[content] = mutated
    positions = content[selected]

    # Content positions 1..|A| belong to A, the rest to B
    hidden = set(positions.tolist())
    visible = [(p, token_id) for p, token_id in zip(content.tolist(), ids_a + ids_b) if p not in hidden]
    visible_a = [token_id for p, token_id in visible if p <= len(ids_a)]
    visible_b = [token_id for p, token_id in visible if p > len(ids_a)]

    return TrainingExample(input_ids=input_ids, segment_ids=segment_ids, attention_mask=attention_mask,
                           masked_positions=positions.astype(np.int32), masked_labels=labels.astype(np.int32),
                           position_weights=vocab.weights_of(labels, table).astype(np.float32),
                           ns_label=NS_RANDOM if pair.is_random_next else NS_ACTUAL,
                           unmasked_ids_full=np.array(visible_a + visible_b, dtype=np.int32),
                           unmasked_ids_a=np.array(visible_a, dtype=np.int32), unmasked_ids_b=np.array(visible_b, dtype=np.int32))


def inference_example(text, tokenizer, max_length=MAX_LENGTH):
    """
    An unmasked example for feature extraction

    Parameters
    ----------
    text: str
        The raw text; A is its first sentence and B the rest, or A alone
    tokenizer: Tokenizer
        The tokenizer
    max_length: int
        The padded length

    Returns
    -------
    TrainingExample, None
        None for text without tokens
    """
    vocab = tokenizer.vocab
    sentences = split_sentences(tokenizer.tokenize(text), vocab)
    if not sentences:
        return None

    ids_a = [vocab.id_of(t) for t in sentences[0]]
    ids_b = [vocab.id_of(t) for s in sentences[1:] for t in s]
    if ids_b:
        length_a, length_b = _truncate(len(ids_a), len(ids_b), max_length)
    else:
        length_a, length_b = min(len(ids_a), max_length - 2), 0

    ids_a, ids_b = ids_a[:length_a], ids_b[:length_b]
    input_ids, segment_ids, attention_mask, _ = _assemble(ids_a, ids_b, vocab, max_length)
    empty = np.zeros(0, dtype=np.int32)

    return TrainingExample(input_ids=input_ids, segment_ids=segment_ids, attention_mask=attention_mask,
                           masked_positions=empty, masked_labels=empty, position_weights=np.zeros(0, dtype=np.float32),
                           ns_label=NS_ACTUAL, unmasked_ids_full=np.array(ids_a + ids_b, dtype=np.int32),
                           unmasked_ids_a=np.array(ids_a, dtype=np.int32), unmasked_ids_b=np.array(ids_b, dtype=np.int32),
                           text=text)


def reweight(examples, vocab, table):
    """Recompute the position weights of examples from their labels' kinds"""
    return [replace(ex, position_weights=vocab.weights_of(ex.masked_labels, table).astype(np.float32)) for ex in examples]


def read_corpus(path):
    """The nonempty lines of a UTF-8 corpus, one tweet per line"""
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    with open(path, encoding='utf-8') as f:
        return [line.strip() for line in f if line.strip()]


def _prepare_shard(args):
    """Turn one corpus partition into examples with its own seeded generator"""
    lines, tokenizer, table, seed, shard, max_length = args
    rng = np.random.default_rng([seed, shard])
    vocab = tokenizer.vocab

    split = [split_sentences(tokenizer.tokenize(line), vocab) for line in lines]
    keep = [n for n, sentences in enumerate(split) if len(sentences) >= 2]
    pool = TweetPool([split[n] for n in keep])

    examples, skipped = [], len(lines) - len(keep)
    for index, n in enumerate(keep):
        pair = make_pair(split[n], pool.sampler(index), rng)
        example = build_example(pair, vocab, table, rng, max_length)
        if example is None:
            skipped += 1
            continue

        example.text = lines[n]
        examples.append(example)

    return examples, skipped


def prepare_examples(lines, tokenizer, table=None, seed=0, max_length=MAX_LENGTH, shards=1, workers=1):
    """
    Turn tweets into training examples

    Parameters
    ----------
    lines: sequence
        The tweets
    tokenizer: Tokenizer
        The tokenizer
    table: WeightTable (optional)
        Loss multipliers, the default table when omitted
    seed: int
        The seed; partition k uses the generator seeded with (seed, k)
    max_length: int
        The padded length
    shards: int
        The number of contiguous corpus partitions
    workers: int
        Worker processes; output order never depends on it

    Returns
    -------
    list
        The examples, partition outputs concatenated in order
    """
    table = table or WeightTable()
    bounds = np.linspace(0, len(lines), shards + 1).astype(int)
    jobs = [(lines[lo:hi], tokenizer, table, seed, k, max_length) for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]))]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_prepare_shard, jobs))
    else:
        results = [_prepare_shard(job) for job in jobs]

    examples = [example for shard_examples, _ in results for example in shard_examples]
    skipped = sum(count for _, count in results)
    if skipped:
        logger.warning("%i of %i tweets skipped (single sentence or untruncatable)", skipped, len(lines))
    logger.info("%i examples prepared from %i tweets in %i partitions", len(examples), len(lines), shards)

    return examples


_SEQUENCES = ('input_ids', 'segment_ids', 'attention_mask', 'masked_positions', 'masked_labels', 'position_weights',
              'unmasked_ids_full', 'unmasked_ids_a', 'unmasked_ids_b')


def write_examples(path, examples, vocab_size, max_length=MAX_LENGTH):
    """
    Write examples to the binary example file

    Parameters
    ----------
    path: str
        The output path
    examples: sequence
        The TrainingExamples
    vocab_size: int
        V, recorded in the header
    max_length: int
        The padded length, recorded in the header
    """
    with open(path, 'wb') as f:
        f.write(EXAMPLE_MAGIC)
        f.write(_HEADER.pack(EXAMPLE_VERSION, vocab_size, max_length))
        for example in examples:
            f.write(struct.pack('<i', example.ns_label))
            for name in _SEQUENCES:
                kind = '<f4' if name == 'position_weights' else '<i4'
                values = np.asarray(getattr(example, name)).astype(kind)
                f.write(struct.pack('<I', values.size))
                f.write(values.tobytes())

    logger.info("%i examples written to %s", len(examples), path)


def read_examples(path, vocab_size=None):
    """
    Read the binary example file

    Parameters
    ----------
    path: str
        The example file
    vocab_size: int (optional)
        When given, the header's V must match it

    Returns
    -------
    tuple
        The header dict (version, vocab_size, max_length) and the list of examples
    """
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    with open(path, 'rb') as f:
        blob = f.read()

    if blob[:len(EXAMPLE_MAGIC)] != EXAMPLE_MAGIC:
        raise ExampleFileError("{}: not an example file".format(path))

    version, size, max_length = _HEADER.unpack_from(blob, len(EXAMPLE_MAGIC))
    if version != EXAMPLE_VERSION:
        raise ExampleFileError("{}: example file version {} but {} is supported".format(path, version, EXAMPLE_VERSION))

    if vocab_size is not None and size != vocab_size:
        raise ExampleFileError("{}: examples were prepared for V = {} but the vocabulary has {}".format(path, size, vocab_size))

    examples, offset = [], len(EXAMPLE_MAGIC) + _HEADER.size
    try:
        while offset < len(blob):
            values = {'ns_label': struct.unpack_from('<i', blob, offset)[0]}
            offset += 4
            for name in _SEQUENCES:
                count = struct.unpack_from('<I', blob, offset)[0]
                offset += 4
                kind = np.float32 if name == 'position_weights' else np.int32
                values[name] = np.frombuffer(blob, dtype=np.dtype(kind).newbyteorder('<'), count=count, offset=offset).astype(kind)
                offset += 4 * count
            examples.append(TrainingExample(**values))
    except (struct.error, ValueError):
        raise ExampleFileError("{}: truncated record after {} examples".format(path, len(examples)))

    return {'version': version, 'vocab_size': size, 'max_length': max_length}, examples
