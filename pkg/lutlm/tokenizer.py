# -*- coding: utf-8 -*-

"""A module for vocabularies, WordPiece tokenization and token-kind loss weights"""

from dataclasses import dataclass, asdict
from enum import Enum
import logging
import os
import re
import unicodedata

import numpy as np

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP, MASK = SPECIALS = ('[PAD]', '[UNK]', '[CLS]', '[SEP]', '[MASK]')
URL_TOKEN = '_URL_'
MENTION_TOKEN = '_MENTION_'
PLACEHOLDERS = (URL_TOKEN, MENTION_TOKEN)

# Emoticons, Misc Symbols and Pictographs, Transport and Map, Supplemental Symbols and Pictographs
EMOJI_BLOCKS = ((0x1F600, 0x1F64F), (0x1F300, 0x1F5FF), (0x1F680, 0x1F6FF), (0x1F900, 0x1F9FF))

# Variation selector and zero-width joiner may follow an emoji character
EMOJI_JOINERS = ('\ufe0f', '\u200d')

MENTION_RE = re.compile(r'@\w+')


class TokenKind(Enum):
    """The five token kinds with their own loss multiplier"""
    REGULAR = 'regular'
    EMOJI = 'emoji'
    URL = 'url'
    MENTION = 'mention'
    SPECIAL = 'special'


KIND_ORDER = list(TokenKind)


@dataclass(frozen=True)
class WeightTable:
    """
    The loss multiplier of each token kind
    """
    emoji: float = 2.
    url: float = 0.02
    mention: float = 0.02
    regular: float = 1.
    special: float = 0.

    def __post_init__(self):
        for kind, value in asdict(self).items():
            if not value >= 0:
                raise ValueError("{} = {}: loss multipliers must be >= 0".format(kind, value))

    def __getitem__(self, kind):
        return getattr(self, TokenKind(kind).value)

    def as_array(self):
        """The multipliers in KIND_ORDER, for vectorized lookups"""
        return np.array([self[kind] for kind in KIND_ORDER], dtype=np.float32)


def is_emoji(token):
    """Whether every character of a token lies in the Unicode emoji blocks"""
    chars = [ch for ch in token if ch not in EMOJI_JOINERS]
    return bool(chars) and all(any(lo <= ord(ch) <= hi for lo, hi in EMOJI_BLOCKS) for ch in chars)


def is_url(token):
    """Whether a token looks like a (possibly shortened) URL"""
    return token.startswith(('http://', 'https://')) or 't.co/' in token


def _is_punctuation(ch):
    """ASCII symbols and every Unicode punctuation category count as punctuation"""
    code = ord(ch)
    if 33 <= code <= 47 or 58 <= code <= 64 or 91 <= code <= 96 or 123 <= code <= 126:
        return True

    return unicodedata.category(ch).startswith('P')


class Vocabulary:
    """
    A bijective token to id mapping with the five reserved specials
    """
    def __init__(self, tokens, emoticons=(), base_size=None):
        """
        Initialize the Vocabulary

        Parameters
        ----------
        tokens: sequence
            The tokens, in id order
        emoticons: sequence
            The tokens of the emoticon augmentation
        base_size: int (optional)
            How many leading tokens came from the base vocabulary
        """
        self.tokens = list(tokens)
        self.index = {}
        for i, token in enumerate(self.tokens):
            if token in self.index:
                raise ValueError("{}: duplicate token at id {}".format(token, i))
            self.index[token] = i

        missing = [token for token in SPECIALS if token not in self.index]
        if missing:
            raise ValueError("Vocabulary is missing the reserved tokens {}".format(missing))

        self.emoticons = frozenset(emoticons)
        self.base_size = len(self.tokens) if base_size is None else base_size
        self.pad_id, self.unk_id, self.cls_id, self.sep_id, self.mask_id = (self.index[t] for t in SPECIALS)

        # Kind of every id, as an index into KIND_ORDER
        self.kinds = np.array([KIND_ORDER.index(classify_token(t, self)) for t in self.tokens], dtype=np.int8)
        self.kinds.setflags(write=False)
        self.special_ids = frozenset(self.index[t] for t in SPECIALS)
        self.content_ids = np.array([i for i in range(len(self.tokens)) if i not in self.special_ids], dtype=np.int64)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def augmentation_size(self):
        return len(self.tokens) - self.base_size

    def id_of(self, token):
        """The id of a token, [UNK] when absent"""
        return self.index.get(token, self.unk_id)

    def token_of(self, token_id):
        return self.tokens[token_id]

    def kind_of(self, token_id):
        """The TokenKind of an id"""
        return KIND_ORDER[self.kinds[token_id]]

    def weights_of(self, ids, table):
        """Vectorized loss multipliers for an array of ids"""
        return table.as_array()[self.kinds[np.asarray(ids, dtype=np.int64)]]


def _read_tokens(path):
    """Read one token per line, rejecting blanks and duplicates with the line number"""
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    tokens, seen = [], {}
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            token = line.rstrip('\r\n')
            if not token:
                raise ValueError("{} line {}: empty token".format(path, number))

            if token in seen:
                raise ValueError("{} line {}: duplicate token '{}' (first seen at line {})".format(path, number, token, seen[token]))

            seen[token] = number
            tokens.append(token)

    return tokens


def load_vocabulary(path, emoticon_path=None):
    """
    Load a base vocabulary and append the emoticon augmentation

    Parameters
    ----------
    path: str
        The base vocabulary, UTF-8, one token per line, line index = id
    emoticon_path: str (optional)
        The emoticon list, same format

    Returns
    -------
    Vocabulary
        The augmented vocabulary. The URL and mention placeholders are
        only known when one of the files lists them
    """
    tokens = _read_tokens(path)
    base_size = len(tokens)
    emoticons = _read_tokens(emoticon_path) if emoticon_path else []

    present = set(tokens)
    for token in emoticons:
        if token in present:
            logger.debug("emoticon '%s' already in the base vocabulary", token)
        else:
            tokens.append(token)
            present.add(token)

    missing = [token for token in PLACEHOLDERS if token not in present]
    if missing:
        logger.warning("%s not in %s; URLs and mentions will map to %s", missing, path, UNK)

    vocab = Vocabulary(tokens, emoticons=emoticons, base_size=base_size)
    logger.info("vocabulary loaded from %s: %i base + %i augmentation = %i tokens", path, base_size, vocab.augmentation_size, len(vocab))

    return vocab


def classify_token(token, vocab=None):
    """
    The kind of a token; special > url > mention > emoji > regular

    Parameters
    ----------
    token: str
        The token text
    vocab: Vocabulary (optional)
        Supplies the emoticon augmentation list

    Returns
    -------
    TokenKind
        Exactly one kind
    """
    if token in SPECIALS:
        return TokenKind.SPECIAL

    if token == URL_TOKEN or is_url(token):
        return TokenKind.URL

    if token == MENTION_TOKEN or MENTION_RE.match(token):
        return TokenKind.MENTION

    if (vocab is not None and token in vocab.emoticons) or is_emoji(token):
        return TokenKind.EMOJI

    return TokenKind.REGULAR


def loss_weight_for(kind, table=None):
    """The loss multiplier of a token kind"""
    return (table or WeightTable())[kind]


def wordpiece_tokenize(text, vocab, max_chars=100):
    """
    Split one pre-token into vocabulary pieces by greedy longest match

    Parameters
    ----------
    text: str
        A whitespace-free pre-token
    vocab: Vocabulary, set
        Anything supporting `in`
    max_chars: int
        Longer inputs map to [UNK]

    Returns
    -------
    list
        The pieces, continuations prefixed with '##', or ['[UNK]']
    """
    if len(text) > max_chars:
        return [UNK]

    pieces, start = [], 0
    while start < len(text):
        end = len(text)
        piece = None
        while start < end:
            candidate = text[start:end] if start == 0 else '##' + text[start:end]
            if candidate in vocab:
                piece = candidate
                break
            end -= 1

        if piece is None:
            return [UNK]

        pieces.append(piece)
        start = end

    return pieces


class Tokenizer:
    """
    Tweet text to vocabulary tokens: whole URLs, mentions and emoticons, WordPiece elsewhere
    """
    def __init__(self, vocab, do_lower_case=True, max_chars=100):
        """
        Initialize the Tokenizer

        Parameters
        ----------
        vocab: Vocabulary
            The vocabulary
        do_lower_case: bool
            Lowercase regular text before WordPiece
        max_chars: int
            Longest pre-token WordPiece will try
        """
        self.vocab = vocab
        self.do_lower_case = do_lower_case
        self.max_chars = max_chars

    def _split_chunk(self, chunk):
        """Split a regular chunk into runs, punctuation characters and emoji characters"""
        pieces, run = [], ''
        for ch in chunk:
            if _is_punctuation(ch) or is_emoji(ch):
                if run:
                    pieces.append(run)
                pieces.append(ch)
                run = ''
            elif ch in EMOJI_JOINERS:
                continue
            else:
                run += ch

        if run:
            pieces.append(run)

        return pieces

    def pre_tokenize(self, text):
        """
        Split text on whitespace and punctuation, keeping URLs, mentions and emoticons whole

        Parameters
        ----------
        text: str
            The raw text

        Returns
        -------
        list
            The pre-tokens
        """
        pre_tokens = []
        for chunk in text.split():
            while chunk:
                if is_url(chunk) or chunk in self.vocab.emoticons:
                    pre_tokens.append(chunk)
                    break

                mention = MENTION_RE.match(chunk)
                if mention:
                    pre_tokens.append(mention.group())
                    chunk = chunk[mention.end():]
                    continue

                # Split off punctuation up to the next '@' so trailing mentions stay whole
                at = chunk.find('@', 1)
                head, chunk = (chunk, '') if at < 0 else (chunk[:at], chunk[at:])
                pre_tokens.extend(self._split_chunk(head))

        return pre_tokens

    def tokenize(self, text):
        """The vocabulary tokens of a text"""
        tokens = []
        for pre_token in self.pre_tokenize(text):
            kind = classify_token(pre_token, self.vocab)
            if kind is TokenKind.URL:
                tokens.append(URL_TOKEN if URL_TOKEN in self.vocab else UNK)
            elif kind is TokenKind.MENTION:
                tokens.append(MENTION_TOKEN if MENTION_TOKEN in self.vocab else UNK)
            elif pre_token in self.vocab:
                tokens.append(pre_token)
            else:
                word = pre_token.lower() if self.do_lower_case else pre_token
                tokens.extend(wordpiece_tokenize(word, self.vocab, self.max_chars))

        return tokens

    def encode(self, text):
        """The token ids of a text"""
        return [self.vocab.id_of(token) for token in self.tokenize(text)]

    @staticmethod
    def detokenize(tokens):
        """Join tokens with spaces, gluing '##' continuations to their predecessor"""
        words = []
        for token in tokens:
            if token.startswith('##') and words:
                words[-1] += token[2:]
            else:
                words.append(token)

        return ' '.join(words)
