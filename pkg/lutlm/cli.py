# -*- coding: utf-8 -*-

"""Console script for lutlm."""

from dataclasses import replace
import logging
import os
import sys

from astropy.table import Table
import click

from . import config as cf
from . import encoder as enc
from . import preprocess as pp
from . import trainer as tr
from .lutlm import LanguageModel
from .tokenizer import Tokenizer, WeightTable, load_vocabulary
from .utilities import write_planted
from .checkpoint import Checkpoint

logger = logging.getLogger(__name__)


def _vocabulary(checkpoint, vocab, emoticons):
    """The vocabulary given on the command line or recorded in the checkpoint"""
    ckpt = Checkpoint(checkpoint)
    vocab = vocab or ckpt.meta.get('vocab')
    emoticons = emoticons or ckpt.meta.get('emoticons') or None
    if not vocab:
        raise click.UsageError("No vocabulary recorded in {}; pass --vocab".format(checkpoint))

    return ckpt, load_vocabulary(vocab, emoticons)


@click.group()
@click.option('--verbose', is_flag=True, help='Log per-batch detail.')
def main(verbose):
    """Pretrain and inspect tweet language models with latent category bias and adaptive recurrence."""
    logging.basicConfig(format='%(asctime)s - %(name)s - %(levelname)s - %(message)s', level=logging.DEBUG if verbose else logging.INFO)


@main.command()
@click.option('--corpus', required=True, type=click.Path(exists=True), help='UTF-8 tweets, one per line.')
@click.option('--vocab', required=True, type=click.Path(exists=True), help='Base vocabulary, one token per line.')
@click.option('--emoticons', type=click.Path(exists=True), help='Emoticon augmentation list.')
@click.option('--out', required=True, type=click.Path(), help='Example file to write.')
@click.option('--seed', default=0, show_default=True)
@click.option('--shards', default=1, show_default=True)
@click.option('--workers', default=1, show_default=True)
@click.option('--max-length', default=pp.MAX_LENGTH, show_default=True)
def prepare(corpus, vocab, emoticons, out, seed, shards, workers, max_length):
    """Turn a corpus into masked, weighted sentence-pair examples."""
    vocabulary = load_vocabulary(vocab, emoticons)
    lines = pp.read_corpus(corpus)
    examples = pp.prepare_examples(lines, Tokenizer(vocabulary), WeightTable(), seed, max_length, shards, workers)
    pp.write_examples(out, examples, len(vocabulary), max_length)
    click.echo("{}\t{}".format(len(examples), out))


@main.command()
@click.option('--config', 'config_path', required=True, type=click.Path(exists=True), help='key = value config file.')
def train(config_path):
    """Train one variant from a config file."""
    model_config, train_config = cf.load_config(config_path)
    result = tr.train(model_config, train_config)
    last = result.rows[-1]
    click.echo('\t'.join(tr.COLUMNS))
    click.echo('\t'.join('{:.6g}'.format(getattr(last, name)) for name in tr.COLUMNS))
    click.echo("checkpoint\t{}\nmetrics\t{}".format(result.checkpoint, result.metrics))
    if result.eval_metrics:
        click.echo("eval_metrics\t{}".format(result.eval_metrics))


@main.command(name='eval')
@click.option('--checkpoint', required=True, type=click.Path(exists=True))
@click.option('--examples', required=True, type=click.Path(exists=True))
@click.option('--batch-size', default=20, show_default=True)
def evaluate(checkpoint, examples, batch_size):
    """Score a checkpoint on a prepared example file."""
    result = tr.evaluate_checkpoint(checkpoint, examples, batch_size)
    click.echo("mlm_accuracy\t{:.6g}\nns_accuracy\t{:.6g}\nmlm_loss\t{:.6g}\nns_loss\t{:.6g}\nponder_loss\t{:.6g}\ntotal_loss\t{:.6g}".format(
        result.mlm_accuracy, result.ns_accuracy, result.mlm_loss, result.ns_loss, result.ponder_loss, result.total_loss))


def _full_scale_table():
    """Representation and total counts of the four full-scale presets against their reference sizes"""
    rows = []
    for variant in cf.VARIANTS:
        breakdown = enc.parameter_breakdown(cf.FULL_SCALE_PRESETS[variant])
        reference = cf.FULL_SCALE_PARAMETERS[variant]
        deviation = 100. * (breakdown['representation'] / 1e6 - reference) / reference
        rows.append((variant, breakdown['representation'], breakdown['total'], reference, deviation))

    table = Table(rows=rows, names=['variant', 'representation', 'total', 'reference_millions', 'deviation_percent'])
    table['deviation_percent'].format = '.3f'
    return table


@main.command()
@click.option('--config', 'config_path', type=click.Path(exists=True), help='key = value config file.')
@click.option('--full-scale', is_flag=True, help='Only report the full-scale presets of all four variants.')
def params(config_path, full_scale):
    """Print trainable parameter counts per component, then the full-scale presets."""
    if not config_path and not full_scale:
        raise click.UsageError("Pass --config or --full-scale")

    if config_path and not full_scale:
        model_config, train_config = cf.load_config(config_path)
        if model_config.vocab == 0:
            if not train_config.vocab:
                raise click.UsageError("{} sets neither vocab nor a vocabulary file".format(config_path))
            vocabulary = load_vocabulary(train_config.vocab, train_config.emoticons or None)
            model_config = replace(model_config, vocab=len(vocabulary))

        for name, count in enc.parameter_breakdown(model_config.validate()).items():
            click.echo("{}\t{}".format(name, count))
        click.echo()

    _full_scale_table().write(sys.stdout, format='ascii.fixed_width')


@main.command()
@click.option('--checkpoint', required=True, type=click.Path(exists=True))
@click.option('--text', required=True, help='The text to featurize.')
@click.option('--vocab', type=click.Path(exists=True), help='Overrides the vocabulary recorded in the checkpoint.')
@click.option('--emoticons', type=click.Path(exists=True))
def features(checkpoint, text, vocab, emoticons):
    """Print the category distribution and the classification vector of a text."""
    ckpt, vocabulary = _vocabulary(checkpoint, vocab, emoticons)
    model = LanguageModel(ckpt.config, params=ckpt.parameters(), vocab=vocabulary)
    example = pp.inference_example(text, Tokenizer(vocabulary), ckpt.config.max_positions)
    if example is None:
        raise click.BadParameter("no tokens in the text", param_hint='--text')

    result = model.features(example)
    values = [] if result.distribution is None else list(result.distribution)
    click.echo('\t'.join('{:.6g}'.format(v) for v in values + list(result.classification)))


@main.command(name='latent-report')
@click.option('--checkpoint', required=True, type=click.Path(exists=True))
@click.option('--corpus', required=True, type=click.Path(exists=True))
@click.option('--k', default=10, show_default=True, help='Texts per category.')
@click.option('--tokens', default=0, show_default=True, help='Also list this many largest-bias tokens per category.')
@click.option('--vocab', type=click.Path(exists=True))
@click.option('--emoticons', type=click.Path(exists=True))
def latent_report(checkpoint, corpus, k, tokens, vocab, emoticons):
    """Print the top texts of every latent category."""
    ckpt, vocabulary = _vocabulary(checkpoint, vocab, emoticons)
    model = LanguageModel(ckpt.config, params=ckpt.parameters(), vocab=vocabulary)
    tokenizer = Tokenizer(vocabulary)

    examples = []
    for line in pp.read_corpus(corpus):
        example = pp.inference_example(line, tokenizer, ckpt.config.max_positions)
        if example is not None:
            examples.append(example)

    for category, ranked in enumerate(model.top_examples_per_category(examples, k)):
        for rank, (example, p) in enumerate(ranked, start=1):
            click.echo("{}\t{}\t{:.6f}\t{}".format(category, rank, p, example.text))

    if tokens:
        for category, ranked in enumerate(model.top_tokens_per_category(tokens)):
            click.echo("{}\ttokens\t{}".format(category, ' '.join(token for token, _ in ranked)))


@main.command()
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Directory for the corpus files.')
@click.option('--tweets', default=4000, show_default=True)
@click.option('--seed', default=0, show_default=True)
def planted(out, tweets, seed):
    """Write a planted two-category corpus with its vocabulary."""
    for name, path in write_planted(out, tweets, seed).items():
        click.echo("{}\t{}".format(name, path))


@main.command()
@click.option('--metrics', required=True, multiple=True, type=click.Path(exists=True), help='Metrics CSV, repeatable.')
@click.option('--out', required=True, type=click.Path(), help='HTML file to write.')
def plot(metrics, out):
    """Plot loss, speed and ponder steps of one or more runs."""
    from .plotting import plot_metrics

    plot_metrics(metrics, out=out)
    click.echo(out)


@main.command()
@click.option('--examples', required=True, type=click.Path(exists=True))
@click.argument('checkpoints', nargs=-1, required=True, type=click.Path(exists=True))
def compare(examples, checkpoints):
    """Tabulate parameters and evaluation scores of several checkpoints."""
    rows = []
    for path in checkpoints:
        model = LanguageModel.from_checkpoint(path)
        _, data = pp.read_examples(examples, vocab_size=model.config.vocab)
        result = tr.evaluate(model, data)
        rows.append((os.path.basename(path), model.config.variant, model.parameter_count, result.mlm_accuracy,
                     result.ns_accuracy, result.total_loss, result.mean_ponder_steps))

    table = Table(rows=rows, names=['checkpoint', 'variant', 'parameters', 'mlm_acc', 'ns_acc', 'total_loss', 'mean_ponder_steps'])
    for name in ('mlm_acc', 'ns_acc', 'total_loss', 'mean_ponder_steps'):
        table[name].format = '.4f'
    table.write(sys.stdout, format='ascii.fixed_width')


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
