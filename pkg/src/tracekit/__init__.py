"""Toolkit for binary trauma-event text classification and explanation.

The package is organized around a small Predictor contract (see
:mod:`tracekit.models`): anything that maps text to a real log-odds score can
be trained, evaluated, cross-tested between domains, and explained with the
same code paths, whether it is a local bag-of-words model, a remote
chat-completions endpoint, or a transformer behind the bridge protocol.
"""

__version__ = "0.1.0"

from tracekit.corpus import Corpus, Segment  # noqa: F401
