"""Cross-lingual text classification with transformed and combined data.

The package covers the full pipeline: loading and normalizing word
embedding spaces, mapping one space into another (orthogonal fit plus
retrieval-criterion refinement), word-for-word and endpoint-backed
corpus translation, convolutional and recurrent classifiers trained
with hand-rolled backprop and Adam, and an experiment harness that runs
the monolingual/bilingual scenario matrix reproducibly.
"""

__version__ = "0.1.0"
