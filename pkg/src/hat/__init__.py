"""Active learning over mixed human/machine translation data.

The package is organised as a numpy/scipy library:

- ``hat.core``        domain types, budgets, top-k selection, checkpoints
- ``hat.textmodel``   tokenizer, smoothed n-gram LMs, beam search, hashed
                      feature embeddings, distilled translation model
- ``hat.parser``      surrogate semantic parser (generative Bayes classifier)
- ``hat.geometry``    exponential-kernel KDE and incremental k-means
- ``hat.acquisition`` bias/error/density/diversity scoring, aggregation,
                      baseline strategies
- ``hat.simulator``   synthetic bilingual world with controllable translation
                      bias and error
- ``hat.metrics``     JS divergence, MTLD, divergence frontier, BT discrepancy
- ``hat.loop``        the round-based selection/translate/retrain loop
- ``hat.service``     HTTP annotation service for real human translators
- ``hat.cli``         command line entry point (``hat ...``)
"""

__version__ = "0.1.0"
