"""Interactive preference ranking: a GP preference model over candidate pools,
trained from noisy pairwise labels chosen by Bayesian-optimisation acquisition,
warm-started from prior predictions."""

__version__ = "0.1.0"
