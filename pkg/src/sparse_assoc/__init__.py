"""Sparse associative memories: Amari, Willshaw and clustered clique (GB) networks."""

from .dynamics import (
    CapacityExceededError,
    CompletionNotFoundError,
    Exhaustive,
    FixedThreshold,
    GbClusterWta,
    GbSumOfMax,
    InputCountThreshold,
    PolicyMismatchError,
    Trajectory,
    WtaKth,
    WtaMax,
    iterate,
    retrieve_exhaustive,
    step,
)
from .experiments import (
    ExperimentResult,
    ExperimentSpec,
    efficiency,
    run_retrieval_sweep,
    stability_probe,
    subclique_probe,
    wrong_message_probe,
)
from .models import AmariNetwork, GBNetwork, WillshawNetwork, recognize
from .netfile import load, save
from .patterns import ErasureSpec, NeuronSpace, Pattern

__version__ = "0.1.0"
