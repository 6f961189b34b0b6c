"""Graph-based temporal classification: a CTC generalization whose
supervision is a weighted graph of label sequences, plus the pipeline
that builds such graphs from N-best hypotheses.
"""

from .alphabet import BLANK, BLANK_TOKEN, EPSILON, Alphabet
from .errors import (
    AlphabetMismatchError,
    BudgetExceededError,
    CyclicMachineError,
    EmptyLanguageError,
    GtcError,
    InfeasibleError,
    NondeterministicError,
    ParseError,
)
from .graph import (
    END_LABEL,
    START_LABEL,
    Edge,
    GtcGraph,
    collapse_path,
    ctc_linear_graph,
    graph_density,
    is_feasible,
    unfold,
    unit_weights,
    walk_count,
    wfst_to_ctc_graph,
)
from .loss import (
    BatchResult,
    Logits,
    Posteriors,
    Trellis,
    analyze,
    backward,
    forward,
    gradient,
    loss,
    loss_and_grad,
    loss_and_grad_batch,
    probability_at,
    softmax,
    symbol_index,
)
from .pipeline import (
    ConfusionNetwork,
    Hypothesis,
    NBestList,
    PipelineConfig,
    build_supervision_graph,
    cn_to_wfst,
    hypothesis_weights,
    label_error_rate,
    levenshtein,
    nbest_to_cn,
    oracle_ler,
    prune_cn,
    prune_wfst,
)
from .beam import greedy_decode, nbest_from_posteriors, prefix_beam_search
from .semirings import LOG, TROPICAL
from .wfst import (
    Wfst,
    compose,
    determinize,
    edit_distance_fst,
    isomorphic,
    linear_acceptor,
    minimize,
    optimize,
    remove_epsilon,
    shortest_distance,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "BLANK", "BLANK_TOKEN", "EPSILON",
    "GtcError", "ParseError", "CyclicMachineError", "NondeterministicError",
    "AlphabetMismatchError", "EmptyLanguageError", "InfeasibleError",
    "BudgetExceededError",
    "GtcGraph", "Edge", "START_LABEL", "END_LABEL",
    "ctc_linear_graph", "wfst_to_ctc_graph", "unit_weights", "unfold",
    "walk_count", "is_feasible", "collapse_path", "graph_density",
    "Posteriors", "Logits", "Trellis", "BatchResult",
    "softmax", "forward", "backward", "analyze", "probability_at",
    "loss", "gradient", "loss_and_grad", "loss_and_grad_batch", "symbol_index",
    "Hypothesis", "NBestList", "ConfusionNetwork", "PipelineConfig",
    "hypothesis_weights", "nbest_to_cn", "prune_cn", "cn_to_wfst", "prune_wfst",
    "build_supervision_graph", "oracle_ler", "label_error_rate", "levenshtein",
    "prefix_beam_search", "nbest_from_posteriors", "greedy_decode",
    "Wfst", "LOG", "TROPICAL", "compose", "optimize", "shortest_distance",
    "linear_acceptor", "edit_distance_fst", "remove_epsilon", "determinize",
    "minimize", "isomorphic",
    "__version__",
]
