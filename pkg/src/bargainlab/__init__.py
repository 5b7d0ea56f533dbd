"""bargainlab: bargaining games, welfare-based agents, cross-play evaluation.

The package studies how independently trained agents succeed or fail to
coordinate in games with several defensible cooperative conventions. It
bundles iterated matrix games and coin-collecting gridworlds, five welfare
functions with their bargaining geometry, an exact opponent-shaping learner,
tit-for-tat agents parameterized by welfare functions (including the
norm-adaptive variant carrying a whole set of them), a self-play/cross-play
tournament harness with normalized scoring, and a verifier for the minimax
ceiling on cross-play returns.
"""

from .games import make_environment
from .lola import LolaExact
from .amtft import AmTFTTrainer
from .welfare import WelfareSpec, feasible_set, normalized_score, welfare_optimum

__version__ = "0.1.0"

__all__ = [
    "AmTFTTrainer",
    "LolaExact",
    "WelfareSpec",
    "feasible_set",
    "make_environment",
    "normalized_score",
    "welfare_optimum",
    "__version__",
]
