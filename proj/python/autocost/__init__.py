"""Safe RL with evolved intrinsic costs (C++ core)."""

from ._autocost import *  # noqa: F401,F403
from ._autocost import (  # noqa: F401
    ConfigError,
    ContractError,
    Environment,
    WorldConfig,
    evolve,
    gae,
    heatmap,
    train,
)
