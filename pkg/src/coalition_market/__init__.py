"""Coalition formation for a data market with leakage-aware pricing."""
from .engine import (
    Coalition,
    ConstraintSet,
    DeviceProfile,
    MarketGame,
    MarketRules,
    Partition,
    TableGame,
    walkthrough_game,
)
from .solver import SolveTrace, discover_types, is_nash_stable, majp_solve

__version__ = "0.1.0"
