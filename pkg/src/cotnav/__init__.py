"""Frontier exploration guided by semantic action scores, with a grid simulator."""

from .explorer import Explorer, ExplorerConfig, Phase
from .history import ActionHistory, AgentAction
from .metrics import EpisodeResult, spl, sr
from .occupancy import CellState, DepthScan, GridPose, OccupancyGrid
from .prompts import CoTLevel
from .scorer import HeuristicScorer, OracleScorer, RemoteScorer, ScorerError, UniformScorer
from .simworld import World, generate_world, load_world
from .value_map import ActionScores, ConeParams, ValueMap

__version__ = "0.1.0"
