"""Tree search over high-level actions in latent space.

The search repeats `n_samples` root-to-leaf walks.  Each walk scores the
current node with the value head (gated by the done head), greedily picks
the next action by `c * Q / (N + 1) + v*` over permissibility-gated
candidates, predicts the child state with the latent transform, recurses,
and backs up the product of per-level scores, keeping per-edge visit counts
N and best-observed values v*.

The model argument is duck-typed: anything with `action_count`, `value`,
`q_vector`, `perm_vector`, `done_prob` and `transform` works.  The learned
:class:`~vtp.models.ModelBundle` is the production implementation;
:class:`OracleModels` wraps the noise-free simulator for ground-truth
planning and tests.  Hidden states are opaque to the search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ROOT_ACTION
from . import simworld as sw


@dataclass(frozen=True)
class PlannerConfig:
    max_depth: int = 4
    n_samples: int = 10
    exploration: float = 10.0    # c in the sampling score
    v_failed: float = 0.1
    c_done: float = 0.5
    perm_threshold: float = 0.5

    def __post_init__(self):
        if self.max_depth < 1 or self.n_samples < 1:
            raise ValueError("max_depth and n_samples must be at least 1")
        if self.exploration <= 0:
            raise ValueError("exploration constant must be positive")
        for name in ("v_failed", "c_done", "perm_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


@dataclass
class SearchNode:
    action: int                 # action that produced this node (ROOT at root)
    hidden: object
    children: dict = field(default_factory=dict)   # a' -> SearchNode
    visits: dict = field(default_factory=dict)     # N(a, a')
    best: dict = field(default_factory=dict)       # v*(a, a')

    def update(self, a2: int, value: float) -> None:
        self.visits[a2] = self.visits.get(a2, 0) + 1
        self.best[a2] = max(self.best.get(a2, 0.0), value)


@dataclass
class PlanResult:
    actions: list
    hiddens: list
    observations: list          # decoded per-step predictions (may be empty)
    step_values: list
    success_prob: float
    verdict: str                # "plan" | "all-futures-fail"

    def to_json_dict(self, catalog=None) -> dict:
        names = None
        if catalog is not None:
            names = [catalog.name(a) for a in self.actions]
        return {
            "verdict": self.verdict,
            "actions": [int(a) for a in self.actions],
            "action_names": names,
            "step_values": [float(v) for v in self.step_values],
            "success_prob": float(self.success_prob),
        }


def evaluate(models, h0, h, a, cfg: PlannerConfig, at_root: bool = False) -> float:
    """Done-gated state value: V(h), or 0 when the arriving action looks failed.

    The root is exempt: no prediction was made to reach it.
    """
    v = float(models.value(h))
    if at_root or a == ROOT_ACTION:
        return v
    if float(models.done_prob(h0, h, a)) < cfg.c_done:
        return 0.0
    return v


def sample(models, node: SearchNode, h0, h, a, cfg: PlannerConfig):
    """Greedy argmax of c*Q/(N+1) + v* over permissibility-gated actions.

    Returns None when nothing is permissible (a dead end).  Ties break
    toward the lowest action index.
    """
    q = np.asarray(models.q_vector(h0, h, a), dtype=np.float64)
    p = np.asarray(models.perm_vector(h0, h, a), dtype=np.float64)
    best_a, best_score = None, -np.inf
    for a2 in range(models.action_count):
        if p[a2] < cfg.perm_threshold:
            continue
        n = node.visits.get(a2, 0)
        score = cfg.exploration * q[a2] / (n + 1) + node.best.get(a2, 0.0)
        if score > best_score:
            best_a, best_score = a2, score
    return best_a


def explore(models, node: SearchNode, h0, depth: int, cfg: PlannerConfig,
            at_root: bool = False) -> float:
    """One recursive walk; returns the backed-up product of level values."""
    v_i = evaluate(models, h0, node.hidden, node.action, cfg, at_root=at_root)
    if depth >= cfg.max_depth or v_i < cfg.v_failed:
        return v_i
    a2 = sample(models, node, h0, node.hidden, node.action, cfg)
    if a2 is None:
        # nothing permissible: the node is a leaf.  Tasks that finish before
        # max_depth end exactly here (nothing may follow a completed task),
        # so the node's own gated value decides rather than a hard zero;
        # trapped states carry a low value of their own.
        return v_i
    child = node.children.get(a2)
    if child is None:
        child = SearchNode(a2, models.transform(h0, node.hidden, a2))
        node.children[a2] = child
    v2 = explore(models, child, h0, depth + 1, cfg)
    node.update(a2, v2)
    return v_i * v2


def extract_best_plan(models, root: SearchNode, h0, cfg: PlannerConfig) -> PlanResult:
    """Walk argmax-v* children (ties: visits, then index) through the gates."""
    best_root = max(root.best.values(), default=0.0)
    can_decode = hasattr(models, "decode")
    if best_root < cfg.v_failed:
        return PlanResult([], [], [], [], 0.0, "all-futures-fail")
    actions, hiddens, observations, step_values = [], [], [], []
    node = root
    success_prob = 0.0
    for depth in range(cfg.max_depth):
        if not node.best:
            break
        p = np.asarray(models.perm_vector(h0, node.hidden, node.action),
                       dtype=np.float64)
        ranked = sorted(
            node.best.keys(),
            key=lambda a2: (-node.best[a2], -node.visits.get(a2, 0), a2))
        pick = None
        for a2 in ranked:
            if node.best[a2] >= cfg.v_failed and p[a2] >= cfg.perm_threshold:
                pick = a2
                break
        if pick is None:
            break
        if depth == 0:
            success_prob = node.best[pick]
        child = node.children[pick]
        actions.append(pick)
        hiddens.append(child.hidden)
        observations.append(models.decode(child.hidden) if can_decode else None)
        step_values.append(evaluate(models, h0, child.hidden, pick, cfg))
        node = child
    if not actions:
        return PlanResult([], [], [], [], 0.0, "all-futures-fail")
    return PlanResult(actions, hiddens, observations, step_values,
                      success_prob, "plan")


def plan_states(models, h0, h, cfg: PlannerConfig,
                root_action: int = ROOT_ACTION) -> tuple[PlanResult, SearchNode]:
    """Run the full search from prepared (initial, current) states."""
    root = SearchNode(root_action, h)
    for _ in range(cfg.n_samples):
        explore(models, root, h0, 0, cfg, at_root=True)
    result = extract_best_plan(models, root, h0, cfg)
    return result, root


def plan(models, x0, x, cfg: PlannerConfig | None = None,
         root_action: int = ROOT_ACTION) -> tuple[PlanResult, SearchNode]:
    """Encode observations and search; `x` is the current frame, `x0` the
    first frame of the task (pass the same image when planning from the
    start, which reproduces h0 = h)."""
    cfg = cfg or PlannerConfig()
    h0 = models.encode(x0)
    h = models.encode(x) if x is not x0 else h0
    return plan_states(models, h0, h, cfg, root_action=root_action)


# --------------------------------------------------------------------------
# ground-truth models from the noise-free simulator


@dataclass(frozen=True)
class OracleState:
    scene: sw.SceneState
    ok: bool = True  # False once a simulated action has failed


class OracleModels:
    """Exact world model: simulator dynamics plus reachability values.

    Values are 0/1 because the noise-free simulator is deterministic; a
    state is worth 1 when some legal continuation reaches task success.
    The action-value marks only actions that strictly shorten the distance
    to task completion -- the empirical action-value of the non-wandering
    expert -- so the search is never drawn into re-align loops whose
    reachability would otherwise also score 1.
    """

    def __init__(self, scenario: str, horizon: int = 8):
        self.scenario = scenario
        self.catalog = sw.catalog_for(scenario)
        self.action_count = self.catalog.action_count
        self.horizon = horizon
        self._reach_memo: dict = {}
        self._complete_memo: dict = {}

    @staticmethod
    def from_scene(scene: sw.SceneState) -> OracleState:
        return OracleState(scene.without_noise(), True)

    def _key(self, scene: sw.SceneState) -> tuple:
        return (scene.block_cells, scene.stack_parent, scene.grip_cell,
                scene.grip_high, scene.grip_closed, scene.held,
                scene.held_raised, scene.last_action, scene.agent_at,
                scene.agent_cell, scene.nav_command)

    def _success_reachable(self, scene: sw.SceneState, depth: int = 0) -> bool:
        if sw.is_success(scene):
            return True
        if depth >= self.horizon:
            return False
        key = (self._key(scene), depth)
        hit = self._reach_memo.get(key)
        if hit is not None:
            return hit
        out = False
        for a in sorted(sw.legal_next(scene, scene.last_action)):
            nxt, outcome = sw.step_action(scene, a)
            if outcome.succeeded and self._success_reachable(nxt, depth + 1):
                out = True
                break
        self._reach_memo[key] = out
        return out

    def _complete_within(self, scene: sw.SceneState, budget: int) -> bool:
        done = sw.is_success(scene) and not sw.legal_next(scene, scene.last_action)
        if done:
            return True
        if budget == 0:
            return False
        key = (self._key(scene), budget)
        hit = self._complete_memo.get(key)
        if hit is not None:
            return hit
        out = False
        for a in sorted(sw.legal_next(scene, scene.last_action)):
            nxt, outcome = sw.step_action(scene, a)
            if outcome.succeeded and self._complete_within(nxt, budget - 1):
                out = True
                break
        self._complete_memo[key] = out
        return out

    def _completion_dist(self, scene: sw.SceneState) -> int | None:
        """Shortest legal action count to finish the task, None if unreachable."""
        for length in range(self.horizon + 1):
            if self._complete_within(scene, length):
                return length
        return None

    # models protocol ------------------------------------------------------

    def transform(self, h0: OracleState, h: OracleState, a: int) -> OracleState:
        if not h.ok:
            return h
        nxt, outcome = sw.step_action(h.scene, a)
        return OracleState(nxt, outcome.succeeded)

    def value(self, h: OracleState) -> float:
        if not h.ok:
            return 0.0
        return 1.0 if self._success_reachable(h.scene) else 0.0

    def done_prob(self, h0: OracleState, h: OracleState, a: int) -> float:
        return 1.0 if h.ok else 0.0

    def q_vector(self, h0: OracleState, h: OracleState, a: int) -> np.ndarray:
        q = np.zeros(self.action_count)
        if not h.ok:
            return q
        dist = self._completion_dist(h.scene)
        if dist is None:
            return q
        for a2 in sorted(sw.legal_next(h.scene, h.scene.last_action)):
            nxt, outcome = sw.step_action(h.scene, a2)
            if not outcome.succeeded:
                continue
            d2 = self._completion_dist(nxt)
            if d2 is not None and d2 == dist - 1:
                q[a2] = 1.0
        return q

    def perm_vector(self, h0: OracleState, h: OracleState, a: int) -> np.ndarray:
        p = np.zeros(self.action_count)
        if not h.ok:
            return p
        for a2 in sw.legal_next(h.scene, h.scene.last_action):
            p[a2] = 1.0
        return p

    def decode(self, h: OracleState) -> np.ndarray:
        return sw.render(h.scene)
