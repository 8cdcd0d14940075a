"""Deterministic 2D desk simulator: block stacking and four-target navigation.

The world is a 6x6 cell grid rendered to a 64x64 RGB image.  High-level
actions are symbolic (align with the red block, stack on the green block,
go to the barrel, ...) and execute as instantaneous scene edits plus a tick
cost.  Failures are injected three ways: an abstract 30-tick budget
(timeout), placement next to the obstacle (collision), and a random drop of
the held block during lift/stack.  Everything is a pure function of
(seed, action sequence); per-step randomness comes from counter-based
streams keyed on the scene seed and step index.

Blockworld actions form two chained sub-tasks over four colored blocks:

    align -> grasp_approach -> close_gripper -> lift      (pick, by block)
    align_above -> stack -> open_gripper -> home          (place, by target)

The only free choices on a legal path are which block to pick, which block
to stack it on, and optional re-aligns before committing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .dataset import Episode, ROOT_ACTION

GRID = 6
CELL = 10
MARGIN = 2
IMG = 64
TICK_BUDGET = 30
DROP_PROB = 0.05
NOISE_AMP = 0.01
MAX_EPISODE_ACTIONS = 40

BLOCK_COLORS = ("red", "green", "blue", "yellow")
NAV_OBJECTS = ("barrel", "barricade", "pylon", "block")

PICK_VERBS = ("align", "grasp_approach", "close_gripper", "lift")
PLACE_VERBS = ("align_above", "stack", "open_gripper", "home")
BLOCK_VERBS = PICK_VERBS + PLACE_VERBS

_RGB = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.70, 0.15),
    "blue": (0.15, 0.25, 0.85),
    "yellow": (0.90, 0.85, 0.10),
    "barrel": (0.55, 0.27, 0.07),
    "barricade": (0.95, 0.60, 0.10),
    "pylon": (0.95, 0.30, 0.30),
    "block": (0.30, 0.45, 0.75),
}
_BACKGROUND = (0.91, 0.90, 0.86)
_OBSTACLE = (0.22, 0.22, 0.24)
_WHITE = (1.0, 1.0, 1.0)

# rng stream salts
_SALT_DROP = 1
_SALT_TICK = 2
_SALT_RENDER = 3
_SALT_SCENE = 4
_SALT_POLICY = 5


class FailureReason(IntEnum):
    NONE = 0
    TIMEOUT = 1
    OBSTACLE_COLLISION = 2
    OUT_OF_WORKSPACE = 3
    DROP = 4


@dataclass(frozen=True)
class ActionOutcome:
    succeeded: bool
    failure_reason: FailureReason
    ticks_consumed: int

    def __post_init__(self):
        ok = self.failure_reason == FailureReason.NONE
        if ok != self.succeeded:
            raise ValueError("failure_reason must be NONE exactly when succeeded")


@dataclass(frozen=True)
class ActionDef:
    verb: str
    param: int  # block or nav-object index

    @property
    def name(self) -> str:
        names = NAV_OBJECTS if self.verb == "goto" else BLOCK_COLORS
        return f"{self.verb}_{names[self.param]}"


class ActionCatalog:
    """Ordered action definitions for one scenario; ids are list positions."""

    def __init__(self, scenario: str):
        if scenario == "blockworld":
            actions = [ActionDef(verb, i)
                       for verb in BLOCK_VERBS for i in range(len(BLOCK_COLORS))]
        elif scenario == "nav4":
            actions = [ActionDef("goto", i) for i in range(len(NAV_OBJECTS))]
        else:
            raise ValueError(f"unknown scenario {scenario!r}")
        self.scenario = scenario
        self.actions = actions
        self._by_key = {(a.verb, a.param): i for i, a in enumerate(actions)}

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def action_count(self) -> int:
        return len(self.actions)

    def action_id(self, verb: str, param: int) -> int:
        return self._by_key[(verb, param)]

    def define(self, action_id: int) -> ActionDef:
        return self.actions[action_id]

    def name(self, action_id: int) -> str:
        if action_id == ROOT_ACTION:
            return "root"
        return self.actions[action_id].name


_CATALOGS: dict[str, ActionCatalog] = {}


def catalog_for(scenario: str) -> ActionCatalog:
    if scenario not in _CATALOGS:
        _CATALOGS[scenario] = ActionCatalog(scenario)
    return _CATALOGS[scenario]


@dataclass(frozen=True)
class SceneState:
    scenario: str
    seed: int
    block_cells: tuple          # 4 x (row, col)
    stack_parent: tuple         # 4 x (int | None)
    obstacle_cell: tuple
    grip_cell: tuple | None     # None = home position
    grip_high: bool = True
    grip_closed: bool = False
    held: int | None = None
    held_raised: bool = False
    last_action: int = ROOT_ACTION
    elapsed: int = 0
    step_count: int = 0
    noise: bool = True
    agent_cell: tuple | None = None   # nav4 only
    agent_at: int | None = None
    nav_command: int | None = None

    def validate(self) -> None:
        seen: dict[tuple, int] = {}
        for i, cell in enumerate(self.block_cells):
            if not (0 <= cell[0] < GRID and 0 <= cell[1] < GRID):
                raise ValueError(f"block {i} out of workspace: {cell}")
            j = seen.get(cell)
            if j is not None and self.stack_parent[i] is None \
                    and self.stack_parent[j] is None and cell != self.obstacle_cell:
                raise ValueError(f"blocks {j} and {i} overlap unstacked")
            seen[cell] = i
        if not (0 <= self.obstacle_cell[0] < GRID and 0 <= self.obstacle_cell[1] < GRID):
            raise ValueError(f"obstacle out of workspace: {self.obstacle_cell}")
        if self.held is not None and self.held_raised and self.grip_cell is None:
            raise ValueError("held and raised block requires a gripper cell")
        if self.elapsed < 0:
            raise ValueError("elapsed time cannot be negative")

    def without_noise(self) -> "SceneState":
        return replace(self, noise=False)


def _rng_for(seed: int, salt: int, counter: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF,
                    ((salt & 0xFFFFFFFF) << 32) | (counter & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _scene_rng(scene: SceneState, salt: int) -> np.random.Generator:
    return _rng_for(scene.seed, salt, scene.step_count)


def random_scene(scenario: str, seed: int) -> SceneState:
    """Sample an invariant-satisfying start scene; identical per seed."""
    rng = _rng_for(seed, _SALT_SCENE)
    # rows 1..5 leave sprite headroom for hover/stack rendering
    cells = [(int(r), int(c)) for r in range(1, GRID) for c in range(GRID)]
    picks = rng.choice(len(cells), size=6, replace=False)
    chosen = [cells[int(i)] for i in picks]
    # obstacle biased toward the interior so placement collisions occur at a
    # useful rate in the training mix
    interior = [p for p in chosen if 2 <= p[0] <= 4 and 1 <= p[1] <= 4]
    obstacle = interior[0] if interior else chosen[0]
    remaining = [p for p in chosen if p != obstacle]
    blocks = list(remaining[:4])
    # most scenes get one block right next to the obstacle: stacking onto it
    # fails, which keeps the demonstration mix near half successes
    if rng.random() < 0.85:
        occupied = set(blocks) | {obstacle}
        near = [(obstacle[0] + dr, obstacle[1] + dc)
                for dr in (-1, 0, 1) for dc in (-1, 0, 1)
                if (dr or dc)
                and 1 <= obstacle[0] + dr < GRID and 0 <= obstacle[1] + dc < GRID
                and (obstacle[0] + dr, obstacle[1] + dc) not in occupied]
        if near:
            blocks[int(rng.integers(0, 4))] = near[int(rng.integers(0, len(near)))]
    blocks = tuple(blocks)
    if scenario == "blockworld":
        scene = SceneState(scenario=scenario, seed=seed, block_cells=blocks,
                           stack_parent=(None,) * 4, obstacle_cell=obstacle,
                           grip_cell=None)
    elif scenario == "nav4":
        agent = remaining[4]
        command = int(rng.integers(0, len(NAV_OBJECTS)))
        scene = SceneState(scenario=scenario, seed=seed, block_cells=blocks,
                           stack_parent=(None,) * 4, obstacle_cell=obstacle,
                           grip_cell=None, agent_cell=agent, agent_at=None,
                           nav_command=command)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    scene.validate()
    return scene


def _adjacent(a: tuple, b: tuple) -> bool:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) <= 1


def is_success(scene: SceneState) -> bool:
    if scene.scenario == "blockworld":
        return any(p is not None for p in scene.stack_parent)
    return scene.agent_at is not None and scene.agent_at == scene.nav_command


def legal_next(scene: SceneState, last: int) -> set[int]:
    """Exact task-graph successors of `last` in this scene."""
    cat = catalog_for(scene.scenario)
    if scene.scenario == "nav4":
        if is_success(scene):
            return set()
        return {cat.action_id("goto", i) for i in range(len(NAV_OBJECTS))
                if i != scene.agent_at}
    if last == ROOT_ACTION:
        return {cat.action_id("align", i) for i in range(4)}
    action = cat.define(last)
    verb, param = action.verb, action.param
    if verb == "align":
        out = {cat.action_id("grasp_approach", param)}
        out |= {cat.action_id("align", i) for i in range(4) if i != param}
        return out
    if verb == "grasp_approach":
        return {cat.action_id("close_gripper", param)}
    if verb == "close_gripper":
        return {cat.action_id("lift", param)} if scene.held == param else set()
    if verb == "lift":
        if scene.held is None:
            return set()  # dropped: trial is over
        return {cat.action_id("align_above", i) for i in range(4) if i != scene.held}
    if verb == "align_above":
        if scene.held is None:
            return set()
        out = {cat.action_id("stack", param)}
        out |= {cat.action_id("align_above", i) for i in range(4)
                if i != scene.held and i != param}
        return out
    if verb == "stack":
        return {cat.action_id("open_gripper", param)} if is_success(scene) else set()
    if verb == "open_gripper":
        return {cat.action_id("home", param)}
    return set()  # home is terminal


def _free_cell_near(scene: SceneState, around: tuple) -> tuple:
    """First unoccupied in-bounds cell scanning ring-by-ring (deterministic)."""
    occupied = set(scene.block_cells) | {scene.obstacle_cell}
    for radius in range(1, GRID):
        for dr in range(-radius, radius + 1):
            for dc in range(-radius, radius + 1):
                if max(abs(dr), abs(dc)) != radius:
                    continue
                cell = (around[0] + dr, around[1] + dc)
                if 1 <= cell[0] < GRID and 0 <= cell[1] < GRID and cell not in occupied:
                    return cell
    return around


def step_action(scene: SceneState, action_id: int) -> tuple[SceneState, ActionOutcome]:
    """Execute one high-level action; failures are data, not errors."""
    cat = catalog_for(scene.scenario)
    legal = action_id in legal_next(scene, scene.last_action)
    ticks = 1
    if scene.noise:
        ticks += int(_scene_rng(scene, _SALT_TICK).random() < 0.35)

    def finish(s: SceneState, ok: bool,
               reason: FailureReason) -> tuple[SceneState, ActionOutcome]:
        s = replace(s, elapsed=scene.elapsed + ticks,
                    step_count=scene.step_count + 1, last_action=action_id)
        return s, ActionOutcome(ok, reason, ticks)

    if not legal:
        # undefined motion: the arm wanders out of the workspace
        return finish(scene, False, FailureReason.OUT_OF_WORKSPACE)
    if scene.elapsed + ticks > TICK_BUDGET:
        return finish(scene, False, FailureReason.TIMEOUT)

    if scene.scenario == "nav4":
        target = cat.define(action_id).param
        goal = scene.block_cells[target]
        if _adjacent(goal, scene.obstacle_cell):
            return finish(scene, False, FailureReason.OBSTACLE_COLLISION)
        dist = max(abs(goal[0] - scene.agent_cell[0]),
                   abs(goal[1] - scene.agent_cell[1]))
        ticks += dist // 3
        new = replace(scene, agent_cell=_free_cell_near(scene, goal), agent_at=target)
        return finish(new, True, FailureReason.NONE)

    action = cat.define(action_id)
    verb, param = action.verb, action.param
    drop = False
    if scene.noise and verb in ("lift", "stack"):
        drop = bool(_scene_rng(scene, _SALT_DROP).random() < DROP_PROB)

    if verb == "align":
        new = replace(scene, grip_cell=scene.block_cells[param], grip_high=True,
                      grip_closed=False, held=None, held_raised=False)
    elif verb == "grasp_approach":
        new = replace(scene, grip_high=False)
    elif verb == "close_gripper":
        new = replace(scene, grip_closed=True, held=param)
    elif verb == "lift":
        if drop:
            new = replace(scene, held=None, grip_closed=False, grip_high=True,
                          held_raised=False)
            return finish(new, False, FailureReason.DROP)
        new = replace(scene, grip_high=True, held_raised=True)
    elif verb == "align_above":
        new = replace(scene, grip_cell=scene.block_cells[param], grip_high=True)
    elif verb == "stack":
        held = scene.held
        if drop:
            cells = list(scene.block_cells)
            cells[held] = _free_cell_near(scene, scene.block_cells[param])
            new = replace(scene, block_cells=tuple(cells), held=None,
                          grip_closed=False, held_raised=False)
            return finish(new, False, FailureReason.DROP)
        if _adjacent(scene.block_cells[param], scene.obstacle_cell):
            cells = list(scene.block_cells)
            cells[held] = scene.obstacle_cell
            new = replace(scene, block_cells=tuple(cells), held=None,
                          grip_closed=False, grip_high=False, held_raised=False,
                          grip_cell=scene.block_cells[param])
            return finish(new, False, FailureReason.OBSTACLE_COLLISION)
        cells = list(scene.block_cells)
        parents = list(scene.stack_parent)
        cells[held] = scene.block_cells[param]
        parents[held] = param
        new = replace(scene, block_cells=tuple(cells), stack_parent=tuple(parents),
                      grip_high=False, held_raised=False)
    elif verb == "open_gripper":
        new = replace(scene, grip_closed=False, held=None)
    elif verb == "home":
        new = replace(scene, grip_cell=None, grip_high=True, grip_closed=False)
    else:
        raise AssertionError(f"unhandled verb {verb}")
    return finish(new, True, FailureReason.NONE)


# --------------------------------------------------------------------------
# rendering


def _fill(img: np.ndarray, r0: int, c0: int, h: int, w: int, color) -> None:
    r1, c1 = max(r0, 0), max(c0, 0)
    r2, c2 = min(r0 + h, IMG), min(c0 + w, IMG)
    if r2 > r1 and c2 > c1:
        img[r1:r2, c1:c2] = color


def _ring(img: np.ndarray, r0: int, c0: int, size: int, thickness: int, color) -> None:
    _fill(img, r0, c0, thickness, size, color)
    _fill(img, r0 + size - thickness, c0, thickness, size, color)
    _fill(img, r0, c0, size, thickness, color)
    _fill(img, r0, c0 + size - thickness, size, thickness, color)


def _cell_origin(cell: tuple) -> tuple[int, int]:
    return MARGIN + CELL * cell[0], MARGIN + CELL * cell[1]


def _render_blockworld(scene: SceneState, img: np.ndarray) -> None:
    orr, occ = _cell_origin(scene.obstacle_cell)
    _fill(img, orr, occ, CELL, CELL, _OBSTACLE)
    # table blocks, then stacked children, then the held block
    for i, cell in enumerate(scene.block_cells):
        if scene.stack_parent[i] is not None or i == scene.held:
            continue
        r, c = _cell_origin(cell)
        _fill(img, r + 1, c + 1, 8, 8, _RGB[BLOCK_COLORS[i]])
    for i, parent in enumerate(scene.stack_parent):
        if parent is None or i == scene.held:
            continue
        r, c = _cell_origin(scene.block_cells[i])
        _fill(img, r - 7, c + 1, 8, 8, _RGB[BLOCK_COLORS[i]])
    if scene.held is not None:
        i = scene.held
        r, c = _cell_origin(scene.grip_cell or scene.block_cells[i])
        if scene.stack_parent[i] is not None:
            offset = -8  # placed on the target, gripper still closed
        elif not scene.held_raised:
            offset = 0
        else:
            over_other = any(
                scene.block_cells[j] == scene.grip_cell
                for j in range(4) if j != i and scene.stack_parent[j] is None)
            offset = -11 if over_other else -4
        _fill(img, r + 1 + offset, c + 1, 8, 8, _RGB[BLOCK_COLORS[i]])
    thickness = 2 if scene.grip_closed else 1
    if scene.grip_cell is None:
        _ring(img, 0, 0, 12, thickness, _WHITE)
    else:
        r, c = _cell_origin(scene.grip_cell)
        if scene.grip_high:
            _ring(img, r - 2, c - 2, 14, thickness, _WHITE)
        else:
            _ring(img, r, c, 10, thickness, _WHITE)


def _render_nav4(scene: SceneState, img: np.ndarray) -> None:
    orr, occ = _cell_origin(scene.obstacle_cell)
    _fill(img, orr, occ, CELL, CELL, _OBSTACLE)
    shapes = {"barrel": (8, 8), "barricade": (4, 10), "pylon": (4, 4), "block": (8, 8)}
    offsets = {"barrel": (1, 1), "barricade": (3, 0), "pylon": (3, 3), "block": (1, 1)}
    for i, cell in enumerate(scene.block_cells):
        name = NAV_OBJECTS[i]
        r, c = _cell_origin(cell)
        dr, dc = offsets[name]
        h, w = shapes[name]
        _fill(img, r + dr, c + dc, h, w, _RGB[name])
    cr, cc = _cell_origin(scene.block_cells[scene.nav_command])
    _ring(img, cr - 2, cc - 2, 14, 1, _WHITE)
    ar, ac = _cell_origin(scene.agent_cell)
    _fill(img, ar + 2, ac + 2, 6, 6, _WHITE)


def render(scene: SceneState) -> np.ndarray:
    """Deterministic 64x64x3 float image in [0, 1] with seeded pixel noise."""
    img = np.empty((IMG, IMG, 3), dtype=np.float32)
    img[:] = _BACKGROUND
    if scene.scenario == "blockworld":
        _render_blockworld(scene, img)
    else:
        _render_nav4(scene, img)
    rng = _scene_rng(scene, _SALT_RENDER)
    noise = rng.uniform(-NOISE_AMP, NOISE_AMP, size=img.shape).astype(np.float32)
    return np.clip(img + noise, 0.0, 1.0)


def render_u8(scene: SceneState) -> np.ndarray:
    return np.round(render(scene) * 255.0).astype(np.uint8)


# --------------------------------------------------------------------------
# policies and episode generation


def expert_action(scene: SceneState, last: int, rng: np.random.Generator) -> int:
    """Non-optimal scripted expert: follows the chain, targets chosen blindly."""
    cat = catalog_for(scene.scenario)
    if scene.scenario == "nav4":
        return cat.action_id("goto", scene.nav_command)
    if last == ROOT_ACTION:
        return cat.action_id("align", int(rng.integers(0, 4)))
    action = cat.define(last)
    verb, param = action.verb, action.param
    if verb == "align":
        return cat.action_id("grasp_approach", param)
    if verb == "grasp_approach":
        return cat.action_id("close_gripper", param)
    if verb == "close_gripper":
        return cat.action_id("lift", param)
    if verb == "lift":
        others = [i for i in range(4) if i != scene.held]
        return cat.action_id("align_above", others[int(rng.integers(0, len(others)))])
    if verb == "align_above":
        return cat.action_id("stack", param)
    if verb == "stack":
        return cat.action_id("open_gripper", param)
    if verb == "open_gripper":
        return cat.action_id("home", param)
    raise AssertionError("expert queried in a terminal state")


def eps_random_action(scene: SceneState, last: int, rng: np.random.Generator,
                      eps: float = 0.2) -> int:
    """Expert with probability 1-eps, else uniform over legal successors."""
    if rng.random() < eps:
        legal = sorted(legal_next(scene, last))
        if legal:
            return int(legal[int(rng.integers(0, len(legal)))])
    return expert_action(scene, last, rng)


POLICIES = {"expert": expert_action, "eps-random": eps_random_action}


def gen_episode(scenario: str, seed: int, policy: str = "eps-random") -> Episode:
    """Roll one trial: a frame at every action boundary plus terminal labels."""
    try:
        policy_fn = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; expected one of {sorted(POLICIES)}")
    cat = catalog_for(scenario)
    rng = _rng_for(seed, _SALT_POLICY)
    scene = random_scene(scenario, seed)
    frames = [render_u8(scene)]
    actions = [ROOT_ACTION]
    done = [1]
    failure = FailureReason.NONE
    last = ROOT_ACTION
    for _ in range(MAX_EPISODE_ACTIONS):
        if not legal_next(scene, last):
            break
        a = policy_fn(scene, last, rng)
        scene, outcome = step_action(scene, a)
        frames.append(render_u8(scene))
        actions.append(a)
        done.append(int(outcome.succeeded))
        last = a
        if not outcome.succeeded:
            failure = outcome.failure_reason
            break
    success = is_success(scene) and failure == FailureReason.NONE
    if not success and failure == FailureReason.NONE:
        failure = FailureReason.TIMEOUT  # safety cap without an explicit failure
    return Episode(scenario=scenario, seed=seed, action_count=cat.action_count,
                   frames=np.stack(frames), actions=np.array(actions, dtype=np.uint8),
                   done=np.array(done, dtype=np.uint8), success=success,
                   failure_reason=int(failure) if not success else 0)


def replay_masks(episode: Episode) -> np.ndarray:
    """Per-frame legal-successor bitmask recovered by deterministic replay."""
    cat = catalog_for(episode.scenario)
    scene = random_scene(episode.scenario, episode.seed)
    masks = np.zeros((episode.n_frames, cat.action_count), dtype=np.uint8)
    last = ROOT_ACTION
    for a in sorted(legal_next(scene, last)):
        masks[0, a] = 1
    for i in range(1, episode.n_frames):
        scene, outcome = step_action(scene, int(episode.actions[i]))
        last = int(episode.actions[i])
        if not outcome.succeeded:
            break  # terminal frame keeps an all-zero mask
        for a in sorted(legal_next(scene, last)):
            masks[i, a] = 1
    return masks


def replay_scenes(episode: Episode) -> list[SceneState]:
    """Scene at every frame boundary of a recorded episode."""
    scene = random_scene(episode.scenario, episode.seed)
    scenes = [scene]
    for i in range(1, episode.n_frames):
        scene, _ = step_action(scene, int(episode.actions[i]))
        scenes.append(scene)
    return scenes


# --------------------------------------------------------------------------
# brute-force planning oracle


def oracle_plan(scene: SceneState, depth: int = 8) -> tuple[list[int], float]:
    """Exhaustive noise-free search; returns (best sequence, success prob).

    With noise disabled the simulator is deterministic, so the success
    probability is 1.0 when some legal sequence within `depth` completes the
    task (success achieved and the task graph exhausted) and 0.0 otherwise.
    Iterative deepening returns a shortest such sequence.
    """
    if depth > 8:
        raise ValueError("oracle_plan: depth must be <= 8")
    start = scene.without_noise()

    def done(s: SceneState) -> bool:
        return is_success(s) and not legal_next(s, s.last_action)

    def dfs(s: SceneState, seq: list[int], limit: int) -> list[int] | None:
        if done(s):
            return seq
        if len(seq) >= limit:
            return None
        for a in sorted(legal_next(s, s.last_action)):
            nxt, outcome = step_action(s, a)
            if not outcome.succeeded:
                continue
            found = dfs(nxt, seq + [a], limit)
            if found is not None:
                return found
        return None

    for limit in range(1, depth + 1):
        best = dfs(start, [], limit)
        if best is not None:
            return best, 1.0
    return [], 0.0
