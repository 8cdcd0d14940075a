"""Search tests against hand-built models plus simulator-oracle equivalence."""

from dataclasses import replace

import numpy as np
import pytest

from vtp import planner as pl
from vtp import simworld as sw
from vtp.dataset import ROOT_ACTION
from vtp.planner import OracleModels, PlannerConfig, SearchNode


class FakeModels:
    """Table-driven world model over string states for exact hand evaluation."""

    def __init__(self, action_count, transforms, values, q=None, perm=None,
                 done=None):
        self.action_count = action_count
        self.transforms = transforms      # (state, a) -> state
        self.values = values              # state -> v
        self.q_table = q or {}            # state -> vector
        self.perm_table = perm or {}      # state -> vector
        self.done_table = done or {}      # state -> prob

    def transform(self, h0, h, a):
        return self.transforms.get((h, a), f"{h}/{a}")

    def value(self, h):
        return self.values.get(h, 0.5)

    def q_vector(self, h0, h, a):
        return np.asarray(self.q_table.get(h, [0.5] * self.action_count))

    def perm_vector(self, h0, h, a):
        return np.asarray(self.perm_table.get(h, [1.0] * self.action_count))

    def done_prob(self, h0, h, a):
        return self.done_table.get(h, 1.0)


CFG = PlannerConfig()


def test_evaluate_root_exemption_and_gate():
    m = FakeModels(2, {}, {"s": 0.7}, done={"s": 0.2})
    assert pl.evaluate(m, "s", "s", ROOT_ACTION, CFG) == 0.7
    assert pl.evaluate(m, "s", "s", 1, CFG) == 0.0          # done 0.2 < 0.5
    m2 = FakeModels(2, {}, {"s": 0.7}, done={"s": 0.9})
    assert pl.evaluate(m2, "s", "s", 1, CFG) == 0.7          # passes exactly V
    m3 = FakeModels(2, {}, {"s": 0.7}, done={"s": 0.2})
    assert pl.evaluate(m3, "s", "s", 1, CFG, at_root=True) == 0.7


def test_sample_score_formula():
    # q=0.5, N=0 (denominator 1), v*=0.2, c=10 -> score 5.2
    m = FakeModels(2, {}, {}, q={"s": [0.5, 0.3]})
    node = SearchNode(ROOT_ACTION, "s")
    node.best[0] = 0.2
    pick = pl.sample(m, node, "s", "s", ROOT_ACTION, CFG)
    score0 = 10 * 0.5 / 1 + 0.2
    score1 = 10 * 0.3 / 1 + 0.0
    assert score0 == pytest.approx(5.2)
    assert score0 > score1 and pick == 0


def test_sample_tie_breaks_to_lowest_index():
    m = FakeModels(4, {}, {}, q={"s": [0.4, 0.4, 0.4, 0.4]})
    node = SearchNode(ROOT_ACTION, "s")
    assert pl.sample(m, node, "s", "s", ROOT_ACTION, CFG) == 0


def test_sample_visit_decay_switches_argmax():
    # q=(0.9, 0.8); after 9 visits of action 0 with v*=0, action 1 wins
    m = FakeModels(2, {}, {}, q={"s": [0.9, 0.8]})
    node = SearchNode(ROOT_ACTION, "s")
    node.visits[0] = 9
    node.best[0] = 0.0
    scores = [10 * 0.9 / (9 + 1) + 0.0, 10 * 0.8 / (0 + 1) + 0.0]
    assert scores[1] > scores[0]
    assert pl.sample(m, node, "s", "s", ROOT_ACTION, CFG) == 1


def test_sample_permutation_equivariance():
    rng = np.random.default_rng(0)
    q = list(rng.random(6))
    m = FakeModels(6, {}, {}, q={"s": q})
    node = SearchNode(ROOT_ACTION, "s")
    pick = pl.sample(m, node, "s", "s", ROOT_ACTION, CFG)
    perm = [3, 0, 5, 1, 4, 2]  # new index of each old action
    q2 = [0.0] * 6
    for old, new in enumerate(perm):
        q2[new] = q[old]
    m2 = FakeModels(6, {}, {}, q={"s": q2})
    pick2 = pl.sample(m2, node, "s", "s", ROOT_ACTION, CFG)
    assert pick2 == perm[pick]


def test_sample_rejects_impermissible():
    m = FakeModels(3, {}, {}, q={"s": [0.9, 0.5, 0.4]},
                   perm={"s": [0.1, 0.6, 0.6]})
    node = SearchNode(ROOT_ACTION, "s")
    assert pl.sample(m, node, "s", "s", ROOT_ACTION, CFG) == 1
    dead = FakeModels(3, {}, {}, perm={"s": [0.0, 0.0, 0.0]})
    assert pl.sample(dead, node, "s", "s", ROOT_ACTION, CFG) is None


def test_update_semantics():
    node = SearchNode(ROOT_ACTION, "s")
    node.update(2, 0.7)
    assert node.visits[2] == 1 and node.best[2] == 0.7
    node.update(2, 0.3)
    assert node.visits[2] == 2 and node.best[2] == 0.7
    rng = np.random.default_rng(1)
    prev = node.best[2]
    for v in rng.random(20):
        node.update(2, float(v))
        assert node.best[2] >= prev
        prev = node.best[2]


def test_explore_base_cases():
    m = FakeModels(2, {}, {"s": 0.8})
    node = SearchNode(ROOT_ACTION, "s")
    # at depth == max_depth: return v_i, no recursion, no children
    v = pl.explore(m, node, "s", CFG.max_depth, CFG, at_root=True)
    assert v == 0.8 and not node.children
    # failed done check: v_i = 0 -> return 0 without sampling
    m2 = FakeModels(2, {}, {"s": 0.8}, done={"s": 0.0})
    node2 = SearchNode(1, "s")
    v2 = pl.explore(m2, node2, "s", 0, CFG)
    assert v2 == 0.0 and not node2.children


def test_explore_depth2_product_matches_hand_oracle():
    # chain s -(0)-> t -(0)-> u with hand-computable values
    transforms = {("s", 0): "t", ("t", 0): "u"}
    values = {"s": 0.9, "t": 0.8, "u": 0.7}
    q = {"s": [1.0, 0.0], "t": [1.0, 0.0], "u": [1.0, 0.0]}
    perm = {"s": [1.0, 0.0], "t": [1.0, 0.0], "u": [1.0, 0.0]}
    m = FakeModels(2, transforms, values, q=q, perm=perm)
    cfg = PlannerConfig(max_depth=2, n_samples=1)
    node = SearchNode(ROOT_ACTION, "s")
    v = pl.explore(m, node, "s", 0, cfg, at_root=True)
    # hand evaluation: v_s * (v_t * v_u)
    assert v == pytest.approx(0.9 * (0.8 * 0.7))
    assert node.best[0] == pytest.approx(0.8 * 0.7)
    assert node.children[0].best[0] == pytest.approx(0.7)


def test_explore_dead_end_is_a_leaf():
    # no permissible successor: the node's own value decides (a completed
    # task ends exactly like this; a trapped state carries a low value)
    m = FakeModels(2, {}, {"s": 0.9}, perm={"s": [0.0, 0.0]})
    node = SearchNode(ROOT_ACTION, "s")
    assert pl.explore(m, node, "s", 0, CFG, at_root=True) == 0.9
    trapped = FakeModels(2, {}, {"s": 0.05}, perm={"s": [0.0, 0.0]})
    assert pl.explore(trapped, node, "s", 0, CFG, at_root=True) == 0.05


def test_explore_call_budget_and_value_range(monkeypatch):
    calls = {"root": 0, "recursive": 0}
    original = pl.explore

    def counting(models, node, h0, depth, cfg, at_root=False):
        calls["root" if at_root else "recursive"] += 1
        return original(models, node, h0, depth, cfg, at_root=at_root)

    monkeypatch.setattr(pl, "explore", counting)
    m = FakeModels(3, {}, {})
    cfg = PlannerConfig(max_depth=3, n_samples=7)
    result, root = pl.plan_states(m, "s", "s", cfg)
    assert calls["root"] == cfg.n_samples
    # each sample descends at most max_depth edges
    assert calls["recursive"] <= cfg.n_samples * cfg.max_depth
    for vals in root.best.values():
        assert 0.0 <= vals <= 1.0


def test_plan_single_path_extraction():
    transforms = {("s", 0): "t", ("t", 0): "u"}
    values = {"s": 0.9, "t": 0.8, "u": 0.7}
    perm = {"s": [1.0, 0.0], "t": [1.0, 0.0], "u": [0.0, 0.0]}
    q = {"s": [1.0, 0.0], "t": [1.0, 0.0], "u": [0.0, 0.0]}
    m = FakeModels(2, transforms, values, q=q, perm=perm)
    cfg = PlannerConfig(max_depth=2, n_samples=4)
    result, _ = pl.plan_states(m, "s", "s", cfg)
    assert result.verdict == "plan"
    assert result.actions == [0, 0]
    assert result.hiddens == ["t", "u"]
    assert result.step_values == [pytest.approx(0.8), pytest.approx(0.7)]


def test_plan_all_futures_fail():
    # every child evaluates below v_failed: root best v* stays under the gate
    values = {"s": 0.9}
    m = FakeModels(2, {}, values)
    m.values.update({f"s/{a}": 0.01 for a in range(2)})
    cfg = PlannerConfig(max_depth=2, n_samples=6)
    result, root = pl.plan_states(m, "s", "s", cfg)
    assert result.verdict == "all-futures-fail"
    assert result.actions == []
    assert max(root.best.values()) < cfg.v_failed


def test_plan_deterministic():
    m = FakeModels(3, {}, {})
    cfg = PlannerConfig(max_depth=3, n_samples=5)
    r1, _ = pl.plan_states(m, "s", "s", cfg)
    r2, _ = pl.plan_states(m, "s", "s", cfg)
    assert r1.actions == r2.actions
    assert r1.step_values == r2.step_values
    assert r1.success_prob == r2.success_prob


# --------------------------------------------------------------------------
# oracle-model planning against the exhaustive simulator oracle


def run_plan_in_sim(scene, actions):
    scene = scene.without_noise()
    for a in actions:
        scene, outcome = sw.step_action(scene, a)
        if not outcome.succeeded:
            return scene, False
    return scene, sw.is_success(scene)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_oracle_models_match_oracle_plan(seed):
    scene = sw.random_scene("blockworld", seed)
    oracle_seq, oracle_prob = sw.oracle_plan(scene, depth=8)
    models = OracleModels("blockworld")
    state = OracleModels.from_scene(scene)
    cfg = PlannerConfig(max_depth=8, n_samples=200)
    result, _ = pl.plan_states(models, state, state, cfg)
    if oracle_prob == 1.0:
        assert result.verdict == "plan"
        _, ok = run_plan_in_sim(scene, result.actions)
        assert ok, f"planned actions {result.actions} failed in simulation"
    else:
        assert result.verdict == "all-futures-fail"


def test_oracle_models_unsolvable_scene():
    blocks = [(2, 2), (2, 4), (4, 2), (4, 4)]
    scene = sw.SceneState(scenario="blockworld", seed=0, block_cells=tuple(blocks),
                          stack_parent=(None,) * 4, obstacle_cell=(3, 3),
                          grip_cell=None)
    models = OracleModels("blockworld")
    state = OracleModels.from_scene(scene)
    cfg = PlannerConfig(max_depth=8, n_samples=50)
    result, _ = pl.plan_states(models, state, state, cfg)
    assert result.verdict == "all-futures-fail"
    assert sw.oracle_plan(scene, 8)[1] == 0.0


def test_oracle_models_nav4():
    for seed in range(10):
        scene = sw.random_scene("nav4", seed)
        models = OracleModels("nav4", horizon=4)
        state = OracleModels.from_scene(scene)
        cfg = PlannerConfig(max_depth=4, n_samples=40)
        result, _ = pl.plan_states(models, state, state, cfg)
        _, prob = sw.oracle_plan(scene, depth=4)
        if prob == 1.0:
            assert result.verdict == "plan"
            assert result.actions[0] == scene.nav_command
        else:
            assert result.verdict == "all-futures-fail"


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(max_depth=0)
    with pytest.raises(ValueError):
        PlannerConfig(v_failed=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(exploration=-1.0)
