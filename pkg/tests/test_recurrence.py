"""
Test Recurrence - Burning algorithm and forbidden subconfigurations

Testes do algoritmo de queima (árvore geradora, regra de arestas),
da busca exaustiva de FSC e da contagem de configurações recorrentes.
"""

import math
import os
import sys

import networkx as nx
import numpy as np
import pytest

# Add project root to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.Modules.errors import BurningRuleError, SizeGuardError
from src.Modules.Lattice.torus import ModelParams
from src.Modules.Recurrence.burning import (ROOT, burn_allowed_batch, burning_allowed, enumerate_allowed_count,
                                            enumeration_report, fsc_exhaustive, fsc_exhaustive_batch,
                                            recurrent_log_count)
from src.Modules.Simulation.engine import GrainConfig, SandpileEngine, deposit_and_stabilize, make_rng

SLOW = os.environ.get("SANDLAB_SLOW") == "1"


def test_max_stable_burns_to_spanning_tree():
    p = ModelParams(2, 2, 2, 1)
    result = burning_allowed(GrainConfig.max_stable(p))
    assert result.allowed
    assert not result.unburnt
    assert len(result.tree_edges) == p.sites
    assert result.is_spanning_tree()
    g = result.tree_graph()
    assert nx.is_tree(nx.Graph(g)) and g.has_node(ROOT)


def test_zero_configuration_is_forbidden():
    p = ModelParams(2, 1)
    h = GrainConfig.zeros(p)
    result = burning_allowed(h)
    assert not result.allowed
    assert result.unburnt == set(range(p.sites))
    assert result.tree_edges == []
    assert fsc_exhaustive(h)


def test_adjacent_subthreshold_pair_is_forbidden():
    # two neighbours both below n form an FSC on their own
    p = ModelParams(2, 1, 2, 1)
    h = GrainConfig.from_coords(p, {(0, 0): 1, (1, 0): 0}, fill=p.threshold - 1)
    assert fsc_exhaustive(h)
    assert not burning_allowed(h).allowed


def test_burning_equals_fsc_on_random_configurations():
    p = ModelParams(2, 1, 1, 1)
    rng = np.random.default_rng(2024)
    count = 100_000 if SLOW else 5_000
    H = rng.integers(0, p.threshold, size=(count, p.sites))
    burn = burn_allowed_batch(H, p)
    fsc = fsc_exhaustive_batch(H, p)
    assert np.array_equal(burn, ~fsc)
    for row in H[:200]:
        h = GrainConfig(row, p)
        assert burning_allowed(h).allowed == (not fsc_exhaustive(h))


@pytest.mark.skipif(not SLOW, reason="full 5^9 sweep; set SANDLAB_SLOW=1")
def test_burning_equals_fsc_exhaustively():
    from src.Modules.Recurrence.burning import _decode_chunk
    p = ModelParams(2, 1, 1, 1)
    total = p.threshold ** p.sites
    for lo in range(0, total, 1 << 17):
        H = _decode_chunk(lo, min(lo + (1 << 17), total), p)
        assert np.array_equal(burn_allowed_batch(H, p), ~fsc_exhaustive_batch(H, p))


def test_allowed_count_matches_determinant():
    p = ModelParams(2, 1, 1, 1)
    count = enumerate_allowed_count(p)
    assert count == 614656
    assert count == round(math.exp(recurrent_log_count(p)))


def test_enumeration_report_fields():
    p = ModelParams(2, 1, 1, 1)
    report = enumeration_report(p, chunk=1 << 16)
    assert report['allowed_count'] == report['expected_count'] == 614656
    assert report['total_states'] == 5 ** 9


def test_enumeration_size_guard():
    with pytest.raises(SizeGuardError):
        enumerate_allowed_count(ModelParams(2, 1, 2, 1), size_guard=1000)


def test_fsc_size_guard():
    p = ModelParams(2, 2)
    with pytest.raises(SizeGuardError):
        fsc_exhaustive(GrainConfig.zeros(p))


def test_chain_visits_only_allowed_configurations():
    p = ModelParams(2, 2, 1, 2)
    rng = make_rng(5)
    engine = SandpileEngine(GrainConfig.max_stable(p))
    for step in range(2000):
        engine.deposit(int(rng.integers(0, p.sites)))
        if step % 50 == 0:
            assert burning_allowed(engine.snapshot()).allowed


def test_avalanches_preserve_allowed_configurations():
    rng = make_rng(31)
    for p in (ModelParams(2, 2, 1, 2), ModelParams(3, 1, 1, 1)):
        engine = SandpileEngine(GrainConfig.max_stable(p))
        for _ in range(500):
            for _ in range(7):
                engine.deposit(int(rng.integers(0, p.sites)))
            h = engine.snapshot()
            assert burning_allowed(h).allowed
            after, _ = deposit_and_stabilize(h, int(rng.integers(0, p.sites)))
            assert burning_allowed(after).allowed


@pytest.mark.skipif(not SLOW, reason="10^8 chain steps; set SANDLAB_SLOW=1")
def test_chain_is_uniform_on_recurrent_states():
    p = ModelParams(2, 1, 1, 1)
    total_states = 614656
    steps, thin = 10 ** 8, 50
    rng = make_rng(2024)
    engine = SandpileEngine(GrainConfig.max_stable(p))
    visits = {}
    block = 10 ** 6
    for lo in range(0, steps, block):
        for i, x in enumerate(rng.integers(0, p.sites, size=block).tolist()):
            engine.deposit(x)
            if (lo + i) % thin == 0:
                key = bytes(engine.heights)
                visits[key] = visits.get(key, 0) + 1

    assert len(visits) <= total_states
    counts = np.fromiter(visits.values(), dtype=float)
    expected = counts.sum() / total_states
    stat = np.sum((counts - expected) ** 2) / expected + (total_states - len(visits)) * expected
    dof = total_states - 1
    assert abs(stat - dof) < 3 * math.sqrt(2 * dof)


def test_burning_rule_violation_raises():
    p = ModelParams(2, 1, 1, 1)
    H = np.full(p.sites, p.threshold - 1)
    H[0] = 3 * p.threshold
    with pytest.raises(BurningRuleError):
        burning_allowed(GrainConfig(H, p, check_stable=False))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
