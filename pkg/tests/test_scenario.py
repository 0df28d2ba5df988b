"""Scenario schema: loading, validation diagnostics, and round-tripping."""

import pytest

from qkdbft.scenario import ScenarioConfig, ScenarioError, load_scenario, render_scenario
from qkdbft.scenarios import check_placements, overhead_scenario, builtin_suite

GOOD = """
name: demo
topology:
  nodes: 6
  edges: [[0,1],[1,2],[2,3],[3,4],[4,5],[5,0]]
demands:
  - {src: 1, dst: 4, amount_kbit: 500}
byzantine:
  - {node: 0, behaviors: [equivocate-propose, eavesdrop-relayed-keys]}
security: {omega: 63, ts_key_bits: 128}
round_cap_kbit: 300
seed: 7
"""


def test_load_good_scenario():
    cfg = load_scenario(GOOD)
    assert cfg.name == "demo"
    assert cfg.nodes == 6 and len(cfg.edges) == 6
    assert cfg.demands == ((1, 4, 500_000),)
    assert cfg.byzantine == (0,)
    assert cfg.behavior_map()[0] == ("equivocate-propose", "eavesdrop-relayed-keys")
    assert cfg.declared_f == 1
    assert cfg.round_cap_bits == 300_000
    assert cfg.seed == 7


def test_roundtrip_through_yaml():
    for cfg in (load_scenario(GOOD), overhead_scenario(), *builtin_suite()):
        assert load_scenario(render_scenario(cfg)) == cfg


@pytest.mark.parametrize("mutation, needle", [
    ("name: demo", "name:"),                       # removing the name line
    ("nodes: 6", "nodes: 1"),                      # too small
    ("[5,0]", "[5,6]"),                            # edge out of range
    ("src: 1", "src: 9"),                          # demand out of range
    ("amount_kbit: 500", "amount_kbit: 0"),        # non-positive amount
    ("node: 0", "node: 77"),                       # byzantine id out of range
    ("equivocate-propose", "set-fire-to-router"),  # unknown behavior
    ("omega: 63", "omega: 0"),                     # bad security params
    ("seed: 7", "seed: [1,2]"),                    # wrong type
])
def test_load_diagnostics_carry_field_paths(mutation, needle):
    broken = GOOD.replace(mutation, needle)
    if mutation == "name: demo":
        broken = GOOD.replace("name: demo\n", "")
    with pytest.raises(ScenarioError):
        load_scenario(broken)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as ei:
        load_scenario("name: x\ntopology: {nodes: 6, edges: [[0,1]\n")
    assert "line" in str(ei.value)


def test_direct_config_validation():
    with pytest.raises(ScenarioError):
        ScenarioConfig(name="x", nodes=3, edges=((0, 1), (1, 2)),
                       demands=((0, 0, 5),), byzantine=(), behaviors=())
    with pytest.raises(ScenarioError):
        ScenarioConfig(name="x", nodes=3, edges=((0, 1), (1, 2)),
                       demands=(), byzantine=(1, 1), behaviors=())
    with pytest.raises(ScenarioError):
        ScenarioConfig(name="x", nodes=3, edges=((0, 1), (1, 2)),
                       demands=(), byzantine=(), behaviors=(),
                       view_limit=2, min_views=3)


def test_builtin_suite_shape():
    suite = builtin_suite()
    assert len(suite) == 9
    names = [c.name for c in suite]
    assert len(set(names)) == 9
    by_nodes = {c.nodes for c in suite}
    assert by_nodes == {6, 8, 12}
    for cfg in suite:
        assert 1 <= cfg.declared_f <= 3
    check_placements()  # Byzantine sets sit on the probe demands' paths
