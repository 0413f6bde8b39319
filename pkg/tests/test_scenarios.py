import numpy as np
import pytest

from smdpnav.scenarios import (FAMILIES, ROBOT_RADIUS, LAYOUTS, ScenarioInfeasible, ScenarioSpec, generate_scenario,
                               load_layout, load_spec, preset)
from smdpnav.sim.world import CollisionChecker, connected


@pytest.mark.parametrize("family,count", [("sparse", 6), ("dense", 32), ("hybrid", 32)])
def test_obstacle_counts(family, count):
    sc = generate_scenario(preset(family), 3)
    assert len(sc.obstacles) == count
    assert (sc.world.width, sc.world.height) == pytest.approx((10.0, 10.0))
    for shape in sc.obstacles:
        assert 0 <= shape[1] <= 10 and 0 <= shape[2] <= 10


def test_hybrid_has_bars():
    sc = generate_scenario(preset("hybrid"), 1)
    bars = [s for s in sc.obstacles if s[0] == "rect" and max(s[3], s[4]) >= 1.0]
    assert len(bars) >= 8


@pytest.mark.parametrize("family", FAMILIES + ("desk",))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_generated_instances_are_valid(family, seed):
    spec = preset(family)
    sc = generate_scenario(spec, seed)
    chk = CollisionChecker(sc.world, ROBOT_RADIUS)
    assert not chk.collides(np.array([[sc.start.x, sc.start.y]]))[0]
    assert not chk.collides(sc.goal[None])[0]
    assert connected(sc.world, sc.start.xy, sc.goal, ROBOT_RADIUS)
    assert np.hypot(*(sc.goal - sc.start.xy)) >= min(spec.min_separation, 1.0) - 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_determinism(family):
    a, b = generate_scenario(preset(family), 9), generate_scenario(preset(family), 9)
    assert a.world.to_image().tobytes() == b.world.to_image().tobytes()
    assert a.start == b.start and np.array_equal(a.goal, b.goal)


def test_seeds_differ():
    a, b = generate_scenario(preset("sparse"), 0), generate_scenario(preset("sparse"), 1)
    assert a.world != b.world


def test_clearance_discs():
    for seed in range(5):
        sc = generate_scenario(preset("dense"), seed)
        for p in (sc.start.xy, sc.goal):
            ys, xs = np.nonzero(sc.world.grid)
            cx, cy = sc.world.cell_center(xs, ys)
            assert np.min(np.hypot(cx - p[0], cy - p[1])) >= 0.5 - sc.world.resolution


@pytest.mark.parametrize("name", sorted(LAYOUTS))
def test_packaged_layouts_match_generator(name):
    world, meta = load_layout(name)
    ref_world, ref_meta = LAYOUTS[name](world.resolution)
    assert world == ref_world
    for k in ("start", "goal", "extent"):
        assert meta[k] == ref_meta[k]


def test_fixed_layout_start_goal():
    sc = generate_scenario(preset("zigzag"), 4)
    assert (sc.start.x, sc.start.y) == (0.8, 0.7)
    assert sc.goal.tolist() == [0.8, 5.3]
    assert sc.obstacles == []


def test_infeasible_spec():
    spec = ScenarioSpec("sparse", (3.0, 3.0), 40, (0.8, 1.0), clearance=0.9)
    with pytest.raises(ScenarioInfeasible):
        generate_scenario(spec, 0, max_tries=3)


def test_load_spec_forms(tmp_path):
    import json

    assert load_spec("dense") == preset("dense")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(preset("sparse", n_obstacles=4).to_dict()))
    assert load_spec(p).n_obstacles == 4
    with pytest.raises(ValueError):
        load_spec("nonsense")
