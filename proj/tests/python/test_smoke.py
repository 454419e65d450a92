import json

import pytest

import interleaved_offload as io


def test_v100_stride_anchor():
    r = io.optimal_stride(io.profile("v100-node"))
    assert r["k"] == 2
    assert round(r["k_real"], 3) == pytest.approx(2.295, abs=1e-3)
    assert r["gpu_fraction"] == pytest.approx(1 / 3)


def test_all_cpu_sentinel():
    p = io.profile("v100-node")
    p.cpu_update_params_per_s = 1e12
    r = io.optimal_stride(p)
    assert r["k"] is None and r["k_real"] is None
    assert r["gpu_fraction"] == 0.0


def test_figure_four_layout():
    assert io.fast_assignments(8, 3, 0.25, "static_last") == [2, 5, 6, 7]
    assert io.fast_assignments(5, 0) == []


def test_interleaved_beats_all_cpu():
    p = io.profile("h100-node")
    base = io.simulate(p, 50, 100_000_000)
    inter = io.simulate(p, 50, 100_000_000, k=2)
    assert 1.5 <= base["makespan_ns"] / inter["makespan_ns"] <= 2.0


def test_execute_matches_oracle():
    for stride in range(0, 5):
        assert io.execute_matches_oracle([100, 37, 512, 8, 64], stride, 0.25, seed=3, step=4)


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        io.profile("tpu")
    with pytest.raises(ValueError):
        io.parse_scenario("{")
    p = io.profile("v100-node")
    p.fast_capacity_bytes = 10.0
    with pytest.raises(RuntimeError):
        io.simulate(p, 10, 1000, k=2)


def test_scenario_canonical_round_trip():
    text = json.dumps({
        "profile": "v100-node",
        "workload": {"total_params": 1000, "subgroup_size": 100},
        "approaches": [{"kind": "interleaved", "k": "auto"}],
    })
    canon = io.parse_scenario(text)
    assert io.parse_scenario(canon) == canon
    assert json.loads(canon)["profile"]["name"] == "v100-node"


def test_cli_in_process():
    code, out, _ = io.run_cli(["plan", "--profile", "v100-node"])
    assert code == 0
    assert "k_real≈2.29, k=2" in out
    code, _, err = io.run_cli(["simulate"])
    assert code == 2 and err
