"""Smoke test for the ramsa extension module.

Build and install the module first, then run from the repository root:

    maturin develop --release -m crates/python/Cargo.toml
    python python/smoke_test.py
"""

import math

import ramsa


def main():
    assert "SCD" in ramsa.problems()
    assert "SRD-truncated" in ramsa.presets()

    r = ramsa.solve(problem="SCD", budget=1000, seed=7)
    assert r["status"] == "completed", r
    assert r["evaluations"] == 1000
    assert len(r["x"]) == 3 and all(math.isfinite(v) for v in r["x"])
    assert ramsa.solve(problem="SCD", budget=1000, seed=7) == r

    t = ramsa.solve(preset="WBD-truncated", budget=600, seed=1)
    assert t["outside_evaluations"] == 0

    v = ramsa.validate("SRD", [3.5765, 0.7, 17.0, 7.3, 7.7541, 3.3652, 5.3017], mc_samples=20000)
    assert len(v["constraint_probs"]) == 11
    assert abs(v["mean_objective"] - 3038.7) < 5.0, v

    tr = ramsa.trial(preset="WBD", runs=4, mc_samples=2000, master_seed=3, budget=1000)
    assert tr["runs"] == 4 and len(tr["points"]) == 4

    k = ramsa.tune("VSI", samples=200, seed=0)
    assert k["argmin"] in k["grid"]

    try:
        ramsa.solve(problem="NOPE")
    except ValueError as e:
        assert "NOPE" in str(e)
    else:
        raise AssertionError("unknown problem accepted")

    print("ramsa", ramsa.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
