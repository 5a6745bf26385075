"""Smoke test for the oam_memory_py extension.

Build and install first:
    pip install --no-build-isolation ./crates/py
then run:
    python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import oam_memory_py as om


def main():
    # mode overlap falls with OAM order
    ods = [om.effective_od(l) for l in range(4)]
    assert all(b < a for a, b in zip(ods, ods[1:])), ods

    # classical bound at single-photon level
    assert abs(om.fidelity_threshold(0.5) - 0.687759) < 1e-6

    # fast storage run on a coarse grid
    setup = om.StorageSetup().with_param("od", 20.0)
    cfg = om.Config(overrides=["grid.nz=60", "grid.dt=1.0", "od_override=20"])
    res = cfg.setup().run()
    assert 0.0 < res.se < 1.0
    assert abs(res.balance_error) < 1e-2
    assert len(res.exit_times) == len(res.exit_field)
    assert "od" in om.StorageSetup.param_names()
    assert setup.od() == 20.0

    # qubit storage with equal mode efficiencies keeps the state
    _, eta, f = om.store_qubit(1.0, 1.0, 0.0, 0.6, 0.6)
    assert abs(eta - 0.6) < 1e-12 and abs(f - 1.0) < 1e-12

    # tomography round trip
    h = om.qubit_stokes(1.0, 1.0, 0.0)
    counts = om.simulate_tomography(h, 100.0, seed=3, background_rate=0.0)
    stokes, est = om.reconstruct(counts, time_s=100.0, rho_in=h, resamples=200)
    assert all(abs(x - y) < 0.01 for x, y in zip(stokes, h)), stokes
    assert om.fidelity(h, h) == 1.0
    assert est[0] > 0.999 and est[1] < 0.002

    # harness plus replay
    with tempfile.TemporaryDirectory() as d:
        a, b = Path(d, "a"), Path(d, "b")
        files = cfg.run("threshold", str(a))
        assert any(f.endswith("threshold.json") for f in files)
        om.replay(str(a / "threshold.json"), str(b))
        assert (a / "threshold.csv").read_bytes() == (b / "threshold.csv").read_bytes()
        doc = json.loads((a / "threshold.json").read_text())
        assert math.isclose(doc["result"][0]["f_coh"], om.fidelity_threshold(0.1))

    # errors map to Python exceptions
    try:
        om.Config(overrides=["ensemble.bogus=1"])
    except ValueError:
        pass
    else:
        raise AssertionError("bad override accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
