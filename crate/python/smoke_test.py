"""Smoke test for the corotfsi extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run:
    python3 python/smoke_test.py
"""

import math

import corotfsi


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    lines = corotfsi.self_check()
    check(all(p for _, _, _, p in lines), f"self_check ({len(lines)} checks)")

    w = [[0.0, 1.0], [-1.0, 0.0]]
    t = [[1.0, 0.0], [0.0, 2.0]]
    check(corotfsi.corotation_term(w, t) == [[0.0, 1.0], [1.0, 0.0]], "corotation_term")

    cfg = corotfsi.Config("Nx = 16\nt_max = 0.05\neps = 0.5\nstress_offset = 1, 0.2, -0.4\ncadence = 10\n")
    check(cfg.ny == 8 and cfg.relaxation_time == 1.0, "config defaults and derived relaxation time")
    check(corotfsi.Config(cfg.to_text()).to_text() == cfg.to_text(), "config text round trip")

    try:
        corotfsi.Config("Nx = 16\nt_max = 1\n")
        check(False, "missing eps is rejected")
    except corotfsi.ConfigError:
        check(True, "missing eps is rejected")

    sim = corotfsi.Simulation(cfg)
    s0 = sim.sample()["norm_T_L2"]
    sim.step(10)
    check(abs(sim.t - 0.01) < 1e-12, "Simulation.step advances time")
    out = sim.run(0.05)
    check(out["termination"] == "completed", "Simulation.run completes")
    ratio = out["norm_T_L2"][-1] / (s0 * math.exp(-0.5 * 0.05))
    check(abs(ratio - 1.0) < 1e-8, f"constant stress decays at rate eps (ratio {ratio:.12f})")
    check(max(out["energy_defect"]) <= 1e-6 * out["energy_scale"], "energy defects stay non-positive")

    rep = corotfsi.decay(cfg)
    check(rep["pass_T"], "decay envelope passes")

    cl = corotfsi.closure(nq=32, dt=2e-3, horizon=0.2)
    check(max(cl["deviation"]) < 0.02, f"kinetic closure within 2% (max {max(cl['deviation']):.2e})")

    print("smoke test passed")


if __name__ == "__main__":
    main()
