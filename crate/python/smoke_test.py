"""Smoke test for the cnfetlab Python extension.

Build and copy the module next to this script first:

    cargo build --release -p cnfetlab-python
    cp target/release/libcnfetlab_py.so python/cnfetlab.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import cnfetlab  # noqa: E402


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    p = cnfetlab.CntParams(25, 0)
    check(abs(p.diameter * 1e9 - 1.981) < 5e-4, f"diameter {p.diameter * 1e9:.4f} nm")
    check(abs(p.threshold - 0.2201) < 5e-5, f"threshold {p.threshold:.4f} V")
    ids, gm, gds, region = p.drain_current(0.6, 0.6)
    check(region == "saturation" and ids > 0 and gm > 0, f"drain current {ids:.3e} A in {region}")

    div = cnfetlab.Netlist.parse("V1 in 0 1\nR1 in mid 1k\nR2 mid 0 1k\n")
    op = div.operating_point()
    check(abs(op["mid"] - 0.5) < 1e-9, "resistor divider at 0.5 V")
    check(abs(op["power"] - 0.5e-3) < 1e-12, "divider power 0.5 mW")

    rc = cnfetlab.Netlist("rc")
    rc.add_vsource("V1", "in", "0", dc=0.0, ac=1.0)
    rc.add_resistor("R1", "in", "out", 1e3)
    rc.add_capacitor("C1", "out", "0", 1e-6)
    freqs, (h,) = rc.ac(1.0, 1e5, 40, ["out"])
    bw = cnfetlab.bandwidth_3db(freqs, [abs(x) for x in h])
    check(abs(bw / (1 / (2 * math.pi * 1e-3)) - 1) < 5e-3, f"RC bandwidth {bw:.2f} Hz")

    f, out, inp = rc.noise("out", "V1", 1.0, 10.0, 1)
    check(out[0] > 0 and inp[0] is not None, "noise densities")

    dt = 1.0 / (512 * 1e6)
    samples = [
        math.cos(2 * math.pi * 1e6 * k * dt)
        + 0.01 * math.cos(4 * math.pi * 1e6 * k * dt)
        + 0.005 * math.cos(6 * math.pi * 1e6 * k * dt)
        for k in range(512 * 10)
    ]
    t = cnfetlab.thd(samples, dt, 1e6)
    check(abs(t * 100 - 1.1180340) < 1e-6, f"THD {t * 100:.6f}%")

    cfg = cnfetlab.MultiplierConfig()
    power = cfg.quiescent_power()
    check(abs(power / cnfetlab.TARGET_POWER - 1) < 5e-3, f"quiescent power {power * 1e6:.2f} uW")
    reports = cnfetlab.MultiplierConfig.ideal().run("dc")
    check(reports["dc_transfer"]["ideal_rel_dev"] < 1e-6, "ideal multiplier matches the closed form")

    code, stdout, _ = cnfetlab.run_cli(["model", "--chirality", "25,0"])
    check(code == 0 and "Vth=0.2201 V" in stdout, "command-line front end")
    code, _, _ = cnfetlab.run_cli(["nonsense"])
    check(code == 1, "usage error exit code")

    try:
        cnfetlab.Netlist.parse("R1 a 0 -1\n")
    except ValueError as e:
        check("line 1" in str(e), "parse error raises ValueError")
    else:
        raise SystemExit("FAIL: bad netlist accepted")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
