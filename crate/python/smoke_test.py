"""Smoke test for the rooftop extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run:
    python python/smoke_test.py
"""

import pathlib
import sys

import rooftop

ROOT = pathlib.Path(__file__).resolve().parent.parent


def closed_form(x):
    return x * x if abs(x) <= 0.5 else abs(x) - 0.25


def main():
    grid = rooftop.Grid.line(-2.0, 2.0, 2049)
    f = rooftop.GridFunction.sample("x^2", grid)
    q = rooftop.Polytope.interval(-1.0, 1.0)

    env = rooftop.envelope(f, q)
    xs = grid.points()[0]
    sup = max(abs(p - closed_form(x)) for p, x in zip(env.envelope.values(), xs))
    assert sup <= 2 * grid.h, sup
    touching = [x for x, c in zip(xs, env.contact) if c]
    assert abs(min(touching) + 0.5) <= grid.h + 1e-12
    assert abs(max(touching) - 0.5) <= grid.h + 1e-12

    mu = rooftop.ma(env.envelope, q)
    assert abs(mu.total_mass + mu.boundary_deficit - q.volume) <= 0.03 * q.volume

    report = rooftop.check_main(env.envelope, f, q)
    assert report["verdict"] == "pass", report
    identity = next(r for r in report["residuals"] if r["name"] == "identity")
    assert identity["value"] <= 0.05

    pair = [rooftop.GridFunction.sample(e, rooftop.Grid.line(-2.0, 3.0, 1281)) for e in ("x^2", "(x-1)^2")]
    wide = rooftop.Polytope.interval(-6.0, 6.0)
    roof = rooftop.rooftop(pair, wide)
    assert len(roof.obstacle_contacts) == 2
    decomposition = rooftop.check_rooftop_decomposition(pair[0], pair[1], wide)
    assert decomposition["verdict"] == "pass", decomposition

    scenario = rooftop.run_scenario(str(ROOT / "scenarios" / "kink.toml"))
    assert scenario["verdict"] == "pass"

    try:
        rooftop.GridFunction.sample("x^^2", grid)
    except ValueError as e:
        assert "byte" in str(e)
    else:
        raise AssertionError("bad expression accepted")

    print(f"rooftop {rooftop.__version__}: smoke test ok (sup {sup:.2e}, identity {identity['value']:.2e})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
