"""Quick end-to-end check of the Python bindings.

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import math

import curveflow_py as cf


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


sphere = cf.WarpedMetric("sphere:1", nodes=200)
curv = sphere.curvature()
close(max(curv["k_rad"]), 1.0, 1e-6)
close(sphere.ball_volume(math.pi), 2 * math.pi**2, 1e-3)
close(sphere.distance(0.0, 0.0, math.pi), math.pi, 1e-9)

trace = sphere.flow(0.1, snapshots=[0.0, 0.05, 0.1], pairs=[(0.0, 0.0, math.pi)])
assert len(trace) == 3
# r(t)^2 = 1 - 4t for the unit round 3-sphere.
end = trace.metric(2).curvature()
close(end["k_rad"][0], 1 / 0.6, 1e-3)
close(trace.scaled_curvature_sup(0.0, 0.1), 0.1 / 0.6, 1e-3)
assert trace.distance_monitor()["pass"]

flat = cf.WarpedMetric("euclidean", nodes=1001, s_max=5.0)
tamed = flat.tame(2.0)
assert all(s == w for s, w in zip(tamed.s, tamed.w) if s <= 2.0)

assert cf.pinching_sweep("ricci", 1e-3, 500, seed=3)["pass"]
assert cf.jacobi_sweep(1.0, 2.0, 200, seed=3)["pass"]

x = cf.FiniteMetricSpace([[0, 1], [1, 0]])
y = cf.FiniteMetricSpace([[0, 3], [3, 0]])
close(cf.gh_exact(x, y), 1.0, 1e-12)
lo, hi = cf.gh_bounds(x, y)
assert lo <= 1.0 + 1e-12 <= hi + 2e-12

close(cf.cone_distance(1.0, 1.0, [1, 0, 0], 1.0, [0, 1, 0]), math.sqrt(2), 1e-12)
try:
    cf.cone_distance(2.0, 1.0, [1, 0, 0], 1.0, [0, 1, 0])
except ValueError:
    pass
else:
    raise AssertionError("c > 1 accepted")

report = cf.selftest()
assert report["pass"], [c["name"] for c in report["cases"] if not c["pass"]]

print("ok")
