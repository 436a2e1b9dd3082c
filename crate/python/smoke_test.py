"""Smoke test for the `sloc` extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import math

import sloc


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    g = sloc.Target.gaussian([0.0], [[1.0]])
    assert (g.dim, g.kind, g.is_exact) == (1, "gaussian", True)
    close(g.log_density([0.0]), -0.5 * math.log(2 * math.pi), 1e-12)
    close(g.tilt_mean([2.0], 1.0)[0], 1.0, 1e-12)

    mix = sloc.Target.mixture([0.5, 0.5], [[-1.0], [1.0]], [[[0.5]], [[0.5]]])
    same = sloc.Target.from_json(
        '{"kind":"mixture","components":[{"weight":0.5,"mean":[-1],"cov":[[0.5]]},'
        '{"weight":0.5,"mean":[1],"cov":[[0.5]]}]}'
    )
    close(mix.log_density([0.3]), same.log_density([0.3]), 1e-15)
    assert sloc.Target.potential("quartic", 1, 0.1).log_density([0.0]) is None

    t, c, m = sloc.tilt_sde(g, 1.0, 100, seed=3)
    assert len(t) == len(c) == len(m) == 101 and t[-1] == 1.0
    assert sloc.tilt_sde(g, 1.0, 100, seed=3) == (t, c, m)

    x, path = sloc.channel_path(mix, 1.0, 50, seed=1)
    assert len(path) == 51 and path[0] == [0.0]

    u, xs = sloc.backward_sde(g, 1e-3, 10.0, 200, seed=2)
    close(u[-1], 10.0, 1e-9)
    assert len(sloc.polchinski_run(mix, 0.5, 100, seed=4)) == 101

    v, grad = sloc.renorm_potential(g, 0.5, [1.0])
    close(grad[0], 0.0, 1e-12)

    score = sloc.tweedie_score(g, 0.6, 0.64, [1.0])
    close(score[0], -1.0, 1e-12)

    energy, stderr = sloc.girsanov_energy(sloc.Target.gaussian([2.0], [[1.0]]), 2000, seed=5)
    close(energy, 2.0, 0.1)

    b = sloc.sinkhorn([[0.0], [1.0]], [0.5, 0.5], [[0.0], [1.0]], [0.5, 0.5])
    assert b.converged and b.residual < 1e-9
    close(sum(map(sum, b.coupling)), 1.0, 1e-12)

    chain = sloc.rgd_chain(g, [3.0], 1.0, 10, seed=6)
    assert len(chain) == 11
    kl = sloc.chain_law_kl(sloc.Target.gaussian([1.0], [[1.0]]), g, 1.0, 3)
    close(kl[1] / kl[0], 0.25, 1e-12)

    close(sloc.lsi_lower_bound(1.0, 1.0), 0.5, 0.0)
    close(sloc.stability_factor(1.0, 0.5), 0.5, 1e-15)
    assert sloc.lsi_schedule(1.0, [1.0])[0] == (1.0, 0.0, 0.0, 1.0, 0.0)

    checks = sloc.run_suite("lsi")
    assert checks and all(c.passed for c in checks), checks
    checks = sloc.run_suite("channel", g, seed=7, paths=2000)
    assert all(c.passed for c in checks), checks

    try:
        sloc.Target.gaussian([0.0], [[-1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("non-SPD covariance accepted")

    print("sloc smoke test passed")


if __name__ == "__main__":
    main()
