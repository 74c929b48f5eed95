"""Smoke test for the cutoff_lab extension module.

Build and install it first:  pip install --no-build-isolation crates/py
"""

import math

import cutoff_lab as cl


def main():
    ring = cl.Torus([8])
    assert ring.n_sites == 8 and sorted(ring.neighbors(0)) == [1, 7]

    beta = 0.4
    spec = cl.Spectrum(cl.Model(beta), ring)
    expected = 1.0 - math.tanh(2 * beta)
    assert abs(spec.gap - expected) < 1e-10, (spec.gap, expected)
    assert abs(sum(spec.stationary) - 1.0) < 1e-12
    tvs = [spec.tv([1] * 8, t) for t in (0.0, 1.0, 4.0, 16.0)]
    assert all(a >= b for a, b in zip(tvs, tvs[1:])), tvs
    t_quarter = spec.mixing_time(0.25)
    # Worst-start mixing time bounds the distance from any single start.
    assert t_quarter > 0 and spec.tv([1] * 8, t_quarter) <= 0.25 + 1e-9
    assert spec.tv([1] * 8, 0.9 * t_quarter) > spec.tv([1] * 8, t_quarter)

    free = cl.Spectrum(cl.Model(0.0), cl.Torus([6]))
    assert abs(free.gap - 1.0) < 1e-10

    hc = cl.Spectrum(cl.Model(1.0, family="hardcore"), cl.Torus([6]))
    assert 0.0 < hc.gap and abs(sum(hc.stationary) - 1.0) < 1e-12
    assert hc.m_t([0, 1, 2], 30.0) < hc.m_t([0, 1, 2], 0.0)

    model = cl.Model(0.5, h=0.1)
    small = cl.Torus([10])
    updates = cl.UpdateSequence(small, 1.5, seed=3)
    exact = set(cl.update_support(model, small, updates))
    paths = set(cl.update_support(model, small, updates, method="paths"))
    blocks = set(cl.update_support(model, cl.Torus([12]), cl.UpdateSequence(cl.Torus([12]), 1.5, 3), method="blocks"))
    assert exact <= paths
    assert all(0 <= s < 12 for s in blocks)

    sample = cl.perfect_sample(model, cl.Torus([16]), seed=5)
    assert len(sample) == 16 and set(sample) <= {-1, 1}

    upper, se = cl.tv_upper(cl.Model(beta), ring, [0.0, 2.0, 20.0], 400, 9)
    assert upper[0] == 1.0 and upper[-1] <= upper[1] and len(se) == 3

    times = [0.25 * k for k in range(41)]
    curve = cl.xi_curve(cl.Model(0.0), cl.Torus([64]), times, 400, 11)
    lam, lam_se = curve.gap()
    assert abs(lam - 1.0) < 0.1, (lam, lam_se)

    try:
        cl.Model(0.4, family="potts")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown family accepted")

    print(f"ok: gap(8, beta=0.4) = {spec.gap:.12f}, xi fit at beta=0 gives {lam:.4f} +/- {lam_se:.4f}")


if __name__ == "__main__":
    main()
