"""Smoke test of the Python bindings: fit an independence sample on Laplace
margins and check a few closed-form quantities."""

import math

import spar


def main():
    r, q = spar.polar(1.0, -3.0)
    assert abs(r - 4.0) < 1e-12
    x, y = spar.cartesian(r, q)
    assert abs(x - 1.0) < 1e-12 and abs(y + 3.0) < 1e-12

    data = spar.sample_copula("independence", 10_000, seed=1)
    assert len(data) == 10_000

    config = spar.FitConfig(system="l1", gamma=0.8)
    model = spar.SparModel.fit(data, config, seed=1)
    print(model)

    u, tau, xi = model.params(0.3)
    print(f"threshold {u:.3f}  scale {tau:.3f}  shape {xi:.3f}")
    assert abs(u - 2.994) / 2.994 < 0.1
    assert abs(tau - 1.0) < 0.5

    # the independence density exp(-r)/4 meets this level at r = 5
    angles = spar.angle_grid(100)
    radii = model.isodensity_contour(0.25 * math.exp(-5.0), angles)
    defined = sorted(r for r in radii if r is not None)
    median = defined[len(defined) // 2]
    print(f"median contour radius {median:.3f}")
    assert abs(median - 5.0) / 5.0 < 0.05

    budget = model.probability_budget()
    assert abs(budget - 0.2) < 0.005, budget

    try:
        model.return_level_set(0.5, angles)
    except ValueError as e:
        print(f"expected error: {e}")
    else:
        raise AssertionError("a >= 1 - gamma must be rejected")

    sim = model.simulate(1000, seed=2)
    assert len(sim) == 1000

    again = spar.SparModel.from_json(model.to_json())
    assert again.density(4.0, 1.0) == model.density(4.0, 1.0)

    local = model.local_estimates(data, centers=20)
    assert len(local) == 20 and all(e["reliable"] for e in local)

    print("ok")


if __name__ == "__main__":
    main()
