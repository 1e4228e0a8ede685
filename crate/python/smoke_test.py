"""Smoke test for the pyemftd extension module.

Build and install first, e.g. `pip install ./crates/python` (maturin backend),
or copy the built cdylib next to this file as `pyemftd.so`.
"""

import math

import pyemftd as em


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    # closed-form oracle and drift
    close(em.diffusion_first_passage_cdf(0.2, 0.0, 0.2, 1.0), 0.3173105078629141, 1e-12)
    close(em.martingale_drift(0.2, 0.0, 0.25), -0.02, 1e-15)
    close(em.lstar_c_for_grade("BBB"), 1.35, 0.0)
    close(em.lstar_c_for_grade("BBB+"), 1.35 + 0.1 / 3.0, 1e-12)
    close(em.lambda_for_grade("B"), 1.0, 0.0)

    p = em.ProcessParams(0.2, 0.0, 0.25)
    cfg = em.PathConfig(10.0, 4000, seed=7, dt=1.0 / 50.0)
    rec = em.simulate_crossings(p, [1.0], cfg, "corporate")
    assert rec.n_paths == 4000
    curve = em.estimate_default_curve(rec, 1.0, [5.0, 10.0])
    exact = em.diffusion_first_passage_cdf(0.2, p.drift, 1.0, 10.0)
    assert abs(curve.p[1] - exact) <= max(3 * curve.se[1], 0.01 * exact), (curve.p, exact)

    # same seed, same record
    again = em.simulate_crossings(p, [1.0], cfg, "corporate")
    assert again.times_for(1.0) == rec.times_for(1.0)

    brazil = em.ProcessParams(0.32, 0.5, 0.25)
    food_bbb = em.ProcessParams(0.16, 0.25, 0.27)
    corp, country = em.simulate_pair_crossings(food_bbb, brazil, 0.8, [1.0], [1.0, 1.35], cfg)
    alone = em.spread_curve(corp.times_for(1.0), [1.0, 5.0])
    sentinel = em.basket_default_samples(corp, country, em.BasketSpec(1.0, math.inf))
    assert em.spread_curve(sentinel, [1.0, 5.0]) == alone
    ftd = em.spread_curve(em.basket_default_samples(corp, country, em.BasketSpec()), [1.0, 5.0])
    mftd = em.spread_curve(em.basket_default_samples(corp, country, em.BasketSpec(1.0, 1.35)), [1.0, 5.0])
    for s, m, f in zip(alone["spreads"], mftd["spreads"], ftd["spreads"]):
        assert s <= m <= f

    curves = em.em_corporate_curve(
        brazil,
        {"A": em.ProcessParams(0.18, 0.125, 0.27), "B": em.ProcessParams(0.15, 1.0, 0.27)},
        [1.0, 5.0],
        n_paths=4000,
        dt=1.0 / 50.0,
    )
    assert set(curves["grades"]) == {"A", "B"}
    assert curves["grades"]["A"]["em"]["spreads"][1] < curves["grades"]["B"]["em"]["spreads"][1]

    theta, params = 0.4, {"A": (math.log(0.008), math.log(0.004)), "BB": (math.log(0.03), math.log(0.015))}
    quotes = [(t, em.grade_spread(theta, params, g, t), g) for g in ("A", "BB") for t in (1, 3, 5, 10)]
    fit = em.fit_sector(quotes)
    assert max(abs(r) for r in fit["residuals"]) < 1e-6, fit
    close(fit["theta"], theta, 1e-6)

    try:
        em.ProcessParams(0.0, 0.5, 0.25)
    except ValueError:
        pass
    else:
        raise AssertionError("sigma = 0 accepted")

    print("pyemftd smoke test passed")


if __name__ == "__main__":
    main()
