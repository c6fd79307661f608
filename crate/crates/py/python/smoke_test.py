"""Smoke test for the compiled `srgm` extension.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`
or `pip install crates/py`, then run `python crates/py/python/smoke_test.py`.
"""

import math

import srgm


def go_times(a, b, n):
    # i-th failure where a(1 - exp(-b t)) = i
    return [-math.log(1.0 - i / a) / b for i in range(1, n + 1)]


def main():
    assert srgm.models() == ["DU", "GO", "GOS", "HD", "LL", "MO", "WE", "YE", "YR"]
    assert srgm.describe("LL")["shape"] == "S-Shaped"

    m = srgm.mean_value("GO", [100.0, 0.1], 5.0)
    assert abs(m - 100.0 * (1.0 - math.exp(-0.5))) < 1e-12
    g = srgm.gradient("GO", [100.0, 0.1], 5.0)
    assert len(g) == 2 and abs(g[0] - m / 100.0) < 1e-12

    times = go_times(500.0, 0.05, 200)
    fit = srgm.fit("GO", times, budget=20_000)
    assert fit.converged and fit.r2 > 0.9999, fit
    assert all(abs(p - q) / q < 1e-3 for p, q in zip(fit.params, [500.0, 0.05]))
    assert len(fit.predict([1.0, 2.0])) == 2

    fits = srgm.fit_all(times[:60], models=["GO", "LL", "WE"], budget=2_000)
    assert set(fits) == {"GO", "LL", "WE"}
    assert srgm.fit_all([1.0, 2.0, 3.0], models=["HD"])["HD"].startswith("insufficient")

    assert srgm.laplace([1.0, 2.0, 3.0], 4.0)["u"] == 0.0
    assert abs(srgm.laplace([0.5, 1.0, 1.5], 4.0)["u"] + 1.5) < 1e-12

    h, p = srgm.kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    assert abs(h - 27 / 7) < 1e-9 and abs(p - 0.0495) < 5e-4
    eta, label = srgm.eta_squared(h, 2, 6)
    assert label == "large" and abs(eta - 0.714286) < 1e-6
    cmp = srgm.compare_groups(["a", "b"], [[1, 2, 3], [4, 5, 6]])
    assert cmp["dunn"][0][1] == cmp["dunn"][1][0]

    ranked = srgm.rank_models(
        [("S", "GO", 0.9), ("S", "LL", 0.95), ("L", "GO", 0.8), ("L", "LL", 0.7)]
    )
    assert ranked["segments"] == ["S", "L"] and ranked["ira_percent"] == 0.0

    assert srgm.classify_attribute("LOC", 10_000) == "M"
    assert srgm.classify_attribute("LOC", 100_001) == "L"

    doc = '[{"id": 1, "created_at": "2021-01-01T00:00:00Z", "labels": ["bug"]},' \
          ' {"id": 2, "created_at": "2021-01-03T12:00:00Z", "labels": [{"name": "Bug"}]},' \
          ' {"id": 3, "created_at": "2021-01-04T00:00:00Z", "labels": ["feature"]},' \
          ' {"id": 4}]'
    times, kept, skipped = srgm.defect_times(doc)
    assert (kept, skipped) == (2, 1) and abs(times[1] - 2.5) < 1e-12

    try:
        srgm.mean_value("XX", [1.0], 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model accepted")

    print("srgm", srgm.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
