"""Smoke test of the Python bindings: load, analyze, simulate, estimate, round-trip."""

import math
import os
import sys
import tempfile

import hawkes4d_py as hk

SPECS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "specs")


def main() -> int:
    spec = hk.Spec.load(os.path.join(SPECS, "mean_reverting.json"))
    report = spec.stability()
    assert report["stable"], report
    assert abs(report["margin"] - 0.15) < 1e-6, report

    trade, price = spec.mean_intensity()
    assert abs(trade - 1.0 / 3.0) < 2e-3 and abs(price - 1.0 / 6.0) < 2e-3, (trade, price)

    cov = spec.autocov(1.0, [0.0, 1.0, 2.0], "price")
    assert len(cov) == 3 and all(math.isfinite(v) for v in cov)
    sig = spec.signature_plot([1.0, 10.0, 100.0])
    assert sig[0] > sig[-1] > 0, sig

    times, values, permanent = spec.impact(10.0, 0.1, 100.0)
    assert len(times) == len(values) and permanent > 0
    _, response = spec.response(5.0)
    assert response[-1] > 0

    events = spec.simulate(20000.0, seed=1)
    counts = events.counts()
    rate = (counts[0] + counts[1]) / (2 * events.horizon)
    assert abs(rate - trade) < 0.05 * trade, (rate, trade)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "events.csv")
        events.write_csv(path)
        back = hk.Events.read_csv(path, events.horizon)
        assert back.components() == events.components()

    kernels = events.estimate(0.5, 20.0)
    assert len(kernels["T.self"]) == 40

    try:
        hk.Spec.load(os.path.join(SPECS, "does_not_exist.json"))
    except hk.HawkesError as e:
        assert "[io]" in str(e)
    else:
        raise AssertionError("missing spec accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
