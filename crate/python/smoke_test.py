"""Smoke test for the thermoflux Python extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/thermoflux-*.whl
"""

import json
import math

import thermoflux as tf


def main():
    limit = math.log1p(math.exp(-1.0))
    assert abs(tf.free_energy("ground") - limit) < 1e-12

    dims = tf.schur_dimensions(3, 2)
    assert [(d[1], d[2]) for d in dims] == [(4, 1), (2, 2)], dims

    p = tf.pinch("plus", 3)
    assert p["projector_count"] == 6
    assert p["loss_nats"] <= p["bound_nats"]

    out = tf.extract("classical", 400)
    assert abs(out["rate_nats"] - 0.24) < 1e-12
    assert out["rate_nats"] <= limit
    assert out["xi"] <= 0.05

    try:
        tf.extract("classical", 10, state="nonsense")
    except ValueError as e:
        assert "unknown state" in str(e)
    else:
        raise AssertionError("bad state accepted")

    cfg = {"mode": "classical", "state": "thermal", "levels": "0,1", "beta": 1.0, "n_grid": [20, 40], "seeds": [0, 1]}
    a = tf.sweep(json.dumps(cfg))
    b = tf.sweep(json.dumps(cfg))
    assert a["csv"] == b["csv"]
    assert all(r["rate_nats"] == 0.0 for r in a["rows"])

    h = tf.haar(qubits=3, samples=2000, seed=11)
    assert h["target"] == 1.5 and h["pass"]

    curve = tf.truncation_success(4.0, [10**6])
    assert curve["rows"][0]["success"] >= 0.999

    report = tf.acceptance(only=["pinching"])
    assert [r["id"] for r in report["results"]] == [1, 2, 3, 4]
    assert report["all_passed"]

    print(f"thermoflux {tf.__version__}: smoke test ok")


if __name__ == "__main__":
    main()
