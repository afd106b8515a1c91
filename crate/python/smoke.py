"""Smoke test for the Python bindings: build a tiny world, train, predict."""
import tempfile
from pathlib import Path

import synthstation_py as ss


def main():
    tmp = Path(tempfile.mkdtemp())
    world = tmp / "world"
    summary = ss.generate_world(str(world), seed=3, rows=6, cols=6, stations_per_class=1,
                                start="2017-01-01", end="2017-01-15")
    assert summary["n_measurements"] > 0

    cols = ss.feature_columns()
    assert len(cols) == 152

    inputs = ss.Inputs.load(str(world))
    assert len(inputs.station_ids) == 6
    x, y, ids = inputs.labeled_rows("NO2")
    assert len(x) == len(y) == len(ids) == inputs.n_measurements

    model = ss.Model.fit(x, y, x, y, num_leaves=8, max_trees=40)
    pred = model.predict(x[:100])
    assert all(p >= 0 for p in pred)
    r2 = ss.r_squared(model.predict(x), y)
    print(f"train r2 {r2:.3f} with {model.n_trees} trees")
    assert r2 > 0.5

    model.save(str(tmp / "m.model"))
    again = ss.Model.load(str(tmp / "m.model"))
    assert again.predict(x[:100]) == pred

    cells, times, values = ss.predict_grid(inputs, model, "2017-01-02", "2017-01-03", workers=2)
    assert len(values) == len(cells) * len(times) == 36 * 24

    series = ss.fill_gaps(inputs, model, inputs.station_ids[0], "2017-01-01", "2017-01-03")
    assert len(series) == 48

    try:
        ss.predict_grid(inputs, model, "2019-01-01", "2019-01-02")
        raise AssertionError("expected a data gap")
    except ss.DataGapError:
        pass

    assert ss.peak_distance_pct(100.0, 50.0) == 50.0
    assert ss.exceedance_count([11.0] * 8760, 10.0) == 8760
    print("ok")


if __name__ == "__main__":
    main()
