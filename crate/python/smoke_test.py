"""Smoke test for the pyjico extension module.

Usage: python3 python/smoke_test.py [path/to/libpyjico.so]

Without an argument the debug and release build directories are searched.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import random
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    if len(sys.argv) > 1:
        candidates = [pathlib.Path(sys.argv[1])]
    else:
        candidates = [ROOT / "target" / profile / "libpyjico.so" for profile in ("release", "debug")]
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("pyjico", str(path))
            spec = importlib.util.spec_from_file_location("pyjico", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("libpyjico.so not found; run `cargo build -p pyjico` first")


def make_groups(rng):
    groups = []
    for label, n in (("north", 30), ("south", 24)):
        rows = [[rng.gauss(0, 1) for _ in range(8)] for _ in range(n)]
        y = [r[0] - 0.5 * r[3] + 0.1 * rng.gauss(0, 1) for r in rows]
        groups.append((label, rows, y))
    return groups


def main():
    jico = load_extension()
    rng = random.Random(7)
    groups = make_groups(rng)
    data = jico.Dataset(groups)
    assert data.labels == ["north", "south"] and data.p == 8

    model = jico.fit(data, 1, [1, 1], a=0.5)
    assert model.converged, model
    fitted = model.predict(groups[0][1], "north")
    mse = sum((f - y) ** 2 for f, y in zip(fitted, groups[0][2])) / len(fitted)
    assert mse < 0.5, mse

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "model.json"
        model.save(path)
        again = jico.Model.load(path)
        assert again.predict(groups[1][1], "south") == model.predict(groups[1][1], "south")

    parts = model.decompose(data)
    assert [p["group"] for p in parts] == ["north", "south"]
    assert len(parts[0]["joint"]) == 30 and len(parts[0]["joint"][0]) == 8

    weights = jico.cr_directions(groups[0][1], groups[0][2], 1.0, 2)
    assert len(weights) == 2
    assert all(abs(math.sqrt(sum(v * v for v in w)) - 1.0) < 1e-10 for w in weights)

    cv = jico.cross_validate(data, seed=3, max_joint_rank=1, max_individual_rank=1, a_grid=[0.0, 0.5, 1.0], folds=3)
    assert len(cv["cells"]) == 12, len(cv["cells"])

    try:
        model.predict(groups[0][1], "west")
    except jico.JicoError as e:
        assert "west" in str(e)
    else:
        raise AssertionError("unknown group accepted")

    try:
        jico.Dataset([("a", [[1.0, 2.0], [3.0]], [1.0, 2.0])])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged rows accepted")

    print("pyjico smoke test passed:", model)


if __name__ == "__main__":
    main()
