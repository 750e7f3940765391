"""Smoke test for the Python bindings. Run after `maturin develop`."""

import os
import tempfile

import deephys


def main():
    ind, ood = deephys.Bundle.synthetic_pair("permuted", per_category=30, neurons=20, seed=3, thumbnails=True)
    assert ind.image_count == ood.image_count == 300
    assert ind.layers == [("penult", 20)]
    assert ood.thumbnail(0).startswith(b"\x89PNG")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ood.dphb")
        ood.save(path)
        assert deephys.Bundle.load(path) == ood
    assert deephys.Bundle.from_bytes(ood.to_bytes()) == ood

    try:
        deephys.Bundle.from_bytes(b"DPHB\x01\x00oops")
    except deephys.BundleFormatError as e:
        print("rejected corrupt bundle:", e)
    else:
        raise AssertionError("corrupt bundle accepted")

    session = deephys.Session(ind, [ood], "penult")
    assert session.dataset_ids == ["ind", "ood0"]
    top = session.top_k_images("ood0", 7, k=9)
    assert len(top) == 9 and all(a[1] >= b[1] for a, b in zip(top, top[1:]))

    view = session.image_top_neurons("ood0", 125, limit=3)
    assert view["companion_dataset"] == "ind" and len(view["neurons"]) == 3

    label = ood.labels[0]
    predicted = session.predictions("ood0")[0]
    assert set(session.images_of_category("ood0", label)) <= set(session.confusion_set("ood0", label, predicted))

    report = session.shift_report()
    spurious = sorted(s for _, s in session.spurious_scores())
    median = spurious[len(spurious) // 2]
    print(f"permuted: {len(report['spurious'])} spurious scores, median {median:.3f}, "
          f"{report['novelty_retained']} novel neurons")
    assert len(report["spurious_density"]) == 128

    same = deephys.Session(ind, [ind], "penult")
    assert same.novelty_scores() == [] and all(s == 0.0 for _, s in same.spurious_scores())

    try:
        session.top_k_images("ood0", 99)
    except deephys.AnalysisFailure as e:
        print("rejected bad neuron:", e)
    else:
        raise AssertionError("out-of-range neuron accepted")

    assert abs(deephys.spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12
    curve = deephys.density_curve([0.1, 0.2, 0.4, 0.8], points=32)
    assert len(curve) == 32
    print("python smoke test passed")


if __name__ == "__main__":
    main()
