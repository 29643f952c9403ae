"""Smoke test for the pyorientcorr extension.

Build first with `cargo build -p orientcorr-py --release`, then run
`python3 crates/py/python/smoke_test.py [path/to/libpyorientcorr.so]`.
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile
from fractions import Fraction

ROOT = pathlib.Path(__file__).resolve().parents[3]


def find_library():
    if len(sys.argv) > 1:
        return pathlib.Path(sys.argv[1])
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyorientcorr.so"
        if lib.exists():
            return lib
    sys.exit("libpyorientcorr.so not found; run cargo build -p orientcorr-py first")


def load(lib):
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / "pyorientcorr.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("pyorientcorr", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    oc = load(find_library())

    tri = oc.Graph("s a\na b\nb s\n")
    assert (tri.n, tri.m) == (3, 3)
    assert oc.probability(tri, "o", "reach:s->a") == Fraction(5, 8)

    path = oc.Graph("u v\nv w\n")
    law_o = oc.cluster_law(path, "o", "u")
    assert law_o == oc.cluster_law(path, "e:p=1/2", "u") == oc.recursive_law(path, "u", "1/2")
    assert law_o[("u",)] == Fraction(1, 2)
    assert sum(law_o.values()) == 1
    assert all(r["holds"] for r in oc.verify_lemma1(path, "u", "1/3"))
    assert all(r["holds"] for r in oc.verify_lemma2(path, "u", "w"))

    k4 = oc.Graph("vertices: a b s c\na s\na c\nb s\nb c\ns c\n")
    assert all(r["holds"] for r in oc.verify_corollaries(k4, "s", "a", "b", "c"))
    cov = oc.correlation(k4, "o", "in:s<-a", "reach:s->b")
    assert Fraction(cov["covariance"]) > 0

    assert oc.verify_oriented_harris(tri, "s", "reach:s->a", "reach:s->b")["holds"]
    assert oc.verify_oriented_vdbhk(tri, "s", "reach:s->a", "reach:s->a", ["b"], [])["holds"]
    assert oc.verify_harris(path, "1/3", "edges:0", "edges:0,1")["holds"]
    assert all(r["holds"] for r in oc.verify_mixed(path, "u", "1/3", "1/2"))

    edge = oc.Graph("x y\n")
    bunk = oc.bunkbed(edge, "x", "y")
    assert (bunk[0]["lhs"], bunk[0]["rhs"]) == ("9/16", "7/16")
    assert edge.bunkbed_product().m == 4

    signs = oc.search_signs(3, "a_in_in_cluster_t")
    assert signs and all(f["sign"] in ("positive", "negative") for f in signs)

    est = oc.estimate(tri, "o", "reach:s->a", 100_000, 42)
    assert abs(float(est["estimate"]) - 0.625) <= 3 * float(est["standard_error"])
    assert est == oc.estimate(tri, "o", "reach:s->a", 100_000, 42)

    try:
        oc.Graph("a a\n")
    except ValueError:
        pass
    else:
        raise AssertionError("self-loop accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
