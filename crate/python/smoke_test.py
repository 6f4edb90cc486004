"""Smoke test of the Python bindings on a coarse mesh.

Build the extension first, e.g. `pip install --no-build-isolation -e crates/py`.
"""

import math
import tempfile

import thermocloak_py as tc

MU = (3.5, 1e4, 0.0)


def main():
    pb = tc.Problem("annulus", h=0.05)
    nz, nq, nu = pb.dims
    assert nq < nz and nu > 0
    assert len(pb.nodes()) > nq

    s = pb.solve_steady(MU)
    assert len(s["q"]) == nq and len(s["u"]) == nu
    assert 0.9 < s["efficiency"] <= 1.0, s["efficiency"]
    print(f"steady: {nz} nodes, efficiency {s['efficiency']:.4f}, J {s['cost']:.4e}")

    t = pb.solve_transient(MU, steps=20, conjugate=True, max_iter=200)
    assert t["converged"]
    assert len(t["q"]) == 21
    print(f"transient: {t['iterations']} iterations, J {t['cost']:.4e}")

    samples = tc.lhs(8, seed=1)
    assert len(samples) == 8

    rom = tc.ReducedModel.build(pb, n_s=8, eps=1e-10, seed=1, adjoint_scale="balanced")
    err = rom.steady_error(pb, MU)
    assert err < 1e-2, err
    r = rom.solve_steady(MU)
    assert math.isfinite(r["cost"])
    with tempfile.TemporaryDirectory() as d:
        rom.save(d)
        again = tc.ReducedModel.load(pb, d)
        assert again.dims == rom.dims
    print(f"rom: dims {rom.dims}, held-out steady error {err:.2e}")

    try:
        tc.Problem("hexagon")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown layout accepted")
    print("ok")


if __name__ == "__main__":
    main()
