"""Benchmark: compiled assembly kernels against the NumPy fallback.

Times the element-matrix batches (the hot assembly loops) and one full
saddle assembly on disk-cell meshes.  Run as:

    python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from thinperm.fem import ConstraintSpec, StokesDiscretization, StokesProblemData, assemble
from thinperm.geometry import CellGeometry, Disk
from thinperm.kernels import backends
from thinperm.meshing import build_cell_mesh


def time_call(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    impls = backends()
    print(f"available backends: {', '.join(impls)}")
    geom = CellGeometry(solid_shape=Disk(center=(0.5, 0.0), radius=0.25))

    for h in (1 / 32, 1 / 64):
        mesh = build_cell_mesh(geom, h)
        disc = StokesDiscretization(mesh, ConstraintSpec(periodic=True), gauge="none")
        print(f"\nh = 1/{round(1 / h)}: {mesh.n_triangles} triangles, {2 * disc.n2} velocity dofs")
        header = f"{'kernel':<24}" + "".join(f"{name:>12}" for name in impls)
        print(header)
        for kername in ("p2_sym_grad_stiffness", "p2_scalar_stiffness", "p2_p1_divergence"):
            row = f"{kername:<24}"
            ref = None
            for name, mod in impls.items():
                fn = getattr(mod, kername)
                t = time_call(fn, disc.inv_j, disc.det)
                row += f"{t * 1e3:>10.2f}ms"
                out = fn(disc.inv_j, disc.det)
                if ref is None:
                    ref = out
                else:
                    err = np.abs(out - ref).max()
                    assert err < 1e-12, f"{kername}: backends disagree by {err}"
            print(row)

        # end-to-end assembly timing (uses the selected backend only)
        t = time_call(lambda: assemble(
            StokesDiscretization(mesh, ConstraintSpec(periodic=True), gauge="none"),
            StokesProblemData(mu=1.0, f=(1.0, 0.0)),
        ), repeat=3)
        print(f"{'full assemble()':<24}{t * 1e3:>10.2f}ms  (selected backend)")

    print("\nbackends agree to 1e-12 on all kernels")


if __name__ == "__main__":
    main()
