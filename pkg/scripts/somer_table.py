"""Recompute SOMER for reference (fps, EPE, memory) rows and compare with their reported scores."""

from ncssd.metrics import somer

ROWS = [
    # name, fps, epe, memory_mb, reported somer, tolerance
    ("flow, model A", 42.93, 0.54, 196.20, 15.06, 0.02),
    ("flow, model B", 33.88, 2.25, 236.58, 2.75, 0.02),
    ("disparity, model A", 51.71, 0.31, 109.93, 35.36, 0.2),
]


def main():
    print(f"{'row':<22} {'fps':>7} {'epe':>6} {'mem':>8} {'somer':>8} {'reported':>9} {'diff':>7}")
    for name, fps, e, mem, ref, tol in ROWS:
        v = somer(fps, e, mem)
        flag = "" if abs(v - ref) <= tol else "  (outside tolerance)"
        print(f"{name:<22} {fps:>7.2f} {e:>6.2f} {mem:>8.2f} {v:>8.3f} {ref:>9.2f} {v - ref:>+7.3f}{flag}")


if __name__ == "__main__":
    main()
