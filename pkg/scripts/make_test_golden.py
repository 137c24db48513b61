"""Record golden vectors for the block-level network tests.

Run once after a verified build; tests/test_network.py recomputes each output
and compares at 1e-12.  Usage: python3 scripts/make_test_golden.py
"""

from pathlib import Path

import numpy as np

from isnrestore.network import dmum, ep_block, mum, random_model, sub

OUT = Path(__file__).resolve().parents[1] / "tests" / "golden" / "blocks.npz"


def compute():
    model = random_model(n=1, channels=8, seed=21)
    rng = np.random.default_rng(22)
    x = rng.standard_normal((1, 8, 8, 8))
    i_new, d_feat, lam = (rng.standard_normal((8, 8, 8)) for _ in range(3))
    a_prev, b_prev = rng.standard_normal((8, 8, 8)), rng.standard_normal((8, 8, 8))
    blk = sub(model.params, "blocks.0")
    a_new, b_new = dmum(i_new, a_prev, b_prev, d_feat, sub(blk, "dmum"))
    return {
        "x": x, "i_new": i_new, "d_feat": d_feat, "lam": lam, "a_prev": a_prev, "b_prev": b_prev,
        "ep_out": ep_block(x, sub(model.params, "init.ep")),
        "dmum_a": a_new, "dmum_b": b_new,
        "mum_out": mum(lam, i_new, sub(blk, "mum")),
    }


if __name__ == "__main__":
    OUT.parent.mkdir(parents=True, exist_ok=True)
    np.savez(OUT, **compute())
    print(f"wrote {OUT}")
