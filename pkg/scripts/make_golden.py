"""Regenerate the golden files used by the unfolded_forward verify suite.

Run only after an intentional change to the network; the suite exists to catch
unintentional ones.

    python scripts/make_golden.py [--out DIR]
"""

import argparse
import hashlib
import json
from pathlib import Path

import numpy as np

from isnrestore.imaging import save_ppm
from isnrestore.network import forward, restore_residual, seed_model
from isnrestore.verify import GOLDEN_BLOCKS, GOLDEN_CHANNELS, GOLDEN_DIR, GOLDEN_SEED, golden_input
from isnrestore.weights import encode_tensors


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(GOLDEN_DIR))
    out = Path(parser.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)

    model = seed_model(GOLDEN_BLOCKS, GOLDEN_CHANNELS, GOLDEN_SEED)
    image = golden_input()
    save_ppm(image, out / "forward_input.ppm")
    residual = restore_residual(model, image.pixels)
    restored = forward(model, image)
    np.save(out / "forward_residual.npy", residual)
    np.save(out / "forward_output.npy", restored.pixels)

    files = ("forward_input.ppm", "forward_residual.npy", "forward_output.npy")
    manifest = {
        "seed": GOLDEN_SEED,
        "blocks": GOLDEN_BLOCKS,
        "channels": GOLDEN_CHANNELS,
        "parameter_count": model.parameter_count(),
        "weights_sha256": hashlib.sha256(encode_tensors(model.params)).hexdigest(),
        "output_sha256": hashlib.sha256(np.ascontiguousarray(restored.pixels).tobytes()).hexdigest(),
        "files": {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest, indent=2))


if __name__ == "__main__":
    main()
