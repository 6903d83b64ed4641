"""Regenerate the bundled 8-region demo connectome (deterministic)."""
from pathlib import Path

from neuroloom.connectome import random_connectome, save_connectome

HERE = Path(__file__).parent


def make_demo(path=HERE / "demo_connectome.zip"):
    c = random_connectome(8, density=0.6, seed=2021, max_weight=1.0, max_length=60.0,
                          symmetric=True)
    save_connectome(c, path)
    return path


if __name__ == "__main__":
    print(make_demo())
