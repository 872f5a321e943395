"""Optional plotting for the demos: figures are saved when matplotlib is installed."""

from pathlib import Path

OUTPUT = Path(__file__).resolve().parent / "output"

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # the demos still print their numbers
    plt = None


def save(fig, name: str) -> None:
    OUTPUT.mkdir(exist_ok=True)
    path = OUTPUT / f"{name}.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    print(f"figure written to {path}")
