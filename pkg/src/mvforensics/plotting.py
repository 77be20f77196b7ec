"""SVG plots with the numeric table embedded as machine-readable metadata."""

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def line_plot_svg(path, x_values, series: dict, title="", xlabel="", ylabel="",
                  xticklabels=None, metadata=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in series.items():
        ax.plot(x_values, ys, marker="o", label=name)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if xticklabels is not None:
        ax.set_xticks(list(x_values))
        ax.set_xticklabels(xticklabels)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    if metadata is not None:
        _embed_metadata(path, metadata)
    return path


def _embed_metadata(path, metadata):
    with open(path) as fh:
        text = fh.read()
    payload = json.dumps(metadata)
    # valid SVG: a <metadata> element right after the opening <svg ...> tag
    anchor = text.index("<svg")
    end = text.index(">", anchor) + 1
    injected = f'{text[:end]}\n <metadata id="plot-data">{payload}</metadata>{text[end:]}'
    with open(path, "w") as fh:
        fh.write(injected)


def read_svg_metadata(path):
    with open(path) as fh:
        text = fh.read()
    start = text.index('<metadata id="plot-data">') + len('<metadata id="plot-data">')
    end = text.index("</metadata>", start)
    return json.loads(text[start:end])
