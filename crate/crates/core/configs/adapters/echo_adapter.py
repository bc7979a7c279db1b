"""Reference adapter: reads one generation request per line on stdin and
writes one annotated image set as a JSON line on stdout.

Images follow the requested constraints; every other attribute takes the
first listed value of its axis. Replace `annotate` with calls into a real
generator and VQA model.
"""
import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
AXES_FILE = os.path.join(HERE, "..", "..", "data", "occupation_axes.json")


def load_first_values():
    with open(AXES_FILE) as f:
        axes = json.load(f)["axes"]
    return {a["name"]: a["values"][0] for a in axes}


def annotate(request, defaults):
    attrs = dict(defaults)
    for c in request["intervention"]:
        attrs[c["axis"]] = c["value"]
    label = request["intervention"][0] if len(request["intervention"]) == 1 else None
    return {
        "prompt": request["prompt"],
        "intervention": label,
        "images": [{"attrs": attrs} for _ in range(request["n"])],
    }


def main():
    defaults = load_first_values()
    request = json.loads(sys.stdin.readline())
    sys.stdout.write(json.dumps(annotate(request, defaults)) + "\n")


if __name__ == "__main__":
    main()
