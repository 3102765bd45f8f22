#!/usr/bin/env python3
"""Minimal protocol peer used by the sidecar client tests.

NER finds a fixed name list by str.find, so offsets are Python codepoint
indices. A few magic texts trigger misbehaviour.
"""
import json
import sys

NAMES = {"Alice": "PERSON", "Bob": "PERSON", "John": "PER", "张三": "PERSON", "北京": "GPE"}


def handle(req):
    op = req.get("op")
    if op == "health":
        return {"ok": True, "status": {"ner_model": "fake", "embed_model": "fake", "dim": 3}}
    if op == "embed":
        return {"ok": True, "vectors": [[float(len(t)), 1.0, 0.5] for t in req["texts"]], "dim": 3}
    if op != "ner":
        return {"ok": False, "error": "unknown op %r" % op}
    text = req["text"]
    if text == "__bad_offsets__":
        return {"ok": True, "spans": [{"start": 0, "end": 99, "type": "PERSON"},
                                      {"start": 2, "end": 5, "type": "PERSON", "surface": "xyz"}]}
    if text == "__missing_field__":
        return {"ok": True, "spans": [{"start": 0, "type": "PERSON"}]}
    spans = []
    for name, label in NAMES.items():
        pos = text.find(name)
        while pos >= 0:
            spans.append({"start": pos, "end": pos + len(name), "type": label,
                          "surface": name, "score": 0.97})
            pos = text.find(name, pos + 1)
    spans.sort(key=lambda s: s["start"])
    return {"ok": True, "spans": spans}


def serve_stdio():
    sys.stdin.reconfigure(encoding="utf-8")
    sys.stdout.reconfigure(encoding="utf-8")
    for line in sys.stdin:
        req = json.loads(line)
        if req.get("text") == "__garbage__":
            sys.stdout.write("this is not json\n")
        elif req.get("text") == "__die__":
            sys.exit(3)
        else:
            sys.stdout.write(json.dumps(handle(req), ensure_ascii=False) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    serve_stdio()
