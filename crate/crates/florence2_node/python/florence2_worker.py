#!/usr/bin/env python3
"""Florence-2 inference worker.

Speaks line-delimited JSON on stdin/stdout. One `load` request prepares the
model; `infer` requests then run blocking generation; `shutdown` exits.
Errors are reported in-band as {"ok": false, "error_kind": ..., "message": ...}
with error_kind in {model_not_found, oom, inference_failure, bad_request}.

The heavy lifting is delegated to torch + transformers; this file only owns
protocol handling and normalization of the upstream parser output into the
bridge's result schema.
"""

import base64
import json
import sys
import time


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def fail(kind, message):
    reply({"ok": False, "error_kind": kind, "message": str(message)})


def classify_load_error(exc):
    text = str(exc).lower()
    if "out of memory" in text:
        return "oom"
    markers = (
        "not found", "no such file", "does not exist", "cannot find",
        "offline", "couldn't connect", "local_files_only", "is not a local folder",
        "name or service not known", "404",
    )
    if any(m in text for m in markers):
        return "model_not_found"
    return "model_not_found" if isinstance(exc, (FileNotFoundError, OSError)) else "inference_failure"


class Worker:
    def __init__(self):
        self.model = None
        self.processor = None
        self.device = "cpu"
        self.dtype = None
        self.generation = {}
        self.label = ""

    def handle_load(self, req):
        import os

        cache_root = req.get("cache_root")
        if cache_root:
            os.environ["HF_HOME"] = cache_root
        allow_fetch = bool(req.get("allow_fetch", False))
        if not allow_fetch:
            os.environ.setdefault("HF_HUB_OFFLINE", "1")

        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoProcessor
        except Exception as exc:  # noqa: BLE001
            fail("inference_failure", f"runtime import failed: {exc}")
            return

        model_id = req["model_id"]
        revision = req.get("revision") or "main"
        self.device = req.get("device", "cpu")
        precision = req.get("precision", "full")
        self.generation = req.get("generation", {})
        self.dtype = torch.float16 if (precision == "reduced" and self.device.startswith("cuda")) else torch.float32

        try:
            kwargs = {
                "trust_remote_code": True,
                "revision": revision,
                "local_files_only": not allow_fetch,
            }
            self.processor = AutoProcessor.from_pretrained(model_id, **kwargs)
            self.model = AutoModelForCausalLM.from_pretrained(
                model_id, torch_dtype=self.dtype, **kwargs
            ).to(self.device)
            self.model.eval()
        except Exception as exc:  # noqa: BLE001
            fail(classify_load_error(exc), exc)
            return

        self.label = f"{model_id}@{revision}"
        runtime = {
            "python": sys.version.split()[0],
            "torch": torch.__version__,
            "device": self.device,
            "precision": precision,
        }
        if self.device.startswith("cuda") and torch.cuda.is_available():
            runtime["cuda"] = torch.version.cuda or ""
            runtime["gpu_name"] = torch.cuda.get_device_name(0)
        try:
            import transformers

            runtime["transformers"] = transformers.__version__
        except Exception:  # noqa: BLE001
            pass
        reply({"ok": True, "event": "ready", "model": self.label, "runtime": runtime})

    def handle_infer(self, req):
        if self.model is None:
            fail("bad_request", "infer before load")
            return
        import torch
        from PIL import Image

        try:
            width = int(req["width"])
            height = int(req["height"])
            fmt = req.get("format", "rgb8")
            raw = base64.b64decode(req["data_b64"])
            mode = "RGB" if fmt == "rgb8" else "L"
            image = Image.frombytes(mode, (width, height), raw)
            if mode != "RGB":
                image = image.convert("RGB")
            prompt = req["prompt"]
            task_token = req["task_token"]
            kind = req["output_kind"]
        except Exception as exc:  # noqa: BLE001
            fail("bad_request", f"malformed infer request: {exc}")
            return

        try:
            started = time.perf_counter()
            inputs = self.processor(text=prompt, images=image, return_tensors="pt")
            pixel_values = inputs["pixel_values"].to(self.device)
            if self.dtype is not None:
                pixel_values = pixel_values.to(self.dtype)
            with torch.no_grad():
                generated = self.model.generate(
                    input_ids=inputs["input_ids"].to(self.device),
                    pixel_values=pixel_values,
                    max_new_tokens=int(self.generation.get("max_new_tokens", 1024)),
                    num_beams=int(self.generation.get("num_beams", 3)),
                    do_sample=bool(self.generation.get("sampling_enabled", False)),
                )
            raw_text = self.processor.batch_decode(generated, skip_special_tokens=False)[0]
            parsed = self.processor.post_process_generation(
                raw_text, task=task_token, image_size=(width, height)
            )
            elapsed = time.perf_counter() - started
        except torch.cuda.OutOfMemoryError as exc:
            fail("oom", exc)
            return
        except Exception as exc:  # noqa: BLE001
            fail("inference_failure", exc)
            return

        value = parsed.get(task_token, parsed)
        try:
            output = normalize_output(kind, value)
        except Exception as exc:  # noqa: BLE001
            fail("inference_failure", f"could not map parser output: {exc}")
            return
        reply({
            "ok": True,
            "raw_text": raw_text,
            "output": output,
            "inference_time_s": elapsed,
        })


def _flat_polygons(polys, labels):
    """Upstream groups polygons per instance; flatten to one label per polygon."""
    out_polys, out_labels = [], []
    for instance, label in zip(polys, labels or [""] * len(polys)):
        group = instance
        if group and isinstance(group[0], (int, float)):
            group = [group]
        for poly in group:
            flat = list(map(float, poly))
            out_polys.append(flat)
            out_labels.append(str(label))
    return out_polys, out_labels


def normalize_output(kind, value):
    if kind == "text":
        return {"text": value if isinstance(value, str) else str(value)}
    if kind == "boxes_labels":
        bboxes = value.get("bboxes", [])
        labels = value.get("labels", value.get("bboxes_labels", []))
        return {
            "bboxes": [[float(c) for c in b] for b in bboxes],
            "labels": [str(l) for l in labels],
        }
    if kind == "quad_boxes_text":
        return {
            "quad_boxes": [[float(c) for c in q] for q in value.get("quad_boxes", [])],
            "labels": [str(l) for l in value.get("labels", [])],
        }
    if kind == "polygons_labels":
        polys, labels = _flat_polygons(value.get("polygons", []), value.get("labels", []))
        return {"polygons": polys, "labels": labels}
    if kind == "region_text_pairs":
        bboxes = value.get("bboxes", [])
        texts = value.get("texts", value.get("labels", []))
        return {
            "bboxes": [[float(c) for c in b] for b in bboxes],
            "texts": [str(t) for t in texts],
        }
    raise ValueError(f"unknown output kind {kind!r}")


def main():
    worker = Worker()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            fail("bad_request", f"bad JSON: {exc}")
            continue
        op = req.get("op")
        if op == "load":
            worker.handle_load(req)
        elif op == "infer":
            worker.handle_infer(req)
        elif op == "shutdown":
            reply({"ok": True, "event": "bye"})
            return
        else:
            fail("bad_request", f"unknown op {op!r}")


if __name__ == "__main__":
    main()
