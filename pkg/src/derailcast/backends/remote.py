"""Line-delimited JSON adapter for external model servers.

Requests::

    {"op": "generate", "prompt": str, "params": {...}, "seed": int}
    {"op": "predict", "text": str}

Responses are ``{"text": str}`` or ``{"proba": float}``; a server may answer
``{"error": str}`` instead. One request is in flight per channel.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
from typing import IO, Any

from derailcast.backends.base import (
    AnnotationBackend,
    Capabilities,
    ClassifierBackend,
    GeneratorBackend,
    TrainingReport,
)
from derailcast.backends.params import GenerationParams
from derailcast.errors import BackendError, TrainingError, TransportError


class JsonLinesChannel:
    def __init__(self, reader: IO[str], writer: IO[str], closer=None):
        self._reader = reader
        self._writer = writer
        self._closer = closer
        self._lock = threading.Lock()

    @classmethod
    def spawn(cls, command: str | list[str]) -> "JsonLinesChannel":
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot start backend process {argv!r}: {exc}") from exc

        def close():
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=10)

        return cls(proc.stdout, proc.stdin, close)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 60.0) -> "JsonLinesChannel":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot reach backend at {host}:{port}: {exc}") from exc
        stream = sock.makefile("rw", encoding="utf-8", newline="\n")

        def close():
            stream.close()
            sock.close()

        return cls(stream, stream, close)

    def request(self, payload: dict[str, Any]) -> dict[str, Any]:
        line = json.dumps(payload, ensure_ascii=False)
        with self._lock:
            try:
                self._writer.write(line + "\n")
                self._writer.flush()
                reply = self._reader.readline()
            except (OSError, ValueError) as exc:
                raise TransportError(f"backend connection failed: {exc}") from exc
        if not reply:
            raise TransportError("backend closed the connection")
        try:
            data = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise BackendError(f"backend sent malformed JSON: {reply[:200]!r}") from exc
        if "error" in data:
            raise BackendError(f"backend error: {data['error']}")
        return data

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None


class RemoteGenerator(GeneratorBackend):
    capabilities = Capabilities(trainable=False, deterministic_given_seed=True)

    def __init__(self, channel: JsonLinesChannel, context_limit: int | None = None):
        self.channel = channel
        self.context_limit = context_limit

    def generate(self, prompt: str, params: GenerationParams, seed: int) -> str:
        reply = self.channel.request(
            {"op": "generate", "prompt": prompt, "params": params.to_dict(), "seed": seed}
        )
        if "text" not in reply:
            raise BackendError(f"generate reply lacks 'text': {reply!r}")
        return reply["text"]


class RemoteClassifier(ClassifierBackend):
    def __init__(self, channel: JsonLinesChannel, max_tokens: int | None = None):
        self.channel = channel
        self.max_tokens = max_tokens

    @property
    def is_trained(self) -> bool:
        return True

    def fit(self, texts, labels) -> TrainingReport:
        raise TrainingError("remote classifiers are trained out of process")

    def predict_proba(self, text: str) -> float:
        reply = self.channel.request({"op": "predict", "text": text})
        try:
            proba = float(reply["proba"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"predict reply lacks a numeric 'proba': {reply!r}") from exc
        if not 0.0 <= proba <= 1.0:
            raise BackendError(f"backend returned probability {proba} outside [0, 1]")
        return proba


class RemoteAnnotator(AnnotationBackend):
    """Annotation rides on the generate op with a fixed seed."""

    def __init__(self, channel: JsonLinesChannel, params: GenerationParams | None = None, seed: int = 0):
        self.channel = channel
        self.params = params or GenerationParams(temperature=1.0, top_p=1.0, repetition_penalty=1.0)
        self.seed = seed

    def complete(self, prompt: str) -> str:
        reply = self.channel.request(
            {"op": "generate", "prompt": prompt, "params": self.params.to_dict(), "seed": self.seed}
        )
        return reply.get("text", "")


def serve(
    instream: IO[str],
    outstream: IO[str],
    generator: GeneratorBackend | None = None,
    classifier: ClassifierBackend | None = None,
) -> None:
    """Reference server loop: answer requests until EOF."""
    for line in instream:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "generate" and generator is not None:
                params = GenerationParams.from_dict(req.get("params") or {})
                reply = {"text": generator.generate(req["prompt"], params, int(req.get("seed", 0)))}
            elif op == "predict" and classifier is not None:
                reply = {"proba": classifier.predict_proba(req["text"])}
            else:
                reply = {"error": f"unsupported op {op!r}"}
        except Exception as exc:  # reported to the client, never fatal to the loop
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        outstream.write(json.dumps(reply, ensure_ascii=False) + "\n")
        outstream.flush()
