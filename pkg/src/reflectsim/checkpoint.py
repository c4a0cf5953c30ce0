"""Plain-text trainer checkpoints (``reflectsim-ckpt v1``).

Every float is written with :func:`repr`, which round-trips exactly, so a
saved and reloaded trainer produces bit-identical outputs. The layout is
documented line by line in ``docs/formats.md``.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import IncompatibleCheckpoint
from .marl import PPOHyper, RunningNorm, Trainer
from .neural import AdamState, DenseNet

HEADER = "reflectsim-ckpt v1"


def _floats(arr) -> str:
    return " ".join(map(repr, np.asarray(arr, dtype=float).ravel().tolist()))


def _net_lines(name: str, net: DenseNet) -> list[str]:
    lines = [f"net {name} " + " ".join(map(str, net.dims))]
    for w, b in zip(net.weights, net.biases):
        lines += [_floats(w), _floats(b)]
    return lines


def _adam_lines(name: str, state: AdamState) -> list[str]:
    return [f"adam {name} {state.t} {len(state.m)}"] + [_floats(a) for a in state.m + state.v]


def dumps(trainer: Trainer) -> str:
    meta = {
        "algo": trainer.algo, "seed": trainer.seed, "episodes_done": trainer.episodes_done,
        "n_agents": trainer.n_agents, "obs_dim": trainer.obs_dim, "act_dim": trainer.act_dim,
        "state_dim": trainer.state_dim, "delta_max": trainer.delta_max,
        "hidden": trainer.actors[0].dims[1:-1],
    }
    lines = [HEADER, "meta " + json.dumps(meta, sort_keys=True),
             "hyper " + json.dumps(asdict(trainer.hyper), sort_keys=True)]
    for l, (actor, head) in enumerate(zip(trainer.actors, trainer.heads)):
        lines += _net_lines(f"actor.{l}", actor)
        lines.append(f"log_std actor.{l} " + _floats(head.log_std))
    lines += _net_lines("critic", trainer.critic)
    vn = trainer.value_norm
    lines.append("value_norm " + _floats([vn.mean, vn.var, vn.count]))
    for l, opt in enumerate(trainer.actor_opt):
        lines += _adam_lines(f"actor.{l}", opt)
    lines += _adam_lines("critic", trainer.critic_opt)
    lines.append("rng " + json.dumps(trainer.rng.bit_generator.state, sort_keys=True))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save(trainer: Trainer, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(trainer))
    tmp.replace(path)
    return path


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.i = 0

    def next(self) -> str:
        if self.i >= len(self.lines):
            raise IncompatibleCheckpoint("checkpoint ends early")
        self.i += 1
        return self.lines[self.i - 1]

    def tagged(self, tag: str) -> list[str]:
        parts = self.next().split(" ", 1)
        if parts[0] != tag:
            raise IncompatibleCheckpoint(f"expected {tag!r} at line {self.i}, found {parts[0]!r}")
        return parts[1].split(" ", 1) if len(parts) > 1 else []

    def floats(self, shape) -> np.ndarray:
        arr = np.array(self.next().split(), dtype=float)
        if arr.size != int(np.prod(shape)):
            raise IncompatibleCheckpoint(f"line {self.i}: expected {int(np.prod(shape))} values")
        return arr.reshape(shape)


def _read_net(r: _Lines, name: str, net: DenseNet):
    tag = r.tagged("net")
    dims = [int(d) for d in tag[1].split()] if len(tag) > 1 else []
    if tag[0] != name or dims != net.dims:
        raise IncompatibleCheckpoint(f"network {tag[0]} {dims} does not match {name} {net.dims}")
    for w, b in zip(net.weights, net.biases):
        w[...] = r.floats(w.shape)
        b[...] = r.floats(b.shape)
    net.touch()


def _read_adam(r: _Lines, name: str, state: AdamState):
    tag = r.tagged("adam")
    fields = tag[1].split() if len(tag) > 1 else []
    if tag[0] != name or len(fields) != 2 or int(fields[1]) != len(state.m):
        raise IncompatibleCheckpoint(f"optimizer block {tag} does not match {name}")
    state.t = int(fields[0])
    for a in state.m + state.v:
        a[...] = r.floats(a.shape)


def loads(text: str) -> Trainer:
    r = _Lines(text)
    if r.next() != HEADER:
        raise IncompatibleCheckpoint(f"not a {HEADER} file")
    try:
        meta = json.loads(" ".join(r.tagged("meta")))
        hyper = PPOHyper(**json.loads(" ".join(r.tagged("hyper"))))
        trainer = Trainer(meta["n_agents"], meta["obs_dim"], meta["act_dim"], meta["state_dim"],
                          hyper, meta["seed"], meta["delta_max"], meta["algo"],
                          tuple(meta["hidden"]))
        trainer.episodes_done = meta["episodes_done"]
        for l, (actor, head) in enumerate(zip(trainer.actors, trainer.heads)):
            _read_net(r, f"actor.{l}", actor)
            tag = r.tagged("log_std")
            if tag[0] != f"actor.{l}":
                raise IncompatibleCheckpoint(f"log_std block {tag[0]} out of order")
            head.log_std[...] = np.array(tag[1].split(), dtype=float)
        _read_net(r, "critic", trainer.critic)
        mean, var, cnt = np.array(" ".join(r.tagged("value_norm")).split(), dtype=float)
        trainer.value_norm = RunningNorm(mean, var, cnt)
        for l, opt in enumerate(trainer.actor_opt):
            _read_adam(r, f"actor.{l}", opt)
        _read_adam(r, "critic", trainer.critic_opt)
        trainer.rng.bit_generator.state = json.loads(" ".join(r.tagged("rng")))
        if r.next() != "end":
            raise IncompatibleCheckpoint("missing end marker")
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise IncompatibleCheckpoint(f"malformed checkpoint: {exc}") from exc
    return trainer


def load(path) -> Trainer:
    path = Path(path)
    if not path.exists():
        raise IncompatibleCheckpoint(f"checkpoint {path} does not exist")
    return loads(path.read_text())
