"""Experiment configuration files.

The format is INI as read by :mod:`configparser`. Vectors are comma
separated and vector lists use ``;`` between entries. Repeated objects use
dotted section names (``[wall.<name>]``, ``[cylinder.<name>]``,
``[material.<name>]``). ``docs/formats.md`` lists every key.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import BaselineKind
from .environment import EnvConfig
from .errors import InvalidConfiguration
from .geometry import AngleLimits, ArrayLayout, BasePlane, hex_layout
from .marl import PPOHyper
from .propagation import Box, Cylinder, Material, RadiationModel, Scene, Wall

PROFILES = {"desk": 300, "full": 3000}


def _vec(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def _vecs(text: str) -> np.ndarray:
    return np.stack([_vec(part) for part in text.split(";") if part.strip()])


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


@dataclass(frozen=True)
class ArrayParams:
    rows: int
    cols: int
    pitch: float
    plane: BasePlane
    segments: int

    def build(self) -> ArrayLayout:
        return hex_layout(self.rows, self.cols, self.pitch, self.plane, self.segments)


@dataclass
class ExperimentConfig:
    scene: Scene
    array: ArrayParams
    limits: AngleLimits
    radiation: RadiationModel
    env: EnvConfig
    eval_length: int
    noise_sigmas: tuple
    ppo: PPOHyper
    algo: BaselineKind
    seeds: tuple
    profile: str
    out_dir: Path
    source_text: str = ""
    source_path: Path | None = None
    overrides: dict = field(default_factory=dict)

    def layout(self) -> ArrayLayout:
        return self.array.build()

    @property
    def content_hash(self) -> str:
        blob = self.source_text + repr(sorted(self.overrides.items()))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with ``episodes``, ``algo``, ``noise_sigma`` or ``seeds`` replaced."""
        cfg = replace(self, overrides={**self.overrides, **{k: repr(v) for k, v in kw.items()}})
        if "episodes" in kw:
            cfg.ppo = replace(cfg.ppo, episodes=int(kw["episodes"]))
        if "algo" in kw:
            cfg.algo = BaselineKind(kw["algo"])
        if "noise_sigma" in kw:
            cfg.env = replace(cfg.env, noise_sigma=float(kw["noise_sigma"]))
        if "seeds" in kw:
            cfg.seeds = tuple(int(s) for s in kw["seeds"])
        return cfg


def default_config_text() -> str:
    return resources.files("reflectsim").joinpath("data/default.ini").read_text()


def _parser(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    return cp


def _scene(cp: configparser.ConfigParser) -> Scene:
    sc = cp["scene"]
    materials = {name.split(".", 1)[1]: Material(name.split(".", 1)[1],
                                                 cp[name].getfloat("reflection_coefficient"))
                 for name in cp.sections() if name.startswith("material.")}

    def material(section):
        key = section.get("material", "concrete")
        if key not in materials:
            raise InvalidConfiguration(f"unknown material {key!r}")
        return materials[key]

    walls = tuple(Wall(_vec(cp[s]["min"]), _vec(cp[s]["max"]), material(cp[s]), s.split(".", 1)[1])
                  for s in cp.sections() if s.startswith("wall."))
    cylinders = tuple(Cylinder(_vec(cp[s]["base"]), cp[s].getfloat("radius"),
                               cp[s].getfloat("height"), material(cp[s]), s.split(".", 1)[1])
                      for s in cp.sections() if s.startswith("cylinder."))
    users = _vecs(sc["users"]) if sc.get("users") else np.zeros((0, 3))
    return Scene(
        walls=walls,
        obstacles=cylinders,
        ap_position=_vec(sc["ap_position"]),
        frequency=sc.getfloat("frequency_hz"),
        tx_power_mw=sc.getfloat("tx_power_mw"),
        rx_height=sc.getfloat("rx_height"),
        focal_region=Box(_vec(sc["focal_region_min"]), _vec(sc["focal_region_max"])),
        bounds=Box(_vec(sc["bounds_min"]), _vec(sc["bounds_max"])),
        users=users,
    )


def parse_config(text: str, path: Path | None = None) -> ExperimentConfig:
    try:
        cp = _parser(text)
        ex = cp["experiment"] if cp.has_section("experiment") else {}
        scene_file = ex.get("scene_file") if ex else None
        if scene_file:
            scene_path = Path(scene_file)
            if path is not None and not scene_path.is_absolute():
                scene_path = path.parent / scene_path
            if not scene_path.exists():
                raise InvalidConfiguration(f"scene file {scene_path} does not exist")
            scene_cp = _parser(scene_path.read_text())
            # inline the scene so the stored text is self-contained
            text = re.sub(r"(?m)^\s*scene_file\s*=.*$", f"# scene inlined from {scene_file}", text)
            text = text + "\n" + scene_path.read_text()
        else:
            scene_cp = cp
        scene = _scene(scene_cp)

        ar = cp["array"]
        plane = BasePlane(_vec(ar["origin"]), _vec(ar["u"]), _vec(ar["v"]), _vec(ar["normal"]))
        array = ArrayParams(ar.getint("rows"), ar.getint("cols"), ar.getfloat("pitch"), plane,
                            ar.getint("segments", 3))

        li = cp["limits"]
        limits = AngleLimits(li.getfloat("phi_min"), li.getfloat("phi_max"),
                             li.getfloat("theta_min"), li.getfloat("theta_max"))
        ra = cp["radiation"]
        radiation = RadiationModel(ra.getfloat("lobe_exponent"), ra.getfloat("tile_reflectivity"),
                                   ra.getfloat("noise_floor_dbm"))

        en = cp["env"]
        env = EnvConfig(
            num_agents=en.getint("num_agents"),
            num_users=en.getint("num_users"),
            assignment=_ints(en["assignment"]),
            delta_max=en.getfloat("delta_max"),
            episode_length=en.getint("episode_length"),
            mobility_period=en.getint("mobility_period"),
            mobility_radius=en.getfloat("mobility_radius"),
            user_region=Box(_vec(en["user_region_min"]), _vec(en["user_region_max"])),
            noise_sigma=en.getfloat("noise_sigma", 0.0),
            reward_offset=en.getfloat("reward_offset"),
            reward_scale=en.getfloat("reward_scale"),
        )
        pp = cp["ppo"]
        ppo = PPOHyper(
            lr=pp.getfloat("lr"), gamma=pp.getfloat("gamma"), gae_lambda=pp.getfloat("gae_lambda"),
            clip_eps=pp.getfloat("clip_eps"), value_coef=pp.getfloat("value_coef"),
            entropy_coef=pp.getfloat("entropy_coef"), rollout_size=pp.getint("rollout_size"),
            minibatch=pp.getint("minibatch"), epochs_per_update=pp.getint("epochs_per_update"),
            episodes=pp.getint("episodes"),
        )
        profile = ex.get("profile", "full") if ex else "full"
        if profile not in PROFILES:
            raise InvalidConfiguration(f"unknown profile {profile!r}")
        ppo = replace(ppo, episodes=PROFILES[profile]) if profile == "desk" else ppo
        seeds = _ints(ex.get("seeds", "0")) if ex else (0,)
        if not seeds:
            raise InvalidConfiguration("seed list is empty")
        return ExperimentConfig(
            scene=scene, array=array, limits=limits, radiation=radiation, env=env,
            eval_length=en.getint("eval_length", 300),
            noise_sigmas=_floats(en.get("noise_sigmas", "0.0")),
            ppo=ppo,
            algo=BaselineKind(ex.get("algo", "beam_focusing_ma") if ex else "beam_focusing_ma"),
            seeds=seeds,
            profile=profile,
            out_dir=Path(ex.get("out_dir", "runs") if ex else "runs"),
            source_text=text,
            source_path=path,
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        if isinstance(exc, InvalidConfiguration):
            raise
        raise InvalidConfiguration(f"bad config: {exc}") from exc


def load_config(path: str | Path | None = None, profile: str | None = None) -> ExperimentConfig:
    """Read a config file (the packaged default when ``path`` is None)."""
    if path is None:
        cfg = parse_config(default_config_text())
    else:
        path = Path(path)
        if not path.exists():
            raise InvalidConfiguration(f"config file {path} does not exist")
        cfg = parse_config(path.read_text(), path)
    if profile is not None:
        if profile not in PROFILES:
            raise InvalidConfiguration(f"unknown profile {profile!r}")
        cfg = cfg.with_overrides(episodes=PROFILES[profile])
        cfg.profile = profile
    return cfg
