"""
SynthEye: procedural, imbalanced eye-surgery-like frames.

Each frame is a phase-tinted disk with one glyph per present tool. Phases
follow a skewed prior and every phase has one dominant toolset plus a few
rare ones, so some (toolset, phase) cells are very rare by construction.
"""

from __future__ import annotations

import colorsys
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from app.conditions.labels import ConditionLabel, Toolset
from app.data.dataset import LabeledImageSet, Split, from_labels
from app.errors import UserInputError

logger = logging.getLogger(__name__)

ToolsetWeight = tuple[Toolset, float]

# (shape, RGB) per tool id; shapes repeat only with a different colour
GLYPHS: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("bar", (255, 60, 60)),
    ("cross", (60, 255, 60)),
    ("triangle", (70, 110, 255)),
    ("ring", (255, 255, 40)),
    ("chevron", (255, 40, 255)),
    ("dot_pair", (40, 255, 255)),
    ("bar", (255, 160, 40)),
    ("cross", (160, 40, 255)),
    ("triangle", (255, 255, 255)),
    ("ring", (40, 160, 160)),
    ("chevron", (160, 255, 120)),
    ("dot_pair", (255, 130, 190)),
)

DEFAULT_TOOL_NAMES = ("Forceps", "Cannula", "Knife", "Retractor", "Hook", "Aspirator")
DEFAULT_PHASE_NAMES = ("Incision", "Rhexis", "Phaco", "Irrigation", "Implant")


def geometric_prior(num_phases: int, ratio: float) -> list[float]:
    weights = ratio ** np.arange(num_phases)
    return (weights / weights.sum()).tolist()


def default_toolset_priors(
    num_phases: int, num_tools: int, dominant_mass: float, seed: int
) -> list[list[ToolsetWeight]]:
    """
    One dominant toolset with ``dominant_mass`` per phase and 2 to 4 rare
    toolsets sharing the rest with halving weights.
    """
    rng = np.random.default_rng([seed, num_phases, num_tools])
    patterns = 2**num_tools
    priors = []
    for _ in range(num_phases):
        rare_count = min(int(rng.integers(2, 5)), patterns - 1)
        codes = rng.choice(np.arange(1, patterns), size=rare_count + 1, replace=False)
        toolsets = [tuple(int(b) for b in np.binary_repr(int(code), width=num_tools)[::-1]) for code in codes]
        rare = 0.5 ** np.arange(rare_count)
        rare = (1.0 - dominant_mass) * rare / rare.sum()
        priors.append([(toolsets[0], dominant_mass), *zip(toolsets[1:], rare.tolist())])
    return priors


class SynthEyeConfig(BaseModel):
    """Generator settings; omitted priors are derived from the decay and dominance settings"""

    model_config = ConfigDict(frozen=True)

    image_size: int = Field(default=32, ge=8, description="[assumption] square frame side")
    channels: int = Field(default=3, ge=1, le=3, description="[assumption] RGB")
    num_phases: int = Field(default=5, ge=1, description="[assumption] phases P")
    num_tools: int = Field(default=6, ge=1, le=len(GLYPHS), description="[assumption] tools K")
    phase_decay: float = Field(default=0.45, gt=0.0, le=1.0, description="[assumption] geometric phase prior ratio")
    dominant_mass: float = Field(default=0.7, gt=0.0, lt=1.0, description="[assumption] dominant toolset share")
    phase_prior: list[float] | None = Field(default=None, description="explicit phase prior, length P")
    toolset_priors: list[list[ToolsetWeight]] | None = Field(
        default=None, description="explicit per-phase (toolset, probability) lists"
    )
    glyph_size: float = Field(default=0.2, gt=0.0, le=0.5, description="[assumption] glyph extent / frame side")
    noise_level: float = Field(default=0.03, ge=0.0, description="[assumption] pixel noise std in [-1, 1] units")
    seed: int = Field(default=0, description="generator seed")
    prior_seed: int = Field(default=0, description="seed of the derived toolset priors")

    @model_validator(mode="after")
    def _check_priors(self) -> SynthEyeConfig:
        if self.phase_prior is not None:
            _check_distribution(self.phase_prior, "phase prior")
            if len(self.phase_prior) != self.num_phases:
                raise ValueError(f"phase prior has {len(self.phase_prior)} entries for {self.num_phases} phases")
        if self.toolset_priors is not None:
            if len(self.toolset_priors) != self.num_phases:
                raise ValueError(f"{len(self.toolset_priors)} toolset priors for {self.num_phases} phases")
            for phase, prior in enumerate(self.toolset_priors):
                _check_distribution([p for _, p in prior], f"toolset prior of phase {phase}")
                toolsets = [t for t, _ in prior]
                if len(set(toolsets)) != len(toolsets):
                    raise ValueError(f"toolset prior of phase {phase} repeats a toolset")
                for toolset in toolsets:
                    if len(toolset) != self.num_tools or any(f not in (0, 1) for f in toolset):
                        raise ValueError(f"invalid toolset {toolset} for {self.num_tools} tools")
        return self

    def resolved_phase_prior(self) -> np.ndarray:
        if self.phase_prior is not None:
            return np.asarray(self.phase_prior)
        return np.asarray(geometric_prior(self.num_phases, self.phase_decay))

    def resolved_toolset_priors(self) -> list[list[ToolsetWeight]]:
        if self.toolset_priors is not None:
            return [[(tuple(t), float(p)) for t, p in prior] for prior in self.toolset_priors]
        return default_toolset_priors(self.num_phases, self.num_tools, self.dominant_mass, self.prior_seed)

    def tool_names(self) -> list[str]:
        if self.num_tools <= len(DEFAULT_TOOL_NAMES):
            return list(DEFAULT_TOOL_NAMES[: self.num_tools])
        return [f"Tool{k}" for k in range(self.num_tools)]

    def phase_names(self) -> list[str]:
        if self.num_phases <= len(DEFAULT_PHASE_NAMES):
            return list(DEFAULT_PHASE_NAMES[: self.num_phases])
        return [f"Phase{p}" for p in range(self.num_phases)]


def _check_distribution(values: list[float], what: str) -> None:
    if not values or any(v < 0 or not math.isfinite(v) for v in values) or abs(sum(values) - 1.0) > 1e-9:
        raise ValueError(f"{what} must be non-negative and sum to 1, got {values}")


def phase_tint(phase: int, num_phases: int) -> tuple[int, int, int]:
    """Muted background colour of a phase, well away from the glyph colours"""
    r, g, b = colorsys.hsv_to_rgb(phase / max(num_phases, 1), 0.45, 0.35)
    return int(r * 255), int(g * 255), int(b * 255)


def _rotate(points: list[tuple[float, float]], angle: float, cx: float, cy: float) -> list[tuple[float, float]]:
    c, s = math.cos(angle), math.sin(angle)
    return [(cx + x * c - y * s, cy + x * s + y * c) for x, y in points]


def draw_glyph(
    draw: ImageDraw.ImageDraw, shape: str, color: tuple[int, int, int], cx: float, cy: float, r: float, angle: float
) -> None:
    width = max(1, round(r / 2.5))
    if shape == "bar":
        half = width / 2
        draw.polygon(_rotate([(-r, -half), (r, -half), (r, half), (-r, half)], angle, cx, cy), fill=color)
    elif shape == "cross":
        for offset in (0.0, math.pi / 2):
            draw.line(_rotate([(-r, 0), (r, 0)], angle + offset, cx, cy), fill=color, width=width)
    elif shape == "triangle":
        corners = [(r * math.cos(a), r * math.sin(a)) for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)]
        draw.polygon(_rotate(corners, angle, cx, cy), fill=color)
    elif shape == "ring":
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=color, width=width)
    elif shape == "chevron":
        draw.line(_rotate([(-r, -r), (0, 0), (-r, r)], angle, cx, cy), fill=color, width=width, joint="curve")
    elif shape == "dot_pair":
        dot = max(1.0, r / 2.5)
        for x, y in _rotate([(-r * 0.6, 0), (r * 0.6, 0)], angle, cx, cy):
            draw.ellipse([x - dot, y - dot, x + dot, y + dot], fill=color)
    else:
        raise UserInputError(f"unknown glyph shape {shape!r}")


def render_frame(config: SynthEyeConfig, label: ConditionLabel, rng: np.random.Generator) -> np.ndarray:
    """
    Render one frame for ``label`` as ``[C, H, W]`` in [-1, 1].

    Args:
        config: Generator settings
        label: Phase and toolset to draw
        rng: Source of the pose, iris jitter and pixel noise

    Returns:
        Float64 image array
    """
    size = config.image_size
    canvas = Image.new("RGB", (size, size), (0, 0, 0))
    draw = ImageDraw.Draw(canvas)

    radius_scale = 0.3 + 0.15 * label.phase / max(config.num_phases - 1, 1)
    iris = size * (radius_scale + rng.uniform(-0.02, 0.02))
    center = size / 2 + rng.uniform(-1.0, 1.0, size=2)
    draw.ellipse(
        [center[0] - iris, center[1] - iris, center[0] + iris, center[1] + iris],
        fill=phase_tint(label.phase, config.num_phases),
    )

    r = config.glyph_size * size / 2
    margin = r + 1
    for tool, present in enumerate(label.toolset):
        if not present:
            continue
        shape, color = GLYPHS[tool]
        cx, cy = rng.uniform(margin, size - margin, size=2)
        draw_glyph(draw, shape, color, cx, cy, r, rng.uniform(0.0, 2 * math.pi))

    pixels = np.asarray(canvas, dtype=np.float64)[..., : config.channels] / 127.5 - 1.0
    if config.noise_level > 0:
        pixels = pixels + config.noise_level * rng.standard_normal(pixels.shape)
    return np.clip(pixels, -1.0, 1.0).transpose(2, 0, 1)


@dataclass(frozen=True)
class _Sampler:
    config: SynthEyeConfig
    phase_prior: np.ndarray
    toolset_priors: list[list[ToolsetWeight]]

    def draw(self, index: int) -> tuple[np.ndarray, ConditionLabel]:
        rng = np.random.default_rng([self.config.seed, index])
        phase = int(rng.choice(len(self.phase_prior), p=self.phase_prior))
        prior = self.toolset_priors[phase]
        choice = int(rng.choice(len(prior), p=np.asarray([p for _, p in prior])))
        label = ConditionLabel(phase, prior[choice][0])
        return render_frame(self.config, label, rng), label


def generate_dataset(
    config: SynthEyeConfig,
    count: int,
    split: Split = Split.TRAIN,
    start_index: int = 0,
    num_workers: int = 1,
    show_progress: bool = False,
) -> LabeledImageSet:
    """
    Draw ``count`` labeled frames.

    Frame ``i`` uses the generator seeded with ``(seed, start_index + i)``,
    so a test split generated with ``start_index`` past the train split
    shares its distribution but not its images.
    """
    if count < 1:
        raise UserInputError(f"dataset size must be positive, got {count}")
    sampler = _Sampler(config, config.resolved_phase_prior(), config.resolved_toolset_priors())
    indices = range(start_index, start_index + count)
    if num_workers > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            frames = list(tqdm(pool.map(sampler.draw, indices), total=count, disable=not show_progress))
    else:
        frames = [sampler.draw(i) for i in tqdm(indices, disable=not show_progress, desc=f"gen {split.value}")]
    images = np.stack([image for image, _ in frames])
    labels = [label for _, label in frames]
    ids = [f"{split.value}-{i:06d}" for i in indices]
    logger.info(f"Generated {count} SynthEye {split.value} frames")
    return from_labels(images, labels, split, config.tool_names(), config.phase_names(), ids)
