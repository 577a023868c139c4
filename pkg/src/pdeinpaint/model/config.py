"""Model hyperparameters and the closed-form parameter count."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import IndivisibleDims

CONDITIONING_MODES = ("concat_mask", "concat", "mixed")


@dataclass(frozen=True)
class HvditConfig:
    """Architecture hyperparameters.

    ``widths`` lists per-level token widths; the last level is the global-attention
    bottleneck and every earlier level runs ``depths[l]`` neighborhood blocks on the way
    down and again on the way up.
    """

    frames: int = 8
    size: int = 32
    channels: int = 1
    patch: tuple[int, int, int] = (2, 4, 4)
    widths: tuple[int, ...] = (64, 128)
    depths: tuple[int, ...] = (2,)
    global_depth: int = 2
    head_dim: int = 32
    kernel: tuple[int, int, int] = (2, 3, 3)
    downsample: int = 2
    mapping_depth: int = 1
    mapping_width: int = 128
    mlp_ratio: int = 4
    conditioning: str = "concat_mask"

    def __post_init__(self):
        for name in ("patch", "widths", "depths", "kernel"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if len(self.depths) != len(self.widths) - 1:
            raise ValueError(f"need one neighborhood depth per non-bottleneck level, got {self.depths} for widths {self.widths}")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
        pt, ph, pw = self.patch
        if self.frames % pt or self.size % ph or self.size % pw:
            raise IndivisibleDims(f"video {self.frames}x{self.size}x{self.size} not divisible by patch {self.patch}")
        for w in self.widths:
            if w % self.head_dim:
                raise IndivisibleDims(f"width {w} not divisible by head dim {self.head_dim}")
        grid = self.token_grid
        for _ in range(len(self.widths) - 1):
            ft, fs = self._factors(grid)
            if grid[1] % fs or grid[2] % fs:
                raise IndivisibleDims(f"token grid {grid} not divisible by downsample factor {fs}")
            grid = (grid[0] // ft, grid[1] // fs, grid[2] // fs)

    def _factors(self, grid):
        ft = self.downsample if grid[0] > 1 and grid[0] % self.downsample == 0 else 1
        return ft, self.downsample

    @property
    def token_grid(self) -> tuple[int, int, int]:
        pt, ph, pw = self.patch
        return (self.frames // pt, self.size // ph, self.size // pw)

    @property
    def levels(self) -> int:
        return len(self.widths)

    def level_grids(self) -> list[tuple[int, int, int]]:
        grids = [self.token_grid]
        for _ in range(self.levels - 1):
            g = grids[-1]
            ft, fs = self._factors(g)
            grids.append((g[0] // ft, g[1] // fs, g[2] // fs))
        return grids

    def merge_factors(self) -> list[tuple[int, int, int]]:
        """Merge factors between level l and l + 1."""
        out = []
        for g in self.level_grids()[:-1]:
            ft, fs = self._factors(g)
            out.append((ft, fs, fs))
        return out

    @property
    def in_channels(self) -> int:
        c = self.channels
        return {"concat_mask": 2 * c + 1, "concat": 2 * c, "mixed": c}[self.conditioning]

    @property
    def patch_volume(self) -> int:
        pt, ph, pw = self.patch
        return pt * ph * pw

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "HvditConfig":
        return cls(**d)


def expected_param_count(cfg: HvditConfig) -> int:
    """Closed-form parameter count of HVDiT(cfg)."""

    def linear(i, o, bias=True):
        return i * o + (o if bias else 0)

    def block(d):
        hidden = cfg.mlp_ratio * d
        return (
            linear(d, 3 * d) + linear(d, d)  # attention
            + linear(d, hidden) + linear(hidden, d)  # mlp
            + linear(cfg.mapping_width, 6 * d)  # adaptive modulation
        )

    mw = cfg.mapping_width
    total = linear(cfg.patch_volume * cfg.in_channels, cfg.widths[0])
    total += cfg.mapping_depth * linear(mw, mw)
    for level, (grid, d) in enumerate(zip(cfg.level_grids(), cfg.widths)):
        total += grid[0] * grid[1] * grid[2] * d  # position embedding
        if level < cfg.levels - 1:
            f = cfg.merge_factors()[level]
            vol = f[0] * f[1] * f[2]
            nxt = cfg.widths[level + 1]
            total += 2 * cfg.depths[level] * block(d)
            total += linear(vol * d, nxt) + linear(nxt, vol * d) + linear(d, d)  # merge, split, skip
        else:
            total += cfg.global_depth * block(d)
    w0 = cfg.widths[0]
    total += linear(mw, 2 * w0) + linear(w0, cfg.patch_volume * cfg.channels)
    return total


# Full-scale architectures (128x128 grids, 20 frames); far beyond a CPU budget.
PRESETS = {
    "desk": HvditConfig(),
    "full": HvditConfig(
        frames=20, size=128, widths=(384, 768), depths=(2,), global_depth=11, head_dim=64,
        kernel=(2, 7, 7), mapping_width=768,
    ),
    "full-unified": HvditConfig(
        frames=20, size=128, widths=(384, 768), depths=(2,), global_depth=6, head_dim=64,
        kernel=(2, 4, 4), mapping_width=768,
    ),
}
