from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class EnhancerConfig:
    n_packets: int = 7
    gamma: float = 0.1
    residual_blocks: int = 4
    width: int = 32
    upsample: tuple[int, ...] = (2,)
    lr: float = 1e-4
    weight_decay: float = 0.01
    epochs: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.n_packets < 1 or self.residual_blocks < 1 or self.width < 1:
            raise ValueError("packet count, block count and width must be positive")
        if any(f < 1 for f in self.upsample):
            raise ValueError(f"upsample factors must be positive, got {self.upsample}")

    @classmethod
    def load(cls, path: str | Path | None) -> "EnhancerConfig":
        if path is None:
            cfg = cls()
        else:
            raw = json.loads(Path(path).read_text())
            if "upsample" in raw:
                raw["upsample"] = tuple(raw["upsample"])
            cfg = cls(**raw)
        cfg.validate()
        return cfg


def load_band(path: str | Path) -> list[int]:
    """Target band from a calibration file written by `nlos filter --calibration-out`."""
    cal = json.loads(Path(path).read_text())
    band = cal.get("band_indices")
    if not band:
        raise ValueError(f"{path}: no band_indices")
    return [int(k) for k in band]
