# config.py
from __future__ import annotations

from pathlib import Path
from typing import Optional

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class ConfigError(ValueError):
    pass


class TrackerConfig(BaseSettings):
    # долгосрочная модель (GRM)
    eta: float = Field(0.005, gt=0)
    tau: float = Field(0.9, gt=0, lt=1)
    gamma: float = Field(0.1, gt=0, lt=1)
    unmatched_decay: float = Field(0.9, gt=0, le=1)
    max_nodes: int = Field(400, gt=0)
    ratio: float = Field(0.75, gt=0, le=1)

    # карта откликов
    sigma: float = Field(6.0, gt=0)
    window: int = Field(5, gt=0)
    theta_denom: float = Field(8000.0, gt=0)
    # меньше согласных голосов у пика = окклюзия
    min_matches: int = Field(3, ge=1)
    consensus_radius: float = Field(10.0, gt=0)

    # пороги добавления ключевых точек
    alpha: float = Field(0.23, gt=0, lt=1)
    beta: float = Field(0.1, gt=0, lt=1)

    # веса слияния
    p: float = Field(0.15, gt=0)
    q: float = Field(0.10, gt=0)
    r: float = Field(0.10, gt=0)

    # кратковременные шаблоны (ICM / BDM)
    rho_icm: float = Field(0.125, gt=0, le=1)
    rho_bdm: float = Field(0.10, gt=0, le=1)
    bins: int = Field(16, gt=0, le=256)
    lbsp_T: int = Field(30, gt=0)
    patch_size: int = Field(32, ge=8)
    icm_sigma_frac: float = Field(0.5, gt=0)
    dims_tolerance: int = Field(2, ge=0)

    # кандидаты
    candidate_offset_frac: float = Field(0.15, gt=0)
    use_all_detections: bool = False
    reinit_from_detector: bool = True

    # детектор ключевых точек
    n_octaves: int = Field(4, gt=0)
    octave_layers: int = Field(3, gt=0)
    detector_sigma: float = Field(1.6, gt=0)
    contrast_threshold: float = Field(0.01, gt=0)
    edge_threshold: float = Field(10.0, gt=0)
    max_keypoints: int = Field(500, gt=0)

    # абляция
    disable_detector: bool = False
    disable_candidates: bool = False
    disable_template_updates: bool = False
    disable_grm_add_delete: bool = False

    model_config = SettingsConfigDict(
        frozen=True,
        extra="forbid",
        case_sensitive=False,
        env_file=None,
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # только аргументы и файл key = value, окружение не читаем
        return init_settings, dotenv_settings

    @model_validator(mode="after")
    def _check_order(self) -> "TrackerConfig":
        if not (self.p >= self.q >= self.r):
            raise ValueError(f"fusion weights must satisfy p >= q >= r, got {self.p}, {self.q}, {self.r}")
        if self.window % 2 == 0:
            raise ValueError(f"kernel window must be odd, got {self.window}")
        return self


def load_config(path: Optional[str | Path] = None, **overrides) -> TrackerConfig:
    """Читает плоский файл `key = value`; без пути параметры по умолчанию."""
    try:
        if path is None:
            return TrackerConfig(**overrides)
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config not found: {path}")
        return TrackerConfig(_env_file=path, **overrides)
    except ValidationError as exc:
        where = f" in {path}" if path is not None else ""
        raise ConfigError(f"invalid tracker config{where}: {exc}") from exc
