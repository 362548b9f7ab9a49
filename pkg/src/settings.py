import os
from contextvars import ContextVar
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type

from pydantic import BaseModel, Field, SecretStr
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from src.core.exceptions import ConfigError

BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
ENV_PREFIX = "IDEA_CATALYST_"

_config_file: ContextVar[Optional[Path]] = ContextVar("config_file", default=None)


class Mode(str, Enum):
    LIVE = "live"
    REPLAY = "replay"
    RECORD = "record"


class ModelProfileSettings(BaseModel):
    endpoint: Optional[str] = Field(None, description="OpenAI-compatible base URL, e.g. http://host:8000/v1")
    model_id: Optional[str] = None
    api_key: Optional[SecretStr] = None
    temperature: float = 0.7
    max_output_tokens: int = Field(4096, ge=1)
    suppress_reasoning: bool = Field(True, description="Inject the provider's no-thinking control")
    in_flight: int = Field(4, ge=1)
    attempt_budget: int = Field(3, ge=1)
    timeout_seconds: float = 120.0
    max_transport_attempts: int = Field(3, ge=1)
    backoff_seconds: float = 1.0


class GeneratorProfileSettings(ModelProfileSettings):
    temperature: float = 0.7


class JudgeProfileSettings(ModelProfileSettings):
    temperature: float = 0.0


class S2Settings(BaseModel):
    key: Optional[SecretStr] = None
    base_url: str = "https://api.semanticscholar.org/graph/v1"
    endpoint_version: str = "snippet-search-v1"
    limit: int = Field(20, ge=1, le=20, description="Papers per retrieval round")
    snippets_per_paper: int = Field(3, ge=1)
    requests_per_second: float = Field(1.0, gt=0)
    max_attempts: int = Field(3, ge=1)
    backoff_seconds: float = 1.0
    timeout_seconds: float = 30.0


class PipelineSettings(BaseModel):
    min_questions: int = Field(3, ge=1)
    max_questions: int = Field(5, ge=1)
    max_queries: int = Field(3, ge=1)
    max_challenges: int = Field(3, ge=1)
    min_domains: int = Field(2, ge=1)
    max_domains: int = Field(5, ge=1)
    max_takeaways: int = Field(3, ge=1)
    gate_threshold: float = Field(0.5, ge=0.5, lt=1, description="Keep a domain iff relevant/retrieved is strictly above this")
    max_fragments: int = Field(12, ge=1)
    top_k: int = Field(3, ge=1)


class Settings(BaseSettings):
    gen: GeneratorProfileSettings = Field(default_factory=GeneratorProfileSettings)
    judge: JudgeProfileSettings = Field(default_factory=JudgeProfileSettings)
    s2: S2Settings = Field(default_factory=S2Settings)
    pipeline: PipelineSettings = Field(default_factory=PipelineSettings)

    retrieval_mode: Mode = Mode.LIVE
    llm_mode: Optional[Mode] = None

    fixtures_dir: Path = Path(BASE_DIR) / "fixtures"
    cache_dir: Path = Path(BASE_DIR) / ".cache"
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_nested_delimiter="_",
        env_nested_max_split=1,
        env_file=os.path.join(BASE_DIR, ".env"),
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        sources = [init_settings, env_settings, dotenv_settings]
        config_file = _config_file.get()
        if config_file is not None:
            sources.append(TomlConfigSettingsSource(settings_cls, toml_file=config_file))
        return tuple(sources)

    @property
    def effective_llm_mode(self) -> Mode:
        return self.llm_mode or self.retrieval_mode

    def require_profile(self, name: str) -> ModelProfileSettings:
        """Profile usable for live calls; ConfigError names the missing variable."""
        profile: ModelProfileSettings = getattr(self, name)
        if self.effective_llm_mode is Mode.REPLAY:
            return profile
        for attr in ("endpoint", "model_id"):
            if not getattr(profile, attr):
                raise ConfigError(f"{ENV_PREFIX}{name.upper()}_{attr.upper()} is not set ({name} profile)")
        return profile

    def snapshot(self) -> Dict[str, Any]:
        """Effective configuration without secrets or directories."""
        secrets = {"api_key"}
        return {
            "gen": self.gen.model_dump(mode="json", exclude=secrets),
            "judge": self.judge.model_dump(mode="json", exclude=secrets),
            "s2": self.s2.model_dump(mode="json", exclude={"key"}),
            "pipeline": self.pipeline.model_dump(mode="json"),
            "retrieval_mode": self.retrieval_mode.value,
            "llm_mode": self.effective_llm_mode.value,
        }


def load_settings(config_file: Optional[Path] = None, **overrides: Any) -> Settings:
    """Settings with precedence flags > environment > .env > config file > defaults."""
    if config_file is not None and not Path(config_file).exists():
        raise ConfigError(f"config file {config_file} does not exist")
    token = _config_file.set(Path(config_file) if config_file else None)
    try:
        return Settings(**{k: v for k, v in overrides.items() if v is not None})
    except ValueError as e:
        raise ConfigError(f"invalid configuration: {e}")
    finally:
        _config_file.reset(token)
