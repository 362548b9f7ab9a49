from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, SecretStr

from src.settings import ModelProfileSettings


class ProfileName(str, Enum):
    GENERATOR = "generator"
    JUDGE = "judge"

    @property
    def settings_attr(self) -> str:
        return "gen" if self is ProfileName.GENERATOR else "judge"


class ModelProfile(BaseModel):
    name: ProfileName
    endpoint: Optional[str] = None
    model_id: Optional[str] = None
    api_key: Optional[SecretStr] = None
    temperature: float
    max_output_tokens: int = Field(ge=1)
    suppress_reasoning: bool = True
    in_flight: int = Field(4, ge=1)
    attempt_budget: int = Field(3, ge=1)
    timeout_seconds: float = 120.0
    max_transport_attempts: int = Field(3, ge=1)
    backoff_seconds: float = 1.0

    @classmethod
    def from_settings(cls, name: ProfileName, settings: ModelProfileSettings) -> "ModelProfile":
        return cls(name=name, **settings.model_dump())


class StructuredRequest(BaseModel):
    profile: ProfileName
    prompt: str
    schema_name: str
    attempt_budget: int = Field(3, ge=1)
    template_id: Optional[str] = None
