"""
Pydantic models for subcommand flags.

Field names mirror the flag names (dashes become underscores), so a flat
JSON overlay or a metadata record from a previous run validates against the
same model. Unknown keys are ignored.
"""

from typing import Any, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

PATTERN_REGEX = "^(231|213|312|132|321|123)$"


class _PatternInput(BaseModel):
    pattern: str = Field(description="Pattern of length 3 to avoid", pattern=PATTERN_REGEX)

    @field_validator("pattern", mode="before")
    @classmethod
    def pattern_to_text(cls, v: Any) -> str:
        return str(v).strip()


class SampleInput(_PatternInput):
    """Input for the sample subcommand."""

    n: int = Field(description="Permutation size", ge=1)
    beta: float = Field(description="Tilt; q = e^(beta/n)", allow_inf_nan=False)
    steps: int = Field(description="Number of Metropolis steps", ge=0)
    seed: int = Field(description="64-bit seed", ge=0, le=2**64 - 1)
    thin: int = Field(default=0, description="Record every thin steps; 0 = final only", ge=0)
    init: str = Field(
        default="min",
        description="Initial path",
        pattern="^(min|max|alt|minimal|maximal|alternating|limit)$",
    )
    coupling_check: bool = Field(default=False, description="Run the coupled diagnostic")
    checkpoints: int = Field(default=16, description="Coupling checkpoints", ge=1)
    out: str = Field(description="Output directory")


class LimitInput(_PatternInput):
    """Input for the limit subcommand."""

    beta: float = Field(description="Tilt", allow_inf_nan=False, ge=-700.0, le=700.0)
    grid: int = Field(default=1000, description="Number of grid cells", ge=1)
    out: str = Field(description="Output directory")


class PartitionInput(_PatternInput):
    """Input for the partition subcommand."""

    beta: float = Field(description="Tilt", allow_inf_nan=False)
    n_list: Optional[List[int]] = Field(default=None, description="Sizes to tabulate")
    n_max: Optional[int] = Field(default=None, description="Tabulate n = 1..n_max", ge=1)
    exact: bool = Field(default=False, description="Also write exact polynomials")
    out: str = Field(description="Output directory")

    @field_validator("n_list", mode="before")
    @classmethod
    def split_n_list(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [int(token) for token in v.replace(",", " ").split()]
        return v

    @field_validator("n_list")
    @classmethod
    def validate_n_list(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is not None and (not v or min(v) < 1):
            raise ValueError("n_list must hold positive sizes")
        return v

    @model_validator(mode="after")
    def require_sizes(self) -> "PartitionInput":
        if self.n_list is None and self.n_max is None:
            raise ValueError("Give either n_list or n_max")
        return self

    def sizes(self) -> List[int]:
        if self.n_list is not None:
            return list(self.n_list)
        return list(range(1, (self.n_max or 0) + 1))


class CompareInput(_PatternInput):
    """Input for the compare subcommand."""

    input: str = Field(description="Permutation CSV or one-line text file")
    beta: float = Field(description="Tilt", allow_inf_nan=False, ge=-700.0, le=700.0)
    grid: Optional[int] = Field(default=None, description="Permuton grid resolution", ge=2)
    out: str = Field(description="Output directory")


class ValidateInput(BaseModel):
    """Input for the validate subcommand."""

    n_max: Optional[int] = Field(
        default=None, description="Largest size checked (default oracle.n_max)", ge=1, le=14
    )
    ball_n: int = Field(default=12, description="Size of the ball-ordering check", ge=0, le=14)
    out: Optional[str] = Field(default=None, description="Report path or directory")
