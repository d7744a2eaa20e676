"""
Schema validation for run metadata and validation reports.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class RunMetadata(BaseModel):
    """Base record written next to every output; extra fields are kept."""

    model_config = ConfigDict(extra="allow")

    command: str = Field(description="Subcommand that produced the output")
    versions: Dict[str, Any] = Field(default_factory=dict)
    settings: Dict[str, Any] = Field(default_factory=dict)


class SampleMetadata(RunMetadata):
    command: str = "sample"
    pattern: str = Field(pattern="^(231|213|312|132|321|123)$")
    n: int = Field(ge=1)
    beta: float
    steps: int = Field(ge=0)
    seed: int = Field(ge=0)
    thin: int = Field(ge=0)
    init: str
    accept_rate: float = Field(ge=0.0, le=1.0)
    final_inv: int = Field(ge=0)
    wall_time: float = Field(ge=0.0)

    @field_validator("final_inv")
    @classmethod
    def validate_final_inv(cls, v: int, info: Any) -> int:
        n = info.data.get("n")
        if n is not None and v > n * (n - 1) // 2:
            raise ValueError(f"final_inv {v} exceeds n(n-1)/2")
        return v


class SuiteEntry(BaseModel):
    """One line of a validation report."""

    suite: str
    n: int = Field(ge=0)
    cases: int = Field(ge=0)
    failures: int = Field(ge=0)
    first_counterexample: Optional[str] = None
    note: Optional[str] = None

    @field_validator("failures")
    @classmethod
    def validate_failures(cls, v: int, info: Any) -> int:
        cases = info.data.get("cases")
        if cases is not None and v > cases:
            raise ValueError("failures cannot exceed cases")
        return v


def validate_sample_metadata(data: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate a sample metadata record.

    Raises:
        pydantic.ValidationError: If the record is malformed
    """
    return SampleMetadata(**data).model_dump()


def validate_report(entries: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    return [SuiteEntry(**entry).model_dump() for entry in entries]
