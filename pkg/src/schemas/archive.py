"""Self-contained record of one CLI run."""

from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field

from src.core.config import RunConfig
from src.schemas.reports import (
    AdmissibilityModel,
    BoundsModel,
    CertificatesModel,
    LimitStudyModel,
    MonotonicityModel,
    NehariCheckModel,
    PohozaevModel,
    ProbeDiagnosticsModel,
    RefinementModel,
    SobolevModel,
    SolveReportModel,
)

ARCHIVE_FILE = "archive.json"


class StageState(StrEnum):
    OK = "ok"
    FAILED = "failed"
    SKIPPED = "skipped"


class StageStatus(BaseModel):
    name: str
    state: StageState
    message: str = ""


class ProfileEntry(BaseModel):
    """A field file written next to the archive; annulus 0 is the glued profile."""

    label: str
    k: int
    annulus: int
    file: str


class RunArchive(BaseModel):
    """Everything a run produced; tables can be regenerated from this alone."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    tool_version: str
    command: str
    seed: int
    config: RunConfig
    stages: list[StageStatus] = Field(default_factory=list[StageStatus])
    verdicts: dict[str, bool] = Field(default_factory=dict[str, bool])
    profiles: list[ProfileEntry] = Field(default_factory=list[ProfileEntry])
    solves: list[SolveReportModel] = Field(default_factory=list[SolveReportModel])
    sobolev: SobolevModel | None = None
    admissibility: list[AdmissibilityModel] = Field(
        default_factory=list[AdmissibilityModel]
    )
    monotonicity: MonotonicityModel | None = None
    b_limit: LimitStudyModel | None = None
    pohozaev: PohozaevModel | None = None
    bounds: BoundsModel | None = None
    nehari_check: NehariCheckModel | None = None
    certificates: list[CertificatesModel] = Field(
        default_factory=list[CertificatesModel]
    )
    refinements: list[RefinementModel] = Field(default_factory=list[RefinementModel])
    probes: list[ProbeDiagnosticsModel] = Field(
        default_factory=list[ProbeDiagnosticsModel]
    )

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def failed_stages(self) -> list[StageStatus]:
        return [s for s in self.stages if s.state is StageState.FAILED]
