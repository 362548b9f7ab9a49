from src.core.exceptions import CatalystError


# A pipeline stage could not complete
class StageError(CatalystError):
    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage {stage} failed: {detail}")
        self.stage = stage
