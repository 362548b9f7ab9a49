from src.core.exceptions import CatalystError


# Benchmark file missing, unreadable or with an invalid line
class DatasetError(CatalystError):
    def __init__(self, path: str, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path


# Ground-truth fragment could not be produced for a record
class GroundTruthError(CatalystError):
    def __init__(self, record_id: str, detail: str):
        super().__init__(f"record {record_id}: {detail}")
        self.record_id = record_id
