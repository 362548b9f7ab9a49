EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class CatalystError(Exception):
    """Base error; `exit_code` is what the CLI returns for it."""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# Missing or contradictory configuration
class ConfigError(CatalystError):
    exit_code = EXIT_CONFIG


# Operation called outside its precondition
class ContractError(CatalystError):
    pass


# Dangling id reference inside a run artifact
class IntegrityError(CatalystError):
    def __init__(self, detail: str, reference: str | None = None):
        super().__init__(detail)
        self.reference = reference


# Artifact file that cannot be parsed
class ArtifactCorruptedError(CatalystError):
    pass


# Replay mode asked for a request that was never recorded
class FixtureMissError(CatalystError):
    def __init__(self, namespace: str, fingerprint: str):
        super().__init__(f"no recorded {namespace} fixture for fingerprint {fingerprint}")
        self.namespace = namespace
        self.fingerprint = fingerprint
