from src.core.exceptions import CatalystError


# Snippet service unreachable or failing after retries
class RetrievalError(CatalystError):
    pass


# Fine-grained domain name without a coarse field
class DomainMappingError(CatalystError):
    def __init__(self, fine_domain: str, detail: str | None = None):
        super().__init__(detail or f"cannot map {fine_domain!r} to a coarse field")
        self.fine_domain = fine_domain
