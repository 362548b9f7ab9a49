from src.core.exceptions import CatalystError


# Chat endpoint unreachable or answering with errors after retries
class GatewayError(CatalystError):
    pass


# Repair budget spent without a schema-valid answer
class StructuredOutputError(GatewayError):
    def __init__(self, detail: str, raw_response: str | None = None):
        super().__init__(detail)
        self.raw_response = raw_response


class TemplateError(CatalystError):
    pass


class UnknownTemplateError(TemplateError):
    def __init__(self, template_id: str):
        super().__init__(f"unknown prompt template {template_id!r}")
        self.template_id = template_id


class UnboundPlaceholderError(TemplateError):
    def __init__(self, template_id: str, placeholder: str):
        super().__init__(f"template {template_id!r} has unbound placeholder {{{placeholder}}}")
        self.template_id = template_id
        self.placeholder = placeholder
