import hashlib
import string
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping

from src.llm.exceptions import UnboundPlaceholderError, UnknownTemplateError

TEMPLATES_DIR = Path(__file__).parent / "templates"
FRAGMENT_FORMAT_FILE = TEMPLATES_DIR / "fragment_format.json"


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    path = TEMPLATES_DIR / f"{template_id}.txt"
    if not path.is_file():
        raise UnknownTemplateError(template_id)
    return path.read_text(encoding="utf-8")


def placeholders(template_id: str) -> List[str]:
    """Distinct placeholder names in order of first use."""
    names: List[str] = []
    for _, field_name, _, _ in string.Formatter().parse(load_template(template_id)):
        if field_name and field_name not in names:
            names.append(field_name)
    return names


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; an unbound one is an error naming it."""
    for name in placeholders(template_id):
        if name not in bindings:
            raise UnboundPlaceholderError(template_id, name)
    return load_template(template_id).format_map(dict(bindings))


def template_ids() -> List[str]:
    return sorted(p.stem for p in TEMPLATES_DIR.glob("*.txt"))


def fragment_format() -> str:
    """Skeleton of the idea fragment document, bound into prompts as-is."""
    return FRAGMENT_FORMAT_FILE.read_text(encoding="utf-8").strip()


def template_hashes() -> Dict[str, str]:
    """sha256 of every template resource, pinned into run config snapshots."""
    return {
        path.name: hashlib.sha256(path.read_bytes()).hexdigest()
        for path in sorted(TEMPLATES_DIR.iterdir())
        if path.is_file()
    }
