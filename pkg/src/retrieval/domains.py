from typing import Dict, Optional

import loguru

from src.core.fields import CoarseField
from src.llm.exceptions import StructuredOutputError
from src.llm.gateway import LLMGateway
from src.llm.schemas import ProfileName
from src.retrieval.exceptions import DomainMappingError
from src.retrieval.schemas import DomainClassification

logger = loguru.logger

CS = CoarseField.COMPUTER_SCIENCE
MED = CoarseField.MEDICINE
CHEM = CoarseField.CHEMISTRY
BIO = CoarseField.BIOLOGY
MAT = CoarseField.MATERIALS_SCIENCE
PHYS = CoarseField.PHYSICS
GEO = CoarseField.GEOLOGY
PSY = CoarseField.PSYCHOLOGY
SOC = CoarseField.SOCIOLOGY
BUS = CoarseField.BUSINESS
POL = CoarseField.POLITICAL_SCIENCE
ECON = CoarseField.ECONOMICS
PHIL = CoarseField.PHILOSOPHY
MATH = CoarseField.MATHEMATICS
ENG = CoarseField.ENGINEERING
ENV = CoarseField.ENVIRONMENTAL_SCIENCE
AGRI = CoarseField.AGRICULTURAL_AND_FOOD_SCIENCES
EDU = CoarseField.EDUCATION
LAW = CoarseField.LAW
LING = CoarseField.LINGUISTICS

SUBFIELDS: Dict[str, CoarseField] = {
    # Computer Science
    "natural language processing": CS,
    "computational linguistics": CS,
    "machine learning": CS,
    "deep learning": CS,
    "reinforcement learning": CS,
    "artificial intelligence": CS,
    "computer vision": CS,
    "robotics": CS,
    "human-computer interaction": CS,
    "human computer interaction": CS,
    "information retrieval": CS,
    "data mining": CS,
    "databases": CS,
    "distributed systems": CS,
    "computer networks": CS,
    "networking": CS,
    "operating systems": CS,
    "software engineering": CS,
    "programming languages": CS,
    "computer security": CS,
    "cryptography": CS,
    "computer graphics": CS,
    "theoretical computer science": CS,
    "algorithms": CS,
    "multi-agent systems": CS,
    "speech recognition": CS,
    "recommender systems": CS,
    "knowledge representation": CS,
    "computational biology": CS,
    "bioinformatics": BIO,
    "quantum computing": PHYS,
    # Medicine
    "neurology": MED,
    "oncology": MED,
    "cardiology": MED,
    "epidemiology": MED,
    "public health": MED,
    "radiology": MED,
    "psychiatry": MED,
    "pharmacology": MED,
    "immunology": MED,
    "clinical medicine": MED,
    "surgery": MED,
    "pediatrics": MED,
    "nursing": MED,
    "medical imaging": MED,
    "healthcare": MED,
    # Biology
    "neuroscience": BIO,
    "genetics": BIO,
    "genomics": BIO,
    "molecular biology": BIO,
    "cell biology": BIO,
    "ecology": BIO,
    "evolutionary biology": BIO,
    "microbiology": BIO,
    "biochemistry": BIO,
    "zoology": BIO,
    "botany": BIO,
    "systems biology": BIO,
    "synthetic biology": BIO,
    "biophysics": BIO,
    "ethology": BIO,
    "animal behavior": BIO,
    "entomology": BIO,
    # Chemistry
    "organic chemistry": CHEM,
    "inorganic chemistry": CHEM,
    "physical chemistry": CHEM,
    "analytical chemistry": CHEM,
    "computational chemistry": CHEM,
    "catalysis": CHEM,
    "polymer chemistry": CHEM,
    "electrochemistry": CHEM,
    # Materials Science
    "nanotechnology": MAT,
    "metallurgy": MAT,
    "polymer science": MAT,
    "ceramics": MAT,
    "biomaterials": MAT,
    "condensed matter materials": MAT,
    # Physics
    "quantum physics": PHYS,
    "quantum mechanics": PHYS,
    "condensed matter physics": PHYS,
    "statistical physics": PHYS,
    "statistical mechanics": PHYS,
    "astrophysics": PHYS,
    "astronomy": PHYS,
    "optics": PHYS,
    "particle physics": PHYS,
    "thermodynamics": PHYS,
    "fluid dynamics": PHYS,
    "complex systems": PHYS,
    "nuclear physics": PHYS,
    # Geology
    "geophysics": GEO,
    "seismology": GEO,
    "volcanology": GEO,
    "mineralogy": GEO,
    "petrology": GEO,
    "hydrogeology": GEO,
    "earth science": GEO,
    # Psychology
    "cognitive science": PSY,
    "cognitive psychology": PSY,
    "social psychology": PSY,
    "developmental psychology": PSY,
    "clinical psychology": PSY,
    "educational psychology": PSY,
    "organizational psychology": PSY,
    "behavioral science": PSY,
    "neuropsychology": PSY,
    "psycholinguistics": LING,
    # Art
    "music": CoarseField.ART,
    "design": CoarseField.ART,
    "architecture": CoarseField.ART,
    "visual arts": CoarseField.ART,
    "film studies": CoarseField.ART,
    "performing arts": CoarseField.ART,
    # History
    "archaeology": CoarseField.HISTORY,
    "history of science": CoarseField.HISTORY,
    "military history": CoarseField.HISTORY,
    # Geography
    "urban planning": CoarseField.GEOGRAPHY,
    "human geography": CoarseField.GEOGRAPHY,
    "cartography": CoarseField.GEOGRAPHY,
    "remote sensing": CoarseField.GEOGRAPHY,
    "transportation": CoarseField.GEOGRAPHY,
    # Sociology
    "anthropology": SOC,
    "demography": SOC,
    "communication studies": SOC,
    "media studies": SOC,
    "social network analysis": SOC,
    "criminology": SOC,
    "science and technology studies": SOC,
    # Business
    "management": BUS,
    "marketing": BUS,
    "finance": BUS,
    "accounting": BUS,
    "operations management": BUS,
    "supply chain management": BUS,
    "organizational behavior": BUS,
    "entrepreneurship": BUS,
    # Political Science
    "international relations": POL,
    "public policy": POL,
    "public administration": POL,
    "political economy": POL,
    # Economics
    "game theory": ECON,
    "behavioral economics": ECON,
    "econometrics": ECON,
    "macroeconomics": ECON,
    "microeconomics": ECON,
    "mechanism design": ECON,
    # Philosophy
    "ethics": PHIL,
    "epistemology": PHIL,
    "logic": PHIL,
    "philosophy of mind": PHIL,
    # Mathematics
    "statistics": MATH,
    "probability": MATH,
    "optimization": MATH,
    "operations research": MATH,
    "graph theory": MATH,
    "topology": MATH,
    "algebra": MATH,
    "numerical analysis": MATH,
    "dynamical systems": MATH,
    "information theory": MATH,
    "applied mathematics": MATH,
    # Engineering
    "control theory": ENG,
    "control engineering": ENG,
    "electrical engineering": ENG,
    "mechanical engineering": ENG,
    "civil engineering": ENG,
    "chemical engineering": ENG,
    "aerospace engineering": ENG,
    "biomedical engineering": ENG,
    "signal processing": ENG,
    "systems engineering": ENG,
    "industrial engineering": ENG,
    "telecommunications": ENG,
    "energy systems": ENG,
    # Environmental Science
    "climate science": ENV,
    "climatology": ENV,
    "oceanography": ENV,
    "atmospheric science": ENV,
    "sustainability": ENV,
    "conservation biology": ENV,
    "environmental engineering": ENV,
    # Agricultural and Food Sciences
    "agronomy": AGRI,
    "agriculture": AGRI,
    "food science": AGRI,
    "nutrition": AGRI,
    "soil science": AGRI,
    "forestry": AGRI,
    "animal science": AGRI,
    # Education
    "pedagogy": EDU,
    "learning sciences": EDU,
    "educational technology": EDU,
    "curriculum studies": EDU,
    "higher education": EDU,
    # Law
    "jurisprudence": LAW,
    "legal studies": LAW,
    "constitutional law": LAW,
    "intellectual property": LAW,
    # Linguistics
    "phonetics": LING,
    "phonology": LING,
    "syntax": LING,
    "semantics": LING,
    "sociolinguistics": LING,
    "language acquisition": LING,
}


def _normalize(name: str) -> str:
    return " ".join(name.replace("_", " ").split()).casefold()


def lookup_coarse_domain(fine_domain: str) -> Optional[CoarseField]:
    """Static mapping only: coarse names map to themselves, known subfields to their parent."""
    if not fine_domain or not fine_domain.strip():
        return None
    name = _normalize(fine_domain)
    coarse = CoarseField.parse(name)
    if coarse is not None:
        return coarse
    return SUBFIELDS.get(name)


def _member_check(output: DomainClassification) -> list[str]:
    if CoarseField.parse(output.field) is None:
        allowed = ", ".join(f.value for f in CoarseField)
        return [f"field {output.field!r} is not one of: {allowed}"]
    return []


async def map_to_coarse_domain(fine_domain: str, gateway: Optional[LLMGateway] = None) -> CoarseField:
    """Coarse field for a fine-grained name, asking the model when the table has no entry."""
    if not fine_domain or not fine_domain.strip():
        raise DomainMappingError(fine_domain, "domain name is empty")
    coarse = lookup_coarse_domain(fine_domain)
    if coarse is not None:
        return coarse
    if gateway is None:
        raise DomainMappingError(fine_domain)

    logger.info(f"Escalating domain {fine_domain!r} to model classification")
    try:
        output = await gateway.complete(
            ProfileName.GENERATOR,
            "classify_domain",
            {"fine_domain": fine_domain, "fields": "\n".join(f"- {f.value}" for f in CoarseField)},
            "domain_classification",
            validator=_member_check,
        )
    except StructuredOutputError as e:
        raise DomainMappingError(fine_domain, f"cannot map {fine_domain!r} to a coarse field: {e.detail}")
    return CoarseField.parse(output.field)
