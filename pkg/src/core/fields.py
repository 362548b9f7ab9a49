from enum import Enum


class CoarseField(str, Enum):
    """The closed set of Semantic Scholar fields of study."""

    COMPUTER_SCIENCE = "Computer Science"
    MEDICINE = "Medicine"
    CHEMISTRY = "Chemistry"
    BIOLOGY = "Biology"
    MATERIALS_SCIENCE = "Materials Science"
    PHYSICS = "Physics"
    GEOLOGY = "Geology"
    PSYCHOLOGY = "Psychology"
    ART = "Art"
    HISTORY = "History"
    GEOGRAPHY = "Geography"
    SOCIOLOGY = "Sociology"
    BUSINESS = "Business"
    POLITICAL_SCIENCE = "Political Science"
    ECONOMICS = "Economics"
    PHILOSOPHY = "Philosophy"
    MATHEMATICS = "Mathematics"
    ENGINEERING = "Engineering"
    ENVIRONMENTAL_SCIENCE = "Environmental Science"
    AGRICULTURAL_AND_FOOD_SCIENCES = "Agricultural and Food Sciences"
    EDUCATION = "Education"
    LAW = "Law"
    LINGUISTICS = "Linguistics"

    @classmethod
    def parse(cls, value: str) -> "CoarseField | None":
        """Case- and whitespace-insensitive lookup by field name; None if not a member."""
        wanted = " ".join(value.split()).casefold()
        for member in cls:
            if member.value.casefold() == wanted:
                return member
        return None

    def __str__(self) -> str:
        return self.value
