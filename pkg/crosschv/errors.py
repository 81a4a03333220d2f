class CrossChvError(Exception):
    pass


class ConfigError(CrossChvError, ValueError):
    pass


class DecodingError(CrossChvError, ValueError):
    def __init__(self, source: str, offset: int, reason: str) -> None:
        super().__init__(f"Cannot decode {source} as UTF-8 at byte offset {offset}: {reason}")

        self.source = source
        self.offset = offset


class EmptyModelError(CrossChvError, ValueError):
    pass


class TrainingError(CrossChvError, ValueError):
    pass


class ZeroNormError(CrossChvError, ValueError):
    def __init__(self, word: str) -> None:
        super().__init__(f"Vector of '{word}' has zero norm and cannot be normalized")

        self.word = word


class SpaceFormatError(CrossChvError, ValueError):
    def __init__(self, source: str, line: int | None, reason: str) -> None:
        location = f"{source}:{line}" if line is not None else source
        super().__init__(f"{location}: {reason}")

        self.source = source
        self.line = line


class OutOfVocabularyError(CrossChvError, KeyError):
    def __init__(self, word: str, language: str) -> None:
        super().__init__(word, language)

        self.word = word
        self.language = language

    def __str__(self) -> str:
        return f"'{self.word}' is not in the {self.language} vocabulary"


class EmptyAnchorError(CrossChvError, ValueError):
    pass


class AlignmentError(CrossChvError, ValueError):
    pass


class NeighborhoodError(CrossChvError, ValueError):
    pass


class CalibrationError(CrossChvError, ValueError):
    pass


class EvaluationError(CrossChvError, ValueError):
    pass


class DegenerateTestError(CrossChvError, ValueError):
    pass


class SampleSizeError(CrossChvError, ValueError):
    pass
