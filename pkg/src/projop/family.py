"""Container for a family of projections with declared supports."""
from dataclasses import dataclass, field


@dataclass
class ProjectionFamily:
    """Operators with their declared supports and kind tags.

    ``operators`` holds operator handles: Hestenes operators (``HOp``) for
    the one-dimensional families, sparse matrices on a node grid for the
    surface families.  ``supports`` holds matching descriptors: an
    ``OpenSet`` or a boolean node mask.
    """
    operators: list
    supports: list
    kinds: list
    ambient: str
    p: float
    names: list = None
    meta: dict = field(default_factory=dict)
    report: object = None
    overlap: int = None

    def __post_init__(self):
        if self.names is None:
            self.names = [f"P{i}" for i in range(len(self.operators))]
        n = len(self.operators)
        if not (len(self.supports) == len(self.kinds) == len(self.names) == n):
            raise ValueError("operators, supports, kinds and names must align")

    def __len__(self):
        return len(self.operators)

    def count(self, kind):
        return sum(k == kind for k in self.kinds)
