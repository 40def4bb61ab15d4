"""Named parameter groups for the three-way optimizer partition."""

from dataclasses import dataclass, field

ROLES = ("feature_extractor", "discriminator", "classifier")


@dataclass
class ParamGroup:
    """Ordered name -> DiffArray mapping with a role tag."""

    name: str
    role: str
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}, expected one of {ROLES}")

    def add(self, name, array):
        if name in self.entries:
            raise ValueError(f"duplicate parameter name {name!r} in group {self.name!r}")
        self.entries[name] = array
        return array

    def items(self):
        return self.entries.items()

    def arrays(self):
        return list(self.entries.values())

    def zero_grad(self):
        for p in self.entries.values():
            p.grad = None

    def count(self):
        return sum(p.size for p in self.entries.values())
