"""effc: an interpreter and type-and-effect inference toolchain for a core
calculus of algebraic effects and handlers."""

__version__ = "0.1.0"
