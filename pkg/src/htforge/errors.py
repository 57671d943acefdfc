"""Exception and warning taxonomy shared by all htforge modules."""


class HtforgeError(Exception):
    """Base class for all htforge errors."""


# --- netlist parsing / emission ---------------------------------------------

class UnsupportedConstruct(HtforgeError):
    """Source uses a construct outside the supported structural subset."""


class MultipleDrivers(HtforgeError):
    """A net is driven by more than one gate output (or a gate drives a PI)."""


class UndeclaredNet(HtforgeError):
    """A gate input references a net that no PI or gate output drives."""


class EmptyModule(HtforgeError):
    """The module contains no gates."""


class UnknownNet(HtforgeError):
    """A net name or id does not exist in the circuit."""


class CyclicResult(HtforgeError):
    """A splice or emission produced a cyclic structure."""


# --- vector files ------------------------------------------------------------

class LengthMismatch(HtforgeError):
    """Rows in a vector file have inconsistent lengths."""


class IllegalCharacter(HtforgeError):
    """A vector file contains characters other than 0 and 1."""


class WidthMismatch(HtforgeError):
    """Vector width does not match the circuit's primary input count."""


# --- graph / simulation ------------------------------------------------------

class CombinationalLoop(HtforgeError):
    """The netlist contains a combinational cycle.

    The offending cycle (as net names) is available as ``.cycle``.
    """

    def __init__(self, message, cycle=()):
        super().__init__(message)
        self.cycle = tuple(cycle)


class InterfaceMismatch(HtforgeError):
    """Two circuits do not share the same PI/PO interface."""


# --- trojan construction / environments --------------------------------------

class RuleViolation(HtforgeError):
    """A trojan instance violates one of the placement rules."""


class InfeasibleReset(HtforgeError):
    """No legal target/trigger placement exists for the requested reset."""


class EnvContractViolation(HtforgeError):
    """An environment broke the reset/step contract."""


# --- learning engine ----------------------------------------------------------

class ShapeMismatch(HtforgeError):
    """Tensor or observation shapes disagree with the declared contract."""


class NonFiniteLoss(HtforgeError):
    """A loss or gradient became NaN or infinite during training."""


# --- evaluation ----------------------------------------------------------------

class ManifestMismatch(HtforgeError):
    """A manifest entry references nets absent from the circuit."""


class PopulationMismatch(HtforgeError):
    """Detection reports being combined cover different trojan populations."""


class DomainError(HtforgeError, ValueError):
    """A numeric argument is outside its mathematical domain."""


# --- warning-level conditions ---------------------------------------------------

class EmptySelection(UserWarning):
    """A rare-net extraction selected zero nets."""


class EmptyHarvest(UserWarning):
    """A harvest pass collected zero artifacts."""
