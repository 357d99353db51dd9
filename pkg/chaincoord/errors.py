"""Exception hierarchy shared by every chaincoord module."""


class ChainCoordError(Exception):
    """Root of all chaincoord errors"""


class InvariantViolation(ChainCoordError):
    """An internal invariant broke; aborts a run"""


class DomainError(ChainCoordError, ValueError):
    """Argument outside the mathematical domain of a model"""


class GasOutOfRange(ChainCoordError, ValueError):
    """Gas amount outside [intrinsic, block limit]"""


class UnsupportedCombination(ChainCoordError, ValueError):
    """Security property or attack model that does not apply to the primitive"""


# ==================== TRANSACTIONS ====================

class TransactionError(ChainCoordError):
    """Transaction cannot be included"""


class BadNonce(TransactionError):
    pass


class Unauthorized(TransactionError):
    pass


class InsufficientBalance(TransactionError):
    pass


class BlockGasExceeded(TransactionError):
    pass


class NonceOverflow(TransactionError):
    pass


# ==================== CHAIN ====================

class ChainError(ChainCoordError):
    pass


class UnknownParent(ChainError):
    pass


class NotCanonical(ChainError):
    pass


class InvalidBlock(ChainError):
    pass


class FinalityViolation(ChainError):
    """A block would replace instant-final history"""


class StatePruned(ChainError):
    pass


# ==================== CONTRACTS ====================

class ContractError(ChainCoordError):
    """Reverts the calling transaction"""


class UnknownContract(ContractError):
    pass


class UnknownOperation(ContractError):
    pass


class DomainTaken(ContractError):
    pass


class NotOwner(ContractError):
    pass


class NotFound(ContractError):
    pass


class NotParticipant(ContractError):
    pass


class StalePin(ContractError):
    pass


class UnknownSidechain(ContractError):
    pass


class BadReveal(ContractError):
    pass


class BadVersion(ContractError):
    pass


class AlreadyVoted(ContractError):
    pass


class NothingProposed(ContractError):
    pass


class DuplicateTxId(ContractError):
    pass


class NotStarted(ContractError):
    pass


class AlreadyDecided(ContractError):
    pass


class TimeoutExpired(ContractError):
    pass


# ==================== SIDECHAINS ====================

class SidechainError(ChainCoordError):
    pass


class NoPinTarget(SidechainError):
    pass


class UnknownPin(SidechainError):
    pass


class FinalPinNotFinal(SidechainError):
    pass


class PinMismatch(SidechainError):
    pass


class CorruptBlob(SidechainError):
    pass


class NoPinFound(SidechainError):
    pass


class SidechainArchived(SidechainError):
    pass


# ==================== CROSSCHAIN ====================

class CrosschainError(ChainCoordError):
    pass


class NoActiveKeyset(CrosschainError):
    pass


class InvalidSpec(CrosschainError):
    pass


# ==================== SCENARIOS ====================

class ScenarioError(ChainCoordError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        location = f"line {line}" if line is not None else "input"
        if field:
            location += f", field '{field}'"
        super().__init__(f"{location}: {message}")


class ValidationError(ScenarioError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MissingVariant(ScenarioError):
    pass
