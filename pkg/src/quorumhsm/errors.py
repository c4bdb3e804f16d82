"""Exception hierarchy shared by every layer of the emulator."""


class QuorumError(Exception):
    """Base class for all errors raised by this package."""


class ParameterMismatch(QuorumError):
    """Operands were built from different domain parameters."""


class InvalidKey(QuorumError):
    pass


class ProtocolError(QuorumError):
    """A protocol-level contract was violated (malformed or misaligned input)."""


class ProtocolOrderError(ProtocolError):
    """A message arrived in a phase that does not accept it."""


class CommitmentFailure(ProtocolError):
    pass


class AccessDenied(QuorumError):
    pass


class ReplayRejected(QuorumError):
    pass


class NonOperational(QuorumError):
    pass


class LifecycleError(QuorumError):
    pass


class IncompleteQuorum(QuorumError):
    """Fewer shares than quorum members were available."""


class QuorumTimeout(IncompleteQuorum):
    pass


class InconsistentShare(QuorumError):
    pass


class ShareProofFailure(QuorumError):
    def __init__(self, node_id: int, message: str = ""):
        self.node_id = node_id
        super().__init__(message or f"decryption share proof failed for node {node_id}")


class SigningFailed(QuorumError):
    def __init__(self, j: int, message: str = ""):
        self.j = j
        super().__init__(message or f"signing failed for index j={j}")


class AuthenticationFailure(QuorumError):
    """A response did not verify under the sender's certificate."""


class RoutingError(QuorumError):
    pass


class SetupError(QuorumError):
    pass


class UnknownKey(QuorumError):
    pass
