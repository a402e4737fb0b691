"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` that the gateway puts
into JSON error bodies.
"""


class GatewayError(Exception):
    """Base class for all errors raised by this package."""

    code = "internal"


class MalformedModel(GatewayError):
    """A model file is unusable: bad syntax, fields, or dimensions."""

    code = "malformed_model"


class MalformedManifest(GatewayError):
    """A manifest document is unusable: bad syntax, fields, or duplicate ids."""

    code = "malformed_manifest"


class ShapeMismatch(GatewayError):
    """Input dimensions disagree with what a model or ensemble expects."""

    code = "shape_mismatch"


class BudgetExceeded(GatewayError):
    """The ensemble does not fit into the configured memory budget."""

    code = "budget_exceeded"


class BatchTooLarge(GatewayError):
    """Request batch size exceeds the configured max_batch."""

    code = "batch_too_large"


class BadRequest(GatewayError):
    """Request body cannot be decoded into a sample batch."""

    code = "bad_request"


class EmptyBatch(BadRequest):
    """A zero-sample batch reached the forward pass."""

    code = "empty_batch"


class BadPolicy(GatewayError):
    """Policy object has an unknown kind or a badly typed k."""

    code = "bad_policy"


class BadK(BadPolicy):
    """k is out of range for the ensemble being queried."""

    code = "bad_k"


class NotBinary(GatewayError):
    """A vote outside {0, 1} was passed to a policy."""

    code = "not_binary"


class PolicyUnavailable(GatewayError):
    """A sensitivity policy was requested on a non-binary ensemble."""

    code = "policy_unavailable"
