"""Exception hierarchy shared across the engine.

Every stage raises a subclass of MediateError so the CLI can map failure
classes to distinct exit codes.
"""

from __future__ import annotations


class MediateError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ModelParseError(MediateError):
    """The project/model file is structurally malformed."""

    exit_code = 2


class ModelValidationError(MediateError):
    """A model violates one or more invariants; carries every finding."""

    exit_code = 3

    def __init__(self, findings):
        self.findings = list(findings)
        lines = "; ".join(f"{f.path}: [{f.rule}] {f.message}" for f in self.findings)
        super().__init__(f"{len(self.findings)} validation finding(s): {lines}")


class OntologyError(MediateError):
    exit_code = 2


class UnknownConceptError(OntologyError):
    def __init__(self, concept_id):
        self.concept_id = concept_id
        super().__init__(f"unknown concept: {concept_id!r}")


class ProvenanceConflictError(MediateError):
    """A deduced/event write tried to overwrite user-provided knowledge."""

    exit_code = 4


class DeductionError(MediateError):
    exit_code = 4


class CyclicDependencyError(DeductionError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cyclic message dependency: " + " -> ".join(self.cycle))


class InvalidGraphError(MediateError):
    exit_code = 4

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("invalid process graph: " + "; ".join(self.findings))


class BpmnFormatError(MediateError):
    """Unsupported construct or malformed annotation in an XML document."""

    exit_code = 4


class MatchingError(MediateError):
    exit_code = 5


class UnresolvedConceptsError(MatchingError):
    def __init__(self, refs):
        self.refs = list(refs)
        super().__init__("unresolved concept refs: " + ", ".join(self.refs))


class ReconciliationError(MediateError):
    exit_code = 6


class MapExecutionError(ReconciliationError):
    """A data map failed at run time (missing field, unparseable value)."""


class CompileError(MediateError):
    exit_code = 7


class OrchestrationError(MediateError):
    exit_code = 8


class EndpointFault(OrchestrationError):
    """A service endpoint failed while handling an invocation."""

    def __init__(self, endpoint, message):
        self.endpoint = endpoint
        super().__init__(f"endpoint {endpoint} faulted: {message}")


class AgilityError(MediateError):
    exit_code = 8


class ProjectError(MediateError):
    exit_code = 9
